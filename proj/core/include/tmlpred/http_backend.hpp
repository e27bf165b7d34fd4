// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tmlpred/backend.hpp>
#include <tmlpred/tools.hpp>
#include <tmlpred/workspace.hpp>

#include <chrono>
#include <memory>
#include <string>

/// Network-facing backends: an OpenAI-compatible chat endpoint and an HTTP
/// search provider.
namespace tmlpred::orch
{

/// Environment variable holding the search provider key.
inline constexpr const char* search_key_env = "TMLPRED_SEARCH_API_KEY";

struct Endpoint
{
    std::string scheme;
    std::string host;
    int port = 0;
    std::string path;

    /// Parses "http[s]://host[:port][/path]". Throws InputError otherwise.
    static Endpoint parse(std::string_view url);
    std::string origin() const;
};

/// Chat-completions client. The system message is the role's prompt
/// template (rendered from the context when the library has one); the user
/// message carries the request message and the JSON context.
class OpenAiBackend final: public AgentBackend
{
  public:
    OpenAiBackend(Role role,
                  BackendSpec spec,
                  std::shared_ptr<const PromptLibrary> prompts,
                  ws::EnvLookup env = ws::process_env(),
                  std::chrono::seconds timeout = std::chrono::seconds(120));

    std::string send(const BackendRequest& request) const override;
    Json capabilities() const override;

    /// Request body for `request`; exposed for tests.
    Json build_body(const BackendRequest& request) const;

  private:
    Role role_;
    BackendSpec spec_;
    Endpoint endpoint_;
    std::shared_ptr<const PromptLibrary> prompts_;
    std::optional<std::string> key_;
    std::chrono::seconds timeout_;
};

/// Factory for `openai` specs; nullptr for other types.
BackendFactory http_backend_factory(std::shared_ptr<const PromptLibrary> prompts, ws::EnvLookup env = ws::process_env());

/// `GET <endpoint>?q=<text>` returning `{ "results": [ {url, title, snippet,
/// content, paper_id, locator} ] }`. The key is read from the environment
/// only and sent as a bearer token.
class HttpSearchProvider final: public SearchProvider
{
  public:
    explicit HttpSearchProvider(std::string endpoint,
                                ws::EnvLookup env = ws::process_env(),
                                std::chrono::seconds timeout = std::chrono::seconds(30));

    std::string kind() const override { return "search"; }
    std::vector<SearchHit> search(const SearchRequest& request) const override;

  private:
    Endpoint endpoint_;
    std::optional<std::string> key_;
    std::chrono::seconds timeout_;
};

} // namespace tmlpred::orch
