// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/error.hpp>
#include <tmlpred/http_backend.hpp>

#include <fmt/format.h>
#include <httplib.h>

#include <regex>

namespace tmlpred::orch
{

Endpoint Endpoint::parse(std::string_view url)
{
    static const std::regex re(R"(^(https?)://([^/:]+)(?::([0-9]{1,5}))?(/.*)?$)", std::regex::icase);
    std::cmatch m;
    if (!std::regex_match(url.data(), url.data() + url.size(), m, re))
        throw InputError(fmt::format("malformed endpoint URL '{}'", url));
    Endpoint e;
    e.scheme = text::to_lower(m[1].str());
    e.host = m[2].str();
    e.port = m[3].matched ? std::stoi(m[3].str()) : (e.scheme == "https" ? 443 : 80);
    e.path = m[4].matched ? m[4].str() : std::string {};
    if (e.port <= 0 || e.port > 65535)
        throw InputError(fmt::format("endpoint port out of range in '{}'", url));
    return e;
}

std::string Endpoint::origin() const
{
    return fmt::format("{}://{}:{}", scheme, host, port);
}

namespace
{

httplib::Client make_client(const Endpoint& e, std::chrono::seconds timeout)
{
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (e.scheme == "https")
        throw InputError(fmt::format("{} needs a build with TLS support", e.origin()));
#endif
    httplib::Client client(e.origin());
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    return client;
}

std::optional<std::string> lookup_key(const ws::EnvLookup& env, const std::string& name)
{
    if (name.empty() || !env)
        return std::nullopt;
    auto v = env(name);
    if (v && v->empty())
        return std::nullopt;
    return v;
}

} // namespace

OpenAiBackend::OpenAiBackend(Role role,
                             BackendSpec spec,
                             std::shared_ptr<const PromptLibrary> prompts,
                             ws::EnvLookup env,
                             std::chrono::seconds timeout):
    role_(role),
    spec_(std::move(spec)),
    endpoint_(Endpoint::parse(spec_.endpoint)),
    prompts_(std::move(prompts)),
    key_(lookup_key(env, spec_.api_key_env)),
    timeout_(timeout)
{
    if (spec_.model.empty())
        throw InputError(fmt::format("backend for role {} needs a model", to_string(role_)));
    if (endpoint_.path.empty() || endpoint_.path == "/")
        endpoint_.path = "/v1/chat/completions";
}

Json OpenAiBackend::build_body(const BackendRequest& request) const
{
    std::optional<std::string> system;
    if (prompts_)
        system = prompts_->render(request.role, request.context);
    if (!system)
        system = fmt::format("You are the {} agent. Answer with one JSON object only.", to_string(request.role));
    auto user = request.message;
    if (!request.context.empty())
        user += fmt::format("{}Context:\n{}", user.empty() ? "" : "\n\n", request.context.dump(2));
    Json body {{"model", spec_.model},
               {"temperature", spec_.temperature},
               {"seed", spec_.seed},
               {"messages", Json::array({{{"role", "system"}, {"content", *system}}, {{"role", "user"}, {"content", user}}})}};
    if (spec_.top_p)
        body["top_p"] = *spec_.top_p;
    if (spec_.max_tokens)
        body["max_tokens"] = *spec_.max_tokens;
    for (auto const& [k, v]: spec_.extra.items())
        body[k] = v;
    return body;
}

std::string OpenAiBackend::send(const BackendRequest& request) const
{
    auto client = make_client(endpoint_, timeout_);
    httplib::Headers headers;
    if (key_)
        headers.emplace("Authorization", "Bearer " + *key_);
    auto res = client.Post(endpoint_.path, headers, build_body(request).dump(), "application/json");
    if (!res)
        throw BackendError(fmt::format("{}: request failed ({})", endpoint_.origin(), httplib::to_string(res.error())));
    if (res->status != 200)
        throw BackendError(fmt::format("{}: HTTP {}", endpoint_.origin(), res->status));
    Json doc;
    try
    {
        doc = Json::parse(res->body);
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    }
    catch (const Json::exception& e)
    {
        throw BackendError(fmt::format("{}: unexpected completion payload ({})", endpoint_.origin(), e.what()));
    }
}

Json OpenAiBackend::capabilities() const
{
    return {{"type", spec_.type},
            {"endpoint", endpoint_.origin() + endpoint_.path},
            {"model", spec_.model},
            {"deterministic", false},
            {"authenticated", key_.has_value()}};
}

BackendFactory http_backend_factory(std::shared_ptr<const PromptLibrary> prompts, ws::EnvLookup env)
{
    return [prompts, env](Role role, const BackendSpec& spec) -> std::shared_ptr<AgentBackend> {
        if (spec.type != "openai")
            return nullptr;
        return std::make_shared<OpenAiBackend>(role, spec, prompts, env);
    };
}

HttpSearchProvider::HttpSearchProvider(std::string endpoint, ws::EnvLookup env, std::chrono::seconds timeout):
    endpoint_(Endpoint::parse(endpoint)), key_(lookup_key(env, search_key_env)), timeout_(timeout)
{
    if (endpoint_.path.empty())
        endpoint_.path = "/";
}

std::vector<SearchHit> HttpSearchProvider::search(const SearchRequest& request) const
{
    auto client = make_client(endpoint_, timeout_);
    httplib::Headers headers;
    if (key_)
        headers.emplace("Authorization", "Bearer " + *key_);
    httplib::Params params {{"q", request.text}};
    auto res = client.Get(endpoint_.path, params, headers);
    if (!res)
        throw BackendError(fmt::format("search {}: request failed ({})", endpoint_.origin(), httplib::to_string(res.error())));
    if (res->status != 200)
        throw BackendError(fmt::format("search {}: HTTP {}", endpoint_.origin(), res->status));
    std::vector<SearchHit> hits;
    try
    {
        auto const doc = Json::parse(res->body);
        for (auto const& r: doc.at("results"))
        {
            SearchHit h;
            h.source_id = r.value("url", r.value("source_id", std::string {}));
            h.title = r.value("title", std::string {});
            h.snippet = r.value("snippet", std::string {});
            if (r.contains("content") && r["content"].is_object())
                h.content = r["content"];
            else
                h.content = {{"text", r.value("content", h.snippet)}};
            h.citation = {r.value("paper_id", h.source_id), r.value("locator", h.source_id)};
            hits.push_back(std::move(h));
        }
    }
    catch (const Json::exception& e)
    {
        throw BackendError(fmt::format("search {}: unexpected payload ({})", endpoint_.origin(), e.what()));
    }
    return hits;
}

} // namespace tmlpred::orch
