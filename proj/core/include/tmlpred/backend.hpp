// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tmlpred/text.hpp>

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

/// Role-tagged agent backends and the structured-output protocol.
namespace tmlpred::orch
{

enum class Role
{
    ThoughtCreator,
    ResearchPlanner,
    ExpertKnowledge,
    Coder,
    Reporter,
    ThoughtAnalyzer,
    Aggregator,
    PredictionExtractor,
    QualityJudge,
    FaithfulnessJudge,
    ComplianceJudge,
    CodeJudge,
    RelevanceJudge,
    QuestionGenerator,
};

inline constexpr std::array<Role, 14> all_roles {
    Role::ThoughtCreator,      Role::ResearchPlanner, Role::ExpertKnowledge,   Role::Coder,
    Role::Reporter,            Role::ThoughtAnalyzer, Role::Aggregator,        Role::PredictionExtractor,
    Role::QualityJudge,        Role::FaithfulnessJudge, Role::ComplianceJudge, Role::CodeJudge,
    Role::RelevanceJudge,      Role::QuestionGenerator,
};

std::string_view to_string(Role role) noexcept;
Role role_from_string(std::string_view name);

struct BackendRequest
{
    Role role = Role::ThoughtCreator;
    Json context = Json::object();
    std::string message;
};

/// Implementations must be safe to call from several threads at once.
class AgentBackend
{
  public:
    virtual ~AgentBackend() = default;
    virtual std::string send(const BackendRequest& request) const = 0;
    virtual Json capabilities() const = 0;
};

/// Parses the first JSON object in a reply, tolerating surrounding prose and
/// markdown fences. Throws BackendError when there is none.
Json parse_json_reply(std::string_view reply);

using JsonValidator = std::function<void(const Json&)>;

/// Sends the request and parses a JSON reply. On a parse or validation
/// failure it re-asks once with the error appended; a second failure throws
/// BackendError.
Json ask_json(const AgentBackend& backend, const BackendRequest& request, const JsonValidator& validate = {});

/// Per-role backend settings from the backend config file.
struct BackendSpec
{
    std::string type = "scripted"; ///< scripted | randomized | openai | ...
    std::string endpoint;
    std::string model;
    double temperature = 1.0;
    std::uint64_t seed = 0;
    std::optional<double> top_p;
    std::optional<int> max_tokens;
    /// Name of the environment variable holding the API key.
    std::string api_key_env;
    Json extra = Json::object();

    Json to_json() const;
};

using BackendFactory = std::function<std::shared_ptr<AgentBackend>(Role, const BackendSpec&)>;

class BackendSet
{
  public:
    BackendSet() = default;

    /// `{ "default": {spec}, "roles": { "<role>": {spec} } }`. Role specs
    /// inherit unset fields from the default. The expert_knowledge role
    /// defaults to temperature 0.
    static std::map<Role, BackendSpec> parse_specs(const Json& doc);
    static BackendSet from_json(const Json& doc, const BackendFactory& factory);
    static BackendSet load(const std::string& path, const BackendFactory& factory);

    /// Every role served by `backend`.
    static BackendSet uniform(std::shared_ptr<AgentBackend> backend);

    void set(Role role, std::shared_ptr<AgentBackend> backend);
    const AgentBackend& at(Role role) const;
    bool has(Role role) const;
    const std::map<Role, BackendSpec>& specs() const noexcept { return specs_; }

  private:
    std::map<Role, std::shared_ptr<AgentBackend>> backends_;
    std::map<Role, BackendSpec> specs_;
};

/// Prompt templates keyed by role, loaded from a directory of `<name>.txt`.
class PromptLibrary
{
  public:
    PromptLibrary() = default;
    static PromptLibrary load(const std::string& dir);

    const std::string* find(Role role) const;
    /// Template with `{key}` filled from string/number members of `context`;
    /// nullopt when no template exists for the role.
    std::optional<std::string> render(Role role, const Json& context) const;

  private:
    std::map<Role, std::string> templates_;
};

} // namespace tmlpred::orch
