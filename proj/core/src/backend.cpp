// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/backend.hpp>
#include <tmlpred/error.hpp>

#include <fmt/format.h>

#include <filesystem>

namespace tmlpred::orch
{

namespace
{

constexpr std::array<std::string_view, 14> role_names {
    "thought_creator", "research_planner", "expert_knowledge", "coder",           "reporter",
    "thought_analyzer", "aggregator",      "prediction_extractor", "quality_judge", "faithfulness_judge",
    "compliance_judge", "code_judge",      "relevance_judge",  "question_generator",
};

} // namespace

std::string_view to_string(Role role) noexcept
{
    return role_names[static_cast<std::size_t>(role)];
}

Role role_from_string(std::string_view name)
{
    auto const folded = text::fold(name);
    for (std::size_t i = 0; i < role_names.size(); ++i)
        if (role_names[i] == folded)
            return all_roles[i];
    throw InputError(fmt::format("unknown agent role '{}'", name));
}

Json parse_json_reply(std::string_view reply)
{
    auto const start = reply.find('{');
    if (start == std::string_view::npos)
        throw BackendError("reply contains no JSON object");
    // Scan for the matching close brace, honouring strings.
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < reply.size(); ++i)
    {
        char const c = reply[i];
        if (in_string)
        {
            if (escaped)
                escaped = false;
            else if (c == '\\')
                escaped = true;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"')
            in_string = true;
        else if (c == '{')
            ++depth;
        else if (c == '}' && --depth == 0)
        {
            try
            {
                return Json::parse(reply.substr(start, i - start + 1));
            }
            catch (const nlohmann::json::exception& e)
            {
                throw BackendError(fmt::format("malformed JSON reply: {}", e.what()));
            }
        }
    }
    throw BackendError("unterminated JSON object in reply");
}

Json ask_json(const AgentBackend& backend, const BackendRequest& request, const JsonValidator& validate)
{
    auto attempt = [&](const BackendRequest& req) {
        auto doc = parse_json_reply(backend.send(req));
        if (validate)
            validate(doc);
        return doc;
    };
    try
    {
        return attempt(request);
    }
    catch (const Error& first)
    {
        BackendRequest again = request;
        again.context["reask"] = true;
        again.message = fmt::format("{}\n\nYour previous reply could not be used ({}). Reply with valid JSON only.",
                                    request.message, first.what());
        try
        {
            return attempt(again);
        }
        catch (const Error& second)
        {
            throw BackendError(fmt::format("{} reply unusable after re-ask: {}", to_string(request.role), second.what()));
        }
    }
}

Json BackendSpec::to_json() const
{
    Json j {{"type", type}, {"temperature", temperature}, {"seed", seed}};
    if (!endpoint.empty())
        j["endpoint"] = endpoint;
    if (!model.empty())
        j["model"] = model;
    if (top_p)
        j["top_p"] = *top_p;
    if (max_tokens)
        j["max_tokens"] = *max_tokens;
    if (!api_key_env.empty())
        j["api_key_env"] = api_key_env;
    if (!extra.empty())
        j["extra"] = extra;
    return j;
}

namespace
{

bool secret_like(std::string_view key)
{
    auto const k = text::fold(key);
    if (k == "api_key_env" || k == "max_tokens")
        return false;
    if (k == "key" || k == "apikey" || k == "api-key")
        return true;
    for (auto const* w: {"api_key", "secret", "token", "password", "bearer", "authorization"})
        if (k.find(w) != std::string::npos)
            return true;
    return false;
}

/// Keys never live in backend configs, including nested `extra` objects.
void reject_secrets(const Json& j)
{
    if (!j.is_object())
        return;
    for (auto const& [k, v]: j.items())
    {
        if (secret_like(k))
            throw InputError(fmt::format(
                "backend config must not contain secrets ('{}'); name an environment variable with api_key_env", k));
        reject_secrets(v);
    }
}

void merge_spec(BackendSpec& spec, const Json& j)
{
    if (!j.is_object())
        throw InputError("backend spec must be an object");
    reject_secrets(j);
    spec.type = j.value("type", spec.type);
    spec.endpoint = j.value("endpoint", spec.endpoint);
    spec.model = j.value("model", spec.model);
    spec.temperature = j.value("temperature", spec.temperature);
    spec.seed = j.value("seed", spec.seed);
    if (j.contains("top_p"))
        spec.top_p = j["top_p"].get<double>();
    if (j.contains("max_tokens"))
        spec.max_tokens = j["max_tokens"].get<int>();
    spec.api_key_env = j.value("api_key_env", spec.api_key_env);
    if (j.contains("extra"))
        spec.extra.update(j["extra"]);
}

} // namespace

std::map<Role, BackendSpec> BackendSet::parse_specs(const Json& doc)
{
    if (!doc.is_object())
        throw InputError("backend config must be an object");
    std::map<Role, BackendSpec> specs;
    try
    {
        BackendSpec base;
        if (doc.contains("default"))
            merge_spec(base, doc["default"]);
        Json roles = doc.value("roles", Json::object());
        for (auto it = roles.begin(); it != roles.end(); ++it)
            role_from_string(it.key());
        for (auto role: all_roles)
        {
            BackendSpec spec = base;
            if (role == Role::ExpertKnowledge)
                spec.temperature = 0.0;
            if (auto it = roles.find(std::string(to_string(role))); it != roles.end())
                merge_spec(spec, *it);
            if (spec.temperature < 0.0)
                throw InputError(fmt::format("negative temperature for {}", to_string(role)));
            specs.emplace(role, std::move(spec));
        }
    }
    catch (const nlohmann::json::exception& e)
    {
        throw InputError(fmt::format("backend config: {}", e.what()));
    }
    return specs;
}

BackendSet BackendSet::from_json(const Json& doc, const BackendFactory& factory)
{
    BackendSet set;
    set.specs_ = parse_specs(doc);
    for (auto const& [role, spec]: set.specs_)
    {
        auto backend = factory(role, spec);
        if (!backend)
            throw InputError(fmt::format("no backend of type '{}' for role {}", spec.type, to_string(role)));
        set.backends_[role] = std::move(backend);
    }
    return set;
}

BackendSet BackendSet::load(const std::string& path, const BackendFactory& factory)
{
    return from_json(text::read_json_file(path), factory);
}

BackendSet BackendSet::uniform(std::shared_ptr<AgentBackend> backend)
{
    BackendSet set;
    for (auto role: all_roles)
        set.backends_[role] = backend;
    return set;
}

void BackendSet::set(Role role, std::shared_ptr<AgentBackend> backend)
{
    backends_[role] = std::move(backend);
}

const AgentBackend& BackendSet::at(Role role) const
{
    auto it = backends_.find(role);
    if (it == backends_.end() || !it->second)
        throw NotFoundError(fmt::format("no backend configured for role {}", to_string(role)));
    return *it->second;
}

bool BackendSet::has(Role role) const
{
    auto it = backends_.find(role);
    return it != backends_.end() && it->second;
}

namespace
{

std::string_view prompt_file(Role role)
{
    switch (role)
    {
        case Role::QualityJudge: return "judge";
        case Role::PredictionExtractor: return "prediction_extraction";
        case Role::FaithfulnessJudge: return "faithfulness_judge";
        case Role::ComplianceJudge: return "compliance_judge";
        case Role::CodeJudge: return "code_eval";
        case Role::RelevanceJudge: return "tool_relevance";
        case Role::QuestionGenerator: return "question_generation";
        default: return to_string(role);
    }
}

} // namespace

PromptLibrary PromptLibrary::load(const std::string& dir)
{
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
        throw InputError(fmt::format("prompt directory {} does not exist", dir));
    PromptLibrary lib;
    for (auto role: all_roles)
    {
        auto const path = fs::path(dir) / (std::string(prompt_file(role)) + ".txt");
        if (fs::exists(path))
            lib.templates_[role] = text::read_file(path.string());
    }
    return lib;
}

const std::string* PromptLibrary::find(Role role) const
{
    auto it = templates_.find(role);
    return it == templates_.end() ? nullptr : &it->second;
}

std::optional<std::string> PromptLibrary::render(Role role, const Json& context) const
{
    auto const* tmpl = find(role);
    if (!tmpl)
        return std::nullopt;
    std::map<std::string, std::string> values;
    if (context.is_object())
        for (auto it = context.begin(); it != context.end(); ++it)
        {
            if (it->is_string())
                values[it.key()] = it->get<std::string>();
            else if (it->is_number() || it->is_boolean())
                values[it.key()] = it->dump();
            else
                values[it.key()] = it->dump(2);
        }
    return text::substitute(*tmpl, values);
}

} // namespace tmlpred::orch
