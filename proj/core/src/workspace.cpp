// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/error.hpp>
#include <tmlpred/scripted_backend.hpp>
#include <tmlpred/workspace.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <set>

namespace tmlpred::ws
{

namespace fs = std::filesystem;

EnvLookup process_env()
{
    return [](const std::string& name) -> std::optional<std::string> {
        if (auto const* v = std::getenv(name.c_str()))
            return std::string(v);
        return std::nullopt;
    };
}

namespace
{

const std::set<std::string>& path_keys()
{
    static const std::set<std::string> keys {"corpus", "typology", "registry", "backends", "kb", "aliases", "prompts", "output"};
    return keys;
}

bool is_secret_name(std::string_view key)
{
    auto const k = text::fold(key);
    for (auto const* w: {"api_key", "apikey", "secret", "token", "password"})
        if (k.find(w) != std::string::npos)
            return true;
    return false;
}

bool is_http(std::string_view s)
{
    return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0;
}

std::string env_name(const std::string& key)
{
    std::string out = "TMLPRED_";
    for (char c: key)
        out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::string json_to_text(const std::string& key, const Json& v)
{
    if (v.is_string())
        return v.get<std::string>();
    if (v.is_boolean())
        return v.get<bool>() ? "true" : "false";
    if (v.is_number_unsigned())
        return std::to_string(v.get<std::uint64_t>());
    if (v.is_number_integer())
        return std::to_string(v.get<std::int64_t>());
    if (v.is_number())
        return text::format_number(v.get<double>());
    throw InputError(fmt::format("config key '{}' must be a string, number, or boolean", key));
}

std::uint64_t to_unsigned(const std::string& key, const std::string& value)
{
    auto const n = text::parse_number(value);
    if (!n || *n < 0 || std::floor(*n) != *n)
        throw InputError(fmt::format("'{}' must be a non-negative integer, got '{}'", key, value));
    return static_cast<std::uint64_t>(*n);
}

double to_double(const std::string& key, const std::string& value)
{
    auto const n = text::parse_number(value);
    if (!n)
        throw InputError(fmt::format("'{}' must be a number, got '{}'", key, value));
    return *n;
}

bool to_bool(const std::string& key, const std::string& value)
{
    auto const v = text::fold(value);
    if (v == "true" || v == "1" || v == "yes" || v == "on")
        return true;
    if (v == "false" || v == "0" || v == "no" || v == "off")
        return false;
    throw InputError(fmt::format("'{}' must be a boolean, got '{}'", key, value));
}

void apply(RunConfig& c, const std::string& key, const std::string& value)
{
    if (key == "corpus")
        c.corpus = value;
    else if (key == "typology")
        c.typology = value;
    else if (key == "registry")
        c.registry = value;
    else if (key == "backends")
        c.backends = value;
    else if (key == "kb")
        c.kb = value;
    else if (key == "search")
        c.search = value;
    else if (key == "aliases")
        c.aliases = value;
    else if (key == "prompts")
        c.prompts = value;
    else if (key == "output")
        c.output = value;
    else if (key == "listen")
        c.listen = value;
    else if (key == "seed")
        c.seed = to_unsigned(key, value);
    else if (key == "max_thoughts")
        c.budgets.max_thoughts = to_unsigned(key, value);
    else if (key == "max_nodes")
        c.budgets.max_nodes = to_unsigned(key, value);
    else if (key == "max_rounds")
        c.budgets.max_rounds = to_unsigned(key, value);
    else if (key == "retry")
        c.budgets.retry = to_unsigned(key, value);
    else if (key == "parallelism")
        c.budgets.parallelism = to_unsigned(key, value);
    else if (key == "close_percentile")
        c.close_percentile = to_double(key, value);
    else if (key == "kb_threshold")
        c.kb_threshold = to_double(key, value);
    else if (key == "kb_top_k")
        c.kb_top_k = to_unsigned(key, value);
    else if (key == "followup_context")
        c.followup_context = to_bool(key, value);
    else
        throw InputError(fmt::format("unknown config key '{}'", key));
}

} // namespace

const std::vector<std::string>& RunConfig::keys()
{
    static const std::vector<std::string> k {"corpus",       "typology",    "registry",         "backends",
                                             "kb",           "search",      "aliases",          "prompts",    "output",
                                             "listen",       "seed",        "max_thoughts",     "max_nodes",
                                             "max_rounds",   "retry",       "parallelism",      "close_percentile",
                                             "kb_threshold", "kb_top_k",    "followup_context"};
    return k;
}

RunConfig RunConfig::resolve(const Json& file,
                             const std::string& base_dir,
                             const EnvLookup& env,
                             const std::map<std::string, std::string>& cli)
{
    if (!file.is_null() && !file.is_object())
        throw InputError("config file must hold a JSON object");
    auto const& known = keys();
    auto const is_known = [&](const std::string& k) { return std::find(known.begin(), known.end(), k) != known.end(); };

    std::map<std::string, std::string> from_file;
    auto take = [&](const std::string& key, const Json& value) {
        if (is_secret_name(key))
            throw InputError(fmt::format(
                "config key '{}' looks like a secret; supply keys through environment variables only", key));
        if (!is_known(key))
            throw InputError(fmt::format("unknown config key '{}'", key));
        auto v = json_to_text(key, value);
        if (path_keys().contains(key) && !v.empty() && fs::path(v).is_relative())
            v = (fs::path(base_dir) / v).lexically_normal().string();
        if (key == "search" && v != "corpus" && !is_http(v) && fs::path(v).is_relative())
            v = (fs::path(base_dir) / v).lexically_normal().string();
        from_file[key] = v;
    };
    if (file.is_object())
        for (auto const& [key, value]: file.items())
        {
            if (key == "budgets" && value.is_object())
                for (auto const& [bk, bv]: value.items())
                    take(bk, bv);
            else
                take(key, value);
        }
    for (auto const& [key, _]: cli)
        if (!is_known(key))
            throw InputError(fmt::format("unknown option '{}'", key));

    RunConfig c;
    for (auto const& key: known)
    {
        if (auto it = cli.find(key); it != cli.end())
            apply(c, key, it->second);
        else if (auto v = env ? env(env_name(key)) : std::nullopt)
            apply(c, key, *v);
        else if (auto f = from_file.find(key); f != from_file.end())
            apply(c, key, f->second);
    }
    return c;
}

RunConfig RunConfig::load(const std::string& path, const std::map<std::string, std::string>& cli)
{
    Json doc;
    std::string base = ".";
    if (!path.empty())
    {
        doc = text::read_json_file(path);
        base = fs::path(path).parent_path().string();
        if (base.empty())
            base = ".";
    }
    return resolve(doc, base, process_env(), cli);
}

void RunConfig::validate() const
{
    auto need = [](const char* key, const std::string& p, bool required) {
        if (p.empty())
        {
            if (required)
                throw InputError(fmt::format("'{}' is required (flag --{}, env {}, or config file)", key, key,
                                             env_name(key)));
            return;
        }
        if (!fs::exists(p))
            throw InputError(fmt::format("'{}' path does not exist: {}", key, p));
    };
    need("corpus", corpus, true);
    need("typology", typology, true);
    need("registry", registry, false);
    need("backends", backends, false);
    need("kb", kb, false);
    need("aliases", aliases, false);
    need("prompts", prompts, false);
    if (search != "corpus" && !is_http(search))
        need("search", search, true);
    budgets.validate();
    if (!(close_percentile > 0.0 && close_percentile <= 100.0))
        throw InputError("'close_percentile' must be in (0, 100]");
    if (!(kb_threshold >= -1.0 && kb_threshold <= 1.0))
        throw InputError("'kb_threshold' must be in [-1, 1]");
    if (kb_top_k == 0)
        throw InputError("'kb_top_k' must be positive");
}

Json RunConfig::to_json() const
{
    return {{"corpus", corpus},
            {"typology", typology},
            {"registry", registry},
            {"backends", backends},
            {"kb", kb},
            {"search", search},
            {"aliases", aliases},
            {"prompts", prompts},
            {"output", output},
            {"listen", listen},
            {"seed", seed},
            {"budgets", budgets.to_json()},
            {"close_percentile", close_percentile},
            {"kb_threshold", kb_threshold},
            {"kb_top_k", kb_top_k},
            {"followup_context", followup_context}};
}

std::unique_ptr<Workspace> Workspace::load(const RunConfig& config)
{
    config.validate();
    std::unique_ptr<Workspace> w(new Workspace());
    w->config_ = config;

    auto const manifest = corpus::CorpusManifest::load(config.corpus);
    if (!manifest.languages_path.empty())
        w->languages_ = corpus::LanguageTable::load(manifest.languages_path);
    auto mappings = corpus::load_mappings(manifest, w->languages_);

    w->typology_ = langsim::TypologyTable::load(config.typology);
    w->split_ = langsim::SimilaritySplit::build(w->typology_, config.close_percentile);
    w->registry_ = config.registry.empty() ? metrics::MetricRegistry::builtin()
                                           : metrics::MetricRegistry::load(config.registry);

    w->corpus_ = std::make_shared<const corpus::EvidenceCorpus>(corpus::EvidenceCorpus::reduce(
        std::move(mappings), manifest.removed_papers, scenario::instantiability_check(w->split_, w->registry_),
        manifest.paper_order));
    w->combined_.emplace(w->corpus_, corpus::ViewRole::Combined);
    w->reduced_.emplace(w->corpus_, corpus::ViewRole::ReducedOnly);

    if (config.kb.empty())
        w->kb_store_.emplace(w->embedder_.dimension());
    else
    {
        auto const docs = kb::load_kb_source(config.kb);
        w->kb_store_.emplace(kb::ingest_documents(docs, w->embedder_));
    }

    if (!config.aliases.empty())
        w->aliases_ = AliasTable::from_json(text::read_json_file(config.aliases));

    if (config.search == "corpus")
        w->search_ = std::make_unique<orch::CorpusSearchProvider>(*w->reduced_, w->registry_, &w->split_);
    else if (!is_http(config.search))
        w->search_ = std::make_unique<orch::FixtureSearchProvider>(orch::FixtureSearchProvider::load(config.search));
    return w;
}

scenario::GeneratorInputs Workspace::generator_inputs() const
{
    return {*combined_, *reduced_, split_, registry_, languages_};
}

orch::ToolSet Workspace::tools()
{
    orch::ToolSet t;
    t.kb_store = &*kb_store_;
    t.embedder = &embedder_;
    t.kb_cache = &kb_cache_;
    t.kb_threshold = config_.kb_threshold;
    t.kb_top_k = config_.kb_top_k;
    t.search = search_.get();
    t.names = &languages_;
    return t;
}

orch::EngineSettings Workspace::engine_settings() const
{
    return {config_.budgets, config_.followup_context};
}

std::vector<std::string> Workspace::known_languages() const
{
    std::set<std::string, FoldLess> out;
    for (auto const& [_, m]: corpus_->reduced())
        for (auto const& [lang, __]: m.entries)
            out.insert(lang);
    return {out.begin(), out.end()};
}

std::vector<std::string> Workspace::known_families() const
{
    std::set<std::string, FoldLess> out;
    for (auto const& [_, m]: corpus_->reduced())
        for (auto const& [__, fams]: m.entries)
            for (auto const& [fam, ___]: fams)
                out.insert(fam);
    return {out.begin(), out.end()};
}

orch::BackendSet load_backends(const RunConfig& config, const orch::BackendFactory& factory)
{
    orch::BackendFactory combined = [&factory](orch::Role role, const orch::BackendSpec& spec) {
        std::shared_ptr<orch::AgentBackend> b;
        if (factory)
            b = factory(role, spec);
        if (!b)
            b = orch::make_scripted(role, spec);
        if (!b)
            throw InputError(fmt::format("no backend implementation for type '{}' (role {})", spec.type,
                                         orch::to_string(role)));
        return b;
    };
    if (config.backends.empty())
        return orch::BackendSet::uniform(orch::make_heuristic_backend(config.seed));
    return orch::BackendSet::load(config.backends, combined);
}

Json RunRecord::to_json() const
{
    return {{"question", question.to_json()}, {"conversation_id", conversation_id}, {"response", response.to_json()}};
}

RunRecord RunRecord::from_json(const Json& doc)
{
    return {scenario::Question::from_json(doc.at("question")), doc.value("conversation_id", ""),
            orch::FinalResponse::from_json(doc.at("response"))};
}

std::vector<RunRecord> run_questions(const std::vector<scenario::Question>& questions,
                                     Workspace& workspace,
                                     const orch::BackendSet& backends,
                                     orch::ConversationStore& store)
{
    orch::Orchestrator engine(backends, workspace.tools(), workspace.registry(), workspace.engine_settings());
    std::vector<RunRecord> out;
    for (auto const& q: questions)
    {
        auto [id, conv] = store.create(q.id);
        engine.start(*conv, id);
        engine.run_turn(*conv, q.to_query(), q.complete_question);
        RunRecord r {q, id, {}};
        auto const& turns = conv->dag().turns();
        if (!turns.empty() && turns.back().final_response)
            r.response = *turns.back().final_response;
        else
            r.response.no_evidence = true;
        out.push_back(std::move(r));
    }
    return out;
}

Json Evaluation::summary() const
{
    Json judge = Json::object();
    std::map<std::string, std::size_t> verdicts;
    double sum = 0.0;
    std::size_t judged = 0;
    for (auto const& r: records)
        if (r.contains("judge") && r["judge"].contains("average_score"))
        {
            sum += r["judge"]["average_score"].get<double>();
            ++judged;
            ++verdicts[r["judge"]["verdict"].get<std::string>()];
        }
    if (judged)
        judge = {{"judged", judged}, {"mean_average_score", sum / static_cast<double>(judged)}, {"verdicts", verdicts}};
    return {{"questions", records.size()},
            {"extraction_failures", extraction_failures},
            {"breakdown", breakdown.to_json()},
            {"judge", judge},
            {"diagnostics", diagnostics ? diagnostics->to_json() : Json(nullptr)}};
}

Evaluation evaluate_run(const std::vector<RunRecord>& run,
                        const Workspace& workspace,
                        const orch::BackendSet& backends,
                        const std::vector<std::vector<orch::Event>>& logs,
                        const EvaluationOptions& options)
{
    Evaluation out;
    std::vector<eval::ScoredQuestion> scored;
    for (auto const& r: run)
    {
        auto const& q = r.question;
        auto const truth = metrics::ground_truth(q.ground_truth_ref, workspace.combined(), workspace.registry());
        eval::ExtractedPrediction extraction;
        Json record {{"question_id", q.id}, {"conversation_id", r.conversation_id}};
        if (!text::trim(r.response.report).empty())
        {
            try
            {
                extraction = eval::extract_prediction(r.response.report, q.query_type, q.complete_question,
                                                      backends.at(orch::Role::PredictionExtractor));
            }
            catch (const BackendError& e)
            {
                ++out.extraction_failures;
                record["extraction_error"] = e.what();
            }
        }
        auto s = eval::score_question({q.id, q.scenario, extraction, truth}, workspace.registry(), workspace.aliases());
        record["extraction"] = extraction.to_json();
        record["ground_truth"] = truth.to_json();
        record["score"] = s.to_json();
        if (options.judge && !text::trim(r.response.report).empty())
        {
            try
            {
                record["judge"] = eval::judge_report(r.response.report, backends.at(orch::Role::QualityJudge)).to_json();
            }
            catch (const BackendError& e)
            {
                record["judge"] = {{"error", e.what()}};
            }
        }
        scored.push_back(std::move(s));
        out.records.push_back(std::move(record));
    }
    out.breakdown = eval::breakdown(scored);
    if (options.diagnostics)
        out.diagnostics = eval::run_diagnostics(logs, backends);
    return out;
}

} // namespace tmlpred::ws
