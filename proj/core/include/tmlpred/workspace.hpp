// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tmlpred/backend.hpp>
#include <tmlpred/conversation_store.hpp>
#include <tmlpred/corpus.hpp>
#include <tmlpred/evalharness.hpp>
#include <tmlpred/kb.hpp>
#include <tmlpred/langsim.hpp>
#include <tmlpred/metrics.hpp>
#include <tmlpred/orchestrator.hpp>
#include <tmlpred/scenario.hpp>
#include <tmlpred/tools.hpp>

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

/// Run configuration and the loaded resources a run, evaluation, or service needs.
namespace tmlpred::ws
{

/// Looks up an environment variable; nullopt when unset.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

struct RunConfig
{
    std::string corpus;    ///< corpus manifest path
    std::string typology;  ///< typology file path
    std::string registry;  ///< metric registry; empty means the builtin one
    std::string backends;  ///< backend config; empty means scripted for every role
    std::string kb;        ///< KB source documents (JSON Lines); empty means no KB
    std::string search = "corpus"; ///< "corpus", a fixture file, or an http(s) endpoint
    std::string aliases;   ///< model-name aliases for comparative scoring
    std::string prompts;   ///< prompt template directory for network backends
    std::string output = "out";
    std::string listen = "127.0.0.1:8080";
    std::uint64_t seed = 0;
    orch::Budgets budgets;
    double close_percentile = 10.0;
    double kb_threshold = kb::default_threshold;
    std::size_t kb_top_k = kb::default_top_k;
    bool followup_context = true;

    /// Option names accepted in the file, as `TMLPRED_<NAME>` variables, and as flags.
    static const std::vector<std::string>& keys();

    /// Precedence per key: `cli` > environment > `file` > default. Relative
    /// paths from the file resolve against `base_dir`. Throws InputError for
    /// unknown keys, bad values, and secrets in the file.
    static RunConfig resolve(const Json& file,
                             const std::string& base_dir,
                             const EnvLookup& env,
                             const std::map<std::string, std::string>& cli);

    /// Reads `path` (may be empty) and resolves with the process environment.
    static RunConfig load(const std::string& path, const std::map<std::string, std::string>& cli = {});

    /// Throws InputError naming the first unresolvable path or bad budget.
    void validate() const;
    Json to_json() const;
};

/// Everything loaded from a RunConfig. Not copyable; views refer into it.
class Workspace
{
  public:
    static std::unique_ptr<Workspace> load(const RunConfig& config);

    const RunConfig& config() const noexcept { return config_; }
    const corpus::LanguageTable& languages() const noexcept { return languages_; }
    const corpus::EvidenceCorpus& corpus() const noexcept { return *corpus_; }
    const corpus::CorpusView& combined() const noexcept { return *combined_; }
    const corpus::CorpusView& reduced() const noexcept { return *reduced_; }
    const langsim::TypologyTable& typology() const noexcept { return typology_; }
    const langsim::SimilaritySplit& split() const noexcept { return split_; }
    const metrics::MetricRegistry& registry() const noexcept { return registry_; }
    const kb::VectorStore& kb_store() const noexcept { return *kb_store_; }
    const kb::EmbeddingBackend& embedder() const noexcept { return embedder_; }
    kb::RetrievalCache& kb_cache() noexcept { return kb_cache_; }
    const AliasTable& aliases() const noexcept { return aliases_; }

    const orch::SearchProvider* search() const noexcept { return search_.get(); }
    void set_search(std::unique_ptr<orch::SearchProvider> provider) { search_ = std::move(provider); }

    scenario::GeneratorInputs generator_inputs() const;
    orch::ToolSet tools();
    orch::EngineSettings engine_settings() const;

    /// Languages and model families observed in the reduced view of any task.
    std::vector<std::string> known_languages() const;
    std::vector<std::string> known_families() const;

  private:
    Workspace() = default;

    RunConfig config_;
    corpus::LanguageTable languages_;
    std::shared_ptr<const corpus::EvidenceCorpus> corpus_;
    std::optional<corpus::CorpusView> combined_;
    std::optional<corpus::CorpusView> reduced_;
    langsim::TypologyTable typology_;
    langsim::SimilaritySplit split_;
    metrics::MetricRegistry registry_;
    kb::HashEmbedder embedder_;
    std::optional<kb::VectorStore> kb_store_;
    kb::RetrievalCache kb_cache_;
    AliasTable aliases_;
    std::unique_ptr<orch::SearchProvider> search_;
};

/// Scripted backends for every role, then the config file's specs when
/// `config.backends` is set. `factory` is tried before the scripted one.
orch::BackendSet load_backends(const RunConfig& config, const orch::BackendFactory& factory = {});

/// One line of a run's results file.
struct RunRecord
{
    scenario::Question question;
    std::string conversation_id;
    orch::FinalResponse response;

    Json to_json() const;
    static RunRecord from_json(const Json& doc);
};

/// Runs one conversation per question; logs go to `store`.
std::vector<RunRecord> run_questions(const std::vector<scenario::Question>& questions,
                                     Workspace& workspace,
                                     const orch::BackendSet& backends,
                                     orch::ConversationStore& store);

struct EvaluationOptions
{
    bool judge = false;       ///< score each report with the quality judge
    bool diagnostics = false; ///< judge reasoning from the conversation logs
};

struct Evaluation
{
    std::vector<Json> records; ///< per question: extraction, ground truth, score, judge
    eval::Breakdown breakdown;
    std::optional<eval::DiagnosticsReport> diagnostics;
    /// Reports the extractor could not parse after its retry.
    std::size_t extraction_failures = 0;

    Json summary() const;
};

/// Extracts, scores, and (optionally) judges each run record. `logs` feeds
/// the diagnostics.
Evaluation evaluate_run(const std::vector<RunRecord>& run,
                        const Workspace& workspace,
                        const orch::BackendSet& backends,
                        const std::vector<std::vector<orch::Event>>& logs,
                        const EvaluationOptions& options);

} // namespace tmlpred::ws
