// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tmlpred/corpus.hpp>
#include <tmlpred/langsim.hpp>
#include <tmlpred/metrics.hpp>
#include <tmlpred/task.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

/// Evidence scenarios S1-S5 and the scenario-stratified question generator.
namespace tmlpred::scenario
{

enum class Scenario
{
    S1 = 1, ///< language and family observed together
    S2,     ///< language observed, family not observed with it
    S3,     ///< language unobserved, family observed on a close language
    S4,     ///< language unobserved, family observed on distant languages only
    S5,     ///< language and family both unobserved
};

inline constexpr std::array<Scenario, 5> all_scenarios {Scenario::S1, Scenario::S2, Scenario::S3, Scenario::S4,
                                                        Scenario::S5};

std::string_view to_string(Scenario s) noexcept;
Scenario scenario_from_string(std::string_view name);

/// A Task-Model-Language request.
struct TmlQuery
{
    Task task = Task::CodeGeneration;
    std::optional<std::string> model_family;
    std::optional<std::string> language;
    QueryType query_type = QueryType::NumericPrediction;
    /// Comparative questions: the families being compared (empty means all).
    std::vector<std::string> candidates;
    std::string text;

    Json to_json() const;
    static TmlQuery from_json(const Json& doc);
    bool operator==(const TmlQuery&) const = default;
};

/// Scenario of (task, language, family) against the reduced view.
/// Throws InputError when the view is not ReducedOnly, and when S3/S4 must
/// be told apart but the language has no comparable typological vector.
Scenario classify(Task task,
                  std::string_view language,
                  std::string_view family,
                  const corpus::CorpusView& reduced,
                  const langsim::SimilaritySplit& split);

/// Requires both language and model family. Throws InputError otherwise.
Scenario classify_query(const TmlQuery& query, const corpus::CorpusView& reduced, const langsim::SimilaritySplit& split);

inline constexpr int template_count = 10;

/// Renders question template 1-10. Throws InputError for an unknown template
/// or when it needs more models/languages than supplied.
std::string render_question(int template_id,
                            Task task,
                            std::span<const std::string> models,
                            std::span<const std::string> languages);

/// Alphabetical (case-insensitive), comma-separated, no spaces.
std::string format_list(std::vector<std::string> items);

struct Question
{
    std::string id;
    std::string complete_question;
    Task task = Task::CodeGeneration;
    std::string models;
    std::string languages;
    QueryType query_type = QueryType::NumericPrediction;
    Scenario scenario = Scenario::S1;
    metrics::GroundTruthRef ground_truth_ref;
    int template_id = 1;
    /// Language/family pair the scenario was assigned from. For comparative
    /// questions the family is the ground-truth answer.
    std::string target_language;
    std::string target_family;
    /// Set when the block reused a combination after exhausting the space.
    bool duplicate = false;

    /// The query a system under test receives.
    TmlQuery to_query() const;

    Json to_json() const;
    static Question from_json(const Json& doc);
};

/// Builds a Question from a template; list fields are formatted per format_list.
Question make_question(int template_id,
                       Task task,
                       std::vector<std::string> models,
                       std::vector<std::string> languages,
                       const corpus::LanguageTable& names = {});

struct QuestionBlock
{
    Task task = Task::CodeGeneration;
    Scenario scenario = Scenario::S1;
    std::vector<Question> questions;
    /// True when the candidate space ran out and duplicates were emitted.
    bool exhausted = false;
};

struct BlockRequest
{
    Task task = Task::CodeGeneration;
    Scenario scenario = Scenario::S1;
    std::size_t n_numeric = 25;
    std::size_t n_comparative = 25;
    std::uint64_t seed = 0;
};

/// Everything the generator needs; all references must outlive the call.
struct GeneratorInputs
{
    const corpus::CorpusView& combined;
    const corpus::CorpusView& reduced;
    const langsim::SimilaritySplit& split;
    const metrics::MetricRegistry& registry;
    const corpus::LanguageTable& names;
};

/// Candidate (language, family) targets per scenario for one task.
struct CandidateSpace
{
    struct Numeric
    {
        std::string language;
        std::string family;
    };
    struct Comparative
    {
        std::string language;
        std::vector<std::string> families; ///< empty: every observed family
        std::string answer;
    };
    std::array<std::vector<Numeric>, 5> numeric;
    std::array<std::vector<Comparative>, 5> comparative;
};

CandidateSpace enumerate_candidates(Task task, const GeneratorInputs& in);

/// Generates one task-scenario block deterministically from `request.seed`.
/// Throws InputError("scenario not instantiable") when the candidate space
/// for a requested question type is empty.
QuestionBlock build_blocks(const BlockRequest& request, const GeneratorInputs& in);

/// Instantiability problems for every task in the combined corpus.
std::vector<std::string> check_instantiability(const corpus::EvidenceCorpus& corpus,
                                               const langsim::SimilaritySplit& split,
                                               const metrics::MetricRegistry& registry);

corpus::InstantiabilityCheck instantiability_check(const langsim::SimilaritySplit& split,
                                                   const metrics::MetricRegistry& registry);

} // namespace tmlpred::scenario
