// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tmlpred/backend.hpp>
#include <tmlpred/dag.hpp>
#include <tmlpred/metrics.hpp>
#include <tmlpred/scenario.hpp>

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

/// Prediction extraction, PredSet/QnASet scoring, judge scoring,
/// reasoning diagnostics, and breakdown tables.
namespace tmlpred::eval
{

struct ExtractedMetric
{
    std::string metric_name;
    std::string value;
    double value_in_100_range = 0.0;

    bool operator==(const ExtractedMetric&) const = default;
};

struct ExtractedPrediction
{
    bool is_answer_present = false;
    std::vector<ExtractedMetric> metrics;
    std::string answer_text;

    Json to_json() const;
    /// Strict schema check; throws InputError on any violation.
    static ExtractedPrediction from_json(const Json& doc);
    bool operator==(const ExtractedPrediction&) const = default;
};

/// Asks the prediction_extractor role, re-asking once on a malformed reply.
/// Throws InputError for an empty report and BackendError after the retry.
ExtractedPrediction extract_prediction(std::string_view report,
                                       QueryType query_type,
                                       std::string_view user_query,
                                       const orch::AgentBackend& backend);

/// Comparison key for a model name: alias-resolved, case-folded, with
/// whitespace runs collapsed.
std::string canonical_label(std::string_view name, const AliasTable& aliases);

/// One scored question.
struct ScoredQuestion
{
    std::string question_id;
    Task task = Task::CodeGeneration;
    scenario::Scenario scenario = scenario::Scenario::S1;
    QueryType query_type = QueryType::NumericPrediction;

    bool answered = false;
    /// Numeric: counted in MAE. Comparative: always true.
    bool scored = false;
    /// "", "unanswered" or "incompatible metric".
    std::string exclusion;

    std::optional<double> predicted_value;
    std::string predicted_metric;
    std::string predicted_label;

    std::optional<double> truth_value;
    std::string truth_metric;
    std::string truth_label;
    std::string metric_family;

    std::optional<double> abs_error;
    std::optional<bool> correct;

    Json to_json() const;
    static ScoredQuestion from_json(const Json& doc);
};

struct ScoringItem
{
    std::string question_id;
    scenario::Scenario scenario = scenario::Scenario::S1;
    ExtractedPrediction prediction;
    metrics::GroundTruth truth;
};

struct PredSetScore
{
    std::vector<ScoredQuestion> records;
    std::optional<double> mae;
    std::size_t total = 0;
    std::size_t answered = 0;
    std::size_t scored = 0;
    /// scored / total; 0 for an empty set.
    double coverage = 0.0;
};

struct QnaSetScore
{
    std::vector<ScoredQuestion> records;
    std::optional<double> accuracy;
    std::size_t total = 0;
    std::size_t answered = 0;
    std::size_t correct = 0;
};

/// MAE over answered questions whose extracted metric shares the ground
/// truth's metric family; the first compatible extracted metric is used.
PredSetScore score_predset(const std::vector<ScoringItem>& items, const metrics::MetricRegistry& registry);

/// Accuracy with unanswered questions counted as incorrect.
QnaSetScore score_qnaset(const std::vector<ScoringItem>& items, const AliasTable& aliases);

/// Scores a question by its ground-truth query type.
ScoredQuestion score_question(const ScoringItem& item,
                              const metrics::MetricRegistry& registry,
                              const AliasTable& aliases);

enum class Verdict
{
    Accept,
    MinorRevision,
    MajorRevision,
    Reject,
};

std::string_view to_string(Verdict v) noexcept;
/// >= 4.25 Accept, >= 3.25 Minor revision, >= 2.5 Major revision, else Reject.
Verdict verdict_for(double average) noexcept;

inline constexpr std::array<std::string_view, 4> judge_metric_names {
    "predictive_plausibility", "feature_selection", "coherence", "citation_emphasis"};

struct JudgeScores
{
    /// Indexed like judge_metric_names; nullopt when the judge could not assess.
    std::array<std::optional<int>, 4> scores {};
    std::array<std::string, 4> rationales {};
    /// Mean of the non-null scores, rounded to two decimals.
    double average = 0.0;
    Verdict verdict = Verdict::Reject;
    /// The judge's own verdict text; not used for scoring.
    std::string advisory_verdict;

    Json to_json() const;
    /// Throws InputError on schema violations or when every score is null.
    static JudgeScores from_judge_output(const Json& doc);
};

JudgeScores judge_report(std::string_view report, const orch::AgentBackend& backend);

struct Rate
{
    std::size_t positives = 0;
    std::size_t evaluated = 0;
    std::size_t unevaluable = 0;

    /// nullopt (not applicable) when nothing was evaluated.
    std::optional<double> value() const;
    Json to_json() const;
};

struct DiagnosticsReport
{
    Rate thought_faithfulness;
    Rate capability_compliance;
    Rate web_search_relevance;
    Rate feature_correctness;
    /// First attempt of each coder call.
    Rate code_execution_success;
    /// Any attempt of each coder call.
    Rate code_execution_success_with_retry;

    Json to_json() const;
};

/// Judges thought creation, search calls, and coder artifacts found in the
/// event logs. Judge roles: faithfulness_judge, compliance_judge,
/// relevance_judge, code_judge.
DiagnosticsReport run_diagnostics(const std::vector<std::vector<orch::Event>>& logs, const orch::BackendSet& judges);

struct Cell
{
    std::size_t numeric_total = 0;
    std::size_t numeric_scored = 0;
    double abs_error_sum = 0.0;
    std::size_t comparative_total = 0;
    std::size_t comparative_correct = 0;

    std::optional<double> mae() const;
    std::optional<double> accuracy() const;
    /// numeric_scored / numeric_total; nullopt without numeric questions.
    std::optional<double> coverage() const;
    void add(const ScoredQuestion& q);
    Json to_json() const;
};

struct Breakdown
{
    std::map<std::string, Cell> per_task;
    std::map<std::string, Cell> per_scenario;
    /// Keyed "<task>/<scenario>".
    std::map<std::string, Cell> per_task_scenario;
    /// Numeric questions grouped by ground-truth metric.
    std::map<std::string, Cell> per_metric;
    Cell overall;

    Json to_json() const;
    /// `group,key,numeric_total,numeric_scored,mae,coverage,comparative_total,comparative_correct,accuracy`
    std::string to_csv() const;
};

Breakdown breakdown(const std::vector<ScoredQuestion>& records);

} // namespace tmlpred::eval
