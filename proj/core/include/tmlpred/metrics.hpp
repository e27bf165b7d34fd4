// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tmlpred/corpus.hpp>
#include <tmlpred/task.hpp>
#include <tmlpred/text.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

/// Metric normalization to the shared 0-100 scale, metric-family
/// compatibility, and ground truth from the combined corpus.
namespace tmlpred::metrics
{

/// Per-metric post-processing applied to unsuffixed raw numbers.
struct MetricScale
{
    double scale_a = 1.0;
    double scale_b = 0.0;
    /// Whether a raw value in [0, 1] is a fraction to be multiplied by 100.
    bool fractional = true;
};

struct MetricFamily
{
    std::string name;
    std::map<std::string, MetricScale, FoldLess> metrics;
};

/// Task -> ordered metric families. Family order is the ground-truth
/// selection priority when a triple has records in several families.
class MetricRegistry
{
  public:
    MetricRegistry() = default;

    /// `{ "<task>": [ { "family": "...", "metrics": { "<name>": {"scale_a": a, "scale_b": b} } } ] }`
    static MetricRegistry from_json(const Json& doc);
    static MetricRegistry load(const std::string& path);

    /// The reviewed default covering pass@1, accuracy, F1, exact match, BLEU, chrF, chrF++ and ROUGE.
    static const MetricRegistry& builtin();
    static const Json& builtin_json();

    const std::vector<MetricFamily>& families(Task task) const;

    /// Family name, or nullopt when the metric is unknown for the task.
    std::optional<std::string> family_of(Task task, std::string_view metric) const;
    /// Position of the metric's family in the task's list; nullopt when unknown.
    std::optional<std::size_t> family_rank(Task task, std::string_view metric) const;
    bool knows(Task task, std::string_view metric) const { return family_of(task, metric).has_value(); }

    /// True iff both metrics belong to the same family for the task.
    /// Throws NotFoundError when either metric is unknown.
    bool compatible(std::string_view metric_a, std::string_view metric_b, Task task) const;

    /// Maps a reported value to [0, 100]:
    ///  - "61.25%" -> 61.25 (percent text is already on the 0-100 scale; no scaling)
    ///  - 0.85 -> 85 for fractional metrics (values in [0, 1], including exactly 1)
    ///  - values in (1, 100] unchanged
    /// then applies the metric's linear scaling when the task knows the metric.
    /// Throws InputError when unparseable or outside [0, 100] afterwards.
    double normalize(std::string_view metric, std::string_view raw, std::optional<Task> task = std::nullopt) const;
    double normalize(std::string_view metric, double raw, std::optional<Task> task = std::nullopt) const;

    Json to_json() const;

  private:
    const MetricScale* scale_for(std::string_view metric, std::optional<Task> task) const;

    std::map<Task, std::vector<MetricFamily>> families_;
};

/// Registry-free normalization with identity scaling.
double normalize(std::string_view raw);

/// Text form of a normalized value that normalizes back to the same value ("85%").
std::string render_normalized(double value);

struct MetricValue
{
    std::string metric_name;
    std::string raw;
    double normalized = 0.0;

    bool operator==(const MetricValue&) const = default;
};

/// What a question asks, in corpus terms. Numeric questions name one family;
/// comparative ones name the candidates (empty means every family observed
/// for the language).
struct GroundTruthRef
{
    Task task = Task::CodeGeneration;
    QueryType query_type = QueryType::NumericPrediction;
    std::string language;
    std::vector<std::string> families;
    std::optional<std::string> metric;

    Json to_json() const;
    static GroundTruthRef from_json(const Json& doc);
    bool operator==(const GroundTruthRef&) const = default;
};

struct SourceRecord
{
    std::string language;
    std::string family;
    corpus::MetricRecord record;
    double normalized = 0.0;
};

struct GroundTruth
{
    GroundTruthRef ref;
    std::optional<MetricValue> answer_numeric;
    std::optional<std::string> answer_label;
    std::string metric_family;
    std::vector<SourceRecord> source;
    /// Comparative: per-candidate score in the comparison family.
    std::map<std::string, double, FoldLess> candidate_scores;
    /// Comparative answer chosen among equal top scores.
    bool tie = false;
    /// Numeric answer chosen among several records of the same family.
    bool multiple_records = false;

    Json to_json() const;
};

/// Resolves the answer for `ref` from a Combined view. Numeric: the most recent
/// record in the highest-priority family present. Comparative: argmax over
/// candidates' scores in the highest-priority family any candidate has; ties
/// go to the case-insensitively first name with `tie` set.
/// Throws InputError for a ReducedOnly view and NotFoundError when no
/// compatible record exists.
GroundTruth ground_truth(const GroundTruthRef& ref, const corpus::CorpusView& combined, const MetricRegistry& registry);

} // namespace tmlpred::metrics
