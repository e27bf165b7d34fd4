// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/error.hpp>
#include <tmlpred/metrics.hpp>

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace tmlpred::metrics
{

namespace
{
// Scaling constants for individual metrics are not published; everything
// beyond the fraction rule is identity until a reviewed value is known.
constexpr std::string_view builtin_registry_text = R"({
  "code_generation": [
    {"family": "pass@1", "metrics": {"pass@1": {}}},
    {"family": "accuracy", "metrics": {"accuracy": {}, "exact-match": {}}}
  ],
  "mathematical_reasoning": [
    {"family": "accuracy", "metrics": {"accuracy": {}, "exact-match": {}, "EM": {}}}
  ],
  "qa_vqa": [
    {"family": "f1", "metrics": {"F1": {}}},
    {"family": "accuracy", "metrics": {"accuracy": {}, "exact-match": {}, "EM": {}}}
  ],
  "classification_nli": [
    {"family": "accuracy", "metrics": {"accuracy": {}}},
    {"family": "f1", "metrics": {"F1": {}, "macro-F1": {}}}
  ],
  "text_summarization": [
    {"family": "rouge-l", "metrics": {"ROUGE-L": {}, "ROUGE-Lsum": {}}},
    {"family": "rouge-1", "metrics": {"ROUGE-1": {}}},
    {"family": "rouge-2", "metrics": {"ROUGE-2": {}}}
  ],
  "machine_translation": [
    {"family": "chrf++", "metrics": {"chrF++": {}}},
    {"family": "chrf", "metrics": {"chrF": {}}},
    {"family": "bleu", "metrics": {"BLEU": {}, "sacreBLEU": {}}}
  ]
})";

struct ParsedRaw
{
    double value;
    bool percent;
};

ParsedRaw parse_raw(std::string_view raw)
{
    auto body = text::trim(raw);
    bool percent = false;
    if (!body.empty() && body.back() == '%')
    {
        percent = true;
        body = text::trim(std::string_view(body).substr(0, body.size() - 1));
    }
    auto const value = text::parse_number(body);
    if (!value)
        throw InputError(fmt::format("cannot parse metric value '{}'", raw));
    return {*value, percent};
}

double apply_rules(double value, bool percent, const MetricScale* scale, std::string_view metric)
{
    double out = value;
    if (!percent)
    {
        bool const fractional = scale ? scale->fractional : true;
        if (fractional && out >= 0.0 && out <= 1.0)
            out *= 100.0;
        if (scale)
            out = scale->scale_a * out + scale->scale_b;
    }
    if (!(out >= 0.0 && out <= 100.0))
        throw InputError(fmt::format("{} value {} is outside [0, 100] after normalization", metric, value));
    return out;
}

const std::vector<MetricFamily> no_families;
} // namespace

MetricRegistry MetricRegistry::from_json(const Json& doc)
{
    if (!doc.is_object())
        throw InputError("metric registry must be a JSON object");
    MetricRegistry registry;
    for (auto const& [task_name, families]: doc.items())
    {
        auto const task = task_from_string(task_name);
        if (!families.is_array())
            throw InputError(fmt::format("registry task '{}': expected an array of families", task_name));
        auto& list = registry.families_[task];
        for (auto const& f: families)
        {
            MetricFamily family;
            family.name = f.at("family").get<std::string>();
            for (auto const& [metric, params]: f.at("metrics").items())
            {
                MetricScale scale;
                scale.scale_a = params.value("scale_a", 1.0);
                scale.scale_b = params.value("scale_b", 0.0);
                scale.fractional = params.value("fractional", true);
                if (!(scale.scale_a > 0.0))
                    throw InputError(fmt::format("metric '{}': scale_a must be positive", metric));
                if (!family.metrics.emplace(text::trim(metric), scale).second)
                    throw InputError(fmt::format("metric '{}' listed twice in family '{}'", metric, family.name));
            }
            list.push_back(std::move(family));
        }
        // A metric may belong to one family per task only.
        std::map<std::string, std::string, FoldLess> seen;
        for (auto const& family: list)
            for (auto const& [metric, scale]: family.metrics)
                if (!seen.emplace(metric, family.name).second)
                    throw InputError(fmt::format("task '{}': metric '{}' in families '{}' and '{}'", task_name, metric,
                                                 seen[metric], family.name));
    }
    return registry;
}

MetricRegistry MetricRegistry::load(const std::string& path)
{
    try
    {
        return from_json(text::read_json_file(path));
    }
    catch (const Json::exception& e)
    {
        throw InputError(fmt::format("{}: {}", path, e.what()));
    }
}

const Json& MetricRegistry::builtin_json()
{
    static const Json doc = Json::parse(builtin_registry_text);
    return doc;
}

const MetricRegistry& MetricRegistry::builtin()
{
    static const MetricRegistry registry = from_json(builtin_json());
    return registry;
}

const std::vector<MetricFamily>& MetricRegistry::families(Task task) const
{
    auto it = families_.find(task);
    return it == families_.end() ? no_families : it->second;
}

std::optional<std::string> MetricRegistry::family_of(Task task, std::string_view metric) const
{
    for (auto const& family: families(task))
        if (family.metrics.contains(text::trim(metric)))
            return family.name;
    return std::nullopt;
}

std::optional<std::size_t> MetricRegistry::family_rank(Task task, std::string_view metric) const
{
    auto const& list = families(task);
    for (std::size_t i = 0; i < list.size(); ++i)
        if (list[i].metrics.contains(text::trim(metric)))
            return i;
    return std::nullopt;
}

bool MetricRegistry::compatible(std::string_view metric_a, std::string_view metric_b, Task task) const
{
    auto const a = family_of(task, metric_a);
    auto const b = family_of(task, metric_b);
    if (!a)
        throw NotFoundError(fmt::format("metric '{}' unknown for task {}", metric_a, task_id(task)));
    if (!b)
        throw NotFoundError(fmt::format("metric '{}' unknown for task {}", metric_b, task_id(task)));
    return *a == *b;
}

const MetricScale* MetricRegistry::scale_for(std::string_view metric, std::optional<Task> task) const
{
    if (!task)
        return nullptr;
    for (auto const& family: families(*task))
        if (auto it = family.metrics.find(text::trim(metric)); it != family.metrics.end())
            return &it->second;
    return nullptr;
}

double MetricRegistry::normalize(std::string_view metric, std::string_view raw, std::optional<Task> task) const
{
    auto const parsed = parse_raw(raw);
    return apply_rules(parsed.value, parsed.percent, scale_for(metric, task), metric);
}

double MetricRegistry::normalize(std::string_view metric, double raw, std::optional<Task> task) const
{
    if (!std::isfinite(raw))
        throw InputError(fmt::format("{} value is not finite", metric));
    return apply_rules(raw, false, scale_for(metric, task), metric);
}

Json MetricRegistry::to_json() const
{
    Json doc = Json::object();
    for (auto const& [task, families]: families_)
    {
        Json list = Json::array();
        for (auto const& family: families)
        {
            Json metrics = Json::object();
            for (auto const& [name, scale]: family.metrics)
                metrics[name] = {{"scale_a", scale.scale_a}, {"scale_b", scale.scale_b}, {"fractional", scale.fractional}};
            list.push_back({{"family", family.name}, {"metrics", metrics}});
        }
        doc[std::string(task_id(task))] = std::move(list);
    }
    return doc;
}

double normalize(std::string_view raw)
{
    auto const parsed = parse_raw(raw);
    return apply_rules(parsed.value, parsed.percent, nullptr, "metric");
}

std::string render_normalized(double value)
{
    return text::format_number(value) + "%";
}

Json GroundTruthRef::to_json() const
{
    Json doc = {
        {"task", std::string(task_id(task))},
        {"query_type", std::string(to_string(query_type))},
        {"language", language},
        {"families", families},
    };
    if (metric)
        doc["metric"] = *metric;
    return doc;
}

GroundTruthRef GroundTruthRef::from_json(const Json& doc)
{
    GroundTruthRef ref;
    ref.task = task_from_string(doc.at("task").get<std::string>());
    ref.query_type = query_type_from_string(doc.at("query_type").get<std::string>());
    ref.language = doc.at("language").get<std::string>();
    ref.families = doc.value("families", std::vector<std::string> {});
    if (doc.contains("metric") && !doc["metric"].is_null())
        ref.metric = doc["metric"].get<std::string>();
    return ref;
}

Json GroundTruth::to_json() const
{
    Json doc = {{"ref", ref.to_json()}, {"metric_family", metric_family}, {"tie", tie},
                {"multiple_records", multiple_records}};
    if (answer_numeric)
        doc["answer_numeric"] = {{"metric_name", answer_numeric->metric_name},
                                 {"raw", answer_numeric->raw},
                                 {"normalized", answer_numeric->normalized}};
    if (answer_label)
        doc["answer_label"] = *answer_label;
    Json scores = Json::object();
    for (auto const& [family, score]: candidate_scores)
        scores[family] = score;
    doc["candidate_scores"] = std::move(scores);
    Json source_list = Json::array();
    for (auto const& s: source)
        source_list.push_back({{"language", s.language},
                               {"family", s.family},
                               {"metric", s.record.metric_name},
                               {"value", s.record.raw_value},
                               {"paper_id", s.record.paper_id},
                               {"normalized", s.normalized}});
    doc["source"] = std::move(source_list);
    return doc;
}

namespace
{
struct Candidate
{
    std::size_t family_rank;
    corpus::MetricRecord record;
};

// Known records, each tagged with its family position.
std::vector<Candidate> known_records(const std::vector<corpus::MetricRecord>& records,
                                     Task task,
                                     const MetricRegistry& registry)
{
    std::vector<Candidate> out;
    for (auto const& r: records)
        if (auto rank = registry.family_rank(task, r.metric_name))
            out.push_back({*rank, r});
    return out;
}

// Most recent paper first; ties by metric name then paper id.
const corpus::MetricRecord* pick_record(const std::vector<Candidate>& candidates,
                                        std::size_t family_rank,
                                        const corpus::EvidenceCorpus& corpus,
                                        std::size_t* count)
{
    const corpus::MetricRecord* best = nullptr;
    std::size_t n = 0;
    for (auto const& c: candidates)
    {
        if (c.family_rank != family_rank)
            continue;
        ++n;
        if (!best)
        {
            best = &c.record;
            continue;
        }
        auto const rank_c = corpus.paper_rank(c.record.paper_id);
        auto const rank_b = corpus.paper_rank(best->paper_id);
        if (rank_c != rank_b)
        {
            if (rank_c > rank_b)
                best = &c.record;
            continue;
        }
        if (std::tie(c.record.metric_name, c.record.paper_id) < std::tie(best->metric_name, best->paper_id))
            best = &c.record;
    }
    if (count)
        *count = n;
    return best;
}
} // namespace

GroundTruth ground_truth(const GroundTruthRef& ref, const corpus::CorpusView& combined, const MetricRegistry& registry)
{
    if (combined.role() != corpus::ViewRole::Combined)
        throw InputError("ground truth must be drawn from the combined corpus view");

    GroundTruth gt;
    gt.ref = ref;
    auto const task = ref.task;
    auto const& families = registry.families(task);

    std::optional<std::size_t> pinned;
    if (ref.metric)
    {
        pinned = registry.family_rank(task, *ref.metric);
        if (!pinned)
            throw NotFoundError(fmt::format("metric '{}' unknown for task {}", *ref.metric, task_id(task)));
    }

    if (ref.query_type == QueryType::NumericPrediction)
    {
        if (ref.families.size() != 1)
            throw InputError("numeric ground truth needs exactly one model family");
        auto const& family = ref.families.front();
        auto const candidates = known_records(combined.lookup(task, ref.language, family), task, registry);
        std::optional<std::size_t> rank = pinned;
        if (!rank)
        {
            for (auto const& c: candidates)
                if (!rank || c.family_rank < *rank)
                    rank = c.family_rank;
        }
        std::size_t count = 0;
        auto const* chosen = rank ? pick_record(candidates, *rank, combined.corpus(), &count) : nullptr;
        if (!chosen)
            throw NotFoundError(fmt::format("no compatible record for {} / {} / {}", task_id(task), ref.language,
                                            family));
        auto const normalized = registry.normalize(chosen->metric_name, chosen->raw_value, task);
        gt.metric_family = families[*rank].name;
        gt.multiple_records = count > 1;
        gt.answer_numeric = MetricValue {chosen->metric_name, text::format_number(chosen->raw_value), normalized};
        gt.source.push_back({ref.language, family, *chosen, normalized});
        return gt;
    }

    std::vector<std::string> names = ref.families;
    if (names.empty())
    {
        if (auto const* m = combined.mapping(task))
            if (auto it = m->entries.find(ref.language); it != m->entries.end())
                for (auto const& [family, records]: it->second)
                    names.push_back(family);
    }

    std::vector<std::pair<std::string, std::vector<Candidate>>> per_family;
    std::optional<std::size_t> rank = pinned;
    for (auto const& name: names)
    {
        auto records = known_records(combined.lookup(task, ref.language, name), task, registry);
        if (!pinned)
            for (auto const& c: records)
                if (!rank || c.family_rank < *rank)
                    rank = c.family_rank;
        per_family.emplace_back(name, std::move(records));
    }
    if (!rank)
        throw NotFoundError(fmt::format("no compatible record to compare for {} / {}", task_id(task), ref.language));

    gt.metric_family = families[*rank].name;
    std::optional<std::string> best;
    double best_score = -1.0;
    for (auto const& [name, records]: per_family)
    {
        auto const* chosen = pick_record(records, *rank, combined.corpus(), nullptr);
        if (!chosen)
            continue;
        auto const score = registry.normalize(chosen->metric_name, chosen->raw_value, task);
        gt.candidate_scores[name] = score;
        gt.source.push_back({ref.language, name, *chosen, score});
    }
    for (auto const& [name, score]: gt.candidate_scores)
    {
        // candidate_scores iterates in case-insensitive order, so the first
        // name reaching the top score wins ties.
        if (!best || score > best_score)
        {
            best = name;
            best_score = score;
        }
    }
    if (!best)
        throw NotFoundError(fmt::format("no compatible record to compare for {} / {}", task_id(task), ref.language));
    gt.tie = std::count_if(gt.candidate_scores.begin(), gt.candidate_scores.end(),
                           [&](auto const& kv) { return kv.second == best_score; })
             > 1;
    gt.answer_label = *best;
    return gt;
}

} // namespace tmlpred::metrics
