// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/error.hpp>
#include <tmlpred/evalharness.hpp>

#include <fmt/format.h>

#include <cmath>
#include <sstream>

namespace tmlpred::eval
{

namespace
{

Json opt_json(const std::optional<double>& v)
{
    return v ? Json(*v) : Json(nullptr);
}

std::optional<double> opt_double(const Json& doc, const char* key)
{
    auto it = doc.find(key);
    if (it == doc.end() || !it->is_number())
        return std::nullopt;
    return it->get<double>();
}

double round2(double v)
{
    return std::round(v * 100.0) / 100.0;
}

} // namespace

Json ExtractedPrediction::to_json() const
{
    Json list = Json::array();
    for (auto const& m: metrics)
        list.push_back({{"metric_name", m.metric_name}, {"value", m.value}, {"value_in_100_range", m.value_in_100_range}});
    return {{"is_answer_present", is_answer_present},
            {"predicted_metrics_and_values_for_predictive", std::move(list)},
            {"answer_text_for_qna", answer_text}};
}

ExtractedPrediction ExtractedPrediction::from_json(const Json& doc)
{
    if (!doc.is_object())
        throw InputError("extraction must be a JSON object");
    auto const present = doc.find("is_answer_present");
    if (present == doc.end() || !present->is_boolean())
        throw InputError("'is_answer_present' must be a boolean");
    auto const list = doc.find("predicted_metrics_and_values_for_predictive");
    if (list == doc.end() || !list->is_array())
        throw InputError("'predicted_metrics_and_values_for_predictive' must be a list");
    auto const answer = doc.find("answer_text_for_qna");
    if (answer == doc.end() || !answer->is_string())
        throw InputError("'answer_text_for_qna' must be a string");

    ExtractedPrediction out;
    out.is_answer_present = present->get<bool>();
    out.answer_text = answer->get<std::string>();
    for (auto const& m: *list)
    {
        if (!m.is_object())
            throw InputError("metric entries must be objects");
        auto const name = m.find("metric_name");
        auto const value = m.find("value");
        auto const scaled = m.find("value_in_100_range");
        if (name == m.end() || !name->is_string())
            throw InputError("'metric_name' must be a string");
        if (scaled == m.end() || !scaled->is_number())
            throw InputError("'value_in_100_range' must be numeric");
        auto const v = scaled->get<double>();
        if (!std::isfinite(v) || v < 0.0 || v > 100.0)
            throw InputError(fmt::format("'value_in_100_range' {} is outside [0, 100]", v));
        std::string raw;
        if (value != m.end() && value->is_string())
            raw = value->get<std::string>();
        else if (value != m.end() && value->is_number())
            raw = text::format_number(value->get<double>());
        else
            throw InputError("'value' must be text or a number");
        out.metrics.push_back({name->get<std::string>(), raw, v});
    }
    return out;
}

ExtractedPrediction extract_prediction(std::string_view report,
                                       QueryType query_type,
                                       std::string_view user_query,
                                       const orch::AgentBackend& backend)
{
    if (text::trim(report).empty())
        throw InputError("cannot extract a prediction from an empty report");
    orch::BackendRequest req {orch::Role::PredictionExtractor,
                              {{"user_query", std::string(user_query)},
                               {"predictive_or_qna",
                                query_type == QueryType::NumericPrediction ? "predictive" : "qna"},
                               {"agent_report", std::string(report)}},
                              "Extract the agent's predicted answer as JSON."};
    auto reply = orch::ask_json(backend, req, [](const Json& j) { ExtractedPrediction::from_json(j); });
    return ExtractedPrediction::from_json(reply);
}

std::string canonical_label(std::string_view name, const AliasTable& aliases)
{
    std::string collapsed;
    for (auto const& part: text::split(text::trim(name), ' '))
        if (!part.empty())
            collapsed += (collapsed.empty() ? "" : " ") + part;
    return text::fold(aliases.resolve(collapsed));
}

Json ScoredQuestion::to_json() const
{
    return {{"question_id", question_id},
            {"task", std::string(task_id(task))},
            {"scenario", std::string(scenario::to_string(scenario))},
            {"query_type", std::string(tmlpred::to_string(query_type))},
            {"answered", answered},
            {"scored", scored},
            {"exclusion", exclusion},
            {"predicted_value", opt_json(predicted_value)},
            {"predicted_metric", predicted_metric},
            {"predicted_label", predicted_label},
            {"truth_value", opt_json(truth_value)},
            {"truth_metric", truth_metric},
            {"truth_label", truth_label},
            {"metric_family", metric_family},
            {"abs_error", opt_json(abs_error)},
            {"correct", correct ? Json(*correct) : Json(nullptr)}};
}

ScoredQuestion ScoredQuestion::from_json(const Json& doc)
{
    ScoredQuestion q;
    q.question_id = doc.at("question_id").get<std::string>();
    q.task = task_from_string(doc.at("task").get<std::string>());
    q.scenario = scenario::scenario_from_string(doc.at("scenario").get<std::string>());
    q.query_type = query_type_from_string(doc.at("query_type").get<std::string>());
    q.answered = doc.value("answered", false);
    q.scored = doc.value("scored", false);
    q.exclusion = doc.value("exclusion", "");
    q.predicted_value = opt_double(doc, "predicted_value");
    q.predicted_metric = doc.value("predicted_metric", "");
    q.predicted_label = doc.value("predicted_label", "");
    q.truth_value = opt_double(doc, "truth_value");
    q.truth_metric = doc.value("truth_metric", "");
    q.truth_label = doc.value("truth_label", "");
    q.metric_family = doc.value("metric_family", "");
    q.abs_error = opt_double(doc, "abs_error");
    if (doc.contains("correct") && doc["correct"].is_boolean())
        q.correct = doc["correct"].get<bool>();
    return q;
}

namespace
{

ScoredQuestion base_record(const ScoringItem& item)
{
    ScoredQuestion q;
    q.question_id = item.question_id;
    q.task = item.truth.ref.task;
    q.scenario = item.scenario;
    q.query_type = item.truth.ref.query_type;
    q.metric_family = item.truth.metric_family;
    return q;
}

ScoredQuestion score_numeric(const ScoringItem& item, const metrics::MetricRegistry& registry)
{
    auto q = base_record(item);
    if (!item.truth.answer_numeric)
        throw InputError(fmt::format("question {} has no numeric ground truth", item.question_id));
    q.truth_value = item.truth.answer_numeric->normalized;
    q.truth_metric = item.truth.answer_numeric->metric_name;
    auto const& p = item.prediction;
    q.answered = p.is_answer_present && !p.metrics.empty();
    if (!q.answered)
    {
        q.exclusion = "unanswered";
        return q;
    }
    for (auto const& m: p.metrics)
    {
        auto const fam = registry.family_of(q.task, m.metric_name);
        if (fam && text::iequals(*fam, q.metric_family))
        {
            q.predicted_metric = m.metric_name;
            q.predicted_value = m.value_in_100_range;
            q.abs_error = std::abs(m.value_in_100_range - *q.truth_value);
            q.scored = true;
            return q;
        }
    }
    q.predicted_metric = p.metrics.front().metric_name;
    q.predicted_value = p.metrics.front().value_in_100_range;
    q.exclusion = "incompatible metric";
    return q;
}

ScoredQuestion score_comparative(const ScoringItem& item, const AliasTable& aliases)
{
    auto q = base_record(item);
    if (!item.truth.answer_label)
        throw InputError(fmt::format("question {} has no comparative ground truth", item.question_id));
    q.truth_label = *item.truth.answer_label;
    q.scored = true;
    auto const& p = item.prediction;
    q.answered = p.is_answer_present && !text::trim(p.answer_text).empty();
    q.predicted_label = p.answer_text;
    q.correct = q.answered && canonical_label(p.answer_text, aliases) == canonical_label(q.truth_label, aliases);
    if (!q.answered)
        q.exclusion = "unanswered";
    return q;
}

} // namespace

ScoredQuestion score_question(const ScoringItem& item,
                              const metrics::MetricRegistry& registry,
                              const AliasTable& aliases)
{
    return item.truth.ref.query_type == QueryType::NumericPrediction ? score_numeric(item, registry)
                                                                     : score_comparative(item, aliases);
}

PredSetScore score_predset(const std::vector<ScoringItem>& items, const metrics::MetricRegistry& registry)
{
    PredSetScore out;
    double sum = 0.0;
    for (auto const& item: items)
    {
        auto q = score_numeric(item, registry);
        ++out.total;
        out.answered += q.answered ? 1 : 0;
        if (q.scored)
        {
            ++out.scored;
            sum += *q.abs_error;
        }
        out.records.push_back(std::move(q));
    }
    if (out.scored)
        out.mae = sum / static_cast<double>(out.scored);
    if (out.total)
        out.coverage = static_cast<double>(out.scored) / static_cast<double>(out.total);
    return out;
}

QnaSetScore score_qnaset(const std::vector<ScoringItem>& items, const AliasTable& aliases)
{
    QnaSetScore out;
    for (auto const& item: items)
    {
        auto q = score_comparative(item, aliases);
        ++out.total;
        out.answered += q.answered ? 1 : 0;
        out.correct += *q.correct ? 1 : 0;
        out.records.push_back(std::move(q));
    }
    if (out.total)
        out.accuracy = static_cast<double>(out.correct) / static_cast<double>(out.total);
    return out;
}

std::string_view to_string(Verdict v) noexcept
{
    switch (v)
    {
        case Verdict::Accept: return "Accept";
        case Verdict::MinorRevision: return "Minor revision";
        case Verdict::MajorRevision: return "Major revision";
        case Verdict::Reject: return "Reject";
    }
    return "Reject";
}

Verdict verdict_for(double average) noexcept
{
    if (average >= 4.25)
        return Verdict::Accept;
    if (average >= 3.25)
        return Verdict::MinorRevision;
    if (average >= 2.5)
        return Verdict::MajorRevision;
    return Verdict::Reject;
}

Json JudgeScores::to_json() const
{
    Json metrics_list = Json::array();
    for (std::size_t i = 0; i < judge_metric_names.size(); ++i)
        metrics_list.push_back({{"metric_name", std::string(judge_metric_names[i])},
                                {"score", scores[i] ? Json(*scores[i]) : Json(nullptr)},
                                {"rationale", rationales[i]}});
    return {{"metrics", std::move(metrics_list)},
            {"average_score", average},
            {"verdict", std::string(to_string(verdict))},
            {"advisory_verdict", advisory_verdict}};
}

JudgeScores JudgeScores::from_judge_output(const Json& doc)
{
    if (!doc.is_object() || !doc.contains("metrics") || !doc["metrics"].is_array())
        throw InputError("judge output needs a 'metrics' list");
    JudgeScores out;
    std::array<bool, 4> seen {};
    for (auto const& m: doc["metrics"])
    {
        if (!m.is_object() || !m.contains("metric_name") || !m["metric_name"].is_string())
            throw InputError("judge metric entries need a 'metric_name'");
        auto const name = m["metric_name"].get<std::string>();
        auto const it = std::find(judge_metric_names.begin(), judge_metric_names.end(), name);
        if (it == judge_metric_names.end())
            throw InputError(fmt::format("unknown judge metric '{}'", name));
        auto const i = static_cast<std::size_t>(it - judge_metric_names.begin());
        if (seen[i])
            throw InputError(fmt::format("judge metric '{}' appears twice", name));
        seen[i] = true;
        auto const& score = m.value("score", Json());
        if (!score.is_null())
        {
            if (!score.is_number_integer() || score.get<int>() < 1 || score.get<int>() > 5)
                throw InputError(fmt::format("judge score for '{}' must be an integer 1-5 or null", name));
            out.scores[i] = score.get<int>();
        }
        out.rationales[i] = m.value("rationale", std::string {});
    }
    for (std::size_t i = 0; i < seen.size(); ++i)
        if (!seen[i])
            throw InputError(fmt::format("judge output is missing '{}'", judge_metric_names[i]));
    int sum = 0, n = 0;
    for (auto const& s: out.scores)
        if (s)
        {
            sum += *s;
            ++n;
        }
    if (n == 0)
        throw InputError("judge output has no scores");
    out.average = round2(static_cast<double>(sum) / n);
    out.verdict = verdict_for(out.average);
    if (doc.contains("overall_recommendation") && doc["overall_recommendation"].is_object())
        out.advisory_verdict = doc["overall_recommendation"].value("verdict", std::string {});
    return out;
}

JudgeScores judge_report(std::string_view report, const orch::AgentBackend& backend)
{
    orch::BackendRequest req {orch::Role::QualityJudge,
                              {{"report", std::string(report)}},
                              "Evaluate the report against the rubric and answer with the JSON schema."};
    auto reply = orch::ask_json(backend, req, [](const Json& j) { JudgeScores::from_judge_output(j); });
    return JudgeScores::from_judge_output(reply);
}

std::optional<double> Rate::value() const
{
    if (evaluated == 0)
        return std::nullopt;
    return static_cast<double>(positives) / static_cast<double>(evaluated);
}

Json Rate::to_json() const
{
    return {{"rate", opt_json(value())},
            {"positives", positives},
            {"evaluated", evaluated},
            {"unevaluable", unevaluable},
            {"applicable", evaluated > 0}};
}

Json DiagnosticsReport::to_json() const
{
    return {{"thought_faithfulness", thought_faithfulness.to_json()},
            {"capability_compliance", capability_compliance.to_json()},
            {"web_search_relevance", web_search_relevance.to_json()},
            {"feature_correctness", feature_correctness.to_json()},
            {"code_execution_success", code_execution_success.to_json()},
            {"code_execution_success_with_retry", code_execution_success_with_retry.to_json()}};
}

namespace
{

struct ProposedThought
{
    std::string name;
    std::string hypothesis;
    std::string method;
};

/// Applies a per-thought judge; `field` is the boolean verdict key.
void judge_thoughts(const orch::AgentBackend& judge,
                    orch::Role role,
                    const Json& base_context,
                    const std::vector<ProposedThought>& thoughts,
                    const char* field,
                    Rate& rate)
{
    if (thoughts.empty())
        return;
    Json paths = Json::array();
    for (auto const& t: thoughts)
        paths.push_back({{"thought_name", t.name}, {"hypothesis", t.hypothesis}, {"method", t.method}});
    auto ctx = base_context;
    ctx["thought_paths"] = std::move(paths);
    Json evals;
    try
    {
        evals = orch::ask_json(judge, {role, ctx, "Evaluate each thought path."}, [](const Json& j) {
            if (!j.contains("evaluations") || !j["evaluations"].is_array())
                throw BackendError("judge output needs an 'evaluations' list");
        })["evaluations"];
    }
    catch (const Error&)
    {
        rate.unevaluable += thoughts.size();
        return;
    }
    for (std::size_t i = 0; i < thoughts.size(); ++i)
    {
        const Json* match = nullptr;
        if (evals.size() == thoughts.size())
            match = &evals[i];
        else
            for (auto const& e: evals)
                if (e.is_object() && e.value("thought_name", "") == thoughts[i].name)
                {
                    match = &e;
                    break;
                }
        if (!match || !match->is_object() || !match->contains(field) || !(*match)[field].is_boolean())
        {
            ++rate.unevaluable;
            continue;
        }
        ++rate.evaluated;
        rate.positives += (*match)[field].get<bool>() ? 1 : 0;
    }
}

std::string guidance_text(const Json& payload)
{
    std::vector<std::string> lines;
    for (auto const& g: payload.value("guidance", Json::array()))
        if (g.is_string())
            lines.push_back(g.get<std::string>());
    return text::join(lines, "\n");
}

void diagnose_log(const std::vector<orch::Event>& log, const orch::BackendSet& judges, DiagnosticsReport& out)
{
    std::map<int, std::string> guidance;
    std::map<int, Json> queries;
    std::map<int, std::vector<ProposedThought>> proposed;
    std::map<std::string, ProposedThought> node_thought;
    std::map<std::string, int> node_turn;
    int turn = 0;

    struct CoderCall
    {
        bool first_ok = false;
        bool any_ok = false;
    };
    std::vector<CoderCall> coder_calls;

    for (auto const& e: log)
    {
        if (e.type == orch::ev::turn_started)
        {
            turn = e.data.value("turn", turn + 1);
            queries[turn] = e.data.value("query", Json::object());
        }
        else if (e.type == orch::ev::guidance_retrieved)
            guidance[turn] = guidance_text(e.data);
        else if (e.type == orch::ev::thought_created || e.type == orch::ev::thought_rejected)
        {
            ProposedThought t {e.data.value("name", ""), e.data.value("hypothesis", ""), e.data.value("method", "")};
            if (e.type == orch::ev::thought_created)
            {
                auto const id = e.data.value("node_id", "");
                node_thought[id] = t;
                node_turn[id] = turn;
                if (!e.data.value("parent", Json()).is_null())
                    continue;
            }
            if (t.method.empty() && t.hypothesis.empty())
                continue;
            proposed[turn].push_back(std::move(t));
        }
        else if (e.type == orch::ev::tool_invoked)
        {
            auto const tool = e.data.value("tool", "");
            bool const ok = e.data.value("status", "") == "ok";
            auto const attempt = e.data.value("attempt", 1);
            auto const node_id = e.data.value("node_id", "");
            if (tool == "coder")
            {
                if (attempt == 1 || coder_calls.empty())
                    coder_calls.push_back({ok && attempt == 1, ok});
                else
                    coder_calls.back().any_ok = coder_calls.back().any_ok || ok;
                if (ok && e.data.contains("artifact"))
                {
                    auto const& art = e.data["artifact"];
                    auto const& q = queries[node_turn[node_id]];
                    Json ctx {{"task_context", q.value("task", "")},
                              {"user_question", q.value("text", "")},
                              {"code_content", art.value("code", std::string {})},
                              {"artifact", art}};
                    try
                    {
                        auto reply = orch::ask_json(judges.at(orch::Role::CodeJudge),
                                                    {orch::Role::CodeJudge, ctx, "Evaluate the analysis code."},
                                                    [](const Json& j) {
                                                        if (!j.contains("features_used") || !j["features_used"].is_array())
                                                            throw BackendError("code judge needs 'features_used'");
                                                    });
                        ++out.feature_correctness.evaluated;
                        bool const correct = !reply["features_used"].empty() &&
                                             reply.value("feature_engineering_level", std::string("none")) != "none";
                        out.feature_correctness.positives += correct ? 1 : 0;
                    }
                    catch (const Error&)
                    {
                        ++out.feature_correctness.unevaluable;
                    }
                }
            }
            else if (tool == "search")
            {
                auto const& t = node_thought[node_id];
                Json ctx {{"thought_name", t.name},
                          {"hypothesis", t.hypothesis},
                          {"method", t.method},
                          {"background", guidance[node_turn[node_id]]},
                          {"tool_query", e.data.value("input", Json::object()).value("text", "")}};
                try
                {
                    auto reply = orch::ask_json(judges.at(orch::Role::RelevanceJudge),
                                                {orch::Role::RelevanceJudge, ctx, "Is the search query relevant?"},
                                                [](const Json& j) {
                                                    if (!j.contains("is_relevant") || !j["is_relevant"].is_boolean())
                                                        throw BackendError("relevance judge needs 'is_relevant'");
                                                });
                    ++out.web_search_relevance.evaluated;
                    out.web_search_relevance.positives += reply["is_relevant"].get<bool>() ? 1 : 0;
                }
                catch (const Error&)
                {
                    ++out.web_search_relevance.unevaluable;
                }
            }
        }
    }

    for (auto const& c: coder_calls)
    {
        ++out.code_execution_success.evaluated;
        out.code_execution_success.positives += c.first_ok ? 1 : 0;
        ++out.code_execution_success_with_retry.evaluated;
        out.code_execution_success_with_retry.positives += c.any_ok ? 1 : 0;
    }

    for (auto const& [t, thoughts]: proposed)
    {
        judge_thoughts(judges.at(orch::Role::FaithfulnessJudge), orch::Role::FaithfulnessJudge,
                       {{"user_proxy_message", guidance[t]}}, thoughts, "is_faithful", out.thought_faithfulness);
        judge_thoughts(judges.at(orch::Role::ComplianceJudge), orch::Role::ComplianceJudge, Json::object(), thoughts,
                       "is_compliant", out.capability_compliance);
    }
}

} // namespace

DiagnosticsReport run_diagnostics(const std::vector<std::vector<orch::Event>>& logs, const orch::BackendSet& judges)
{
    DiagnosticsReport out;
    for (auto const& log: logs)
        diagnose_log(log, judges, out);
    return out;
}

std::optional<double> Cell::mae() const
{
    if (numeric_scored == 0)
        return std::nullopt;
    return abs_error_sum / static_cast<double>(numeric_scored);
}

std::optional<double> Cell::accuracy() const
{
    if (comparative_total == 0)
        return std::nullopt;
    return static_cast<double>(comparative_correct) / static_cast<double>(comparative_total);
}

std::optional<double> Cell::coverage() const
{
    if (numeric_total == 0)
        return std::nullopt;
    return static_cast<double>(numeric_scored) / static_cast<double>(numeric_total);
}

void Cell::add(const ScoredQuestion& q)
{
    if (q.query_type == QueryType::NumericPrediction)
    {
        ++numeric_total;
        if (q.scored && q.abs_error)
        {
            ++numeric_scored;
            abs_error_sum += *q.abs_error;
        }
    }
    else
    {
        ++comparative_total;
        comparative_correct += q.correct.value_or(false) ? 1 : 0;
    }
}

Json Cell::to_json() const
{
    return {{"numeric_total", numeric_total},
            {"numeric_scored", numeric_scored},
            {"mae", opt_json(mae())},
            {"coverage", opt_json(coverage())},
            {"comparative_total", comparative_total},
            {"comparative_correct", comparative_correct},
            {"accuracy", opt_json(accuracy())}};
}

Breakdown breakdown(const std::vector<ScoredQuestion>& records)
{
    Breakdown out;
    for (auto const& q: records)
    {
        auto const task = std::string(task_id(q.task));
        auto const sc = std::string(scenario::to_string(q.scenario));
        out.per_task[task].add(q);
        out.per_scenario[sc].add(q);
        out.per_task_scenario[task + "/" + sc].add(q);
        if (q.query_type == QueryType::NumericPrediction && !q.truth_metric.empty())
            out.per_metric[q.truth_metric].add(q);
        out.overall.add(q);
    }
    return out;
}

namespace
{

Json cells_json(const std::map<std::string, Cell>& cells)
{
    Json out = Json::object();
    for (auto const& [k, c]: cells)
        out[k] = c.to_json();
    return out;
}

std::string csv_number(const std::optional<double>& v)
{
    return v ? fmt::format("{:.4f}", *v) : std::string {};
}

std::string csv_field(std::string_view s)
{
    if (s.find_first_of(",\"\n") == std::string_view::npos)
        return std::string(s);
    std::string out = "\"";
    for (char c: s)
    {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

} // namespace

Json Breakdown::to_json() const
{
    return {{"overall", overall.to_json()},
            {"per_task", cells_json(per_task)},
            {"per_scenario", cells_json(per_scenario)},
            {"per_task_scenario", cells_json(per_task_scenario)},
            {"per_metric", cells_json(per_metric)}};
}

std::string Breakdown::to_csv() const
{
    std::ostringstream out;
    out << "group,key,numeric_total,numeric_scored,mae,coverage,comparative_total,comparative_correct,accuracy\n";
    auto row = [&](std::string_view group, std::string_view key, const Cell& c) {
        out << group << ',' << csv_field(key) << ',' << c.numeric_total << ',' << c.numeric_scored << ','
            << csv_number(c.mae()) << ',' << csv_number(c.coverage()) << ',' << c.comparative_total << ','
            << c.comparative_correct << ',' << csv_number(c.accuracy()) << '\n';
    };
    row("overall", "all", overall);
    for (auto const& [k, c]: per_task)
        row("task", k, c);
    for (auto const& [k, c]: per_scenario)
        row("scenario", k, c);
    for (auto const& [k, c]: per_task_scenario)
        row("task_scenario", k, c);
    for (auto const& [k, c]: per_metric)
        row("metric", k, c);
    return out.str();
}

} // namespace tmlpred::eval
