// SPDX-License-Identifier: Apache-2.0
#include "oracles/oracles.hpp"

#include <tmlpred/error.hpp>
#include <tmlpred/evalharness.hpp>
#include <tmlpred/scripted_backend.hpp>

#include <doctest.h>

#include <atomic>

using namespace tmlpred;
using namespace tmlpred::eval;

namespace
{

ScoringItem numeric(std::string id, std::optional<std::pair<std::string, double>> predicted, double truth,
                    std::string truth_metric = "BLEU")
{
    ScoringItem item;
    item.question_id = std::move(id);
    if (predicted)
    {
        item.prediction.is_answer_present = true;
        item.prediction.metrics.push_back(
            {predicted->first, text::format_number(predicted->second), predicted->second});
    }
    item.truth.ref = {Task::MachineTranslation, QueryType::NumericPrediction, "swh", {"NLLB"}, std::nullopt};
    item.truth.answer_numeric = metrics::MetricValue {truth_metric, text::format_number(truth), truth};
    item.truth.metric_family = *metrics::MetricRegistry::builtin().family_of(Task::MachineTranslation, truth_metric);
    return item;
}

ScoringItem comparative(std::string id, std::string answer, std::string truth)
{
    ScoringItem item;
    item.question_id = std::move(id);
    item.prediction.is_answer_present = !answer.empty();
    item.prediction.answer_text = std::move(answer);
    item.truth.ref = {Task::QaVqa, QueryType::ComparativeReasoning, "swh", {"GPT-4", "Llama-3"}, std::nullopt};
    item.truth.answer_label = std::move(truth);
    return item;
}

orch::Event event(std::uint64_t seq, std::string_view type, Json data)
{
    return {seq, std::string(type), std::move(data)};
}

orch::BackendSet judges(std::function<std::string(const orch::BackendRequest&)> fn)
{
    return orch::BackendSet::uniform(std::make_shared<orch::ScriptedBackend>(
        [fn](const orch::BackendRequest& r, std::uint64_t) { return fn(r); }));
}

} // namespace

TEST_SUITE("evalharness")
{
    TEST_CASE("MAE fixture")
    {
        auto const s = score_predset({numeric("a", {{"BLEU", 80}}, 85), numeric("b", {{"BLEU", 60}}, 55)},
                                     metrics::MetricRegistry::builtin());
        REQUIRE(s.mae);
        CHECK(*s.mae == 5.0);
        CHECK(s.coverage == 1.0);
    }

    TEST_CASE("unanswered and incompatible predictions lower coverage")
    {
        auto const s = score_predset({numeric("a", {{"BLEU", 30}}, 20), numeric("b", std::nullopt, 40),
                                      numeric("c", {{"chrF++", 50}}, 40), numeric("d", {{"sacreBLEU", 44}}, 40)},
                                     metrics::MetricRegistry::builtin());
        CHECK(s.total == 4);
        CHECK(s.answered == 3);
        CHECK(s.scored == 2);
        CHECK(s.coverage == 0.5);
        CHECK(*s.mae == doctest::Approx(oracle::mae({{30, 20}, {44, 40}})));
        CHECK(s.records[1].exclusion == "unanswered");
        CHECK(s.records[2].exclusion == "incompatible metric");
    }

    TEST_CASE("first compatible metric is used")
    {
        auto item = numeric("a", {{"chrF++", 10}}, 40);
        item.prediction.metrics.push_back({"BLEU", "42", 42});
        auto const s = score_predset({item}, metrics::MetricRegistry::builtin());
        CHECK(*s.mae == 2.0);
        CHECK(s.records[0].predicted_metric == "BLEU");
    }

    TEST_CASE("comparative accuracy with aliases")
    {
        auto const aliases = AliasTable::from_json(Json::parse(R"({"Llama-3": ["LLaMA 3"]})"));
        auto const s = score_qnaset({comparative("a", "llama 3", "Llama-3"), comparative("b", "GPT-4", "Llama-3"),
                                     comparative("c", "", "GPT-4"), comparative("d", "gpt-4", "GPT-4")},
                                    aliases);
        CHECK(s.total == 4);
        CHECK(s.answered == 3);
        CHECK(s.correct == 2);
        CHECK(*s.accuracy == 0.5);
        CHECK(canonical_label("  LLaMA   3 ", aliases) == canonical_label("llama-3", aliases));
    }

    TEST_CASE("empty inputs")
    {
        auto const p = score_predset({}, metrics::MetricRegistry::builtin());
        CHECK_FALSE(p.mae);
        CHECK(p.coverage == 0.0);
        CHECK_FALSE(score_qnaset({}, {}).accuracy);
        auto const b = breakdown({});
        CHECK_FALSE(b.overall.mae());
        CHECK_FALSE(b.overall.accuracy());
        CHECK(b.to_csv().find("group,key") == 0);
    }

    TEST_CASE("verdict boundaries")
    {
        for (double v: {1.0, 2.49, 2.5, 3.0, 3.24, 3.25, 4.0, 4.24, 4.25, 5.0})
            CHECK(to_string(verdict_for(v)) == oracle::verdict(v));
    }

    TEST_CASE("judge output parsing")
    {
        auto doc = Json::parse(R"({"metrics": [
            {"metric_name": "predictive_plausibility", "score": 5, "rationale": "a"},
            {"metric_name": "feature_selection", "score": 4, "rationale": "b"},
            {"metric_name": "coherence", "score": 3, "rationale": "c"},
            {"metric_name": "citation_emphasis", "score": 2, "rationale": "d"}],
            "overall_recommendation": {"average_score": 3.5, "verdict": "Minor revision"}})");
        auto const j = JudgeScores::from_judge_output(doc);
        CHECK(j.average == 3.5);
        CHECK(j.verdict == Verdict::MinorRevision);
        CHECK(j.advisory_verdict == "Minor revision");

        doc["metrics"][3]["score"] = nullptr;
        CHECK(JudgeScores::from_judge_output(doc).average == 4.0);
        for (auto& m: doc["metrics"])
            m["score"] = nullptr;
        CHECK_THROWS_AS(JudgeScores::from_judge_output(doc), InputError);
        doc["metrics"][0]["score"] = 7;
        CHECK_THROWS_AS(JudgeScores::from_judge_output(doc), InputError);
    }

    TEST_CASE("prediction extraction")
    {
        auto const backend = orch::make_heuristic_backend(0);
        auto const p = extract_prediction("Predicted BLEU: 28.5%\nsome text", QueryType::NumericPrediction, "q", *backend);
        CHECK(p.is_answer_present);
        REQUIRE(p.metrics.size() == 1);
        CHECK(p.metrics[0].metric_name == "BLEU");
        CHECK(p.metrics[0].value_in_100_range == 28.5);
        auto const none = extract_prediction("I cannot say.", QueryType::NumericPrediction, "q", *backend);
        CHECK_FALSE(none.is_answer_present);
        CHECK_THROWS_AS(extract_prediction("  ", QueryType::NumericPrediction, "q", *backend), InputError);

        std::atomic<int> calls {0};
        orch::ScriptedBackend broken([&](const orch::BackendRequest&, std::uint64_t) {
            ++calls;
            return std::string(R"({"is_answer_present": "yes"})");
        });
        CHECK_THROWS_AS(extract_prediction("Predicted BLEU: 1", QueryType::NumericPrediction, "q", broken),
                        BackendError);
        CHECK(calls == 2);
    }

    TEST_CASE("search relevance diagnostics")
    {
        std::vector<orch::Event> log {
            event(1, orch::ev::conversation_started, {{"conversation_id", "c"}}),
            event(2, orch::ev::turn_started, {{"turn", 1}, {"query", {{"task", "qa_vqa"}}}}),
            event(3, orch::ev::thought_created,
                  {{"node_id", "n1"}, {"parent", nullptr}, {"name", "a"}, {"hypothesis", "h"}, {"method", "m"}}),
        };
        for (int i = 0; i < 4; ++i)
            log.push_back(event(4 + i, orch::ev::tool_invoked,
                                {{"node_id", "n1"},
                                 {"tool", "search"},
                                 {"attempt", 1},
                                 {"status", "ok"},
                                 {"input", {{"text", i == 3 ? "off" : "on"}}}}));
        auto const j = judges([](const orch::BackendRequest& r) {
            return Json {{"is_relevant", r.context.value("tool_query", "") == "on"}}.dump();
        });
        auto const d = run_diagnostics({log}, j);
        CHECK(d.web_search_relevance.evaluated == 4);
        CHECK(d.web_search_relevance.positives == 3);
        CHECK(*d.web_search_relevance.value() == 0.75);
        CHECK_FALSE(d.code_execution_success.value());
    }

    TEST_CASE("code execution success counts first attempts and retries")
    {
        std::vector<orch::Event> log {event(1, orch::ev::turn_started, {{"turn", 1}})};
        auto coder = [&](std::uint64_t seq, int attempt, bool ok) {
            log.push_back(event(seq, orch::ev::tool_invoked,
                                {{"node_id", "n1"}, {"tool", "coder"}, {"attempt", attempt}, {"status", ok ? "ok" : "error"}}));
        };
        coder(2, 1, true);
        coder(3, 1, false);
        coder(4, 2, true);
        coder(5, 1, false);
        coder(6, 2, false);
        auto const d = run_diagnostics({log}, judges([](const orch::BackendRequest&) { return std::string("{}"); }));
        CHECK(d.code_execution_success.evaluated == 3);
        CHECK(d.code_execution_success.positives == 1);
        CHECK(d.code_execution_success_with_retry.positives == 2);
    }

    TEST_CASE("breakdown hand tally")
    {
        auto q = [](std::string id, Task t, scenario::Scenario s, std::optional<double> err) {
            ScoredQuestion r;
            r.question_id = std::move(id);
            r.task = t;
            r.scenario = s;
            r.truth_metric = "BLEU";
            r.scored = r.answered = err.has_value();
            r.abs_error = err;
            return r;
        };
        auto c = [](std::string id, scenario::Scenario s, bool ok) {
            ScoredQuestion r;
            r.question_id = std::move(id);
            r.task = Task::QaVqa;
            r.scenario = s;
            r.query_type = QueryType::ComparativeReasoning;
            r.scored = true;
            r.correct = ok;
            return r;
        };
        using S = scenario::Scenario;
        auto const b = breakdown({q("1", Task::MachineTranslation, S::S1, 2.0), q("2", Task::MachineTranslation, S::S2, 4.0),
                                  q("3", Task::QaVqa, S::S1, 6.0), q("4", Task::QaVqa, S::S1, std::nullopt),
                                  c("5", S::S1, true), c("6", S::S2, false)});
        CHECK(*b.overall.mae() == 4.0);
        CHECK(*b.overall.coverage() == 0.75);
        CHECK(*b.overall.accuracy() == 0.5);
        CHECK(*b.per_task.at("machine_translation").mae() == 3.0);
        CHECK(*b.per_task.at("qa_vqa").mae() == 6.0);
        CHECK(*b.per_scenario.at("S1").mae() == 4.0);
        CHECK(*b.per_scenario.at("S1").accuracy() == 1.0);
        CHECK(*b.per_scenario.at("S2").accuracy() == 0.0);
        CHECK(b.per_task_scenario.at("qa_vqa/S1").numeric_total == 2);
        CHECK(b.per_metric.at("BLEU").numeric_scored == 3);
    }

    TEST_CASE("scored question round-trip")
    {
        auto const s = score_predset({numeric("a", {{"BLEU", 80}}, 85)}, metrics::MetricRegistry::builtin());
        auto const r = ScoredQuestion::from_json(s.records[0].to_json());
        CHECK(r.to_json() == s.records[0].to_json());
    }
}
