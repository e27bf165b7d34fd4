// SPDX-License-Identifier: Apache-2.0
#include "support/fixture.hpp"

#include <tmlpred/error.hpp>
#include <tmlpred/orchestrator.hpp>
#include <tmlpred/scripted_backend.hpp>
#include <tmlpred/tools.hpp>

#include <doctest.h>
#include <fmt/format.h>

#include <atomic>

using namespace tmlpred;
using namespace tmlpred::orch;

namespace
{

scenario::Question sample_question(ws::Workspace& w, scenario::Scenario s = scenario::Scenario::S1,
                                   QueryType type = QueryType::NumericPrediction)
{
    auto const block = scenario::build_blocks({Task::MachineTranslation, s, 1, 1, 5}, w.generator_inputs());
    for (auto const& q: block.questions)
        if (q.query_type == type)
            return q;
    FAIL("no question of the requested type");
    return {};
}

/// Heuristic team with one role replaced by a canned reply.
BackendSet with_override(Role role, std::function<std::string(const BackendRequest&)> reply)
{
    auto set = BackendSet::uniform(make_heuristic_backend(0));
    set.set(role, std::make_shared<ScriptedBackend>(
                      [reply](const BackendRequest& r, std::uint64_t) { return reply(r); }));
    return set;
}

std::size_t count(const std::vector<Event>& log, std::string_view type)
{
    return static_cast<std::size_t>(
        std::count_if(log.begin(), log.end(), [&](const Event& e) { return e.type == type; }));
}

} // namespace

TEST_SUITE("orchestrator")
{
    TEST_CASE("capability check")
    {
        CHECK(capability_check("Take a weighted mean of reported scores.").empty());
        CHECK(capability_check("Fine-tune the model on Swahili data.") == std::vector<std::string> {"fine-tuning"});
        CHECK(capability_check("Create a new dataset for Yoruba.") == std::vector<std::string> {"creating new datasets"});
        CHECK(capability_check("Download the model weights and run them.") ==
              std::vector<std::string> {"downloading models locally"});
        CHECK(capability_check("Train a new model from scratch.") ==
              std::vector<std::string> {"training from scratch"});
        CHECK(capability_check("Query a paid external API.") == std::vector<std::string> {"accessing external APIs"});
        CHECK(capability_check("Use the existing datasets reported in papers.").empty());
    }

    TEST_CASE("thought creation filters prohibited methods")
    {
        auto w = testsupport::fixture_workspace();
        auto const backends = with_override(Role::ThoughtCreator, [](const BackendRequest&) {
            return R"({"thoughts": [
                {"name": "a", "hypothesis": "Direct results.", "method": "Take a weighted mean."},
                {"name": "b", "hypothesis": "Transfer.", "method": "Fine-tune the model on target data."},
                {"name": "c", "hypothesis": "Difficulty.", "method": "Estimate a difficulty offset."}]})";
        });
        Orchestrator o(backends, w->tools(), w->registry());
        auto const q = sample_question(*w);
        auto const created = o.create_thoughts(q.to_query(), Json::object(), Json());
        REQUIRE(created.accepted.size() == 2);
        CHECK(created.accepted[0].name == "a");
        CHECK(created.accepted[1].name == "c");
        REQUIRE(created.rejected.size() == 1);
        CHECK(created.rejected[0]["name"] == "b");
        CHECK(created.rejected[0]["violations"] == Json::array({"fine-tuning"}));
    }

    TEST_CASE("thought creation limits and failures")
    {
        auto w = testsupport::fixture_workspace();
        auto const q = sample_question(*w);
        auto const many = with_override(Role::ThoughtCreator, [](const BackendRequest&) {
            Json t = Json::array();
            for (int i = 0; i < 7; ++i)
                t.push_back({{"name", fmt::format("t{}", i)}, {"hypothesis", "h"}, {"method", "Take a mean."}});
            return Json {{"thoughts", t}}.dump();
        });
        EngineSettings s;
        s.budgets.max_thoughts = 3;
        Orchestrator limited(many, w->tools(), w->registry(), s);
        auto const created = limited.create_thoughts(q.to_query(), Json::object(), Json());
        CHECK(created.accepted.size() == 3);
        CHECK(created.rejected.size() == 4);
        CHECK(created.rejected.back()["reason"] == "thought budget");

        auto const banned = with_override(Role::ThoughtCreator, [](const BackendRequest&) {
            return R"({"thoughts": [{"name": "x", "hypothesis": "h", "method": "Train a new model from scratch."}]})";
        });
        CHECK_THROWS_AS(Orchestrator(banned, w->tools(), w->registry()).create_thoughts(q.to_query(), Json::object(), Json()),
                        InputError);

        std::atomic<int> calls {0};
        auto const garbage = with_override(Role::ThoughtCreator, [&](const BackendRequest&) {
            ++calls;
            return std::string("no idea");
        });
        CHECK_THROWS_AS(Orchestrator(garbage, w->tools(), w->registry()).create_thoughts(q.to_query(), Json::object(), Json()),
                        BackendError);
        CHECK(calls == 2);
    }

    TEST_CASE("heuristic turn produces three completed thoughts and a cited answer")
    {
        auto w = testsupport::fixture_workspace();
        auto const backends = BackendSet::uniform(make_heuristic_backend(0));
        Orchestrator o(backends, w->tools(), w->registry());
        auto const q = sample_question(*w);
        Conversation conv;
        o.start(conv, "c1");
        o.run_turn(conv, q.to_query(), q.complete_question);
        auto const& dag = conv.dag();
        REQUIRE(dag.turns().size() == 1);
        CHECK(dag.turn_nodes(1).size() >= 3);
        CHECK(dag.active_count() == 0);
        std::size_t completed = 0;
        for (auto const* n: dag.turn_nodes(1))
            completed += n->state == NodeState::Completed ? 1 : 0;
        CHECK(completed >= 1);
        auto const& fr = dag.turns()[0].final_response;
        REQUIRE(fr);
        REQUIRE(fr->prediction);
        CHECK(fr->prediction->normalized >= 0.0);
        CHECK(fr->prediction->normalized <= 100.0);
        CHECK_FALSE(fr->citations.empty());
        for (auto const& c: fr->citations)
        {
            auto const* node = dag.find(c.node_id);
            REQUIRE(node);
            CHECK(node->find_evidence(c.evidence_id));
        }
        CHECK(count(conv.events(), ev::aggregated) == 1);
        CHECK(Dag::replay(conv.events()).snapshot() == conv.snapshot());
    }

    TEST_CASE("comparative turn answers with a label")
    {
        auto w = testsupport::fixture_workspace();
        auto const backends = BackendSet::uniform(make_heuristic_backend(0));
        Orchestrator o(backends, w->tools(), w->registry());
        auto const q = sample_question(*w, scenario::Scenario::S1, QueryType::ComparativeReasoning);
        Conversation conv;
        o.start(conv, "c1");
        o.run_turn(conv, q.to_query(), q.complete_question);
        auto const& fr = conv.dag().turns()[0].final_response;
        REQUIRE(fr);
        CHECK(fr->answer_label.has_value());
    }

    TEST_CASE("parallelism does not change the log")
    {
        auto w = testsupport::fixture_workspace();
        auto const backends = BackendSet::uniform(make_heuristic_backend(0));
        auto const q = sample_question(*w);
        std::vector<std::string> dumps;
        for (std::size_t p: {1u, 4u})
        {
            EngineSettings s;
            s.budgets.parallelism = p;
            w->kb_cache().clear();
            Orchestrator o(backends, w->tools(), w->registry(), s);
            Conversation conv;
            o.start(conv, "c1");
            o.run_turn(conv, q.to_query(), q.complete_question);
            std::string d;
            for (auto const& e: conv.events())
                d += text::canonical_dump(e.to_json()) + "\n";
            dumps.push_back(d);
        }
        // The settings block differs in parallelism only; compare from the second event on.
        auto strip = [](const std::string& s) { return s.substr(s.find('\n')); };
        CHECK(strip(dumps[0]) == strip(dumps[1]));
    }

    TEST_CASE("analyzer decisions respect state and budgets")
    {
        auto w = testsupport::fixture_workspace();
        auto const backends = with_override(Role::ThoughtAnalyzer, [](const BackendRequest&) {
            return R"({"spawn": [{"name": "s", "hypothesis": "h", "method": "Fine-tune it."},
                                 {"name": "t", "hypothesis": "h2", "method": "Compare means.", "parent": "n1"}],
                       "discard": ["n999"]})";
        });
        Orchestrator o(backends, w->tools(), w->registry());
        Conversation conv;
        o.start(conv, "c1");
        auto const q = sample_question(*w);
        conv.emit(ev::turn_started, {{"turn", 1}, {"message", "m"}, {"query", q.to_query().to_json()}});
        conv.emit(ev::thought_created,
                  {{"node_id", "n1"}, {"turn", 1}, {"parent", nullptr}, {"name", "a"}, {"hypothesis", "h"}, {"method", "m"}});
        auto const d = o.analyze_thoughts(conv.dag(), 1, 1);
        REQUIRE(d.spawn.size() == 1);
        CHECK(d.spawn[0].name == "t");
        CHECK(d.discard.empty());
        REQUIRE(d.rejected.size() == 2);
    }

    TEST_CASE("off-topic search hits are flagged")
    {
        SearchRequest r;
        r.task = Task::MachineTranslation;
        r.language = "swh";
        r.family = "NLLB";
        SearchHit on {"u1", "NLLB on Swahili", "BLEU 30", Json::object(), {"p", "u1"}};
        SearchHit off {"u2", "Cooking tips", "How to bake bread", Json::object(), {"p", "u2"}};
        CHECK_FALSE(is_off_topic(on, r));
        CHECK(is_off_topic(off, r));
    }

    TEST_CASE("follow-up turn receives prior context")
    {
        auto w = testsupport::fixture_workspace();
        std::vector<Json> priors;
        std::mutex m;
        auto const heuristic = make_heuristic_backend(0);
        auto backends = BackendSet::uniform(heuristic);
        backends.set(Role::ThoughtCreator, std::make_shared<ScriptedBackend>(
                                               [&](const BackendRequest& r, std::uint64_t) {
                                                   std::lock_guard lock(m);
                                                   priors.push_back(r.context.value("prior", Json()));
                                                   return heuristic->send(r);
                                               }));
        auto const q = sample_question(*w);
        for (bool follow: {true, false})
        {
            priors.clear();
            EngineSettings s;
            s.followup_context = follow;
            Orchestrator o(backends, w->tools(), w->registry(), s);
            Conversation conv;
            o.start(conv, "c1");
            o.run_turn(conv, q.to_query(), q.complete_question);
            o.run_turn(conv, q.to_query(), "And what about it next year?");
            REQUIRE(priors.size() == 2);
            CHECK(priors[0].is_null());
            CHECK(priors[1].is_null() != follow);
            CHECK(conv.dag().turns().size() == 2);
            CHECK(conv.dag().turns()[1].final_response.has_value());
        }
    }

    TEST_CASE("thought creation failure still finishes the turn")
    {
        auto w = testsupport::fixture_workspace();
        auto const backends = with_override(Role::ThoughtCreator, [](const BackendRequest&) { return "nope"; });
        Orchestrator o(backends, w->tools(), w->registry());
        Conversation conv;
        o.start(conv, "c1");
        auto const q = sample_question(*w);
        o.run_turn(conv, q.to_query(), q.complete_question);
        auto const& fr = conv.dag().turns()[0].final_response;
        REQUIRE(fr);
        CHECK(fr->no_evidence);
        CHECK_FALSE(conv.dag().turn_open());
    }

    TEST_CASE("dag rejects forbidden transitions")
    {
        Dag dag;
        dag.apply({1, std::string(ev::conversation_started), {{"conversation_id", "c"}, {"settings", Json::object()}}});
        dag.apply({2, std::string(ev::turn_started), {{"turn", 1}, {"message", "m"}, {"query", scenario::TmlQuery {}.to_json()}}});
        dag.apply({3, std::string(ev::thought_created),
                   {{"node_id", "n1"}, {"turn", 1}, {"parent", nullptr}, {"name", "a"}, {"hypothesis", "h"}, {"method", "m"}}});
        CHECK_THROWS_AS(dag.apply({4, std::string(ev::aggregated), {{"turn", 1}, {"final_response", Json::object()}}}),
                        InvariantError);
        CHECK_THROWS_AS(dag.apply({5, std::string(ev::annotated), {{"node_id", "n1"}, {"note", "x"}}}), InvariantError);
        dag.apply({4, std::string(ev::state_changed), {{"node_id", "n1"}, {"from", "active"}, {"to", "discarded"}}});
        CHECK_THROWS_AS(
            dag.apply({5, std::string(ev::state_changed), {{"node_id", "n1"}, {"from", "discarded"}, {"to", "active"}}}),
            InvariantError);
        CHECK_THROWS_AS(
            dag.apply({5, std::string(ev::state_changed), {{"node_id", "n1"}, {"from", "active"}, {"to", "completed"}}}),
            InvariantError);
        CHECK(dag.snapshot()["schema_version"] == snapshot_schema_version);
    }

    TEST_CASE("ask_json re-asks once")
    {
        std::atomic<int> calls {0};
        ScriptedBackend flaky([&](const BackendRequest&, std::uint64_t) {
            return ++calls == 1 ? std::string("not json") : std::string("Sure: ```json\n{\"ok\": true}\n```");
        });
        auto const j = ask_json(flaky, {Role::Coder, Json::object(), "x"});
        CHECK(j["ok"] == true);
        CHECK(calls == 2);
        CHECK(parse_json_reply("prefix {\"a\": 1} suffix")["a"] == 1);
        CHECK_THROWS_AS(parse_json_reply("nothing here"), BackendError);
    }

    TEST_CASE("backend config parsing")
    {
        auto const specs = BackendSet::parse_specs(Json::parse(
            R"({"default": {"type": "scripted", "temperature": 0.7}, "roles": {"coder": {"seed": 4}}})"));
        CHECK(specs.at(Role::Coder).seed == 4u);
        CHECK(specs.at(Role::Coder).temperature == doctest::Approx(0.7));
        CHECK(specs.at(Role::ExpertKnowledge).temperature == 0.0);
        for (auto r: all_roles)
            CHECK(role_from_string(to_string(r)) == r);
    }
}
