// SPDX-License-Identifier: Apache-2.0
#include "support/fixture.hpp"

#include <tmlpred/conversation_store.hpp>
#include <tmlpred/error.hpp>
#include <tmlpred/orchestrator.hpp>
#include <tmlpred/scripted_backend.hpp>

#include <doctest.h>

#include <thread>

using namespace tmlpred;
using namespace tmlpred::orch;

namespace
{

void open_turn(Conversation& conv)
{
    conv.emit(ev::conversation_started, {{"conversation_id", "c"}, {"settings", Json::object()}});
    scenario::TmlQuery q;
    q.task = Task::QaVqa;
    q.language = "swh";
    q.model_family = "GPT-4";
    conv.emit(ev::turn_started, {{"turn", 1}, {"message", "m"}, {"query", q.to_json()}});
    conv.emit(ev::thought_created,
              {{"node_id", "n1"}, {"turn", 1}, {"parent", nullptr}, {"name", "a"}, {"hypothesis", "h"}, {"method", "m"}});
}

} // namespace

TEST_SUITE("conversation_store")
{
    TEST_CASE("ids and lookup")
    {
        ConversationStore store;
        auto const [a, ca] = store.create();
        auto const [b, cb] = store.create();
        CHECK(a == "c000001");
        CHECK(b == "c000002");
        CHECK(store.get(a) == ca);
        CHECK_THROWS_AS(store.get("missing"), NotFoundError);
        CHECK(store.ids() == std::vector<std::string> {a, b});
    }

    TEST_CASE("persisted logs recover with interrupted nodes")
    {
        auto const dir = testsupport::scratch_dir("store-recover");
        std::string last_line;
        {
            ConversationStore store(dir);
            auto [id, conv] = store.create(std::string("alpha"));
            open_turn(*conv);
        }
        ConversationStore again(dir);
        CHECK(again.recover() == 1);
        auto const conv = again.get("alpha");
        auto const* node = conv->dag().find("n1");
        REQUIRE(node);
        CHECK(node->state == NodeState::Active);
        REQUIRE_FALSE(node->annotations.empty());
        CHECK(node->annotations.back().find("interrupted") != std::string::npos);
        CHECK(conv->dag().turn_open());

        // Resuming finishes the turn.
        auto w = testsupport::fixture_workspace();
        auto const backends = BackendSet::uniform(make_heuristic_backend(0));
        Orchestrator o(backends, w->tools(), w->registry());
        o.resume_turn(*conv);
        CHECK_FALSE(conv->dag().turn_open());
        CHECK(conv->dag().active_count() == 0);

        ConversationStore third(dir);
        third.recover();
        CHECK(third.get("alpha")->events().size() == conv->events().size());
    }

    TEST_CASE("events since cursor and snapshots")
    {
        Conversation conv;
        open_turn(conv);
        CHECK(conv.last_seq() == 3);
        auto const tail = conv.events_since(1);
        REQUIRE(tail.size() == 2);
        CHECK(tail[0].seq == 2);
        CHECK(conv.events_since(1, 1).size() == 1);
        CHECK(conv.events_since(3).empty());
        auto const at2 = conv.snapshot_at(2);
        CHECK(at2["last_seq"] == 2);
        CHECK(at2 == Dag::replay({conv.events()[0], conv.events()[1]}).snapshot());
    }

    TEST_CASE("long poll wakes on emit")
    {
        Conversation conv;
        conv.emit(ev::conversation_started, {{"conversation_id", "c"}, {"settings", Json::object()}});
        std::thread writer([&] {
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
            scenario::TmlQuery q;
            conv.emit(ev::turn_started, {{"turn", 1}, {"message", "m"}, {"query", q.to_json()}});
        });
        auto const got = conv.events_since(1, 10, std::chrono::milliseconds(5000));
        writer.join();
        REQUIRE(got.size() == 1);
        CHECK(got[0].type == ev::turn_started);
    }

    TEST_CASE("rejected events are not recorded")
    {
        Conversation conv;
        open_turn(conv);
        CHECK_THROWS_AS(conv.emit(ev::state_changed, {{"node_id", "n9"}, {"from", "active"}, {"to", "completed"}}),
                        InvariantError);
        CHECK(conv.last_seq() == 3);
        CHECK(conv.try_begin_turn());
        CHECK_FALSE(conv.try_begin_turn());
        conv.end_turn();
        CHECK(conv.try_begin_turn());
    }
}
