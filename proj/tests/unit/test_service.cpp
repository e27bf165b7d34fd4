// SPDX-License-Identifier: Apache-2.0
#include "support/fixture.hpp"

#include <tmlpred/error.hpp>
#include <tmlpred/scripted_backend.hpp>
#include <tmlpred/service.hpp>

#include <doctest.h>
#include <httplib.h>

#include <condition_variable>
#include <future>

using namespace tmlpred;

namespace
{

struct Harness
{
    std::unique_ptr<ws::Workspace> workspace = testsupport::fixture_workspace();
    orch::BackendSet backends;
    orch::ConversationStore store;
    std::unique_ptr<service::Service> svc;
    int port = 0;
    std::unique_ptr<httplib::Client> client;

    explicit Harness(orch::BackendSet b = orch::BackendSet::uniform(orch::make_heuristic_backend(0)),
                     std::filesystem::path results = {}):
        backends(std::move(b))
    {
        service::ServiceOptions options;
        if (!results.empty())
            options.results_dir = results;
        options.max_poll_timeout = std::chrono::milliseconds(2000);
        svc = std::make_unique<service::Service>(*workspace, backends, store, options);
        port = svc->start("127.0.0.1", 0);
        client = std::make_unique<httplib::Client>("127.0.0.1", port);
        client->set_read_timeout(30, 0);
    }

    ~Harness()
    {
        svc->stop();
        svc->drain();
    }

    Json query_json()
    {
        auto const block = scenario::build_blocks({Task::QaVqa, scenario::Scenario::S1, 1, 0, 2},
                                                  workspace->generator_inputs());
        return block.questions.at(0).to_query().to_json();
    }

    std::pair<int, Json> post(const std::string& path, const Json& body)
    {
        auto res = client->Post(path, body.dump(), "application/json");
        REQUIRE(res);
        return {res->status, res->body.empty() ? Json() : Json::parse(res->body)};
    }

    std::pair<int, Json> post_raw(const std::string& path, const std::string& body)
    {
        auto res = client->Post(path, body, "application/json");
        REQUIRE(res);
        return {res->status, Json::parse(res->body)};
    }

    std::pair<int, Json> get(const std::string& path)
    {
        auto res = client->Get(path);
        REQUIRE(res);
        return {res->status, Json::parse(res->body)};
    }
};

} // namespace

TEST_SUITE("service")
{
    TEST_CASE("listen address parsing")
    {
        CHECK(service::parse_listen("127.0.0.1:8080") == std::pair<std::string, int> {"127.0.0.1", 8080});
        CHECK_THROWS_AS(service::parse_listen("localhost"), InputError);
        CHECK_THROWS_AS(service::parse_listen("host:99999"), InputError);
    }

    TEST_CASE("health")
    {
        Harness h;
        auto [status, body] = h.get("/health");
        CHECK(status == 200);
        CHECK(body["snapshot_schema_version"] == orch::snapshot_schema_version);
    }

    TEST_CASE("create, snapshot, events, follow-up")
    {
        Harness h;
        auto [status, created] = h.post("/conversations", {{"query", h.query_json()}, {"wait", true}});
        REQUIRE(status == 201);
        auto const id = created["conversation_id"].get<std::string>();
        CHECK(created["turn"] == 1);

        auto [s1, snap] = h.get("/conversations/" + id);
        CHECK(s1 == 200);
        CHECK(snap["schema_version"] == orch::snapshot_schema_version);
        CHECK_FALSE(snap["final_response"].is_null());
        auto const last = snap["last_seq"].get<std::uint64_t>();

        auto [s2, page] = h.get("/conversations/" + id + "/events?cursor=0&limit=5");
        CHECK(s2 == 200);
        REQUIRE(page["events"].size() == 5);
        CHECK(page["events"][0]["seq"] == 1);
        CHECK(page["next_cursor"] == 5);
        auto [s3, rest] = h.get("/conversations/" + id + "/events?cursor=5");
        CHECK(rest["events"].size() == last - 5);
        CHECK(rest["next_cursor"] == last);

        // Snapshot at a cursor equals a replay of the prefix.
        std::vector<orch::Event> prefix;
        for (auto const& e: page["events"])
            prefix.push_back(orch::Event::from_json(e));
        auto [s4, at5] = h.get("/conversations/" + id + "?cursor=5");
        CHECK(s4 == 200);
        auto replayed = orch::Dag::replay(prefix).snapshot();
        replayed["turn_in_flight"] = at5["turn_in_flight"];
        CHECK(at5 == replayed);

        auto [s5, follow] = h.post("/conversations/" + id + "/messages",
                                   {{"text", "What about the same model next year?"}, {"wait", true}});
        CHECK(s5 == 202);
        CHECK(follow["turn"] == 2);
        auto [s6, snap2] = h.get("/conversations/" + id);
        CHECK(snap2["turns"].size() == 2);
        CHECK_FALSE(snap2["turns"][1]["final_response"].is_null());
    }

    TEST_CASE("error statuses")
    {
        Harness h;
        CHECK(h.get("/conversations/nope").first == 404);
        CHECK(h.get("/conversations/nope/events").first == 404);
        CHECK(h.post("/conversations/nope/messages", {{"text", "x"}}).first == 404);
        CHECK(h.post("/conversations", {{"nothing", 1}}).first == 422);
        CHECK(h.post_raw("/conversations", "{not json").first == 422);
        CHECK(h.post_raw("/conversations", "[1,2]").first == 422);
        CHECK(h.post("/conversations", {{"query", "tell me a joke"}}).first == 422);

        auto [status, created] = h.post("/conversations", {{"query", h.query_json()}, {"wait", true}});
        REQUIRE(status == 201);
        auto const id = created["conversation_id"].get<std::string>();
        CHECK(h.get("/conversations/" + id + "/events?cursor=100000").first == 422);
        CHECK(h.get("/conversations/" + id + "/events?cursor=-1").first == 422);
        CHECK(h.get("/conversations/" + id + "?cursor=100000").first == 422);
        CHECK(h.post("/conversations/" + id + "/messages", {{"text", "  "}}).first == 422);
        CHECK(h.get("/results/unknown-run").first == 404);
        CHECK(h.get("/results/bad.id").first == 422);
    }

    TEST_CASE("second message while a turn is running is a conflict")
    {
        auto gate = std::make_shared<std::promise<void>>();
        auto opened = gate->get_future().share();
        auto const heuristic = orch::make_heuristic_backend(0);
        auto backends = orch::BackendSet::uniform(heuristic);
        backends.set(orch::Role::ThoughtCreator,
                     std::make_shared<orch::ScriptedBackend>([heuristic, opened](const orch::BackendRequest& r, std::uint64_t) {
                         opened.wait();
                         return heuristic->send(r);
                     }));
        Harness h(backends);
        auto [status, created] = h.post("/conversations", {{"query", h.query_json()}});
        REQUIRE(status == 201);
        auto const id = created["conversation_id"].get<std::string>();
        auto [busy, body] = h.post("/conversations/" + id + "/messages", {{"text", "and then?"}});
        CHECK(busy == 409);
        auto [s, snap] = h.get("/conversations/" + id);
        CHECK(snap["turn_in_flight"] == true);
        gate->set_value();
        h.svc->drain();
        auto [s2, done] = h.get("/conversations/" + id);
        CHECK(done["turn_in_flight"] == false);
        CHECK(h.post("/conversations/" + id + "/messages", {{"text", "and then?"}, {"wait", true}}).first == 202);
    }

    TEST_CASE("long poll returns new events")
    {
        Harness h;
        auto [status, created] = h.post("/conversations", {{"query", h.query_json()}, {"wait", true}});
        auto const id = created["conversation_id"].get<std::string>();
        auto const last = h.get("/conversations/" + id).second["last_seq"].get<std::uint64_t>();
        auto poll = std::async(std::launch::async, [&] {
            httplib::Client c("127.0.0.1", h.port);
            c.set_read_timeout(30, 0);
            auto res = c.Get("/conversations/" + id + "/events?cursor=" + std::to_string(last) + "&timeout_ms=2000");
            return Json::parse(res->body);
        });
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        h.post("/conversations/" + id + "/messages", {{"text", "and for the next release?"}});
        auto const page = poll.get();
        REQUIRE_FALSE(page["events"].empty());
        CHECK(page["events"][0]["seq"] == last + 1);
        h.svc->drain();
    }

    TEST_CASE("results endpoint serves summaries")
    {
        auto const dir = testsupport::scratch_dir("service-results");
        std::filesystem::create_directories(dir / "r1");
        text::write_file((dir / "r1" / "summary.json").string(), R"({"run_id": "r1", "questions": 0})");
        Harness h(orch::BackendSet::uniform(orch::make_heuristic_backend(0)), dir);
        auto [status, body] = h.get("/results/r1");
        CHECK(status == 200);
        CHECK(body["run_id"] == "r1");
    }

    TEST_CASE("schema samples")
    {
        Harness h;
        auto [status, created] = h.post("/conversations", {{"query", h.query_json()}, {"wait", true}});
        REQUIRE(status == 201);
        auto const id = created["conversation_id"].get<std::string>();
        h.post("/conversations/" + id + "/messages", {{"text", "and in the next release?"}, {"wait", true}});
        auto const dir = std::filesystem::path(TMLPRED_SAMPLE_DIR);
        std::filesystem::create_directories(dir);
        text::write_file((dir / "snapshot.json").string(), h.get("/conversations/" + id).second.dump(2));
        text::write_file((dir / "snapshot_at_3.json").string(), h.get("/conversations/" + id + "?cursor=3").second.dump(2));
        text::write_file((dir / "events.json").string(), h.get("/conversations/" + id + "/events?cursor=0").second.dump(2));
    }

    TEST_CASE("duplicate conversation id is a conflict")
    {
        Harness h;
        auto q = h.query_json();
        CHECK(h.post("/conversations", {{"query", q}, {"conversation_id", "mine"}, {"wait", true}}).first == 201);
        CHECK(h.post("/conversations", {{"query", q}, {"conversation_id", "mine"}}).first == 409);
    }
}
