// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/error.hpp>
#include <tmlpred/service.hpp>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include <condition_variable>
#include <regex>
#include <thread>

namespace tmlpred::service
{

std::pair<std::string, int> parse_listen(std::string_view address)
{
    auto const colon = address.rfind(':');
    if (colon == std::string_view::npos || colon == 0)
        throw InputError(fmt::format("listen address must be host:port, got '{}'", address));
    auto const port = text::parse_number(address.substr(colon + 1));
    if (!port || *port < 0 || *port > 65535 || std::floor(*port) != *port)
        throw InputError(fmt::format("invalid port in listen address '{}'", address));
    return {std::string(address.substr(0, colon)), static_cast<int>(*port)};
}

struct Service::Impl
{
    ws::Workspace& workspace;
    const orch::BackendSet& backends;
    orch::ConversationStore& store;
    ServiceOptions options;
    orch::Orchestrator engine;
    httplib::Server server;
    std::thread listener;

    std::mutex workers_mutex;
    std::condition_variable workers_idle;
    std::vector<std::thread> workers;
    std::size_t running = 0;

    Impl(ws::Workspace& w, const orch::BackendSet& b, orch::ConversationStore& s, ServiceOptions o):
        workspace(w),
        backends(b),
        store(s),
        options(std::move(o)),
        engine(b, w.tools(), w.registry(), w.engine_settings())
    {
        routes();
    }

    ~Impl()
    {
        server.stop();
        if (listener.joinable())
            listener.join();
        join_workers();
    }

    void join_workers()
    {
        std::vector<std::thread> done;
        {
            std::unique_lock lock(workers_mutex);
            workers_idle.wait(lock, [&] { return running == 0; });
            done.swap(workers);
        }
        for (auto& t: done)
            t.join();
    }

    /// Runs `body` for a conversation whose turn flag is already held.
    void run_turn(std::shared_ptr<orch::Conversation> conv, std::function<void()> body, bool wait)
    {
        auto task = [this, conv, body = std::move(body)] {
            try
            {
                body();
            }
            catch (const std::exception& e)
            {
                spdlog::error("turn failed for conversation {}: {}", conv->dag().conversation_id(), e.what());
            }
            conv->end_turn();
            {
                std::scoped_lock lock(workers_mutex);
                --running;
            }
            workers_idle.notify_all();
        };
        {
            std::scoped_lock lock(workers_mutex);
            ++running;
        }
        if (wait)
        {
            task();
            return;
        }
        std::scoped_lock lock(workers_mutex);
        workers.emplace_back(std::move(task));
    }

    scenario::TmlQuery parse_query(const Json& q, std::optional<scenario::TmlQuery> base) const
    {
        if (q.is_object())
            return scenario::TmlQuery::from_json(q);
        if (!q.is_string())
            throw InputError("'query' must be text or an object");
        auto parsed = orch::parse_query_text(q.get<std::string>(), workspace.languages(), workspace.known_languages(),
                                             workspace.known_families(), std::move(base));
        if (!parsed.language && !parsed.model_family)
            throw InputError("could not identify a language or model family in the query");
        return parsed;
    }

    static Json parse_body(const httplib::Request& req)
    {
        if (req.body.empty())
            throw InputError("request body must be a JSON object");
        auto doc = Json::parse(req.body);
        if (!doc.is_object())
            throw InputError("request body must be a JSON object");
        return doc;
    }

    static void send(httplib::Response& res, int status, const Json& body)
    {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static std::uint64_t param_uint(const httplib::Request& req, const char* name, std::uint64_t fallback)
    {
        if (!req.has_param(name))
            return fallback;
        auto const raw = req.get_param_value(name);
        auto const n = text::parse_number(raw);
        if (!n || *n < 0 || std::floor(*n) != *n)
            throw InputError(fmt::format("'{}' must be a non-negative integer, got '{}'", name, raw));
        return static_cast<std::uint64_t>(*n);
    }

    template <typename Fn>
    httplib::Server::Handler guarded(Fn fn)
    {
        return [fn](const httplib::Request& req, httplib::Response& res) {
            try
            {
                fn(req, res);
            }
            catch (const NotFoundError& e)
            {
                send(res, 404, {{"error", e.what()}});
            }
            catch (const ConflictError& e)
            {
                send(res, 409, {{"error", e.what()}});
            }
            catch (const InputError& e)
            {
                send(res, 422, {{"error", e.what()}});
            }
            catch (const Json::exception& e)
            {
                send(res, 422, {{"error", fmt::format("malformed JSON: {}", e.what())}});
            }
            catch (const std::exception& e)
            {
                send(res, 500, {{"error", e.what()}});
            }
        };
    }

    void routes()
    {
        server.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
            send(res, 200,
                 {{"status", "ok"},
                  {"conversations", store.ids().size()},
                  {"snapshot_schema_version", orch::snapshot_schema_version}});
        }));

        server.Post("/conversations", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto const body = parse_body(req);
            if (!body.contains("query"))
                throw InputError("body needs a 'query'");
            auto query = parse_query(body["query"], std::nullopt);
            std::optional<std::string> id;
            if (body.contains("conversation_id") && !body["conversation_id"].is_null())
                id = body["conversation_id"].get<std::string>();
            bool const wait = body.value("wait", false);
            auto [cid, conv] = store.create(id);
            engine.start(*conv, cid);
            conv->try_begin_turn();
            auto const message = body["query"].is_string() ? body["query"].get<std::string>() : query.text;
            run_turn(conv, [this, conv = conv, query, message] { engine.run_turn(*conv, query, message); }, wait);
            send(res, 201, {{"conversation_id", cid}, {"turn", 1}});
        }));

        server.Get(R"(/conversations/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto conv = store.get(req.matches[1].str());
            Json snap;
            if (req.has_param("cursor"))
            {
                auto const cursor = param_uint(req, "cursor", 0);
                if (cursor > conv->last_seq())
                    throw InputError(fmt::format("cursor {} is beyond the last event {}", cursor, conv->last_seq()));
                snap = conv->snapshot_at(cursor);
            }
            else
                snap = conv->snapshot();
            snap["turn_in_flight"] = conv->turn_in_flight();
            send(res, 200, snap);
        }));

        server.Get(R"(/conversations/([^/]+)/events)",
                   guarded([this](const httplib::Request& req, httplib::Response& res) {
                       auto conv = store.get(req.matches[1].str());
                       auto const cursor = param_uint(req, "cursor", 0);
                       auto const limit = std::min<std::uint64_t>(
                           param_uint(req, "limit", options.max_events_per_poll), options.max_events_per_poll);
                       auto const timeout = std::min<std::uint64_t>(
                           param_uint(req, "timeout_ms", 0), static_cast<std::uint64_t>(options.max_poll_timeout.count()));
                       if (cursor > conv->last_seq())
                           throw InputError(
                               fmt::format("cursor {} is beyond the last event {}", cursor, conv->last_seq()));
                       if (limit == 0)
                           throw InputError("'limit' must be positive");
                       auto const events =
                           conv->events_since(cursor, static_cast<std::size_t>(limit), std::chrono::milliseconds(timeout));
                       Json list = Json::array();
                       for (auto const& e: events)
                           list.push_back(e.to_json());
                       auto const next = events.empty() ? cursor : events.back().seq;
                       send(res, 200,
                            {{"conversation_id", req.matches[1].str()},
                             {"cursor", cursor},
                             {"next_cursor", next},
                             {"last_seq", conv->last_seq()},
                             {"turn_in_flight", conv->turn_in_flight()},
                             {"events", std::move(list)}});
                   }));

        server.Post(R"(/conversations/([^/]+)/messages)",
                    guarded([this](const httplib::Request& req, httplib::Response& res) {
                        auto conv = store.get(req.matches[1].str());
                        auto const body = parse_body(req);
                        if (!body.contains("text") || !body["text"].is_string() ||
                            text::trim(body["text"].get<std::string>()).empty())
                            throw InputError("body needs a nonempty 'text'");
                        auto const text_msg = body["text"].get<std::string>();
                        if (!conv->try_begin_turn())
                            throw ConflictError("a turn is already in flight for this conversation");
                        scenario::TmlQuery query;
                        int turn = 0;
                        try
                        {
                            std::optional<scenario::TmlQuery> base;
                            auto const snap = conv->snapshot();
                            if (!snap["turns"].empty())
                                base = scenario::TmlQuery::from_json(snap["turns"].back()["query"]);
                            turn = static_cast<int>(snap["turns"].size()) + 1;
                            if (body.contains("query") && body["query"].is_object())
                                query = scenario::TmlQuery::from_json(body["query"]);
                            else if (base)
                            {
                                query = orch::parse_query_text(text_msg, workspace.languages(), workspace.known_languages(),
                                                               workspace.known_families(), base);
                                query.text = text_msg;
                            }
                            else
                                query = parse_query(Json(text_msg), std::nullopt);
                        }
                        catch (...)
                        {
                            conv->end_turn();
                            throw;
                        }
                        run_turn(conv, [this, conv, query, text_msg] { engine.run_turn(*conv, query, text_msg); },
                                 body.value("wait", false));
                        send(res, 202, {{"conversation_id", req.matches[1].str()}, {"turn", turn}});
                    }));

        server.Get(R"(/results/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            static const std::regex valid("^[A-Za-z0-9_-]+$");
            auto const run_id = req.matches[1].str();
            if (!std::regex_match(run_id, valid))
                throw InputError(fmt::format("invalid run id '{}'", run_id));
            auto const path = options.results_dir / run_id / "summary.json";
            if (!std::filesystem::exists(path))
                throw NotFoundError(fmt::format("unknown run '{}'", run_id));
            send(res, 200, text::read_json_file(path.string()));
        }));
    }
};

Service::Service(ws::Workspace& workspace,
                 const orch::BackendSet& backends,
                 orch::ConversationStore& store,
                 ServiceOptions options):
    impl_(std::make_unique<Impl>(workspace, backends, store, std::move(options)))
{
}

Service::~Service() = default;

int Service::bind(const std::string& host, int port)
{
    int bound = port;
    if (port == 0)
        bound = impl_->server.bind_to_any_port(host);
    else if (!impl_->server.bind_to_port(host, port))
        bound = -1;
    if (bound <= 0)
        throw InputError(fmt::format("cannot bind {}:{}", host, port));
    return bound;
}

void Service::listen()
{
    impl_->server.listen_after_bind();
}

int Service::start(const std::string& host, int port)
{
    auto const bound = bind(host, port);
    impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void Service::stop()
{
    impl_->server.stop();
    if (impl_->listener.joinable())
        impl_->listener.join();
    impl_->join_workers();
}

std::size_t Service::resume_pending()
{
    std::size_t resumed = 0;
    for (auto const& id: impl_->store.ids())
    {
        auto conv = impl_->store.get(id);
        if (!conv->dag().turn_open() || !conv->try_begin_turn())
            continue;
        impl_->run_turn(conv, [this, conv] { impl_->engine.resume_turn(*conv); }, false);
        ++resumed;
    }
    return resumed;
}

void Service::drain()
{
    std::unique_lock lock(impl_->workers_mutex);
    impl_->workers_idle.wait(lock, [&] { return impl_->running == 0; });
}

} // namespace tmlpred::service
