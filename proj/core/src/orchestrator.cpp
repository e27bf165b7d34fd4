// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/error.hpp>
#include <tmlpred/orchestrator.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <set>
#include <thread>

namespace tmlpred::orch
{

void Budgets::validate() const
{
    if (max_thoughts == 0 || max_nodes == 0 || max_rounds == 0 || parallelism == 0)
        throw InputError("budgets max_thoughts, max_nodes, max_rounds and parallelism must be positive");
}

Json Budgets::to_json() const
{
    return {{"max_thoughts", max_thoughts},
            {"max_nodes", max_nodes},
            {"max_rounds", max_rounds},
            {"retry", retry},
            {"parallelism", parallelism}};
}

Budgets Budgets::from_json(const Json& doc)
{
    Budgets b;
    auto read = [&](const char* key, std::size_t& field) {
        if (!doc.contains(key))
            return;
        auto const& v = doc[key];
        if (!v.is_number_integer() || v.get<long long>() < 0)
            throw InputError(fmt::format("budget {} must be a non-negative integer", key));
        field = v.get<std::size_t>();
    };
    read("max_thoughts", b.max_thoughts);
    read("max_nodes", b.max_nodes);
    read("max_rounds", b.max_rounds);
    read("retry", b.retry);
    read("parallelism", b.parallelism);
    b.validate();
    return b;
}

Json AnalyzerDecision::to_json() const
{
    Json spawns = Json::array();
    for (auto const& s: spawn)
        spawns.push_back({{"name", s.name},
                          {"hypothesis", s.hypothesis},
                          {"method", s.method},
                          {"parent", s.parent ? Json(*s.parent) : Json(nullptr)}});
    return {{"spawn", std::move(spawns)}, {"discard", discard}, {"rejected", rejected}};
}

Orchestrator::Orchestrator(const BackendSet& backends,
                           ToolSet tools,
                           const metrics::MetricRegistry& registry,
                           EngineSettings settings):
    backends_(backends), tools_(tools), registry_(registry), settings_(std::move(settings))
{
    settings_.budgets.validate();
}

std::string Orchestrator::language_name(const scenario::TmlQuery& query) const
{
    if (!query.language)
        return {};
    return tools_.names ? tools_.names->display(*query.language) : *query.language;
}

Json Orchestrator::query_context(const scenario::TmlQuery& query) const
{
    return {
        {"task", std::string(task_id(query.task))},
        {"task_name", std::string(task_display_name(query.task))},
        {"language", query.language ? Json(*query.language) : Json(nullptr)},
        {"language_name", language_name(query)},
        {"model_family", query.model_family ? Json(*query.model_family) : Json(nullptr)},
        {"query_type", std::string(tmlpred::to_string(query.query_type))},
        {"candidates", query.candidates},
        {"text", query.text},
    };
}

namespace
{

Json node_brief(const ThoughtNode& n)
{
    return {{"node_id", n.node_id},
            {"name", n.name},
            {"hypothesis", n.hypothesis},
            {"method", n.method},
            {"state", std::string(to_string(n.state))},
            {"finding", n.finding}};
}

bool by_index(const ThoughtNode* a, const ThoughtNode* b)
{
    return node_index(a->node_id) < node_index(b->node_id);
}

std::optional<ProposedThought> parse_thought(const Json& j)
{
    if (!j.is_object())
        return std::nullopt;
    auto get = [&](const char* key) {
        auto it = j.find(key);
        return it != j.end() && it->is_string() ? text::trim(it->get<std::string>()) : std::string {};
    };
    ProposedThought t {get("name"), get("hypothesis"), get("method"), std::nullopt};
    if (auto p = get("parent"); !p.empty())
        t.parent = p;
    if (t.hypothesis.empty() || t.method.empty())
        return std::nullopt;
    return t;
}

Json thought_json(const ProposedThought& t)
{
    return {{"name", t.name}, {"hypothesis", t.hypothesis}, {"method", t.method}};
}

} // namespace

Json Orchestrator::prior_context(const Dag& dag) const
{
    Json prior = nullptr;
    for (auto const& t: dag.turns())
    {
        if (!t.final_response)
            continue;
        Json nodes = Json::array();
        for (auto const* n: dag.turn_nodes(t.index))
            nodes.push_back(node_brief(*n));
        prior = {{"turn", t.index}, {"final_response", t.final_response->to_json()}, {"nodes", std::move(nodes)}};
    }
    return prior;
}

void Orchestrator::start(Conversation& conversation, const std::string& conversation_id) const
{
    conversation.emit(ev::conversation_started,
                      {{"conversation_id", conversation_id},
                       {"settings",
                        {{"budgets", settings_.budgets.to_json()},
                         {"followup_context", settings_.followup_context},
                         {"kb_threshold", tools_.kb_threshold},
                         {"kb_top_k", tools_.kb_top_k}}}});
}

Json Orchestrator::expert_guidance(const scenario::TmlQuery& query) const
{
    Json documents = Json::array();
    if (tools_.kb_store && tools_.embedder)
    {
        auto const query_text = fmt::format("{} {}", task_display_name(query.task), language_name(query));
        auto const embedding = tools_.embedder->embed(query_text);
        bool const zero = std::all_of(embedding.begin(), embedding.end(), [](double x) { return x == 0.0; });
        if (!zero)
        {
            std::vector<kb::RetrievalResult> results;
            if (tools_.kb_cache)
                results = kb::cached_retrieve(text::fold(query_text), embedding, *tools_.kb_store, *tools_.kb_cache,
                                              tools_.kb_threshold, tools_.kb_top_k)
                              .results;
            else
                results = kb::retrieve(embedding, *tools_.kb_store, tools_.kb_threshold, tools_.kb_top_k);
            for (auto const& r: results)
                documents.push_back(kb::to_json(r));
        }
    }

    Json guidance = Json::array();
    if (!documents.empty())
    {
        BackendRequest req {Role::ExpertKnowledge,
                            {{"query", query_context(query)}, {"documents", documents}},
                            "Summarise the expert guidance relevant to this query as a list of reasoning steps."};
        try
        {
            auto reply = ask_json(backends_.at(Role::ExpertKnowledge), req, [](const Json& j) {
                if (!j.contains("guidance") || !j["guidance"].is_array())
                    throw BackendError("expected a 'guidance' array");
            });
            for (auto const& g: reply["guidance"])
                if (g.is_string())
                    guidance.push_back(g);
        }
        catch (const Error&)
        {
            for (auto const& d: documents)
                guidance.push_back(d.value("text", std::string {}));
        }
    }
    return {{"documents", std::move(documents)}, {"guidance", std::move(guidance)}};
}

CreatedThoughts Orchestrator::create_thoughts(const scenario::TmlQuery& query,
                                              const Json& guidance,
                                              const Json& prior) const
{
    auto out = propose_thoughts(query, guidance, prior);
    if (out.accepted.empty())
        throw InputError("every proposed thought failed the capability check");
    return out;
}

CreatedThoughts Orchestrator::propose_thoughts(const scenario::TmlQuery& query,
                                               const Json& guidance,
                                               const Json& prior) const
{
    BackendRequest req {Role::ThoughtCreator,
                        {{"query", query_context(query)},
                         {"guidance", guidance.value("guidance", Json::array())},
                         {"max_thoughts", settings_.budgets.max_thoughts},
                         {"prior", prior}},
                        "Decompose the query into independent hypotheses, each with a method."};
    auto reply = ask_json(backends_.at(Role::ThoughtCreator), req, [](const Json& j) {
        if (!j.contains("thoughts") || !j["thoughts"].is_array())
            throw BackendError("expected a 'thoughts' array");
        if (std::none_of(j["thoughts"].begin(), j["thoughts"].end(),
                         [](const Json& t) { return parse_thought(t).has_value(); }))
            throw BackendError("no parseable hypothesis");
    });

    CreatedThoughts out;
    auto const limit = std::min(settings_.budgets.max_thoughts, settings_.budgets.max_nodes);
    for (auto const& item: reply["thoughts"])
    {
        auto t = parse_thought(item);
        if (!t)
        {
            out.rejected.push_back({{"name", item.is_object() ? item.value("name", "") : ""},
                                    {"hypothesis", ""},
                                    {"method", ""},
                                    {"violations", Json::array()},
                                    {"reason", "malformed thought"}});
            continue;
        }
        t->parent.reset();
        auto violations = capability_check(t->method);
        auto j = thought_json(*t);
        if (!violations.empty())
        {
            j["violations"] = violations;
            j["reason"] = "capability check";
            out.rejected.push_back(std::move(j));
        }
        else if (out.accepted.size() >= limit)
        {
            j["violations"] = Json::array();
            j["reason"] = "thought budget";
            out.rejected.push_back(std::move(j));
        }
        else
        {
            out.accepted.push_back(std::move(*t));
        }
    }
    return out;
}

std::optional<PendingEvent> Orchestrator::complete_with_reporter(const ThoughtNode& node,
                                                                 const Turn& turn,
                                                                 const Json& artifact,
                                                                 bool forced) const
{
    Json evidence = Json::array();
    for (auto const& e: node.evidence)
        if (e.is_source())
            evidence.push_back(e.to_json());
    BackendRequest req {Role::Reporter,
                        {{"query", query_context(turn.query)},
                         {"node", node_brief(node)},
                         {"evidence", std::move(evidence)},
                         {"artifact", artifact},
                         {"forced", forced}},
                        "Write the node report from its evidence trail and analysis artifact."};
    try
    {
        auto reply = ask_json(backends_.at(Role::Reporter), req, [](const Json& j) {
            if (!j.contains("report") || !j["report"].is_string() || text::trim(j["report"].get<std::string>()).empty())
                throw BackendError("expected a nonempty 'report' string");
        });
        return PendingEvent {std::string(ev::state_changed),
                             {{"node_id", node.node_id},
                              {"from", "active"},
                              {"to", "completed"},
                              {"report", reply["report"]},
                              {"finding", reply.value("finding", Json())}}};
    }
    catch (const Error&)
    {
        return std::nullopt;
    }
}

std::vector<PendingEvent> Orchestrator::run_thought(const ThoughtNode& node, const Turn& turn) const
{
    std::vector<PendingEvent> events;
    if (node.state != NodeState::Active)
        return events;
    auto annotate = [&](std::string note) {
        events.push_back({std::string(ev::annotated), {{"node_id", node.node_id}, {"note", std::move(note)}}});
    };

    ThoughtNode work = node;
    Json artifact = nullptr;
    for (auto it = work.evidence.rbegin(); it != work.evidence.rend(); ++it)
        if (!it->is_source())
        {
            artifact = it->content;
            break;
        }

    auto evidence_kinds = [&] {
        Json kinds = Json::array();
        for (auto const& e: work.evidence)
            kinds.push_back(e.kind);
        return kinds;
    };

    Json plan;
    try
    {
        BackendRequest req {Role::ResearchPlanner,
                            {{"query", query_context(turn.query)},
                             {"node", node_brief(work)},
                             {"evidence_kinds", evidence_kinds()},
                             {"tools", {"kb", "search", "coder"}}},
                            "Plan the tool calls that test this hypothesis."};
        plan = ask_json(backends_.at(Role::ResearchPlanner), req, [](const Json& j) {
            if (!j.contains("steps") || !j["steps"].is_array())
                throw BackendError("expected a 'steps' array");
        });
    }
    catch (const Error& e)
    {
        annotate(fmt::format("planner failed: {}", e.what()));
        return events;
    }

    auto const attempts = settings_.budgets.retry + 1;
    auto next_evidence_id = [&] { return fmt::format("{}.e{}", work.node_id, work.evidence.size() + 1); };
    auto add_evidence = [&](EvidenceItem item, Json& list) {
        item.evidence_id = next_evidence_id();
        list.push_back(item.to_json());
        work.evidence.push_back(std::move(item));
    };

    constexpr std::size_t max_steps = 6;
    std::size_t step_count = 0;
    for (auto const& step: plan["steps"])
    {
        if (++step_count > max_steps)
        {
            annotate("plan truncated to the step limit");
            break;
        }
        auto const tool = step.is_object() ? step.value("tool", std::string {}) : std::string {};
        bool succeeded = false;

        if (tool == "kb")
        {
            if (!tools_.kb_store || !tools_.embedder)
            {
                annotate("kb tool unavailable");
                continue;
            }
            auto const query_text = step.value("query", std::string {});
            Json input {{"query", query_text}, {"threshold", tools_.kb_threshold}, {"k", tools_.kb_top_k}};
            for (std::size_t a = 1; a <= attempts && !succeeded; ++a)
            {
                Json data {{"node_id", work.node_id}, {"tool", "kb"}, {"attempt", a}, {"input", input}};
                try
                {
                    auto const emb = tools_.embedder->embed(query_text);
                    auto results = tools_.kb_cache ? kb::cached_retrieve(text::fold(query_text), emb, *tools_.kb_store,
                                                                         *tools_.kb_cache, tools_.kb_threshold,
                                                                         tools_.kb_top_k)
                                                         .results
                                                   : kb::retrieve(emb, *tools_.kb_store, tools_.kb_threshold,
                                                                  tools_.kb_top_k);
                    Json list = Json::array();
                    for (auto const& r: results)
                    {
                        EvidenceItem item;
                        item.kind = "kb";
                        item.tool = "kb";
                        item.citation = r.document.citation;
                        item.summary = r.document.title.empty() ? r.document.doc_id : r.document.title;
                        item.content = {{"doc_id", r.document.doc_id}, {"text", r.document.text}};
                        item.similarity = r.similarity;
                        add_evidence(std::move(item), list);
                    }
                    data["status"] = "ok";
                    data["evidence"] = std::move(list);
                    succeeded = true;
                }
                catch (const std::exception& e)
                {
                    data["status"] = "error";
                    data["error"] = e.what();
                }
                events.push_back({std::string(ev::tool_invoked), std::move(data)});
            }
        }
        else if (tool == "search")
        {
            if (!tools_.search)
            {
                annotate("search tool unavailable");
                continue;
            }
            SearchRequest request;
            try
            {
                Json rj = step.value("request", Json::object());
                if (!rj.contains("task"))
                    rj["task"] = std::string(task_id(turn.query.task));
                request = SearchRequest::from_json(rj);
            }
            catch (const Error& e)
            {
                annotate(fmt::format("malformed search request: {}", e.what()));
                continue;
            }
            for (std::size_t a = 1; a <= attempts && !succeeded; ++a)
            {
                Json data {{"node_id", work.node_id}, {"tool", "search"}, {"attempt", a}, {"input", request.to_json()}};
                try
                {
                    auto hits = tools_.search->search(request);
                    Json list = Json::array();
                    for (auto& hit: hits)
                    {
                        EvidenceItem item;
                        item.kind = tools_.search->kind();
                        item.tool = "search";
                        item.citation = hit.citation;
                        item.summary = hit.snippet.empty() ? hit.title : hit.snippet;
                        item.content = hit.content;
                        item.content["source_id"] = hit.source_id;
                        item.content["title"] = hit.title;
                        item.flagged = is_off_topic(hit, request, tools_.names);
                        add_evidence(std::move(item), list);
                    }
                    data["status"] = "ok";
                    data["evidence"] = std::move(list);
                    succeeded = true;
                }
                catch (const std::exception& e)
                {
                    data["status"] = "error";
                    data["error"] = e.what();
                }
                events.push_back({std::string(ev::tool_invoked), std::move(data)});
            }
        }
        else if (tool == "coder")
        {
            Json evidence = Json::array();
            for (auto const& e: work.evidence)
                if (e.is_source())
                    evidence.push_back(e.to_json());
            if (evidence.empty())
            {
                annotate("coder skipped: no evidence to analyse");
                continue;
            }
            for (std::size_t a = 1; a <= attempts && !succeeded; ++a)
            {
                Json data {{"node_id", work.node_id}, {"tool", "coder"}, {"attempt", a}};
                BackendRequest req {Role::Coder,
                                    {{"query", query_context(turn.query)},
                                     {"node", node_brief(work)},
                                     {"evidence", evidence},
                                     {"attempt", a}},
                                    "Write and run an analysis over the evidence; report the artifact."};
                data["input"] = {{"evidence_ids", [&] {
                                      Json ids = Json::array();
                                      for (auto const& e: evidence)
                                          ids.push_back(e["evidence_id"]);
                                      return ids;
                                  }()}};
                try
                {
                    auto art = ask_json(backends_.at(Role::Coder), req, [](const Json& j) {
                        if (!j.contains("status") || !j["status"].is_string())
                            throw BackendError("artifact needs a 'status'");
                    });
                    data["artifact"] = art;
                    if (art["status"] == "ok")
                    {
                        EvidenceItem item;
                        item.kind = "artifact";
                        item.tool = "coder";
                        item.citation = {"", fmt::format("artifact:{}", work.node_id)};
                        item.summary = art.value("algorithm", std::string("analysis"));
                        item.content = art;
                        Json list = Json::array();
                        add_evidence(std::move(item), list);
                        data["status"] = "ok";
                        data["evidence"] = std::move(list);
                        artifact = art;
                        succeeded = true;
                    }
                    else
                    {
                        data["status"] = "error";
                        data["error"] = art.value("error", std::string("execution failed"));
                    }
                }
                catch (const Error& e)
                {
                    data["status"] = "error";
                    data["error"] = e.what();
                }
                events.push_back({std::string(ev::tool_invoked), std::move(data)});
            }
        }
        else
        {
            annotate(fmt::format("unknown tool '{}' in plan", tool));
            continue;
        }

        if (!succeeded)
        {
            annotate(fmt::format("{} failed after {} attempt(s)", tool, attempts));
            return events;
        }
    }

    bool const has_sources =
        std::any_of(work.evidence.begin(), work.evidence.end(), [](auto const& e) { return e.is_source(); });
    if (!has_sources)
    {
        annotate("no evidence yet");
        return events;
    }
    if (artifact.is_null())
    {
        annotate("awaiting analysis artifact");
        return events;
    }
    if (auto done = complete_with_reporter(work, turn, artifact, false))
        events.push_back(std::move(*done));
    else
        annotate("reporter failed");
    return events;
}

AnalyzerDecision Orchestrator::analyze_thoughts(const Dag& dag, int turn, int round) const
{
    AnalyzerDecision decision;
    auto nodes = dag.turn_nodes(turn);
    if (nodes.empty() || std::none_of(nodes.begin(), nodes.end(), [](auto* n) { return n->state == NodeState::Active; }))
        return decision;
    std::sort(nodes.begin(), nodes.end(), by_index);

    Json briefs = Json::array();
    for (auto const* n: nodes)
        briefs.push_back(node_brief(*n));
    auto const* t = dag.current_turn();
    BackendRequest req {Role::ThoughtAnalyzer,
                        {{"query", query_context(t->query)},
                         {"round", round},
                         {"nodes", std::move(briefs)},
                         {"node_count", nodes.size()},
                         {"max_nodes", settings_.budgets.max_nodes}},
                        "Decide which branches to spawn or discard."};
    Json reply;
    try
    {
        reply = ask_json(backends_.at(Role::ThoughtAnalyzer), req, [](const Json& j) {
            if (!j.is_object())
                throw BackendError("expected an object");
        });
    }
    catch (const Error& e)
    {
        decision.rejected.push_back({{"kind", "analyzer"}, {"target", nullptr}, {"reason", e.what()}});
        return decision;
    }

    std::set<std::string> discarded;
    for (auto const& d: reply.value("discard", Json::array()))
    {
        auto const id = d.is_string() ? d.get<std::string>() : d.dump();
        auto const* n = dag.find(id);
        std::string reason;
        if (!n || n->turn != turn)
            reason = "unknown node";
        else if (n->state != NodeState::Active)
            reason = fmt::format("node is {}", to_string(n->state));
        else if (!discarded.insert(id).second)
            continue;
        if (!reason.empty())
        {
            decision.rejected.push_back({{"kind", "discard"}, {"target", id}, {"reason", reason}});
            continue;
        }
        decision.discard.push_back(id);
    }

    auto node_total = nodes.size();
    for (auto const& s: reply.value("spawn", Json::array()))
    {
        auto t = parse_thought(s);
        if (!t)
        {
            decision.rejected.push_back({{"kind", "spawn"}, {"target", s}, {"reason", "malformed thought"}});
            continue;
        }
        if (auto v = capability_check(t->method); !v.empty())
        {
            decision.rejected.push_back({{"kind", "spawn"}, {"target", thought_json(*t)}, {"reason", "capability check"},
                                         {"violations", v}});
            continue;
        }
        if (node_total >= settings_.budgets.max_nodes)
        {
            decision.rejected.push_back({{"kind", "spawn"}, {"target", thought_json(*t)}, {"reason", "node budget"}});
            continue;
        }
        if (t->parent)
        {
            auto const* p = dag.find(*t->parent);
            if (!p || p->turn != turn)
                t->parent = nodes.front()->node_id;
        }
        else
        {
            t->parent = nodes.front()->node_id;
        }
        ++node_total;
        decision.spawn.push_back(std::move(*t));
    }
    return decision;
}

FinalResponse Orchestrator::aggregate(const Dag& dag, int turn) const
{
    FinalResponse out;
    auto nodes = dag.turn_nodes(turn);
    std::sort(nodes.begin(), nodes.end(), by_index);
    std::vector<const ThoughtNode*> completed;
    for (auto const* n: nodes)
        if (n->state == NodeState::Completed)
            completed.push_back(n);
    if (completed.empty())
    {
        out.no_evidence = true;
        out.rationale = "no investigation completed with evidence";
        out.report = "No answer: no evidence was gathered for this query.";
        return out;
    }

    std::map<std::string, std::pair<std::string, kb::Citation>, std::less<>> citable;
    for (auto const& n: dag.nodes())
        if (n.state == NodeState::Completed)
            for (auto const& e: n.evidence)
                if (e.is_source())
                    citable.emplace(e.evidence_id, std::pair(n.node_id, e.citation));

    Json briefs = Json::array();
    for (auto const* n: completed)
    {
        Json trail = Json::array();
        for (auto const& e: n->evidence)
            if (e.is_source())
                trail.push_back({{"evidence_id", e.evidence_id},
                                 {"kind", e.kind},
                                 {"summary", e.summary},
                                 {"citation", {{"paper_id", e.citation.paper_id}, {"locator", e.citation.locator}}},
                                 {"flagged", e.flagged}});
        auto brief = node_brief(*n);
        brief["report"] = *n->report;
        brief["evidence"] = std::move(trail);
        briefs.push_back(std::move(brief));
    }
    auto const* t = dag.current_turn();
    BackendRequest req {Role::Aggregator,
                        {{"query", query_context(t->query)}, {"nodes", std::move(briefs)}},
                        "Aggregate the completed investigations into a final cited prediction."};
    Json reply;
    try
    {
        reply = ask_json(backends_.at(Role::Aggregator), req, [](const Json& j) {
            if (!j.is_object())
                throw BackendError("expected an object");
        });
    }
    catch (const Error& e)
    {
        out.no_evidence = true;
        out.rationale = fmt::format("aggregation failed: {}", e.what());
        out.report = "No answer: the investigations could not be aggregated.";
        return out;
    }

    std::set<std::string> cited;
    std::size_t dropped = 0;
    for (auto const& c: reply.value("citations", Json::array()))
    {
        if (!c.is_string())
        {
            ++dropped;
            continue;
        }
        auto const id = c.get<std::string>();
        auto it = citable.find(id);
        if (it == citable.end())
        {
            ++dropped;
            continue;
        }
        if (cited.insert(id).second)
            out.citations.push_back({id, it->second.first, it->second.second});
    }

    std::vector<std::string> notes;
    if (auto const& p = reply.value("prediction", Json()); p.is_object())
    {
        auto const metric = p.value("metric_name", std::string {});
        auto const& v = p.contains("value") ? p["value"] : Json();
        std::string raw = v.is_string() ? v.get<std::string>() : v.is_number() ? text::format_number(v.get<double>()) : "";
        try
        {
            if (metric.empty() || raw.empty())
                throw InputError("prediction needs metric_name and value");
            auto const normalized = registry_.normalize(metric, raw, t->query.task);
            out.prediction = metrics::MetricValue {metric, raw, normalized};
        }
        catch (const Error& e)
        {
            notes.push_back(fmt::format("prediction dropped: {}", e.what()));
        }
    }
    if (auto const& a = reply.value("answer_label", Json()); a.is_string() && !text::trim(a.get<std::string>()).empty())
        out.answer_label = text::trim(a.get<std::string>());
    if (auto const& u = reply.value("uncertainty", Json());
        u.is_array() && u.size() == 2 && u[0].is_number() && u[1].is_number())
    {
        auto lo = u[0].get<double>(), hi = u[1].get<double>();
        if (lo <= hi)
            out.uncertainty = std::pair(lo, hi);
    }
    if (dropped)
        notes.push_back(fmt::format("{} unresolvable citation(s) dropped", dropped));

    out.rationale = reply.value("rationale", std::string {});
    for (auto const& n: notes)
        out.rationale += (out.rationale.empty() ? "" : " ") + std::string("[") + n + "]";
    out.report = reply.value("report", std::string {});
    if (out.report.empty())
        out.report = out.rationale;
    return out;
}

void Orchestrator::run_rounds(Conversation& conversation, int first_round) const
{
    auto const& dag = conversation.dag();
    int const turn = dag.current_turn()->index;
    for (auto round = static_cast<std::size_t>(first_round); round <= settings_.budgets.max_rounds; ++round)
    {
        if (dag.active_count(turn) == 0)
            break;
        conversation.emit(ev::round_started, {{"turn", turn}, {"round", round}});

        std::vector<ThoughtNode> work;
        for (auto const* n: dag.turn_nodes(turn))
            if (n->state == NodeState::Active)
                work.push_back(*n);
        std::sort(work.begin(), work.end(),
                  [](auto const& a, auto const& b) { return node_index(a.node_id) < node_index(b.node_id); });
        Turn const turn_copy = *dag.current_turn();

        std::vector<std::vector<PendingEvent>> results(work.size());
        std::vector<std::exception_ptr> errors(work.size());
        auto const workers = std::min(settings_.budgets.parallelism, work.size());
        if (workers <= 1)
        {
            for (std::size_t i = 0; i < work.size(); ++i)
                results[i] = run_thought(work[i], turn_copy);
        }
        else
        {
            std::atomic<std::size_t> next {0};
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < workers; ++w)
                pool.emplace_back([&] {
                    for (std::size_t i = next++; i < work.size(); i = next++)
                    {
                        try
                        {
                            results[i] = run_thought(work[i], turn_copy);
                        }
                        catch (...)
                        {
                            errors[i] = std::current_exception();
                        }
                    }
                });
            pool.clear();
            for (auto const& e: errors)
                if (e)
                    std::rethrow_exception(e);
        }
        for (auto& batch: results)
            for (auto& e: batch)
                conversation.emit(e.type, std::move(e.data));

        auto decision = analyze_thoughts(dag, turn, static_cast<int>(round));
        auto payload = decision.to_json();
        payload["turn"] = turn;
        payload["round"] = round;
        conversation.emit(ev::analyzer_decision, std::move(payload));
        for (auto const& id: decision.discard)
        {
            conversation.emit(ev::state_changed, {{"node_id", id}, {"from", "active"}, {"to", "discarded"}});
            conversation.emit(ev::annotated, {{"node_id", id}, {"note", fmt::format("discarded by analyzer in round {}", round)}});
        }
        for (auto const& s: decision.spawn)
            conversation.emit(ev::thought_created, {{"node_id", dag.next_node_id()},
                                                    {"turn", turn},
                                                    {"parent", s.parent ? Json(*s.parent) : Json(nullptr)},
                                                    {"name", s.name},
                                                    {"hypothesis", s.hypothesis},
                                                    {"method", s.method}});
    }
}

void Orchestrator::forced_completion(Conversation& conversation) const
{
    auto const& dag = conversation.dag();
    int const turn = dag.current_turn()->index;
    std::vector<ThoughtNode> active;
    for (auto const* n: dag.turn_nodes(turn))
        if (n->state == NodeState::Active)
            active.push_back(*n);
    std::sort(active.begin(), active.end(),
              [](auto const& a, auto const& b) { return node_index(a.node_id) < node_index(b.node_id); });
    for (auto const& n: active)
    {
        bool const has_sources =
            std::any_of(n.evidence.begin(), n.evidence.end(), [](auto const& e) { return e.is_source(); });
        Json artifact = nullptr;
        for (auto it = n.evidence.rbegin(); it != n.evidence.rend(); ++it)
            if (!it->is_source())
            {
                artifact = it->content;
                break;
            }
        std::optional<PendingEvent> done;
        if (has_sources)
            done = complete_with_reporter(n, *dag.current_turn(), artifact, true);
        if (done)
        {
            conversation.emit(done->type, std::move(done->data));
            conversation.emit(ev::annotated, {{"node_id", n.node_id}, {"note", "forced completion after round budget"}});
        }
        else
        {
            conversation.emit(ev::state_changed, {{"node_id", n.node_id}, {"from", "active"}, {"to", "discarded"}});
            conversation.emit(ev::annotated,
                              {{"node_id", n.node_id},
                               {"note", has_sources ? "forced completion failed; discarded after round budget"
                                                    : "discarded after round budget: no evidence"}});
        }
    }
}

void Orchestrator::finish(Conversation& conversation) const
{
    auto const& dag = conversation.dag();
    int const turn = dag.current_turn()->index;
    auto response = aggregate(dag, turn);
    conversation.emit(ev::aggregated, {{"turn", turn}, {"final_response", response.to_json()}});
}

void Orchestrator::run_turn(Conversation& conversation, const scenario::TmlQuery& query, const std::string& message) const
{
    auto const& dag = conversation.dag();
    if (dag.last_seq() == 0)
        throw InvariantError("conversation not started");
    if (dag.turn_open())
        throw ConflictError("a turn is already in progress");
    int const turn = static_cast<int>(dag.turns().size()) + 1;
    Json prior = settings_.followup_context && turn > 1 ? prior_context(dag) : Json(nullptr);
    conversation.emit(ev::turn_started, {{"turn", turn}, {"message", message}, {"query", query.to_json()}});

    Json guidance;
    try
    {
        guidance = expert_guidance(query);
    }
    catch (const Error& e)
    {
        guidance = {{"documents", Json::array()}, {"guidance", Json::array()}, {"error", e.what()}};
    }
    guidance["turn"] = turn;
    conversation.emit(ev::guidance_retrieved, guidance);

    CreatedThoughts created;
    std::optional<std::string> failure;
    try
    {
        created = propose_thoughts(query, guidance, prior);
    }
    catch (const Error& e)
    {
        failure = e.what();
    }
    for (auto& r: created.rejected)
    {
        r["turn"] = turn;
        conversation.emit(ev::thought_rejected, std::move(r));
    }
    if (!failure && created.accepted.empty())
        failure = "every proposed thought failed the capability check";
    if (failure)
    {
        conversation.emit(ev::annotated, {{"turn", turn}, {"note", fmt::format("thought creation failed: {}", *failure)}});
        finish(conversation);
        return;
    }
    for (auto const& t: created.accepted)
        conversation.emit(ev::thought_created, {{"node_id", dag.next_node_id()},
                                                {"turn", turn},
                                                {"parent", nullptr},
                                                {"name", t.name},
                                                {"hypothesis", t.hypothesis},
                                                {"method", t.method}});
    run_rounds(conversation, 1);
    forced_completion(conversation);
    finish(conversation);
}

void Orchestrator::resume_turn(Conversation& conversation) const
{
    auto const& dag = conversation.dag();
    if (!dag.turn_open())
        return;
    run_rounds(conversation, dag.current_turn()->rounds + 1);
    forced_completion(conversation);
    finish(conversation);
}

Route route_query(ConversationStore& store, const std::optional<std::string>& conversation_id)
{
    if (!conversation_id)
    {
        auto [id, conv] = store.create();
        return {RouteKind::NewConversation, id, conv};
    }
    return {RouteKind::FollowUp, *conversation_id, store.get(*conversation_id)};
}

scenario::TmlQuery parse_query_text(std::string_view input,
                                    const corpus::LanguageTable& names,
                                    const std::vector<std::string>& known_languages,
                                    const std::vector<std::string>& known_families,
                                    std::optional<scenario::TmlQuery> base)
{
    scenario::TmlQuery q = base.value_or(scenario::TmlQuery {});
    q.text = std::string(input);
    auto const body = std::string(input);

    struct Cue
    {
        Task task;
        std::string_view phrase;
    };
    static constexpr Cue cues[] {
        {Task::MachineTranslation, "translation"},      {Task::TextSummarization, "summarization"},
        {Task::TextSummarization, "summarisation"},     {Task::CodeGeneration, "code generation"},
        {Task::MathematicalReasoning, "mathematical"},  {Task::MathematicalReasoning, "math"},
        {Task::QaVqa, "question answering"},            {Task::QaVqa, "qa"},
        {Task::ClassificationNli, "nli"},               {Task::ClassificationNli, "classification"},
    };
    bool task_found = false;
    for (auto task: all_tasks)
        if (text::contains_word(body, task_display_name(task)) || text::contains_word(body, task_id(task)))
        {
            q.task = task;
            task_found = true;
            break;
        }
    if (!task_found)
        for (auto const& c: cues)
            if (text::contains_word(body, c.phrase))
            {
                q.task = c.task;
                break;
            }

    for (auto const& code: known_languages)
        if (text::contains_word(body, names.display(code)))
        {
            q.language = names.canonical(code);
            break;
        }

    std::vector<std::string> families;
    for (auto const& f: known_families)
        if (text::contains_word(body, f))
            families.push_back(f);

    bool const comparative = text::contains_word(body, "which") || text::contains_word(body, "compare") ||
                             text::contains_word(body, "comparing") || text::contains_word(body, "best") ||
                             text::contains_word(body, "higher") || text::contains_word(body, "better");
    if (comparative)
    {
        q.query_type = QueryType::ComparativeReasoning;
        q.model_family.reset();
        if (!families.empty())
            q.candidates = families;
    }
    else if (!families.empty())
    {
        q.query_type = QueryType::NumericPrediction;
        q.model_family = families.front();
        q.candidates.clear();
    }
    return q;
}

} // namespace tmlpred::orch
