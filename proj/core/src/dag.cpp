// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/dag.hpp>
#include <tmlpred/error.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <charconv>

namespace tmlpred::orch
{

std::string_view to_string(NodeState s) noexcept
{
    switch (s)
    {
        case NodeState::Active: return "active";
        case NodeState::Completed: return "completed";
        case NodeState::Discarded: return "discarded";
    }
    return "active";
}

NodeState node_state_from_string(std::string_view name)
{
    auto const n = text::fold(name);
    if (n == "active")
        return NodeState::Active;
    if (n == "completed")
        return NodeState::Completed;
    if (n == "discarded")
        return NodeState::Discarded;
    throw InputError(fmt::format("unknown node state '{}'", name));
}

namespace
{

Json citation_json(const kb::Citation& c)
{
    return {{"paper_id", c.paper_id}, {"locator", c.locator}};
}

kb::Citation citation_from(const Json& j)
{
    return {j.value("paper_id", std::string {}), j.value("locator", std::string {})};
}

template <typename T>
Json optional_json(const std::optional<T>& v)
{
    return v ? Json(*v) : Json(nullptr);
}

} // namespace

Json EvidenceItem::to_json() const
{
    Json j {
        {"evidence_id", evidence_id}, {"kind", kind},       {"tool", tool},       {"citation", citation_json(citation)},
        {"summary", summary},         {"content", content}, {"flagged", flagged},
    };
    if (similarity)
        j["similarity"] = *similarity;
    return j;
}

EvidenceItem EvidenceItem::from_json(const Json& doc)
{
    EvidenceItem e;
    try
    {
        e.evidence_id = doc.at("evidence_id").get<std::string>();
        e.kind = doc.at("kind").get<std::string>();
        e.tool = doc.value("tool", std::string {});
        e.citation = citation_from(doc.value("citation", Json::object()));
        e.summary = doc.value("summary", std::string {});
        e.content = doc.value("content", Json());
        if (doc.contains("similarity") && doc["similarity"].is_number())
            e.similarity = doc["similarity"].get<double>();
        e.flagged = doc.value("flagged", false);
    }
    catch (const nlohmann::json::exception& ex)
    {
        throw InputError(fmt::format("evidence item: {}", ex.what()));
    }
    return e;
}

const EvidenceItem* ThoughtNode::find_evidence(std::string_view id) const
{
    for (auto const& e: evidence)
        if (e.evidence_id == id)
            return &e;
    return nullptr;
}

Json ThoughtNode::to_json() const
{
    Json trail = Json::array();
    for (auto const& e: evidence)
        trail.push_back(e.to_json());
    return {
        {"node_id", node_id},
        {"turn", turn},
        {"parent", optional_json(parent)},
        {"name", name},
        {"hypothesis", hypothesis},
        {"method", method},
        {"state", std::string(to_string(state))},
        {"evidence", std::move(trail)},
        {"report", optional_json(report)},
        {"finding", finding},
        {"annotations", annotations},
    };
}

Json ResponseCitation::to_json() const
{
    return {{"evidence_id", evidence_id}, {"node_id", node_id}, {"citation", citation_json(citation)}};
}

Json FinalResponse::to_json() const
{
    Json cites = Json::array();
    for (auto const& c: citations)
        cites.push_back(c.to_json());
    Json pred = nullptr;
    if (prediction)
        pred = {{"metric_name", prediction->metric_name},
                {"raw", prediction->raw},
                {"normalized", prediction->normalized}};
    Json unc = nullptr;
    if (uncertainty)
        unc = Json::array({uncertainty->first, uncertainty->second});
    return {
        {"prediction", std::move(pred)},
        {"answer_label", optional_json(answer_label)},
        {"citations", std::move(cites)},
        {"rationale", rationale},
        {"uncertainty", std::move(unc)},
        {"no_evidence", no_evidence},
        {"report", report},
    };
}

FinalResponse FinalResponse::from_json(const Json& doc)
{
    FinalResponse r;
    try
    {
        if (auto const& p = doc.at("prediction"); !p.is_null())
            r.prediction = metrics::MetricValue {p.at("metric_name").get<std::string>(), p.at("raw").get<std::string>(),
                                                 p.at("normalized").get<double>()};
        if (auto const& a = doc.at("answer_label"); !a.is_null())
            r.answer_label = a.get<std::string>();
        for (auto const& c: doc.at("citations"))
            r.citations.push_back({c.at("evidence_id").get<std::string>(), c.at("node_id").get<std::string>(),
                                   citation_from(c.at("citation"))});
        r.rationale = doc.value("rationale", std::string {});
        if (auto it = doc.find("uncertainty"); it != doc.end() && it->is_array() && it->size() == 2)
            r.uncertainty = std::pair((*it)[0].get<double>(), (*it)[1].get<double>());
        r.no_evidence = doc.value("no_evidence", false);
        r.report = doc.value("report", std::string {});
    }
    catch (const nlohmann::json::exception& ex)
    {
        throw InputError(fmt::format("final response: {}", ex.what()));
    }
    return r;
}

Json Event::to_json() const
{
    return {{"seq", seq}, {"type", type}, {"data", data}};
}

Event Event::from_json(const Json& doc)
{
    try
    {
        return {doc.at("seq").get<std::uint64_t>(), doc.at("type").get<std::string>(), doc.value("data", Json::object())};
    }
    catch (const nlohmann::json::exception& ex)
    {
        throw InputError(fmt::format("event: {}", ex.what()));
    }
}

int node_index(std::string_view node_id)
{
    int value = 0;
    if (node_id.size() < 2 || node_id[0] != 'n')
        return -1;
    auto [ptr, ec] = std::from_chars(node_id.data() + 1, node_id.data() + node_id.size(), value);
    if (ec != std::errc {} || ptr != node_id.data() + node_id.size())
        return -1;
    return value;
}

const ThoughtNode* Dag::find(std::string_view node_id) const
{
    auto it = index_.find(node_id);
    return it == index_.end() ? nullptr : &nodes_[it->second];
}

ThoughtNode& Dag::node_ref(const std::string& id)
{
    auto it = index_.find(id);
    if (it == index_.end())
        throw InvariantError(fmt::format("unknown node '{}'", id));
    return nodes_[it->second];
}

const Turn* Dag::current_turn() const
{
    return turns_.empty() ? nullptr : &turns_.back();
}

std::vector<const ThoughtNode*> Dag::turn_nodes(int turn) const
{
    std::vector<const ThoughtNode*> out;
    for (auto const& n: nodes_)
        if (n.turn == turn)
            out.push_back(&n);
    return out;
}

std::size_t Dag::active_count() const
{
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](auto const& n) { return n.state == NodeState::Active; }));
}

std::size_t Dag::active_count(int turn) const
{
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [&](auto const& n) {
        return n.turn == turn && n.state == NodeState::Active;
    }));
}

bool Dag::turn_open() const
{
    return !turns_.empty() && !turns_.back().final_response;
}

std::string Dag::next_node_id() const
{
    return fmt::format("n{}", nodes_.size() + 1);
}

void Dag::apply(const Event& event)
{
    if (event.seq != last_seq_ + 1)
        throw InvariantError(fmt::format("event sequence gap: expected {}, got {}", last_seq_ + 1, event.seq));
    auto const& d = event.data;
    auto const& type = event.type;
    auto require_turn = [&]() -> Turn& {
        if (turns_.empty())
            throw InvariantError(fmt::format("{} before any turn", type));
        auto const t = d.value("turn", turns_.back().index);
        if (t != turns_.back().index)
            throw InvariantError(fmt::format("{} for turn {} while turn {} is current", type, t, turns_.back().index));
        return turns_.back();
    };

    try
    {
        if (type == ev::conversation_started)
        {
            if (last_seq_ != 0)
                throw InvariantError("conversation_started must be the first event");
            conversation_id_ = d.at("conversation_id").get<std::string>();
            settings_ = d.value("settings", Json::object());
        }
        else if (last_seq_ == 0)
        {
            throw InvariantError("the first event must be conversation_started");
        }
        else if (type == ev::turn_started)
        {
            if (turn_open())
                throw InvariantError("a turn is already open");
            Turn t;
            t.index = d.at("turn").get<int>();
            if (t.index != static_cast<int>(turns_.size()) + 1)
                throw InvariantError(fmt::format("turn {} out of order", t.index));
            t.message = d.value("message", std::string {});
            t.query = scenario::TmlQuery::from_json(d.at("query"));
            turns_.push_back(std::move(t));
        }
        else if (type == ev::guidance_retrieved)
        {
            require_turn().guidance = d;
        }
        else if (type == ev::thought_created)
        {
            auto& turn = require_turn();
            if (turn.final_response)
                throw InvariantError("thought created after aggregation");
            ThoughtNode n;
            n.node_id = d.at("node_id").get<std::string>();
            if (n.node_id != next_node_id())
                throw InvariantError(fmt::format("node id {} out of order (expected {})", n.node_id, next_node_id()));
            n.turn = turn.index;
            if (d.contains("parent") && !d["parent"].is_null())
            {
                n.parent = d["parent"].get<std::string>();
                if (!find(*n.parent))
                    throw InvariantError(fmt::format("parent {} does not exist", *n.parent));
            }
            n.name = d.value("name", std::string {});
            n.hypothesis = d.at("hypothesis").get<std::string>();
            n.method = d.at("method").get<std::string>();
            edges_.push_back({n.parent ? *n.parent : fmt::format("q{}", turn.index), n.node_id});
            index_.emplace(n.node_id, nodes_.size());
            nodes_.push_back(std::move(n));
        }
        else if (type == ev::thought_rejected)
        {
            require_turn().rejected_thoughts.push_back(d);
        }
        else if (type == ev::round_started)
        {
            require_turn().rounds = d.at("round").get<int>();
        }
        else if (type == ev::tool_invoked)
        {
            auto& n = node_ref(d.at("node_id").get<std::string>());
            if (n.state != NodeState::Active)
                throw InvariantError(fmt::format("tool invoked on {} node {}", to_string(n.state), n.node_id));
            for (auto const& item: d.value("evidence", Json::array()))
            {
                auto e = EvidenceItem::from_json(item);
                auto const expected = fmt::format("{}.e{}", n.node_id, n.evidence.size() + 1);
                if (e.evidence_id != expected)
                    throw InvariantError(fmt::format("evidence id {} out of order (expected {})", e.evidence_id, expected));
                n.evidence.push_back(std::move(e));
            }
        }
        else if (type == ev::state_changed)
        {
            auto& n = node_ref(d.at("node_id").get<std::string>());
            auto const from = node_state_from_string(d.at("from").get<std::string>());
            auto const to = node_state_from_string(d.at("to").get<std::string>());
            if (from != n.state)
                throw InvariantError(fmt::format("node {} is {}, not {}", n.node_id, to_string(n.state), to_string(from)));
            if (n.state != NodeState::Active || to == NodeState::Active)
                throw InvariantError(fmt::format("forbidden transition {} -> {} on {}", to_string(n.state), to_string(to),
                                                 n.node_id));
            if (to == NodeState::Completed)
            {
                if (!d.contains("report") || !d["report"].is_string())
                    throw InvariantError(fmt::format("completed node {} needs a report", n.node_id));
                n.report = d["report"].get<std::string>();
                n.finding = d.value("finding", Json());
            }
            n.state = to;
        }
        else if (type == ev::annotated)
        {
            auto note = d.at("note").get<std::string>();
            if (d.contains("node_id") && !d["node_id"].is_null())
                node_ref(d["node_id"].get<std::string>()).annotations.push_back(std::move(note));
        }
        else if (type == ev::analyzer_decision)
        {
            require_turn();
        }
        else if (type == ev::aggregated)
        {
            auto& turn = require_turn();
            if (turn.final_response)
                throw InvariantError("turn already aggregated");
            if (active_count() != 0)
                throw InvariantError("aggregation with active nodes");
            turn.final_response = FinalResponse::from_json(d.at("final_response"));
        }
        else
        {
            throw InvariantError(fmt::format("unknown event type '{}'", type));
        }
    }
    catch (const nlohmann::json::exception& ex)
    {
        throw InvariantError(fmt::format("malformed {} event: {}", type, ex.what()));
    }
    last_seq_ = event.seq;
}

Dag Dag::replay(const std::vector<Event>& events)
{
    Dag dag;
    for (auto const& e: events)
        dag.apply(e);
    return dag;
}

Json Dag::snapshot() const
{
    Json turns = Json::array();
    for (auto const& t: turns_)
        turns.push_back({
            {"turn", t.index},
            {"message", t.message},
            {"query", t.query.to_json()},
            {"guidance", t.guidance},
            {"rejected_thoughts", t.rejected_thoughts},
            {"rounds", t.rounds},
            {"final_response", t.final_response ? t.final_response->to_json() : Json(nullptr)},
        });
    Json nodes = Json::array();
    for (auto const& n: nodes_)
        nodes.push_back(n.to_json());
    Json edges = Json::array();
    for (auto const& e: edges_)
        edges.push_back({{"from", e.from}, {"to", e.to}});
    Json final_response = nullptr;
    if (!turns_.empty() && turns_.back().final_response)
        final_response = turns_.back().final_response->to_json();
    return {
        {"schema_version", snapshot_schema_version},
        {"conversation_id", conversation_id_},
        {"last_seq", last_seq_},
        {"settings", settings_},
        {"query", turns_.empty() ? Json(nullptr) : turns_.front().query.to_json()},
        {"turns", std::move(turns)},
        {"nodes", std::move(nodes)},
        {"edges", std::move(edges)},
        {"final_response", std::move(final_response)},
    };
}

} // namespace tmlpred::orch
