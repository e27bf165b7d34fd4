// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tmlpred/kb.hpp>
#include <tmlpred/scenario.hpp>
#include <tmlpred/text.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

/// Conversation DAG state, mutated only by applying events.
namespace tmlpred::orch
{

inline constexpr int snapshot_schema_version = 1;

enum class NodeState
{
    Active,
    Completed,
    Discarded,
};

std::string_view to_string(NodeState s) noexcept;
NodeState node_state_from_string(std::string_view name);

/// One entry of a node's evidence trail.
struct EvidenceItem
{
    std::string evidence_id; ///< "<node>.e<k>"
    std::string kind;        ///< kb | corpus | search | artifact
    std::string tool;
    kb::Citation citation;
    std::string summary;
    Json content;
    std::optional<double> similarity;
    /// Off-topic relative to the node's hypothesis; kept for relevance audit.
    bool flagged = false;

    bool is_source() const { return kind != "artifact"; }

    Json to_json() const;
    static EvidenceItem from_json(const Json& doc);
};

struct ThoughtNode
{
    std::string node_id;
    int turn = 1;
    std::optional<std::string> parent;
    std::string name;
    std::string hypothesis;
    std::string method;
    NodeState state = NodeState::Active;
    std::vector<EvidenceItem> evidence;
    std::optional<std::string> report;
    /// Structured result the report was written from (null when none).
    Json finding;
    std::vector<std::string> annotations;

    const EvidenceItem* find_evidence(std::string_view id) const;
    Json to_json() const;
};

struct Edge
{
    std::string from; ///< "q<turn>" for root thoughts, otherwise a node id
    std::string to;
};

struct ResponseCitation
{
    std::string evidence_id;
    std::string node_id;
    kb::Citation citation;

    Json to_json() const;
};

struct FinalResponse
{
    std::optional<metrics::MetricValue> prediction;
    std::optional<std::string> answer_label;
    std::vector<ResponseCitation> citations;
    std::string rationale;
    std::optional<std::pair<double, double>> uncertainty;
    bool no_evidence = false;
    /// Rendered report handed to prediction extraction and judges.
    std::string report;

    Json to_json() const;
    static FinalResponse from_json(const Json& doc);
};

struct Turn
{
    int index = 1;
    std::string message;
    scenario::TmlQuery query;
    Json guidance = Json::array();
    std::vector<Json> rejected_thoughts;
    std::optional<FinalResponse> final_response;
    int rounds = 0;
};

struct Event
{
    std::uint64_t seq = 0;
    std::string type;
    Json data;

    Json to_json() const;
    static Event from_json(const Json& doc);
};

/// Event type names.
namespace ev
{
inline constexpr std::string_view conversation_started = "conversation_started";
inline constexpr std::string_view turn_started = "turn_started";
inline constexpr std::string_view guidance_retrieved = "guidance_retrieved";
inline constexpr std::string_view thought_created = "thought_created";
inline constexpr std::string_view thought_rejected = "thought_rejected";
inline constexpr std::string_view round_started = "round_started";
inline constexpr std::string_view tool_invoked = "tool_invoked";
inline constexpr std::string_view state_changed = "state_changed";
inline constexpr std::string_view annotated = "annotated";
inline constexpr std::string_view analyzer_decision = "analyzer_decision";
inline constexpr std::string_view aggregated = "aggregated";
} // namespace ev

/// Numeric part of "n12" for id ordering.
int node_index(std::string_view node_id);

class Dag
{
  public:
    Dag() = default;

    /// Applies one event. Sequence numbers must be consecutive from 1.
    /// Throws InvariantError on a forbidden transition, duplicate id, unknown
    /// node, or aggregation while nodes are Active.
    void apply(const Event& event);

    static Dag replay(const std::vector<Event>& events);

    const std::string& conversation_id() const noexcept { return conversation_id_; }
    std::uint64_t last_seq() const noexcept { return last_seq_; }
    const std::vector<ThoughtNode>& nodes() const noexcept { return nodes_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    const std::vector<Turn>& turns() const noexcept { return turns_; }
    const Json& settings() const noexcept { return settings_; }

    const ThoughtNode* find(std::string_view node_id) const;
    const Turn* current_turn() const;
    std::vector<const ThoughtNode*> turn_nodes(int turn) const;
    std::size_t active_count() const;
    std::size_t active_count(int turn) const;
    bool turn_open() const;

    /// Id the next created node will get.
    std::string next_node_id() const;

    Json snapshot() const;

  private:
    ThoughtNode& node_ref(const std::string& id);

    std::string conversation_id_;
    Json settings_ = Json::object();
    std::uint64_t last_seq_ = 0;
    std::vector<ThoughtNode> nodes_;
    std::map<std::string, std::size_t, std::less<>> index_;
    std::vector<Edge> edges_;
    std::vector<Turn> turns_;
};

} // namespace tmlpred::orch
