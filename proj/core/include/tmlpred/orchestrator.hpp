// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tmlpred/backend.hpp>
#include <tmlpred/conversation_store.hpp>
#include <tmlpred/dag.hpp>
#include <tmlpred/kb.hpp>
#include <tmlpred/metrics.hpp>
#include <tmlpred/tools.hpp>

#include <optional>
#include <string>
#include <vector>

/// The DAG engine: guidance, thought creation, parallel investigation,
/// analyzer barriers, and aggregation.
namespace tmlpred::orch
{

struct Budgets
{
    std::size_t max_thoughts = 5; ///< initial thoughts per turn
    std::size_t max_nodes = 12;   ///< nodes per turn, spawned ones included
    std::size_t max_rounds = 4;   ///< investigation rounds per turn
    std::size_t retry = 1;        ///< extra attempts per failing tool call
    std::size_t parallelism = 1;  ///< concurrent thought investigations

    /// Throws InputError unless every budget is positive (retry may be 0).
    void validate() const;
    Json to_json() const;
    static Budgets from_json(const Json& doc);
};

struct ToolSet
{
    const kb::VectorStore* kb_store = nullptr;
    const kb::EmbeddingBackend* embedder = nullptr;
    kb::RetrievalCache* kb_cache = nullptr;
    double kb_threshold = kb::default_threshold;
    std::size_t kb_top_k = kb::default_top_k;
    const SearchProvider* search = nullptr;
    const corpus::LanguageTable* names = nullptr;
};

struct EngineSettings
{
    Budgets budgets;
    /// Pass the prior final response and node summaries to follow-up turns.
    bool followup_context = true;
};

/// An event not yet committed to the log.
struct PendingEvent
{
    std::string type;
    Json data;
};

struct ProposedThought
{
    std::string name;
    std::string hypothesis;
    std::string method;
    std::optional<std::string> parent;
};

struct CreatedThoughts
{
    std::vector<ProposedThought> accepted;
    /// `{name, hypothesis, method, violations, reason}` per rejected proposal.
    std::vector<Json> rejected;
};

struct AnalyzerDecision
{
    std::vector<ProposedThought> spawn;
    std::vector<std::string> discard;
    /// `{kind: spawn|discard, target, reason}` per refused action.
    std::vector<Json> rejected;

    bool empty() const { return spawn.empty() && discard.empty(); }
    Json to_json() const;
};

class Orchestrator
{
  public:
    Orchestrator(const BackendSet& backends,
                 ToolSet tools,
                 const metrics::MetricRegistry& registry,
                 EngineSettings settings = {});

    const EngineSettings& settings() const noexcept { return settings_; }

    /// Emits conversation_started.
    void start(Conversation& conversation, const std::string& conversation_id) const;

    /// Runs one full turn: guidance, thoughts, rounds, forced completion, aggregation.
    void run_turn(Conversation& conversation, const scenario::TmlQuery& query, const std::string& message) const;

    /// Finishes a turn left open (e.g. after a restart).
    void resume_turn(Conversation& conversation) const;

    /// KB retrieval plus the expert_knowledge role. Returns the
    /// guidance_retrieved payload: `{turn, documents, guidance}`.
    Json expert_guidance(const scenario::TmlQuery& query) const;

    /// Throws BackendError when the backend yields no parseable hypothesis
    /// and InputError when every hypothesis fails the capability check.
    CreatedThoughts create_thoughts(const scenario::TmlQuery& query, const Json& guidance, const Json& prior) const;

    /// Investigates one Active node on a copy; returns the events to commit.
    std::vector<PendingEvent> run_thought(const ThoughtNode& node, const Turn& turn) const;

    /// Barrier decision for the current turn; empty when every node is terminal.
    AnalyzerDecision analyze_thoughts(const Dag& dag, int turn, int round) const;

    /// Final response for a turn with no Active nodes.
    FinalResponse aggregate(const Dag& dag, int turn) const;

  private:
    CreatedThoughts propose_thoughts(const scenario::TmlQuery& query, const Json& guidance, const Json& prior) const;
    Json query_context(const scenario::TmlQuery& query) const;
    std::string language_name(const scenario::TmlQuery& query) const;
    Json prior_context(const Dag& dag) const;
    void run_rounds(Conversation& conversation, int first_round) const;
    void forced_completion(Conversation& conversation) const;
    void finish(Conversation& conversation) const;
    std::optional<PendingEvent> complete_with_reporter(const ThoughtNode& node,
                                                       const Turn& turn,
                                                       const Json& artifact,
                                                       bool forced) const;

    const BackendSet& backends_;
    ToolSet tools_;
    const metrics::MetricRegistry& registry_;
    EngineSettings settings_;
};

enum class RouteKind
{
    NewConversation,
    FollowUp,
};

struct Route
{
    RouteKind kind = RouteKind::NewConversation;
    std::string conversation_id;
    std::shared_ptr<Conversation> conversation;
};

/// New conversation when no id is supplied, otherwise a follow-up on the
/// existing one. Throws NotFoundError for an unknown id.
Route route_query(ConversationStore& store, const std::optional<std::string>& conversation_id);

/// Fills task, language, and family from free text using display names,
/// task names, and known model families. Missing fields stay empty.
scenario::TmlQuery parse_query_text(std::string_view text,
                                    const corpus::LanguageTable& names,
                                    const std::vector<std::string>& known_languages,
                                    const std::vector<std::string>& known_families,
                                    std::optional<scenario::TmlQuery> base = std::nullopt);

} // namespace tmlpred::orch
