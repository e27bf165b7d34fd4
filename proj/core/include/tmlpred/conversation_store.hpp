// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tmlpred/dag.hpp>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace tmlpred::orch
{

/// One conversation's event log and the DAG it folds into. A single writer
/// emits events; readers use the locked accessors.
class Conversation
{
  public:
    using Sink = std::function<void(const Event&)>;

    explicit Conversation(Sink sink = {});

    /// Rebuilds from a stored log (sequence numbers must be consecutive).
    static std::unique_ptr<Conversation> from_events(std::vector<Event> events, Sink sink = {});

    /// Assigns the next sequence number, applies the event, forwards it to the
    /// sink and wakes waiting readers. Throws InvariantError when the event is
    /// rejected by the DAG; nothing is recorded in that case.
    Event emit(std::string_view type, Json data);

    /// Writer-side view; no lock is taken.
    const Dag& dag() const noexcept { return dag_; }

    Json snapshot() const;
    /// Snapshot after applying events 1..seq.
    Json snapshot_at(std::uint64_t seq) const;
    std::vector<Event> events() const;
    std::uint64_t last_seq() const;

    /// Events with seq > cursor, at most `limit`. Waits up to `timeout` when
    /// none are available yet.
    std::vector<Event> events_since(std::uint64_t cursor,
                                    std::size_t limit = 1000,
                                    std::chrono::milliseconds timeout = std::chrono::milliseconds(0)) const;

    /// Marks a turn in flight; false when one already is.
    bool try_begin_turn();
    void end_turn();
    bool turn_in_flight() const noexcept { return busy_.load(); }

  private:
    mutable std::mutex mutex_;
    mutable std::condition_variable changed_;
    Dag dag_;
    std::vector<Event> events_;
    Sink sink_;
    std::atomic<bool> busy_ {false};
};

/// Conversations by id, optionally persisted as one JSONL event log per
/// conversation under a directory.
class ConversationStore
{
  public:
    explicit ConversationStore(std::optional<std::filesystem::path> dir = std::nullopt);

    /// Creates an empty conversation. Ids are "c000001", ... unless given.
    std::pair<std::string, std::shared_ptr<Conversation>> create(std::optional<std::string> id = std::nullopt);

    /// Throws NotFoundError for an unknown id.
    std::shared_ptr<Conversation> get(std::string_view id) const;
    bool contains(std::string_view id) const;
    std::vector<std::string> ids() const;

    /// Loads every stored log. Nodes still Active in an unfinished turn are
    /// annotated as interrupted and stay Active so the turn can be resumed.
    /// Returns the number of conversations loaded.
    std::size_t recover();

    const std::optional<std::filesystem::path>& dir() const noexcept { return dir_; }

  private:
    Conversation::Sink sink_for(const std::string& id) const;

    std::optional<std::filesystem::path> dir_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Conversation>, std::less<>> conversations_;
    std::uint64_t counter_ = 0;
};

} // namespace tmlpred::orch
