// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tmlpred/conversation_store.hpp>
#include <tmlpred/orchestrator.hpp>
#include <tmlpred/workspace.hpp>

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>

/// HTTP service over conversations and run results.
///
///   POST /conversations                  {query, conversation_id?, wait?} -> 201 {conversation_id, turn}
///   GET  /conversations/{id}[?cursor=n]  DAG snapshot
///   GET  /conversations/{id}/events?cursor=&timeout_ms=&limit=
///   POST /conversations/{id}/messages    {text, query?, wait?} -> 202 {conversation_id, turn}
///   GET  /results/{run_id}               score summary
///   GET  /health
///
/// Errors: 404 unknown id, 409 turn in flight, 422 malformed body or cursor.
namespace tmlpred::service
{

struct ServiceOptions
{
    std::filesystem::path results_dir = "out/runs";
    std::size_t max_events_per_poll = 1000;
    std::chrono::milliseconds max_poll_timeout {30000};
};

class Service
{
  public:
    Service(ws::Workspace& workspace,
            const orch::BackendSet& backends,
            orch::ConversationStore& store,
            ServiceOptions options = {});
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds and returns the port; port 0 picks a free one.
    int bind(const std::string& host, int port);
    /// Serves on the bound socket until stop(). Blocks.
    void listen();
    /// bind() plus listen() on a background thread.
    int start(const std::string& host, int port);
    void stop();

    /// Finishes turns left open by a restart, in the background.
    std::size_t resume_pending();

    /// Blocks until no turn is running.
    void drain();

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// "host:port" -> pair. Throws InputError.
std::pair<std::string, int> parse_listen(std::string_view address);

} // namespace tmlpred::service
