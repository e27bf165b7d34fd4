// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tmlpred/backend.hpp>

#include <cstdint>
#include <functional>
#include <random>

/// Deterministic backends: replies are a pure function of
/// (role, context, message, seed).
namespace tmlpred::orch
{

class ScriptedBackend final: public AgentBackend
{
  public:
    using Handler = std::function<std::string(const BackendRequest&, std::uint64_t seed)>;

    ScriptedBackend(Handler handler, std::uint64_t seed = 0, std::string label = "scripted");

    std::string send(const BackendRequest& request) const override;
    Json capabilities() const override;

  private:
    Handler handler_;
    std::uint64_t seed_;
    std::string label_;
};

/// Seed derived from the request content and the backend seed.
std::uint64_t request_seed(const BackendRequest& request, std::uint64_t seed);
std::mt19937_64 request_rng(const BackendRequest& request, std::uint64_t seed);

/// Rule-based agent team used for fixture and end-to-end runs.
std::string heuristic_reply(const BackendRequest& request, std::uint64_t seed);

/// Knobs for the randomized backend used by property tests.
struct ChaosProfile
{
    double malformed = 0.08;      ///< reply is not JSON
    double prohibited = 0.15;     ///< a thought method names a prohibited operation
    double coder_failure = 0.3;   ///< artifact status is "error"
    double bogus_citation = 0.3;  ///< aggregator cites an unknown evidence id
    double bad_discard = 0.3;     ///< analyzer targets a terminal or unknown node
    double targeted_plan = 0.6;   ///< planner gathers evidence for the query itself
    std::size_t max_thoughts = 8; ///< upper bound on proposed thoughts
    std::size_t max_spawn = 3;
};

std::string chaos_reply(const BackendRequest& request, std::uint64_t seed, const ChaosProfile& profile = {});

std::shared_ptr<AgentBackend> make_heuristic_backend(std::uint64_t seed = 0);
std::shared_ptr<AgentBackend> make_chaos_backend(std::uint64_t seed, ChaosProfile profile = {});

/// Factory for `scripted` (heuristic) and `randomized` (chaos) backend specs.
/// Returns nullptr for other types.
std::shared_ptr<AgentBackend> make_scripted(Role role, const BackendSpec& spec);

} // namespace tmlpred::orch
