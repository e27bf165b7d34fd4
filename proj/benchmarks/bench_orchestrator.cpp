// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/orchestrator.hpp>
#include <tmlpred/scripted_backend.hpp>
#include <tmlpred/workspace.hpp>

#include <benchmark/benchmark.h>

using namespace tmlpred;

namespace
{

void BM_ScriptedTurn(benchmark::State& state)
{
    auto const dir = std::filesystem::path(TMLPRED_SOURCE_DIR) / "data" / "fixture";
    auto const config = ws::RunConfig::resolve(text::read_json_file((dir / "config.json").string()), dir.string(),
                                               [](const std::string&) { return std::optional<std::string> {}; }, {});
    auto const w = ws::Workspace::load(config);
    auto const backends = orch::BackendSet::uniform(orch::make_heuristic_backend(0));
    auto const block = scenario::build_blocks({Task::QaVqa, scenario::Scenario::S1, 1, 0, 1}, w->generator_inputs());
    auto const query = block.questions.at(0).to_query();
    orch::Orchestrator o(backends, w->tools(), w->registry());
    for (auto _: state)
    {
        orch::Conversation conv;
        o.start(conv, "bench");
        o.run_turn(conv, query, block.questions.at(0).complete_question);
        benchmark::DoNotOptimize(conv.last_seq());
    }
}
BENCHMARK(BM_ScriptedTurn)->Unit(benchmark::kMillisecond);

} // namespace
