// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tmlpred/workspace.hpp>

#include <filesystem>
#include <string>
#include <vector>

/// File-level steps behind the command line: benchmark generation, runs,
/// evaluation, and report rendering.
namespace tmlpred::ws
{

struct BenchmarkOptions
{
    std::size_t n_numeric = 10;
    std::size_t n_comparative = 10;
    /// Empty means every task in the corpus.
    std::vector<Task> tasks;
};

/// Writes one `<task>-<scenario>.jsonl` block file per instantiable
/// (task, scenario) plus `manifest.json`; returns the manifest.
Json build_benchmark(const Workspace& workspace, const BenchmarkOptions& options, const std::filesystem::path& out_dir);

/// Questions from one block file, or from every `.jsonl` file in a directory
/// (sorted by name).
std::vector<scenario::Question> load_questions(const std::filesystem::path& path);

/// Runs every question; writes `results.jsonl` and `conversations/<id>.jsonl`
/// under `run_dir`, replacing earlier output of the same run.
std::vector<RunRecord> run_benchmark(const std::vector<scenario::Question>& questions,
                                     Workspace& workspace,
                                     const orch::BackendSet& backends,
                                     const std::filesystem::path& run_dir);

std::vector<RunRecord> load_results(const std::filesystem::path& run_dir);
std::vector<std::vector<orch::Event>> load_logs(const std::filesystem::path& run_dir, const std::vector<RunRecord>& run);

/// Evaluates `run_dir/results.jsonl`; writes `scores.jsonl`, `summary.json`
/// and `summary.csv` next to it.
Evaluation evaluate_run_dir(const Workspace& workspace,
                            const orch::BackendSet& backends,
                            const std::filesystem::path& run_dir,
                            const EvaluationOptions& options);

/// Plain-text tables (overall, per task, per scenario, per metric) from a summary.
std::string render_report(const Json& summary);

struct Thresholds
{
    std::optional<double> max_mae;
    std::optional<double> min_accuracy;
};

/// Human-readable violations; empty when every configured threshold holds.
std::vector<std::string> check_thresholds(const Json& summary, const Thresholds& thresholds);

} // namespace tmlpred::ws
