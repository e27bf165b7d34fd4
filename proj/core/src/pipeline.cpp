// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/error.hpp>
#include <tmlpred/pipeline.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace tmlpred::ws
{

namespace fs = std::filesystem;

namespace
{

void write_jsonl(const fs::path& path, const std::vector<Json>& lines)
{
    std::string out;
    for (auto const& l: lines)
        out += text::canonical_dump(l) + "\n";
    text::write_file(path.string(), out);
}

void write_pretty(const fs::path& path, const Json& doc)
{
    text::write_file(path.string(), doc.dump(2) + "\n");
}

} // namespace

Json build_benchmark(const Workspace& workspace, const BenchmarkOptions& options, const fs::path& out_dir)
{
    fs::create_directories(out_dir);
    auto tasks = options.tasks;
    if (tasks.empty())
        for (auto const& [task, _]: workspace.corpus().combined())
            tasks.push_back(task);

    auto const in = workspace.generator_inputs();
    Json blocks = Json::array();
    Json skipped = Json::array();
    std::size_t total = 0;
    for (auto task: tasks)
    {
        if (!workspace.corpus().combined().contains(task))
            throw InputError(fmt::format("task {} is not in the corpus", task_id(task)));
        auto const space = scenario::enumerate_candidates(task, in);
        for (auto s: scenario::all_scenarios)
        {
            auto const i = static_cast<std::size_t>(s) - 1;
            scenario::BlockRequest req {task, s, space.numeric[i].empty() ? 0 : options.n_numeric,
                                        space.comparative[i].empty() ? 0 : options.n_comparative,
                                        workspace.config().seed};
            auto const name = fmt::format("{}-{}", task_id(task), scenario::to_string(s));
            if (req.n_numeric + req.n_comparative == 0)
            {
                skipped.push_back({{"task", std::string(task_id(task))},
                                   {"scenario", std::string(scenario::to_string(s))},
                                   {"reason", "scenario not instantiable"}});
                continue;
            }
            auto const block = scenario::build_blocks(req, in);
            std::vector<Json> lines;
            for (auto const& q: block.questions)
                lines.push_back(q.to_json());
            write_jsonl(out_dir / (name + ".jsonl"), lines);
            total += lines.size();
            blocks.push_back({{"task", std::string(task_id(task))},
                              {"scenario", std::string(scenario::to_string(s))},
                              {"file", name + ".jsonl"},
                              {"numeric", req.n_numeric},
                              {"comparative", req.n_comparative},
                              {"exhausted", block.exhausted}});
        }
    }
    Json manifest {{"seed", workspace.config().seed}, {"blocks", blocks}, {"skipped", skipped}, {"questions", total}};
    write_pretty(out_dir / "manifest.json", manifest);
    return manifest;
}

std::vector<scenario::Question> load_questions(const fs::path& path)
{
    std::vector<fs::path> files;
    if (fs::is_directory(path))
    {
        for (auto const& e: fs::directory_iterator(path))
            if (e.is_regular_file() && e.path().extension() == ".jsonl")
                files.push_back(e.path());
        std::sort(files.begin(), files.end());
    }
    else if (fs::exists(path))
        files.push_back(path);
    else
        throw InputError(fmt::format("question file or directory not found: {}", path.string()));
    std::vector<scenario::Question> out;
    for (auto const& f: files)
        for (auto const& line: text::read_jsonl_file(f.string()))
            out.push_back(scenario::Question::from_json(line));
    return out;
}

std::vector<RunRecord> run_benchmark(const std::vector<scenario::Question>& questions,
                                     Workspace& workspace,
                                     const orch::BackendSet& backends,
                                     const fs::path& run_dir)
{
    fs::create_directories(run_dir);
    fs::remove_all(run_dir / "conversations");
    orch::ConversationStore store(run_dir / "conversations");
    auto records = run_questions(questions, workspace, backends, store);
    std::vector<Json> lines;
    for (auto const& r: records)
        lines.push_back(r.to_json());
    write_jsonl(run_dir / "results.jsonl", lines);
    return records;
}

std::vector<RunRecord> load_results(const fs::path& run_dir)
{
    auto const path = run_dir / "results.jsonl";
    if (!fs::exists(path))
        throw InputError(fmt::format("no results file at {}", path.string()));
    std::vector<RunRecord> out;
    for (auto const& line: text::read_jsonl_file(path.string()))
        out.push_back(RunRecord::from_json(line));
    return out;
}

std::vector<std::vector<orch::Event>> load_logs(const fs::path& run_dir, const std::vector<RunRecord>& run)
{
    std::vector<std::vector<orch::Event>> logs;
    for (auto const& r: run)
    {
        auto const path = run_dir / "conversations" / (r.conversation_id + ".jsonl");
        if (!fs::exists(path))
            throw InputError(fmt::format("missing conversation log {}", path.string()));
        std::vector<orch::Event> events;
        for (auto const& line: text::read_jsonl_file(path.string()))
            events.push_back(orch::Event::from_json(line));
        logs.push_back(std::move(events));
    }
    return logs;
}

Evaluation evaluate_run_dir(const Workspace& workspace,
                            const orch::BackendSet& backends,
                            const fs::path& run_dir,
                            const EvaluationOptions& options)
{
    auto const run = load_results(run_dir);
    std::vector<std::vector<orch::Event>> logs;
    if (options.diagnostics)
        logs = load_logs(run_dir, run);
    auto result = evaluate_run(run, workspace, backends, logs, options);
    write_jsonl(run_dir / "scores.jsonl", result.records);
    auto summary = result.summary();
    summary["run_id"] = run_dir.filename().string();
    write_pretty(run_dir / "summary.json", summary);
    text::write_file((run_dir / "summary.csv").string(), result.breakdown.to_csv());
    return result;
}

namespace
{

std::string cell_text(const Json& v, const char* fmt_spec)
{
    if (!v.is_number())
        return "-";
    return fmt::format(fmt::runtime(fmt_spec), v.get<double>());
}

void table(std::ostringstream& out, const std::string& title, const Json& cells)
{
    out << title << "\n";
    out << fmt::format("  {:<36} {:>6} {:>8} {:>9} {:>6} {:>9}\n", "key", "n_num", "MAE", "coverage", "n_cmp",
                       "accuracy");
    auto row = [&](const std::string& key, const Json& c) {
        out << fmt::format("  {:<36} {:>6} {:>8} {:>9} {:>6} {:>9}\n", key, c.value("numeric_total", 0),
                           cell_text(c.value("mae", Json()), "{:.2f}"), cell_text(c.value("coverage", Json()), "{:.2f}"),
                           c.value("comparative_total", 0), cell_text(c.value("accuracy", Json()), "{:.3f}"));
    };
    if (cells.contains("numeric_total"))
        row("all", cells);
    else
        for (auto const& [k, c]: cells.items())
            row(k, c);
    out << "\n";
}

} // namespace

std::string render_report(const Json& summary)
{
    std::ostringstream out;
    auto const& b = summary.value("breakdown", Json::object());
    out << fmt::format("run {}: {} question(s), {} extraction failure(s)\n\n", summary.value("run_id", "?"),
                       summary.value("questions", 0), summary.value("extraction_failures", 0));
    table(out, "Overall", b.value("overall", Json::object()));
    table(out, "By task", b.value("per_task", Json::object()));
    table(out, "By scenario", b.value("per_scenario", Json::object()));
    table(out, "By metric", b.value("per_metric", Json::object()));
    auto const& d = summary.value("diagnostics", Json());
    if (d.is_object())
    {
        out << "Diagnostics\n";
        for (auto const& [k, r]: d.items())
            out << fmt::format("  {:<36} {:>8} ({} of {}, {} unevaluable)\n", k,
                               cell_text(r.value("rate", Json()), "{:.3f}"), r.value("positives", 0),
                               r.value("evaluated", 0), r.value("unevaluable", 0));
    }
    return out.str();
}

std::vector<std::string> check_thresholds(const Json& summary, const Thresholds& thresholds)
{
    std::vector<std::string> out;
    auto const& overall = summary.value("breakdown", Json::object()).value("overall", Json::object());
    auto const mae = overall.value("mae", Json());
    auto const acc = overall.value("accuracy", Json());
    if (thresholds.max_mae && mae.is_number() && mae.get<double>() > *thresholds.max_mae)
        out.push_back(fmt::format("overall MAE {:.3f} exceeds {:.3f}", mae.get<double>(), *thresholds.max_mae));
    if (thresholds.min_accuracy && acc.is_number() && acc.get<double>() < *thresholds.min_accuracy)
        out.push_back(fmt::format("overall accuracy {:.3f} is below {:.3f}", acc.get<double>(), *thresholds.min_accuracy));
    return out;
}

} // namespace tmlpred::ws
