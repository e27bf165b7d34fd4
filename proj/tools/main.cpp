// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/error.hpp>
#include <tmlpred/http_backend.hpp>
#include <tmlpred/pipeline.hpp>
#include <tmlpred/service.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace tmlpred;

namespace
{

struct Globals
{
    std::string config_path;
    std::map<std::string, std::string> overrides;
    bool verbose = false;
};

ws::RunConfig load_config(const Globals& g)
{
    auto config = ws::RunConfig::load(g.config_path, g.overrides);
    config.validate();
    return config;
}

bool is_http(const std::string& s)
{
    return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0;
}

std::unique_ptr<ws::Workspace> open_workspace(const ws::RunConfig& config)
{
    auto workspace = ws::Workspace::load(config);
    if (is_http(config.search))
        workspace->set_search(std::make_unique<orch::HttpSearchProvider>(config.search));
    return workspace;
}

orch::BackendSet open_backends(const ws::RunConfig& config)
{
    auto prompts = std::make_shared<const orch::PromptLibrary>(
        config.prompts.empty() ? orch::PromptLibrary {} : orch::PromptLibrary::load(config.prompts));
    return ws::load_backends(config, orch::http_backend_factory(prompts));
}

fs::path run_dir(const ws::RunConfig& config, const std::string& run_id)
{
    if (run_id.empty() || run_id.find('/') != std::string::npos || run_id == "." || run_id == "..")
        throw InputError(fmt::format("invalid run id '{}'", run_id));
    return fs::path(config.output) / "runs" / run_id;
}

int cmd_ingest(const Globals& g)
{
    auto const config = load_config(g);
    auto const workspace = open_workspace(config);
    auto const dir = fs::path(config.output) / "ingest";
    fs::create_directories(dir);
    text::write_file((dir / "corpus.json").string(), workspace->corpus().to_json().dump(2) + "\n");
    text::write_file((dir / "kb.json").string(), workspace->kb_store().to_json().dump(2) + "\n");
    text::write_file((dir / "similarity.json").string(), workspace->split().to_json().dump(2) + "\n");
    fmt::print("ingested {} task(s), {} removed paper(s), tau={:.6f}; wrote {}\n",
               workspace->corpus().combined().size(), workspace->corpus().removed_papers().size(),
               workspace->split().tau(), dir.string());
    return 0;
}

int cmd_build(const Globals& g, const ws::BenchmarkOptions& options, const std::string& out)
{
    auto const config = load_config(g);
    auto const workspace = open_workspace(config);
    auto const dir = out.empty() ? fs::path(config.output) / "benchmark" : fs::path(out);
    auto const manifest = ws::build_benchmark(*workspace, options, dir);
    for (auto const& s: manifest["skipped"])
        spdlog::warn("skipped {}/{}: {}", s["task"].get<std::string>(), s["scenario"].get<std::string>(),
                     s["reason"].get<std::string>());
    fmt::print("wrote {} question(s) in {} block(s) to {}\n", manifest["questions"].get<std::size_t>(),
               manifest["blocks"].size(), dir.string());
    return 0;
}

int cmd_run(const Globals& g, const std::string& questions_path, const std::string& run_id)
{
    auto const config = load_config(g);
    auto workspace = open_workspace(config);
    auto const backends = open_backends(config);
    auto const questions = ws::load_questions(questions_path);
    auto const dir = run_dir(config, run_id);
    auto const records = ws::run_benchmark(questions, *workspace, backends, dir);
    fmt::print("ran {} question(s); results in {}\n", records.size(), (dir / "results.jsonl").string());
    return 0;
}

int cmd_evaluate(const Globals& g,
                 const std::string& run_id,
                 const ws::EvaluationOptions& options,
                 const ws::Thresholds& thresholds)
{
    auto const config = load_config(g);
    auto const workspace = open_workspace(config);
    auto const backends = open_backends(config);
    auto const dir = run_dir(config, run_id);
    auto const result = ws::evaluate_run_dir(*workspace, backends, dir, options);
    auto const summary = text::read_json_file((dir / "summary.json").string());
    std::cout << ws::render_report(summary);
    auto const violations = ws::check_thresholds(summary, thresholds);
    for (auto const& v: violations)
        spdlog::error("threshold violated: {}", v);
    return violations.empty() ? 0 : 3;
}

int cmd_report(const Globals& g, const std::string& run_id, const std::string& format)
{
    auto const config = load_config(g);
    auto const dir = run_dir(config, run_id);
    auto const path = dir / "summary.json";
    if (!fs::exists(path))
        throw NotFoundError(fmt::format("run '{}' has not been evaluated", run_id));
    if (format == "csv")
        std::cout << text::read_file((dir / "summary.csv").string());
    else if (format == "json")
        std::cout << text::read_file(path.string());
    else
        std::cout << ws::render_report(text::read_json_file(path.string()));
    return 0;
}

service::Service* running_service = nullptr;

extern "C" void on_signal(int)
{
    if (running_service)
        running_service->stop();
}

int cmd_serve(const Globals& g, const std::string& store_dir)
{
    auto const config = load_config(g);
    auto workspace = open_workspace(config);
    auto const backends = open_backends(config);
    auto const dir = store_dir.empty() ? fs::path(config.output) / "conversations" : fs::path(store_dir);
    orch::ConversationStore store(dir);
    auto const recovered = store.recover();
    service::ServiceOptions options;
    options.results_dir = fs::path(config.output) / "runs";
    service::Service svc(*workspace, backends, store, options);
    auto const resumed = svc.resume_pending();
    auto const [host, port] = service::parse_listen(config.listen);
    auto const bound = svc.bind(host, port);
    spdlog::info("recovered {} conversation(s), resumed {} turn(s); listening on {}:{}", recovered, resumed, host,
                 bound);
    running_service = &svc;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    svc.listen();
    running_service = nullptr;
    svc.drain();
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app {"Predicts multilingual LLM performance from typology and prior evidence"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("-c,--config", g.config_path, "run configuration file (JSON)");
    app.add_flag("-v,--verbose", g.verbose, "debug logging");

    std::map<std::string, std::string> raw;
    for (auto const& key: ws::RunConfig::keys())
    {
        auto flag = key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        app.add_option("--" + flag, raw[key], fmt::format("overrides '{}'", key))->group("Config overrides");
    }

    auto* ingest = app.add_subcommand("ingest", "load and validate inputs; write corpus, KB and similarity dumps");

    ws::BenchmarkOptions bench;
    std::vector<std::string> task_names;
    std::string bench_out;
    auto* build = app.add_subcommand("build-benchmark", "generate question blocks per task and scenario");
    build->add_option("--numeric", bench.n_numeric, "numeric questions per block")->capture_default_str();
    build->add_option("--comparative", bench.n_comparative, "comparative questions per block")
        ->capture_default_str();
    build->add_option("--task", task_names, "restrict to these tasks");
    build->add_option("--out", bench_out, "output directory (default <output>/benchmark)");

    std::string questions_path;
    std::string run_id;
    auto* run = app.add_subcommand("run", "answer every question; write results and conversation logs");
    run->add_option("--questions", questions_path, "block file or benchmark directory")->required();
    run->add_option("--run-id", run_id, "run identifier")->required();

    ws::EvaluationOptions eval_options;
    ws::Thresholds thresholds;
    double max_mae = -1;
    double min_accuracy = -1;
    auto* evaluate = app.add_subcommand("evaluate", "score a run");
    evaluate->add_option("--run-id", run_id, "run identifier")->required();
    evaluate->add_flag("--judge", eval_options.judge, "score each report with the quality judge");
    evaluate->add_flag("--diagnostics", eval_options.diagnostics, "judge reasoning steps from the logs");
    auto* max_mae_opt = evaluate->add_option("--max-mae", max_mae, "fail (exit 3) above this overall MAE");
    auto* min_acc_opt = evaluate->add_option("--min-accuracy", min_accuracy, "fail (exit 3) below this accuracy");

    std::string store_dir;
    auto* serve = app.add_subcommand("serve", "HTTP service for interactive conversations");
    serve->add_option("--store", store_dir, "conversation log directory (default <output>/conversations)");

    std::string format = "table";
    auto* report = app.add_subcommand("report", "print an evaluated run's summary");
    report->add_option("--run-id", run_id, "run identifier")->required();
    report->add_option("--format", format, "table, csv or json")
        ->check(CLI::IsMember({"table", "csv", "json"}))
        ->capture_default_str();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        auto const code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    spdlog::set_default_logger(spdlog::stderr_color_mt("tmlpred"));
    spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);
    for (auto const& key: ws::RunConfig::keys())
    {
        auto flag = key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        if (app.count("--" + flag) > 0)
            g.overrides[key] = raw[key];
    }

    try
    {
        if (ingest->parsed())
            return cmd_ingest(g);
        if (build->parsed())
        {
            for (auto const& t: task_names)
                bench.tasks.push_back(task_from_string(t));
            return cmd_build(g, bench, bench_out);
        }
        if (run->parsed())
            return cmd_run(g, questions_path, run_id);
        if (evaluate->parsed())
        {
            if (max_mae_opt->count() > 0)
                thresholds.max_mae = max_mae;
            if (min_acc_opt->count() > 0)
                thresholds.min_accuracy = min_accuracy;
            return cmd_evaluate(g, run_id, eval_options, thresholds);
        }
        if (serve->parsed())
            return cmd_serve(g, store_dir);
        if (report->parsed())
            return cmd_report(g, run_id, format);
    }
    catch (const std::exception& e)
    {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 2;
}
