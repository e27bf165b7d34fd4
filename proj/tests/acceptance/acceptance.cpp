// SPDX-License-Identifier: Apache-2.0
// Prints one PASS/FAIL line per primary acceptance criterion.

#include "oracles/oracles.hpp"
#include "support/fixture.hpp"

#include <tmlpred/error.hpp>
#include <tmlpred/evalharness.hpp>
#include <tmlpred/kb.hpp>
#include <tmlpred/langsim.hpp>
#include <tmlpred/metrics.hpp>
#include <tmlpred/orchestrator.hpp>
#include <tmlpred/scenario.hpp>
#include <tmlpred/scripted_backend.hpp>
#include <tmlpred/workspace.hpp>

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

using namespace tmlpred;
namespace fs = std::filesystem;

namespace
{

struct Outcome
{
    bool pass = true;
    std::string detail;
    std::vector<std::string> failures;

    void fail(std::string why)
    {
        pass = false;
        if (failures.size() < 5)
            failures.push_back(std::move(why));
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<std::optional<double>> random_features(std::mt19937_64& rng, std::size_t dim, double missing)
{
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    std::bernoulli_distribution drop(missing);
    std::vector<std::optional<double>> out(dim);
    for (auto& x: out)
        if (!drop(rng))
            x = val(rng);
    return out;
}

Outcome similarity_math()
{
    Outcome o;
    auto const t0 = Clock::now();
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<std::size_t> dim_dist(1, 40);
    std::uniform_real_distribution<double> log_scale(-3.0, 3.0);
    std::size_t pairs = 0;
    std::size_t incomparable = 0;
    while (pairs < 10000)
    {
        auto const dim = dim_dist(rng);
        auto fu = random_features(rng, dim, 0.2);
        auto fv = random_features(rng, dim, 0.2);
        auto const u = langsim::TypologicalVector::from_values("u", fu);
        auto const v = langsim::TypologicalVector::from_values("v", fv);
        auto const expected = oracle::cosine_distance(fu, fv);
        if (!expected)
        {
            ++incomparable;
            try
            {
                (void)langsim::cosine_distance(u, v);
                o.fail("incomparable pair did not throw");
            }
            catch (const InputError&)
            {
            }
            continue;
        }
        ++pairs;
        auto const duv = langsim::cosine_distance(u, v);
        auto const dvu = langsim::cosine_distance(v, u);
        if (std::fabs(duv - dvu) > 1e-9)
            o.fail(fmt::format("asymmetric: {} vs {}", duv, dvu));
        if (!(duv >= 0.0 && duv <= 2.0))
            o.fail(fmt::format("out of range: {}", duv));
        if (std::fabs(duv - *expected) > 1e-9)
            o.fail(fmt::format("oracle mismatch: {} vs {}", duv, *expected));
        double const c = std::pow(10.0, log_scale(rng));
        auto fs_ = fu;
        for (auto& x: fs_)
            if (x)
                *x *= c;
        auto const scaled = langsim::TypologicalVector::from_values("u", fs_);
        auto const dsv = langsim::cosine_distance(scaled, v);
        if (std::fabs(dsv - duv) > 1e-9)
            o.fail(fmt::format("scale {} changed distance {} -> {}", c, duv, dsv));
    }

    std::uniform_int_distribution<std::size_t> n_dist(2, 25);
    std::uniform_real_distribution<double> pct_dist(0.0, 100.0);
    std::size_t multisets = 0;
    while (multisets < 100)
    {
        auto const n = n_dist(rng);
        auto const dim = dim_dist(rng);
        std::vector<langsim::TypologicalVector> vectors;
        std::vector<std::vector<std::optional<double>>> raw;
        for (std::size_t i = 0; i < n; ++i)
        {
            raw.push_back(random_features(rng, dim, 0.1));
            vectors.push_back(langsim::TypologicalVector::from_values(fmt::format("l{}", i), raw.back()));
        }
        std::vector<double> distances;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (oracle::cosine_distance(raw[i], raw[j]))
                    distances.push_back(langsim::cosine_distance(vectors[i], vectors[j]));
        if (distances.empty())
            continue;
        ++multisets;
        double const pct = multisets % 4 == 0 ? 10.0 : pct_dist(rng);
        auto const expected = oracle::percentile(distances, pct);
        auto const got = langsim::close_threshold(vectors, pct);
        if (got != expected)
            o.fail(fmt::format("close_threshold {} != oracle {} (n={}, p={})", got, expected, n, pct));
        auto shuffled = distances;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        if (langsim::percentile(shuffled, pct) != expected)
            o.fail("percentile depends on input order");
    }
    auto const secs = seconds_since(t0);
    if (secs >= 10.0)
        o.fail(fmt::format("took {:.2f}s", secs));
    o.detail = fmt::format("{} pairs ({} incomparable rejected), {} multisets, {:.2f}s", pairs, incomparable, multisets,
                           secs);
    return o;
}

Outcome normalization()
{
    Outcome o;
    auto const& reg = metrics::MetricRegistry::builtin();
    auto expect = [&](double got, double want, const std::string& what) {
        if (got != want)
            o.fail(fmt::format("{} -> {} (want {})", what, got, want));
    };
    expect(reg.normalize("pass@1", "0.85", Task::CodeGeneration), 85.0, "pass@1 0.85");
    expect(reg.normalize("accuracy", "61.25%", Task::MathematicalReasoning), 61.25, "accuracy 61.25%");
    expect(reg.normalize("accuracy", "85.5", Task::MathematicalReasoning), 85.5, "accuracy 85.5");
    expect(metrics::normalize("0.85"), 85.0, "0.85");
    expect(metrics::normalize("61.25%"), 61.25, "61.25%");
    expect(metrics::normalize("85.5"), 85.5, "85.5");

    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> frac(0.0, 1.0);
    std::uniform_real_distribution<double> pct(0.0, 100.0);
    std::uniform_int_distribution<int> form(0, 3);
    for (int i = 0; i < 1000; ++i)
    {
        std::string raw;
        switch (form(rng))
        {
        case 0: raw = text::format_number(frac(rng)); break;
        case 1: raw = text::format_number(pct(rng)); break;
        case 2: raw = text::format_number(pct(rng)) + "%"; break;
        default: raw = fmt::format("{:.2f}", pct(rng)); break;
        }
        auto const once = metrics::normalize(raw);
        auto const oracle_value = oracle::normalize_text(raw);
        if (std::fabs(once - oracle_value) > 1e-9 * std::max(1.0, oracle_value))
            o.fail(fmt::format("'{}' -> {} (oracle {})", raw, once, oracle_value));
        auto const rendered = metrics::render_normalized(once);
        auto const twice = metrics::normalize(rendered);
        if (twice != once)
            o.fail(fmt::format("not idempotent: '{}' -> {} -> '{}' -> {}", raw, once, rendered, twice));
        auto const via_registry = reg.normalize("accuracy", rendered, Task::ClassificationNli);
        if (via_registry != once)
            o.fail(fmt::format("registry not idempotent for '{}'", rendered));
    }
    o.detail = "3 reference values exact; 1000 random values idempotent";
    return o;
}

Outcome scenario_engine()
{
    Outcome o;
    auto const dir = testsupport::source_dir() / "tests" / "fixtures" / "scenario";
    auto const manifest = corpus::CorpusManifest::load((dir / "manifest.json").string());
    auto const corpus = std::make_shared<const corpus::EvidenceCorpus>(corpus::EvidenceCorpus::reduce(
        corpus::load_mappings(manifest, {}), manifest.removed_papers, {}, manifest.paper_order));
    corpus::CorpusView reduced(corpus, corpus::ViewRole::ReducedOnly);
    auto const typology = langsim::TypologyTable::load((dir / "typology.json").string());
    auto const split = langsim::SimilaritySplit::build(typology);
    std::size_t matched = 0;
    std::size_t labels = 0;
    for (auto const& row: text::read_json_file((dir / "labels.json").string()))
    {
        ++labels;
        scenario::TmlQuery q;
        q.task = Task::CodeGeneration;
        q.language = row["language"].get<std::string>();
        q.model_family = row["family"].get<std::string>();
        auto const want = scenario::scenario_from_string(row["scenario"].get<std::string>());
        try
        {
            auto const got = scenario::classify_query(q, reduced, split);
            if (got == want)
                ++matched;
            else
                o.fail(fmt::format("{}/{}: {} (want {})", *q.language, *q.model_family, scenario::to_string(got),
                                   scenario::to_string(want)));
        }
        catch (const Error& e)
        {
            o.fail(fmt::format("{}/{}: {}", *q.language, *q.model_family, e.what()));
        }
    }
    if (labels != 25)
        o.fail(fmt::format("expected 25 labels, found {}", labels));

    auto const ws = testsupport::fixture_workspace();
    auto const in = ws->generator_inputs();
    std::size_t generated = 0;
    std::size_t closed = 0;
    for (auto task: all_tasks)
        for (auto s: scenario::all_scenarios)
        {
            auto const block = scenario::build_blocks({task, s, 10, 10, 7}, in);
            for (auto const& q: block.questions)
            {
                ++generated;
                auto const got = scenario::classify(task, q.target_language, q.target_family, ws->reduced(), ws->split());
                if (got == s && q.scenario == s)
                    ++closed;
                else
                    o.fail(fmt::format("{} re-classifies to {}", q.id, scenario::to_string(got)));
            }
        }
    if (generated < 500)
        o.fail(fmt::format("only {} questions generated", generated));
    o.detail = fmt::format("{}/{} labels matched; {}/{} generated questions closed", matched, labels, closed, generated);
    return o;
}

Outcome corpus_guard()
{
    Outcome o;
    std::mt19937_64 rng(404);
    std::size_t lookups = 0;
    std::size_t returned = 0;
    for (int trial = 0; trial < 1000; ++trial)
    {
        std::uniform_int_distribution<int> n_lang(1, 8), n_fam(1, 5), n_paper(1, 6), n_rec(1, 3);
        int const langs = n_lang(rng), fams = n_fam(rng), papers = n_paper(rng);
        std::bernoulli_distribution present(0.6);
        std::uniform_int_distribution<int> pick_paper(0, papers - 1);
        std::uniform_real_distribution<double> value(0.0, 100.0);
        corpus::TaskMappings mappings;
        std::set<std::string> used;
        for (auto task: {Task::QaVqa, Task::MachineTranslation})
        {
            corpus::ModelFamilyMapping m {.task = task, .entries = {}};
            for (int l = 0; l < langs; ++l)
                for (int f = 0; f < fams; ++f)
                {
                    if (!present(rng))
                        continue;
                    auto& recs = m.entries[fmt::format("l{}", l)][fmt::format("F{}", f)];
                    for (int r = n_rec(rng); r > 0; --r)
                    {
                        auto const paper = fmt::format("p{}", pick_paper(rng));
                        used.insert(paper);
                        recs.push_back({"accuracy", value(rng), paper});
                    }
                }
            mappings.emplace(task, std::move(m));
        }
        std::set<std::string> removed;
        std::bernoulli_distribution drop(0.4);
        for (auto const& p: used)
            if (drop(rng))
                removed.insert(p);
        auto const ec = std::make_shared<const corpus::EvidenceCorpus>(
            corpus::EvidenceCorpus::reduce(mappings, removed, {}, {}));
        corpus::CorpusView reduced(ec, corpus::ViewRole::ReducedOnly);
        corpus::CorpusView combined(ec, corpus::ViewRole::Combined);
        for (auto task: {Task::QaVqa, Task::MachineTranslation, Task::CodeGeneration})
            for (int l = 0; l <= langs; ++l)
                for (int f = 0; f <= fams; ++f)
                {
                    auto const lang = fmt::format("L{}", l); // case differs from the keys on purpose
                    auto const fam = fmt::format("f{}", f);
                    ++lookups;
                    auto const r = reduced.lookup(task, lang, fam);
                    auto const c = combined.lookup(task, lang, fam);
                    returned += r.size();
                    for (auto const& rec: r)
                    {
                        if (removed.contains(rec.paper_id))
                            o.fail(fmt::format("trial {}: removed paper {} leaked", trial, rec.paper_id));
                        if (std::find(c.begin(), c.end(), rec) == c.end())
                            o.fail(fmt::format("trial {}: reduced record missing from combined", trial));
                    }
                    std::size_t surviving = 0;
                    for (auto const& rec: c)
                        surviving += removed.contains(rec.paper_id) ? 0 : 1;
                    if (surviving != r.size())
                        o.fail(fmt::format("trial {}: {} surviving records, reduced view has {}", trial, surviving,
                                           r.size()));
                }
    }
    o.detail = fmt::format("1000 trials, {} lookups, {} reduced records checked", lookups, returned);
    return o;
}

Outcome retrieval()
{
    Outcome o;
    std::mt19937_64 rng(505);
    std::size_t nonempty = 0;
    for (int trial = 0; trial < 1000; ++trial)
    {
        std::uniform_int_distribution<std::size_t> dim_dist(2, 12), n_dist(0, 30), k_dist(0, 5);
        std::uniform_real_distribution<double> val(-1.0, 1.0), noise(-0.05, 0.05), thr(-0.2, 1.0);
        auto const dim = dim_dist(rng);
        auto const n = n_dist(rng);
        std::vector<double> query(dim);
        for (auto& x: query)
            x = val(rng);
        kb::VectorStore store(dim);
        std::vector<oracle::Doc> docs;
        for (std::size_t i = 0; i < n; ++i)
        {
            std::vector<double> e(dim);
            int const kind = static_cast<int>(i % 4);
            for (std::size_t j = 0; j < dim; ++j)
            {
                if (kind == 0)
                    e[j] = query[j] + noise(rng); // near the query
                else if (kind == 1 && !docs.empty())
                    e[j] = docs.front().embedding[j] * 2.0; // exact tie with the first doc
                else
                    e[j] = val(rng);
            }
            auto const id = fmt::format("d{:02}", (i * 7) % 31);
            if (std::any_of(docs.begin(), docs.end(), [&](auto const& d) { return d.id == id; }))
                continue;
            docs.push_back({id, e});
            store.add({id, "text " + id, e, {"p", id}, ""});
        }
        double const threshold = trial % 5 == 0 ? kb::default_threshold : thr(rng);
        auto const k = trial % 5 == 1 ? kb::default_top_k : k_dist(rng);
        auto const got = kb::retrieve(query, store, threshold, k);
        auto const want = oracle::retrieve(query, docs, threshold, k);
        nonempty += got.empty() ? 0 : 1;
        if (got.size() != want.size())
        {
            o.fail(fmt::format("trial {}: {} results, oracle {}", trial, got.size(), want.size()));
            continue;
        }
        for (std::size_t i = 0; i < got.size(); ++i)
            if (got[i].document.doc_id != want[i].first || std::fabs(got[i].similarity - want[i].second) > 1e-12)
                o.fail(fmt::format("trial {}: rank {} is {} ({}), oracle {} ({})", trial, i, got[i].document.doc_id,
                                   got[i].similarity, want[i].first, want[i].second));

        auto const wide = kb::retrieve(query, store, threshold, 100);
        auto const stricter = kb::retrieve(query, store, std::min(1.0, threshold + 0.1), 100);
        std::set<std::string> wide_ids;
        for (auto const& r: wide)
            wide_ids.insert(r.document.doc_id);
        for (auto const& r: stricter)
            if (!wide_ids.contains(r.document.doc_id))
                o.fail(fmt::format("trial {}: raising the threshold added {}", trial, r.document.doc_id));
        for (std::size_t kk = 0; kk < 5; ++kk)
        {
            auto const a = kb::retrieve(query, store, threshold, kk);
            auto const b = kb::retrieve(query, store, threshold, kk + 1);
            if (a.size() > b.size() || !std::equal(a.begin(), a.end(), b.begin()))
                o.fail(fmt::format("trial {}: k={} is not a prefix of k={}", trial, kk, kk + 1));
        }
    }
    o.detail = fmt::format("1000 random stores ({} with hits) agree with the full scan", nonempty);
    return o;
}

struct RunCheck
{
    std::vector<std::string> violations;
};

/// Independent replay of an event log against the lifecycle and budget rules.
RunCheck check_log(const std::vector<orch::Event>& log, const orch::Budgets& budgets)
{
    RunCheck out;
    std::map<std::string, std::string> state;
    std::map<std::string, int> node_turn;
    std::map<int, std::size_t> roots, nodes, rounds;
    int turn = 0;
    std::uint64_t expect_seq = 1;
    for (auto const& e: log)
    {
        if (e.seq != expect_seq++)
            out.violations.push_back(fmt::format("seq {} out of order", e.seq));
        if (e.type == orch::ev::turn_started)
            turn = e.data["turn"].get<int>();
        else if (e.type == orch::ev::thought_created)
        {
            auto const id = e.data["node_id"].get<std::string>();
            if (state.contains(id))
                out.violations.push_back("duplicate node " + id);
            state[id] = "active";
            node_turn[id] = turn;
            ++nodes[turn];
            if (e.data["parent"].is_null())
                ++roots[turn];
        }
        else if (e.type == orch::ev::state_changed)
        {
            auto const id = e.data["node_id"].get<std::string>();
            auto const from = e.data["from"].get<std::string>();
            auto const to = e.data["to"].get<std::string>();
            if (!state.contains(id))
                out.violations.push_back("transition of unknown node " + id);
            else if (state[id] != from)
                out.violations.push_back(fmt::format("{} recorded from {} but was {}", id, from, state[id]));
            if (from != "active" || (to != "completed" && to != "discarded"))
                out.violations.push_back(fmt::format("forbidden transition {} -> {} on {}", from, to, id));
            state[id] = to;
        }
        else if (e.type == orch::ev::round_started)
            ++rounds[turn];
        else if (e.type == orch::ev::aggregated)
        {
            for (auto const& [id, s]: state)
                if (s == "active")
                    out.violations.push_back(fmt::format("aggregated with {} active", id));
        }
    }
    for (auto const& [t, n]: roots)
        if (n > budgets.max_thoughts)
            out.violations.push_back(fmt::format("turn {}: {} initial thoughts", t, n));
    for (auto const& [t, n]: nodes)
        if (n > budgets.max_nodes)
            out.violations.push_back(fmt::format("turn {}: {} nodes", t, n));
    for (auto const& [t, n]: rounds)
        if (n > budgets.max_rounds)
            out.violations.push_back(fmt::format("turn {}: {} rounds", t, n));
    return out;
}

std::string run_chaos(ws::Workspace& ws,
                      const std::vector<scenario::Question>& pool,
                      std::uint64_t seed,
                      orch::Budgets& budgets_out,
                      std::vector<orch::Event>& events_out)
{
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> b5(1, 5), b12(2, 12), b4(1, 4), r3(0, 2), p4(1, 4);
    orch::Budgets budgets;
    budgets.max_thoughts = b5(rng);
    budgets.max_nodes = std::max(budgets.max_thoughts, b12(rng));
    budgets.max_rounds = b4(rng);
    budgets.retry = r3(rng);
    budgets.parallelism = p4(rng);
    budgets_out = budgets;
    auto backends = orch::BackendSet::uniform(orch::make_chaos_backend(seed));
    auto tools = ws.tools();
    orch::Orchestrator orchestrator(backends, tools, ws.registry(), {budgets, true});
    orch::Conversation conv;
    orchestrator.start(conv, fmt::format("chaos-{}", seed));
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    auto const& q = pool[pick(rng)];
    orchestrator.run_turn(conv, q.to_query(), q.complete_question);
    if (rng() % 3 == 0)
    {
        auto const& q2 = pool[pick(rng)];
        orchestrator.run_turn(conv, q2.to_query(), "And what about " + q2.complete_question);
    }
    events_out = conv.events();
    std::string bytes;
    for (auto const& e: events_out)
        bytes += text::canonical_dump(e.to_json()) + "\n";
    return bytes;
}

Outcome dag_state_machine()
{
    Outcome o;
    auto ws = testsupport::fixture_workspace();
    std::vector<scenario::Question> pool;
    for (auto task: all_tasks)
        for (auto s: scenario::all_scenarios)
            for (auto& q: scenario::build_blocks({task, s, 2, 2, 11}, ws->generator_inputs()).questions)
                pool.push_back(std::move(q));
    std::size_t runs = 0, events = 0, transitions = 0, discarded = 0;
    for (std::uint64_t seed = 1; seed <= 500; ++seed)
    {
        orch::Budgets budgets;
        std::vector<orch::Event> log;
        std::string first;
        try
        {
            // The KB cache is shared across runs; clearing it keeps every run cold.
            ws->kb_cache().clear();
            first = run_chaos(*ws, pool, seed, budgets, log);
        }
        catch (const std::exception& e)
        {
            o.fail(fmt::format("seed {}: {}", seed, e.what()));
            continue;
        }
        ++runs;
        events += log.size();
        for (auto const& e: log)
            if (e.type == orch::ev::state_changed)
            {
                ++transitions;
                discarded += e.data.at("to").get<std::string>() == "discarded" ? 1 : 0;
            }
        for (auto const& v: check_log(log, budgets).violations)
            o.fail(fmt::format("seed {}: {}", seed, v));
        try
        {
            (void)orch::Dag::replay(log);
        }
        catch (const Error& e)
        {
            o.fail(fmt::format("seed {}: replay rejected the log: {}", seed, e.what()));
        }
        orch::Budgets again_budgets;
        std::vector<orch::Event> again_log;
        ws->kb_cache().clear();
        auto const second = run_chaos(*ws, pool, seed, again_budgets, again_log);
        if (second != first)
            o.fail(fmt::format("seed {}: logs differ between identical runs", seed));
    }
    o.detail = fmt::format("{} randomized runs, {} events, {} transitions ({} discards), logs reproducible", runs,
                           events, transitions, discarded);
    return o;
}

eval::ScoringItem numeric_item(std::string id, double predicted, double truth)
{
    eval::ScoringItem item;
    item.question_id = std::move(id);
    item.prediction.is_answer_present = true;
    item.prediction.metrics.push_back({"accuracy", text::format_number(predicted) + "%", predicted});
    item.truth.ref.task = Task::MathematicalReasoning;
    item.truth.ref.query_type = QueryType::NumericPrediction;
    item.truth.ref.language = "swh";
    item.truth.ref.families = {"GPT-4"};
    item.truth.answer_numeric = metrics::MetricValue {"accuracy", text::format_number(truth), truth};
    item.truth.metric_family = *metrics::MetricRegistry::builtin().family_of(Task::MathematicalReasoning, "accuracy");
    return item;
}

Outcome scoring()
{
    Outcome o;
    auto const& reg = metrics::MetricRegistry::builtin();
    auto const fixture = eval::score_predset({numeric_item("a", 80, 85), numeric_item("b", 60, 55)}, reg);
    if (!fixture.mae || *fixture.mae != 5.0)
        o.fail(fmt::format("MAE fixture gave {}", fixture.mae ? *fixture.mae : -1.0));
    if (fixture.mae && *fixture.mae != oracle::mae({{80, 85}, {60, 55}}))
        o.fail("MAE disagrees with the oracle");

    // Boundaries and a dense sweep of the verdict mapping.
    std::vector<std::pair<double, std::string>> boundaries {
        {4.25, "Accept"},         {4.2499, "Minor revision"}, {3.25, "Minor revision"}, {3.2499, "Major revision"},
        {2.5, "Major revision"},  {2.4999, "Reject"},        {5.0, "Accept"},          {1.0, "Reject"}};
    for (auto const& [avg, want]: boundaries)
        if (eval::to_string(eval::verdict_for(avg)) != want)
            o.fail(fmt::format("verdict({}) = {} (want {})", avg, eval::to_string(eval::verdict_for(avg)), want));
    for (int i = 100; i <= 500; ++i)
    {
        double const avg = i / 100.0;
        if (eval::to_string(eval::verdict_for(avg)) != oracle::verdict(avg))
            o.fail(fmt::format("verdict sweep mismatch at {}", avg));
    }
    auto judge = [](int a, int b, int c, int d) {
        Json doc {{"metrics", Json::array()}, {"overall_recommendation", "Reject"}};
        for (auto [name, s]: {std::pair {"predictive_plausibility", a},
                              {"feature_selection", b},
                              {"coherence", c},
                              {"citation_emphasis", d}})
            doc["metrics"].push_back({{"metric_name", name}, {"score", s}, {"rationale", "r"}});
        return eval::JudgeScores::from_judge_output(doc);
    };
    std::vector<std::tuple<std::array<int, 4>, double, std::string>> judged {
        {{5, 4, 3, 2}, 3.5, "Minor revision"},  {{5, 4, 4, 4}, 4.25, "Accept"},  {{4, 3, 3, 3}, 3.25, "Minor revision"},
        {{3, 3, 2, 2}, 2.5, "Major revision"},  {{3, 2, 2, 2}, 2.25, "Reject"}, {{2, 2, 2, 2}, 2.0, "Reject"}};
    for (auto const& [s, avg, want]: judged)
    {
        auto const j = judge(s[0], s[1], s[2], s[3]);
        if (j.average != avg || eval::to_string(j.verdict) != want)
            o.fail(fmt::format("judge {}/{}/{}/{}: {} {}", s[0], s[1], s[2], s[3], j.average, eval::to_string(j.verdict)));
    }

    // Breakdown consistency on random score sets.
    std::mt19937_64 rng(707);
    for (int trial = 0; trial < 200; ++trial)
    {
        std::uniform_int_distribution<int> n_dist(0, 60), task_dist(0, 5), sc_dist(1, 5), kind(0, 9);
        std::uniform_real_distribution<double> err(0.0, 40.0);
        std::vector<eval::ScoredQuestion> qs;
        double abs_sum = 0;
        std::size_t scored = 0, cmp = 0, correct = 0;
        for (int i = n_dist(rng); i > 0; --i)
        {
            eval::ScoredQuestion q;
            q.question_id = fmt::format("q{}", i);
            q.task = all_tasks[static_cast<std::size_t>(task_dist(rng))];
            q.scenario = static_cast<scenario::Scenario>(sc_dist(rng));
            int const k = kind(rng);
            if (k < 6)
            {
                q.query_type = QueryType::NumericPrediction;
                q.truth_metric = k % 2 ? "accuracy" : "F1";
                if (k < 4)
                {
                    q.answered = q.scored = true;
                    q.abs_error = err(rng);
                    abs_sum += *q.abs_error;
                    ++scored;
                }
            }
            else
            {
                q.query_type = QueryType::ComparativeReasoning;
                q.scored = true;
                q.correct = k >= 8;
                ++cmp;
                correct += k >= 8 ? 1 : 0;
            }
            qs.push_back(q);
        }
        auto const b = eval::breakdown(qs);
        auto check_groups = [&](const std::map<std::string, eval::Cell>& cells, const char* name) {
            double weighted = 0;
            std::size_t n = 0, total = 0, ctotal = 0, ccorrect = 0;
            for (auto const& [k, c]: cells)
            {
                if (c.mae())
                    weighted += *c.mae() * static_cast<double>(c.numeric_scored);
                n += c.numeric_scored;
                total += c.numeric_total;
                ctotal += c.comparative_total;
                ccorrect += c.comparative_correct;
            }
            if (n != scored || ctotal != cmp || ccorrect != correct)
                o.fail(fmt::format("trial {}: {} counts do not add up", trial, name));
            if (total != b.overall.numeric_total)
                o.fail(fmt::format("trial {}: {} numeric totals do not add up", trial, name));
            if (n > 0 && std::fabs(weighted / static_cast<double>(n) - *b.overall.mae()) > 1e-9)
                o.fail(fmt::format("trial {}: overall MAE != weighted {} MAE", trial, name));
        };
        check_groups(b.per_task, "per-task");
        check_groups(b.per_scenario, "per-scenario");
        check_groups(b.per_task_scenario, "per-task-scenario");
        if (scored > 0 && std::fabs(*b.overall.mae() - abs_sum / static_cast<double>(scored)) > 1e-9)
            o.fail(fmt::format("trial {}: overall MAE disagrees with direct mean", trial));
        if (scored == 0 && b.overall.mae())
            o.fail(fmt::format("trial {}: MAE without scored questions", trial));
        if (cmp > 0 && *b.overall.accuracy() != static_cast<double>(correct) / static_cast<double>(cmp))
            o.fail(fmt::format("trial {}: accuracy disagrees", trial));
    }

    // Random MAE sets against the oracle.
    for (int trial = 0; trial < 100; ++trial)
    {
        std::uniform_real_distribution<double> v(0.0, 100.0);
        std::vector<eval::ScoringItem> items;
        std::vector<std::pair<double, double>> pairs;
        for (int i = 0; i < 1 + trial % 17; ++i)
        {
            double const p = std::round(v(rng) * 100) / 100, t = std::round(v(rng) * 100) / 100;
            items.push_back(numeric_item(fmt::format("q{}", i), p, t));
            pairs.emplace_back(p, t);
        }
        auto const s = eval::score_predset(items, reg);
        if (!s.mae || std::fabs(*s.mae - oracle::mae(pairs)) > 1e-9)
            o.fail(fmt::format("trial {}: MAE disagrees with the oracle", trial));
    }
    o.detail = "MAE fixture 5.0; verdict boundaries 4.25/3.25/2.5; 200 random breakdowns consistent";
    return o;
}

std::string read_tree(const fs::path& root)
{
    std::vector<fs::path> files;
    for (auto const& e: fs::recursive_directory_iterator(root))
        if (e.is_regular_file())
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string out;
    for (auto const& f: files)
        out += fs::relative(f, root).string() + "\n" + text::read_file(f.string()) + "\n";
    return out;
}

Outcome end_to_end()
{
    Outcome o;
#ifdef TMLPRED_CLI
    auto const t0 = Clock::now();
    auto const base = testsupport::scratch_dir("acceptance-e2e");
    std::string const config = (testsupport::fixture_dir() / "config.json").string();
    std::vector<std::string> trees;
    std::size_t questions = 0;
    for (auto const* name: {"a", "b"})
    {
        auto const out = base / name;
        auto const log = base / (std::string(name) + ".log");
        auto run = [&](const std::string& args) {
            auto const cmd = fmt::format("\"{}\" --config \"{}\" --output \"{}\" {} >> \"{}\" 2>&1", TMLPRED_CLI,
                                         config, out.string(), args, log.string());
            int const rc = std::system(cmd.c_str());
            if (rc != 0)
                o.fail(fmt::format("'{}' exited with {}; see {}", args, rc, log.string()));
            return rc == 0;
        };
        if (!run("build-benchmark --numeric 5 --comparative 5") ||
            !run(fmt::format("run --questions \"{}\" --run-id e2e", (out / "benchmark").string())) ||
            !run("evaluate --run-id e2e --judge --diagnostics"))
            break;
        trees.push_back(read_tree(out));
        questions = text::read_jsonl_file((out / "runs" / "e2e" / "results.jsonl").string()).size();
    }
    auto const secs = seconds_since(t0);
    if (trees.size() == 2 && trees[0] != trees[1])
        o.fail("the two runs produced different bytes");
    if (questions == 0)
        o.fail("no questions were run");
    if (secs / 2 >= 60.0)
        o.fail(fmt::format("one pass took {:.1f}s", secs / 2));
    o.detail = fmt::format("{} questions per pass, {:.2f}s per pass, outputs byte-identical", questions, secs / 2);
#else
    o.fail("built without the command line tool");
#endif
    return o;
}

} // namespace

int main()
{
    struct Criterion
    {
        const char* name;
        std::function<Outcome()> run;
    };
    std::vector<Criterion> criteria {
        {"similarity-math", similarity_math}, {"normalization", normalization},
        {"scenario-engine", scenario_engine}, {"corpus-guard", corpus_guard},
        {"retrieval", retrieval},             {"dag-state-machine", dag_state_machine},
        {"scoring", scoring},                 {"end-to-end", end_to_end},
    };
    int failed = 0;
    for (auto const& c: criteria)
    {
        Outcome o;
        auto const t0 = Clock::now();
        try
        {
            o = c.run();
        }
        catch (const std::exception& e)
        {
            o.fail(fmt::format("unexpected exception: {}", e.what()));
        }
        std::cout << fmt::format("{} {}: {} [{:.2f}s]\n", o.pass ? "PASS" : "FAIL", c.name, o.detail,
                                 seconds_since(t0));
        for (auto const& f: o.failures)
            std::cout << "    " << f << "\n";
        failed += o.pass ? 0 : 1;
    }
    std::cout.flush();
    return failed == 0 ? 0 : 1;
}
