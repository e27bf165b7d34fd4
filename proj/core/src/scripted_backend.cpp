// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/error.hpp>
#include <tmlpred/metrics.hpp>
#include <tmlpred/scripted_backend.hpp>
#include <tmlpred/tools.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>

namespace tmlpred::orch
{

ScriptedBackend::ScriptedBackend(Handler handler, std::uint64_t seed, std::string label):
    handler_(std::move(handler)), seed_(seed), label_(std::move(label))
{
    if (!handler_)
        throw InputError("scripted backend needs a handler");
}

std::string ScriptedBackend::send(const BackendRequest& request) const
{
    return handler_(request, seed_);
}

Json ScriptedBackend::capabilities() const
{
    return {{"type", label_}, {"seed", seed_}, {"deterministic", true}};
}

std::uint64_t request_seed(const BackendRequest& request, std::uint64_t seed)
{
    auto h = text::fnv1a(to_string(request.role), text::fnv1a(std::to_string(seed)));
    h = text::fnv1a(text::canonical_dump(request.context), h);
    return text::fnv1a(request.message, h);
}

std::mt19937_64 request_rng(const BackendRequest& request, std::uint64_t seed)
{
    return std::mt19937_64(request_seed(request, seed));
}

namespace
{

std::string str(const Json& j, const char* key)
{
    if (!j.is_object())
        return {};
    auto it = j.find(key);
    return it != j.end() && it->is_string() ? it->get<std::string>() : std::string {};
}

double round2(double v)
{
    return std::round(v * 100.0) / 100.0;
}

std::string fixed2(double v)
{
    return fmt::format("{:.2f}", v);
}

const std::set<std::string>& stop_words()
{
    static const std::set<std::string> words {"about", "after", "their", "there", "these", "which", "while",
                                              "where", "other", "using", "with", "from", "that", "this",
                                              "into", "over", "results", "result", "model", "models", "the",
                                              "and", "for", "are", "its", "per", "on", "of", "to", "in"};
    return words;
}

std::set<std::string> content_words(std::string_view s, std::size_t min_len)
{
    std::set<std::string> out;
    for (auto& t: text::tokenize(s))
        if (t.size() >= min_len && !stop_words().contains(t))
            out.insert(std::move(t));
    return out;
}

bool overlaps(const std::set<std::string>& a, const std::set<std::string>& b)
{
    return std::any_of(a.begin(), a.end(), [&](auto const& w) { return b.contains(w); });
}

struct QueryInfo
{
    std::string task;
    std::string task_name;
    std::string language;
    std::string language_name;
    std::string family;
    bool comparative = false;
    std::vector<std::string> candidates;
};

QueryInfo query_info(const Json& ctx)
{
    auto const& q = ctx.value("query", Json::object());
    QueryInfo info;
    info.task = str(q, "task");
    info.task_name = str(q, "task_name");
    info.language = str(q, "language");
    info.language_name = str(q, "language_name");
    if (info.language_name.empty())
        info.language_name = info.language;
    info.family = str(q, "model_family");
    info.comparative = str(q, "query_type") == "comparative";
    if (q.contains("candidates") && q["candidates"].is_array())
        for (auto const& c: q["candidates"])
            if (c.is_string())
                info.candidates.push_back(c.get<std::string>());
    return info;
}

Json thought(std::string name, std::string hypothesis, std::string method)
{
    return {{"name", std::move(name)}, {"hypothesis", std::move(hypothesis)}, {"method", std::move(method)}};
}

Json reply_thought_creator(const BackendRequest& req)
{
    auto const q = query_info(req.context);
    auto const& L = q.language_name;
    auto const& F = q.family;
    auto const& T = q.task_name;
    bool const guided = !req.context.value("guidance", Json::array()).empty();
    Json thoughts = Json::array();
    if (q.comparative)
    {
        thoughts.push_back(thought("direct-comparison",
                                   fmt::format("Reported {} results on {} rank the candidate model families.", T, L),
                                   fmt::format("Search the restricted corpus for {} results on {} and compare "
                                               "candidates on a shared metric family.",
                                               T, L)));
        thoughts.push_back(thought(
            "transfer-comparison",
            fmt::format("Candidate families' results on languages typologically close to {} predict their ranking.", L),
            fmt::format("Retrieve each candidate family's results on other languages and compare "
                        "distance-weighted means using typological distance{}.",
                        guided ? " as the expert guidance suggests" : "")));
    }
    else
    {
        if (!F.empty() && !L.empty())
            thoughts.push_back(thought(
                "direct-evidence", fmt::format("Reported {} results on {} indicate its {} performance.", F, L, T),
                fmt::format("Search the restricted corpus for {} results on {} and take a weighted mean of "
                            "matching records.",
                            F, L)));
        if (!F.empty())
            thoughts.push_back(thought(
                "cross-lingual-transfer",
                fmt::format("{} performance on languages typologically close to {} transfers to it.", F,
                            L.empty() ? "the target" : L),
                fmt::format("Retrieve {} results on other languages and fit a distance-weighted regression over "
                            "typological features{}.",
                            F, guided ? " following the expert guidance" : "")));
        if (!L.empty())
            thoughts.push_back(thought(
                "language-difficulty",
                fmt::format("Other model families' results on {} calibrate the expected {} level.", L, T),
                fmt::format("Retrieve all {} results on {} and estimate a language difficulty offset with ridge "
                            "regression.",
                            T, L)));
    }
    auto const max = req.context.value("max_thoughts", std::size_t {5});
    while (thoughts.size() > max)
        thoughts.erase(thoughts.size() - 1);
    return {{"thoughts", std::move(thoughts)}};
}

Json search_request_for(const QueryInfo& q, const std::string& node_name)
{
    Json r {{"task", q.task}, {"language", nullptr}, {"family", nullptr}, {"candidates", Json::array()}};
    if (!q.language.empty())
        r["language"] = q.language;
    if (q.comparative)
        r["candidates"] = q.candidates;
    else if (!q.family.empty() && node_name != "language-difficulty")
        r["family"] = q.family;
    std::vector<std::string> words;
    for (auto const* w: {&q.family, &q.task_name, &q.language_name})
        if (!w->empty() && !(q.comparative && w == &q.family))
            words.push_back(*w);
    if (node_name == "language-difficulty")
        words.erase(words.begin(), words.begin() + (q.family.empty() ? 0 : 1));
    words.emplace_back("results");
    r["text"] = text::join(words, " ");
    return r;
}

Json reply_planner(const BackendRequest& req)
{
    auto const q = query_info(req.context);
    auto const& node = req.context.value("node", Json::object());
    auto const name = str(node, "name");
    bool has_sources = false;
    for (auto const& k: req.context.value("evidence_kinds", Json::array()))
        has_sources = has_sources || (k.is_string() && k.get<std::string>() != "artifact");
    Json steps = Json::array();
    if (!has_sources)
    {
        if (!q.language_name.empty())
            steps.push_back({{"tool", "kb"}, {"query", fmt::format("{} {}", q.task_name, q.language_name)}});
        steps.push_back({{"tool", "search"}, {"request", search_request_for(q, name)}});
    }
    steps.push_back({{"tool", "coder"}});
    return {{"steps", std::move(steps)}};
}

struct Obs
{
    std::string language;
    std::string family;
    std::string metric;
    std::string metric_family;
    double value = 0.0;
    std::size_t rank = 0;
    double distance = 1.0;
};

std::vector<Obs> observations(const Json& evidence, const std::string& query_language)
{
    std::vector<Obs> out;
    for (auto const& e: evidence)
    {
        if (e.value("flagged", false))
            continue;
        auto const& c = e.value("content", Json::object());
        if (!c.is_object() || !c.contains("normalized") || !c["normalized"].is_number())
            continue;
        Obs o;
        o.language = str(c, "language");
        o.family = str(c, "family");
        o.metric = str(c, "metric");
        o.metric_family = str(c, "metric_family");
        o.value = c["normalized"].get<double>();
        o.rank = c.value("family_rank", std::size_t {0});
        if (text::iequals(o.language, query_language))
            o.distance = 0.0;
        else if (c.contains("distance") && c["distance"].is_number())
            o.distance = c["distance"].get<double>();
        out.push_back(std::move(o));
    }
    return out;
}

double weight(const Obs& o)
{
    return 1.0 / (0.05 + o.distance);
}

Json numeric_estimate(std::vector<Obs> obs)
{
    auto const best = std::min_element(obs.begin(), obs.end(), [](auto const& a, auto const& b) { return a.rank < b.rank; })->rank;
    std::erase_if(obs, [&](auto const& o) { return o.rank != best; });
    double sw = 0.0, swv = 0.0;
    std::map<std::string, std::size_t, FoldLess> metric_counts;
    for (auto const& o: obs)
    {
        sw += weight(o);
        swv += weight(o) * o.value;
        ++metric_counts[o.metric];
    }
    auto metric = std::max_element(metric_counts.begin(), metric_counts.end(),
                                   [](auto const& a, auto const& b) { return a.second < b.second; })
                      ->first;
    return {{"metric", metric},
            {"value", round2(swv / sw)},
            {"family_rank", best},
            {"metric_family", obs.front().metric_family},
            {"n", obs.size()}};
}

Json comparative_estimate(const std::vector<Obs>& obs, const std::vector<std::string>& candidates)
{
    std::set<std::string, FoldLess> cands(candidates.begin(), candidates.end());
    if (cands.empty())
        for (auto const& o: obs)
            cands.insert(o.family);
    std::map<std::size_t, std::set<std::string, FoldLess>> coverage;
    for (auto const& o: obs)
        if (cands.contains(o.family))
            coverage[o.rank].insert(o.family);
    if (coverage.empty())
        return nullptr;
    std::size_t rank = coverage.begin()->first;
    std::size_t covered = 0;
    for (auto const& [r, fams]: coverage)
        if (fams.size() > covered)
        {
            rank = r;
            covered = fams.size();
        }
    std::map<std::string, std::pair<double, double>, FoldLess> acc;
    std::string metric_family;
    for (auto const& o: obs)
        if (o.rank == rank && cands.contains(o.family))
        {
            acc[o.family].first += weight(o) * o.value;
            acc[o.family].second += weight(o);
            metric_family = o.metric_family;
        }
    Json scores = Json::object();
    std::string best;
    double best_score = -1.0;
    for (auto const& [fam, sums]: acc)
    {
        auto const s = round2(sums.first / sums.second);
        scores[fam] = s;
        if (s > best_score)
        {
            best = fam;
            best_score = s;
        }
    }
    return {{"label", best}, {"scores", std::move(scores)}, {"family_rank", rank}, {"metric_family", metric_family}};
}

Json reply_coder(const BackendRequest& req)
{
    auto const q = query_info(req.context);
    auto const name = str(req.context.value("node", Json::object()), "name");
    auto all = observations(req.context.value("evidence", Json::array()), q.language);

    auto pick = [&](auto pred) {
        std::vector<Obs> out;
        std::copy_if(all.begin(), all.end(), std::back_inserter(out), pred);
        return out;
    };
    auto same_lang = [&](const Obs& o) { return text::iequals(o.language, q.language); };
    auto same_fam = [&](const Obs& o) { return text::iequals(o.family, q.family); };

    std::string algorithm = "Weighted Mean";
    Json features = Json::array({"reported scores"});
    std::string level = "basic";
    std::vector<Obs> chosen;
    if (q.comparative)
    {
        algorithm = "Weighted Mean Ranking";
        if (name == "direct-comparison")
            chosen = pick(same_lang);
        else
        {
            algorithm = "Distance-Weighted Ranking";
            features.push_back("typological distance");
            level = "moderate";
        }
    }
    else if (name == "direct-evidence")
        chosen = pick([&](const Obs& o) { return same_lang(o) && same_fam(o); });
    else if (name == "cross-lingual-transfer")
    {
        algorithm = "Distance-Weighted Regression";
        features.push_back("typological distance");
        level = "moderate";
        chosen = pick(same_fam);
    }
    else if (name == "language-difficulty")
    {
        algorithm = "Ridge Regression";
        features.push_back("language difficulty offset");
        chosen = pick(same_lang);
    }
    if (chosen.empty() && !q.comparative && !q.family.empty())
        chosen = pick(same_fam);
    if (chosen.empty())
        chosen = all;

    Json prediction = nullptr;
    if (!chosen.empty())
        prediction = q.comparative ? comparative_estimate(chosen, q.candidates) : numeric_estimate(chosen);
    if (prediction.is_null())
    {
        algorithm = "none";
        features = Json::array();
        level = "none";
    }
    auto code = fmt::format("# {}\nimport pandas as pd\nrows = load_evidence()\n"
                            "w = 1.0 / (0.05 + rows['distance'])\nestimate = (w * rows['score']).sum() / w.sum()\n",
                            algorithm);
    return {{"algorithm", algorithm},
            {"features_used", std::move(features)},
            {"feature_engineering_level", level},
            {"code", code},
            {"prediction", std::move(prediction)},
            {"n_observations", chosen.size()},
            {"status", "ok"}};
}

Json reply_reporter(const BackendRequest& req)
{
    auto const& node = req.context.value("node", Json::object());
    auto const& artifact = req.context.value("artifact", Json());
    auto const& evidence = req.context.value("evidence", Json::array());
    std::vector<std::string> ids;
    for (auto const& e: evidence)
        if (ids.size() < 5)
            ids.push_back(str(e, "evidence_id"));
    Json finding = artifact.is_object() ? artifact.value("prediction", Json()) : Json();
    std::string estimate = "No quantitative estimate.";
    if (finding.is_object() && finding.contains("value"))
        estimate = fmt::format("Estimate: {} = {}% ({})", str(finding, "metric"), fixed2(finding["value"].get<double>()),
                               str(artifact, "algorithm"));
    else if (finding.is_object() && finding.contains("label"))
        estimate = fmt::format("Estimate: {} leads ({})", str(finding, "label"), str(artifact, "algorithm"));
    auto report = fmt::format("Hypothesis: {}\nMethod: {}\nEvidence: {} item(s) [{}]\n{}", str(node, "hypothesis"),
                              str(node, "method"), evidence.size(), text::join(ids, ", "), estimate);
    if (req.context.value("forced", false))
        report += "\nCompleted under the round budget.";
    return {{"report", report}, {"finding", finding}};
}

Json reply_analyzer(const BackendRequest& req)
{
    auto const q = query_info(req.context);
    auto const& nodes = req.context.value("nodes", Json::array());
    Json discard = Json::array();
    std::set<std::string> seen;
    bool mentions_language = q.language.empty();
    bool has_gap_node = false;
    for (auto const& n: nodes)
    {
        auto const hyp = text::fold(str(n, "hypothesis"));
        if (!seen.insert(hyp).second && str(n, "state") == "active")
            discard.push_back(str(n, "node_id"));
        mentions_language = mentions_language || text::contains_word(hyp, q.language) ||
                            text::contains_word(hyp, q.language_name);
        has_gap_node = has_gap_node || str(n, "name") == "language-gap";
    }
    Json spawn = Json::array();
    if (!mentions_language && !has_gap_node && !nodes.empty())
    {
        auto s = thought("language-gap",
                         fmt::format("Evidence specific to {} is needed to predict {} performance.", q.language_name,
                                     q.task_name),
                         fmt::format("Search the restricted corpus for {} results on {} and take a weighted mean.",
                                     q.task_name, q.language_name));
        s["parent"] = str(nodes.front(), "node_id");
        spawn.push_back(std::move(s));
    }
    return {{"spawn", std::move(spawn)}, {"discard", std::move(discard)}, {"rationale", "duplicate and gap rules"}};
}

Json reply_aggregator(const BackendRequest& req)
{
    auto const q = query_info(req.context);
    auto const& nodes = req.context.value("nodes", Json::array());

    struct Used
    {
        std::string node_id;
        std::string name;
        Json finding;
        std::vector<std::pair<std::string, std::string>> cites;
    };
    std::vector<Used> used;
    for (auto const& n: nodes)
    {
        auto const& f = n.value("finding", Json());
        if (!f.is_object())
            continue;
        if (q.comparative ? !f.contains("label") : !(f.contains("value") && f["value"].is_number()))
            continue;
        Used u {str(n, "node_id"), str(n, "name"), f, {}};
        for (auto const& e: n.value("evidence", Json::array()))
            if (!e.value("flagged", false) && u.cites.size() < 10)
                u.cites.emplace_back(str(e, "evidence_id"), str(e.value("citation", Json::object()), "paper_id"));
        used.push_back(std::move(u));
    }

    Json out {{"prediction", nullptr}, {"answer_label", nullptr}, {"uncertainty", nullptr}, {"citations", Json::array()}};
    if (used.empty())
    {
        out["rationale"] = "No completed investigation produced an estimate.";
        out["report"] = "No answer: the investigations produced no estimate.";
        return out;
    }

    std::string header;
    std::string answer_line;
    std::string rationale;
    std::vector<Used> contributing;
    if (q.comparative)
    {
        std::map<std::string, std::pair<int, double>, FoldLess> votes;
        for (auto const& u: used)
        {
            auto const label = str(u.finding, "label");
            auto& v = votes[label];
            ++v.first;
            auto const& scores = u.finding.value("scores", Json::object());
            if (scores.contains(label) && scores[label].is_number())
                v.second += scores[label].get<double>();
        }
        auto best = votes.begin();
        for (auto it = votes.begin(); it != votes.end(); ++it)
            if (it->second.first > best->second.first ||
                (it->second.first == best->second.first && it->second.second > best->second.second))
                best = it;
        out["answer_label"] = best->first;
        for (auto const& u: used)
            if (text::iequals(str(u.finding, "label"), best->first))
                contributing.push_back(u);
        header = fmt::format("Comparison for {} on {}", q.task_name, q.language_name);
        answer_line = fmt::format("Answer: {}", best->first);
        rationale = fmt::format("{} of {} node(s) rank {} first.", best->second.first, used.size(), best->first);
    }
    else
    {
        auto const best_rank =
            std::min_element(used.begin(), used.end(), [](auto const& a, auto const& b) {
                return a.finding.value("family_rank", 0) < b.finding.value("family_rank", 0);
            })->finding.value("family_rank", 0);
        for (auto const& u: used)
            if (u.finding.value("family_rank", 0) == best_rank)
                contributing.push_back(u);
        double sum = 0.0, lo = 100.0, hi = 0.0;
        for (auto const& u: contributing)
        {
            auto const v = u.finding["value"].get<double>();
            sum += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        auto const mean = round2(sum / static_cast<double>(contributing.size()));
        auto const metric = str(contributing.front().finding, "metric");
        out["prediction"] = {{"metric_name", metric}, {"value", fixed2(mean) + "%"}};
        out["uncertainty"] = Json::array({round2(lo), round2(hi)});
        header = fmt::format("Prediction for {} on {} ({})", q.family.empty() ? "the model" : q.family,
                             q.language_name, q.task_name);
        answer_line = fmt::format("Predicted {}: {}%\nRange: {}% to {}%", metric, fixed2(mean), fixed2(lo), fixed2(hi));
        std::vector<std::string> names;
        for (auto const& u: contributing)
            names.push_back(u.name);
        rationale = fmt::format("Mean of {} node estimate(s) ({}).", contributing.size(), text::join(names, ", "));
    }

    std::vector<std::string> cite_lines;
    for (auto const& u: contributing)
        for (auto const& [id, paper]: u.cites)
        {
            out["citations"].push_back(id);
            cite_lines.push_back(fmt::format("[{}] {}", id, paper));
        }
    out["rationale"] = rationale;
    out["report"] = fmt::format("{}\n{}\nRationale: {}\nCitations: {}", header, answer_line, rationale,
                                cite_lines.empty() ? "none" : text::join(cite_lines, "; "));
    return out;
}

Json reply_extractor(const BackendRequest& req)
{
    auto const report = str(req.context, "agent_report");
    static const std::regex predicted(R"(Predicted ([^:\n]+): ([0-9]+(?:\.[0-9]+)?%?))");
    static const std::regex answer(R"(Answer: ([^\n]+))");
    Json metrics_list = Json::array();
    for (std::sregex_iterator it(report.begin(), report.end(), predicted), end; it != end; ++it)
    {
        auto const value = (*it)[2].str();
        try
        {
            metrics_list.push_back({{"metric_name", text::trim((*it)[1].str())},
                                    {"value", value},
                                    {"value_in_100_range", metrics::normalize(value)}});
        }
        catch (const Error&)
        {
        }
    }
    std::string answer_text;
    std::smatch m;
    if (std::regex_search(report, m, answer))
        answer_text = text::trim(m[1].str());
    bool const present = !metrics_list.empty() || !answer_text.empty();
    return {{"is_answer_present", present},
            {"predicted_metrics_and_values_for_predictive", std::move(metrics_list)},
            {"answer_text_for_qna", answer_text}};
}

std::string verdict_text(double avg)
{
    if (avg >= 4.25)
        return "Accept";
    if (avg >= 3.25)
        return "Minor revision";
    if (avg >= 2.5)
        return "Major revision";
    return "Reject";
}

Json reply_quality_judge(const BackendRequest& req)
{
    auto const report = str(req.context, "report");
    bool const no_answer = report.rfind("No answer", 0) == 0;
    auto metric = [](const char* name, Json score, std::string rationale) {
        return Json {{"metric_name", name}, {"score", std::move(score)}, {"rationale", std::move(rationale)},
                     {"indicators", Json::array()}};
    };
    int plaus = no_answer ? 1 : report.find("Range:") != std::string::npos ? 4 : 3;
    Json feature = nullptr;
    if (!no_answer)
    {
        int f = 2;
        for (auto const* w: {"typological", "distance", "difficulty", "regression"})
            if (text::contains_word(report, w))
                ++f;
        feature = std::min(f, 5);
    }
    int coherence = report.find("Rationale:") != std::string::npos ? 4 : 3;
    std::size_t cites = 0;
    for (auto pos = report.find("[n"); pos != std::string::npos; pos = report.find("[n", pos + 1))
        ++cites;
    int citation = static_cast<int>(std::min<std::size_t>(5, 1 + cites / 2));
    Json metrics_list = Json::array({metric("predictive_plausibility", plaus, "estimate and spread stated"),
                                     metric("feature_selection", feature, no_answer ? "cannot be assessed" : "feature cues"),
                                     metric("coherence", coherence, "structure of the report"),
                                     metric("citation_emphasis", citation, "citation count")});
    double sum = 0.0;
    int n = 0;
    for (auto const& m: metrics_list)
        if (m["score"].is_number())
        {
            sum += m["score"].get<double>();
            ++n;
        }
    double const avg = n ? sum / n : 0.0;
    return {{"metrics", std::move(metrics_list)},
            {"overall_recommendation",
             {{"average_score", round2(avg)}, {"verdict", verdict_text(avg)}, {"top_actionable_improvements", Json::array()}}}};
}

Json reply_faithfulness(const BackendRequest& req)
{
    auto const guidance = content_words(str(req.context, "user_proxy_message"), 5);
    Json evals = Json::array();
    for (auto const& t: req.context.value("thought_paths", Json::array()))
    {
        auto const method = content_words(str(t, "method") + " " + str(t, "hypothesis"), 5);
        bool const ok = guidance.empty() || overlaps(guidance, method);
        evals.push_back({{"thought_name", str(t, "thought_name")},
                         {"is_faithful", ok},
                         {"explanation", ok ? "method shares the guided approach" : "method ignores the guidance"}});
    }
    return {{"evaluations", std::move(evals)}};
}

Json reply_compliance(const BackendRequest& req)
{
    Json evals = Json::array();
    for (auto const& t: req.context.value("thought_paths", Json::array()))
    {
        auto v = capability_check(str(t, "method"));
        evals.push_back({{"thought_name", str(t, "thought_name")}, {"is_compliant", v.empty()}, {"violations", v}});
    }
    return {{"evaluations", std::move(evals)}};
}

Json reply_code_judge(const BackendRequest& req)
{
    auto const& art = req.context.value("artifact", Json::object());
    auto const algorithm = str(art, "algorithm");
    return {{"algorithms_used", algorithm.empty() || algorithm == "none" ? Json::array() : Json::array({algorithm})},
            {"algorithm_appropriateness", "appropriate"},
            {"features_used", art.value("features_used", Json::array())},
            {"feature_engineering_level", art.value("feature_engineering_level", std::string("none"))},
            {"methodology_type", "regression"},
            {"methodology_rigor", "moderate"},
            {"code_quality", "fair"},
            {"task_query_alignment", "well_aligned"},
            {"sophistication_level", "basic"},
            {"overall_assessment", "fair"},
            {"strengths", Json::array()},
            {"weaknesses", Json::array()},
            {"summary", fmt::format("{} over reported scores.", algorithm)}};
}

Json reply_relevance(const BackendRequest& req)
{
    auto const query = str(req.context, "tool_query");
    auto const ctx = content_words(
        str(req.context, "hypothesis") + " " + str(req.context, "method") + " " + str(req.context, "background"), 3);
    bool const relevant = overlaps(content_words(query, 3), ctx);
    return {{"query", query},
            {"thought_name", str(req.context, "thought_name")},
            {"is_relevant", relevant},
            {"reasoning", relevant ? "query targets the hypothesis terms" : "query shares nothing with the hypothesis"}};
}

Json reply_expert(const BackendRequest& req)
{
    Json guidance = Json::array();
    for (auto const& d: req.context.value("documents", Json::array()))
        guidance.push_back(str(d, "text"));
    return {{"guidance", std::move(guidance)}};
}

Json reply_question_generator(const BackendRequest& req)
{
    auto const task = str(req.context, "task_name");
    auto const n = req.context.value("num_questions", std::size_t {5});
    Json questions = Json::array();
    auto const& mappings = req.context.value("mappings", Json::object());
    for (auto it = mappings.begin(); it != mappings.end() && questions.size() < n; ++it)
        for (auto const& model: it.value())
        {
            if (questions.size() >= n)
                break;
            auto const m = model.is_string() ? model.get<std::string>() : model.dump();
            questions.push_back({{"complete_question", fmt::format("What is the performance of {} on {} for {}?", m,
                                                                   task, it.key())},
                                 {"task", task},
                                 {"models", m},
                                 {"languages", it.key()}});
        }
    return {{"questions", std::move(questions)}};
}

} // namespace

std::string heuristic_reply(const BackendRequest& request, std::uint64_t)
{
    switch (request.role)
    {
        case Role::ThoughtCreator: return reply_thought_creator(request).dump();
        case Role::ResearchPlanner: return reply_planner(request).dump();
        case Role::ExpertKnowledge: return reply_expert(request).dump();
        case Role::Coder: return reply_coder(request).dump();
        case Role::Reporter: return reply_reporter(request).dump();
        case Role::ThoughtAnalyzer: return reply_analyzer(request).dump();
        case Role::Aggregator: return reply_aggregator(request).dump();
        case Role::PredictionExtractor: return reply_extractor(request).dump();
        case Role::QualityJudge: return reply_quality_judge(request).dump();
        case Role::FaithfulnessJudge: return reply_faithfulness(request).dump();
        case Role::ComplianceJudge: return reply_compliance(request).dump();
        case Role::CodeJudge: return reply_code_judge(request).dump();
        case Role::RelevanceJudge: return reply_relevance(request).dump();
        case Role::QuestionGenerator: return reply_question_generator(request).dump();
    }
    return "{}";
}

namespace
{

bool chance(std::mt19937_64& rng, double p)
{
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

template <typename T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& items)
{
    return items[std::uniform_int_distribution<std::size_t>(0, items.size() - 1)(rng)];
}

std::vector<std::string> node_ids(const Json& nodes)
{
    std::vector<std::string> ids;
    for (auto const& n: nodes)
        ids.push_back(str(n, "node_id"));
    return ids;
}

} // namespace

std::string chaos_reply(const BackendRequest& request, std::uint64_t seed, const ChaosProfile& profile)
{
    auto rng = request_rng(request, seed);
    if (chance(rng, profile.malformed))
        return "I could not decide on a structured answer.";

    static const std::vector<std::string> hypotheses {
        "Direct results predict performance.", "Close languages transfer.", "Language difficulty dominates.",
        "Model scale matters most.", "Script overlap drives transfer."};
    static const std::vector<std::string> methods {
        "Take a weighted mean of reported scores.", "Fit a ridge regression over typological features.",
        "Compare distance-weighted means.", "Estimate a difficulty offset from corpus results."};
    static const std::vector<std::string> prohibited {
        "Fine-tune the model on new data.", "Create a new dataset for the language.",
        "Download the model weights locally and evaluate.", "Train a new model from scratch.",
        "Query a paid external API for scores."};
    static const std::vector<std::string> metric_names {"BLEU", "chrF++", "accuracy", "pass@1", "F1", "ROUGE-L"};
    static const std::vector<std::string> labels {"GPT-4", "Llama-3", "NLLB", "mT5", "Qwen2"};

    auto random_thought = [&] {
        Json t {{"name", fmt::format("t{}", rng() % 100)},
                {"hypothesis", pick(rng, hypotheses)},
                {"method", chance(rng, profile.prohibited) ? pick(rng, prohibited) : pick(rng, methods)}};
        if (chance(rng, 0.05))
            t.erase("method");
        return t;
    };

    Json reply;
    switch (request.role)
    {
        case Role::ThoughtCreator:
        {
            Json thoughts = Json::array();
            auto const n = rng() % (profile.max_thoughts + 1);
            for (std::size_t i = 0; i < n; ++i)
                thoughts.push_back(random_thought());
            reply = {{"thoughts", std::move(thoughts)}};
            break;
        }
        case Role::ResearchPlanner:
        {
            static const std::vector<std::string> tools {"kb", "search", "coder", "coder", "search", "crawl"};
            if (chance(rng, profile.targeted_plan))
            {
                reply = reply_planner(request);
                break;
            }
            Json steps = Json::array();
            auto const n = rng() % 5;
            for (std::size_t i = 0; i < n; ++i)
            {
                auto const& tool = pick(rng, tools);
                Json step {{"tool", tool}};
                if (tool == "kb")
                    step["query"] = pick(rng, hypotheses);
                if (tool == "search")
                    step["request"] = {{"text", pick(rng, hypotheses)}};
                steps.push_back(std::move(step));
            }
            reply = {{"steps", std::move(steps)}};
            break;
        }
        case Role::Coder:
        {
            bool const ok = !chance(rng, profile.coder_failure);
            Json prediction = chance(rng, 0.5)
                                  ? Json {{"metric", pick(rng, metric_names)},
                                          {"value", round2(std::uniform_real_distribution<double>(0, 100)(rng))},
                                          {"family_rank", rng() % 2}}
                                  : Json {{"label", pick(rng, labels)}, {"scores", Json::object()}, {"family_rank", 0}};
            reply = {{"algorithm", pick(rng, methods)},
                     {"features_used", chance(rng, 0.5) ? Json::array({"typological distance"}) : Json::array()},
                     {"feature_engineering_level", chance(rng, 0.5) ? "basic" : "none"},
                     {"prediction", std::move(prediction)},
                     {"status", ok ? "ok" : "error"}};
            if (!ok)
                reply["error"] = "simulated execution failure";
            break;
        }
        case Role::Reporter:
        {
            auto const& art = request.context.value("artifact", Json());
            reply = {{"report", fmt::format("Report {}", rng() % 1000)},
                     {"finding", art.is_object() ? art.value("prediction", Json()) : Json()}};
            if (chance(rng, 0.1))
                reply.erase("report");
            break;
        }
        case Role::ThoughtAnalyzer:
        {
            auto ids = node_ids(request.context.value("nodes", Json::array()));
            Json discard = Json::array();
            for (auto const& n: request.context.value("nodes", Json::array()))
            {
                bool const active = str(n, "state") == "active";
                if ((active && chance(rng, 0.2)) || (!active && chance(rng, profile.bad_discard)))
                    discard.push_back(str(n, "node_id"));
            }
            if (chance(rng, profile.bad_discard))
                discard.push_back("n999");
            Json spawn = Json::array();
            auto const n = rng() % (profile.max_spawn + 1);
            for (std::size_t i = 0; i < n; ++i)
            {
                auto t = random_thought();
                t["parent"] = ids.empty() || chance(rng, 0.2) ? std::string("n0") : pick(rng, ids);
                spawn.push_back(std::move(t));
            }
            reply = {{"spawn", std::move(spawn)}, {"discard", std::move(discard)}};
            break;
        }
        case Role::Aggregator:
        {
            Json cites = Json::array();
            for (auto const& n: request.context.value("nodes", Json::array()))
                for (auto const& e: n.value("evidence", Json::array()))
                    if (chance(rng, 0.6))
                        cites.push_back(str(e, "evidence_id"));
            if (chance(rng, profile.bogus_citation))
                cites.push_back("n999.e1");
            auto const v = std::uniform_real_distribution<double>(-10, 150)(rng);
            reply = {{"prediction", {{"metric_name", pick(rng, metric_names)}, {"value", fixed2(v)}}},
                     {"answer_label", pick(rng, labels)},
                     {"uncertainty", Json::array({v - 5, v + 5})},
                     {"citations", std::move(cites)},
                     {"rationale", "random aggregate"},
                     {"report", fmt::format("Predicted BLEU: {}", fixed2(v))}};
            break;
        }
        case Role::ExpertKnowledge:
            reply = {{"guidance", Json::array({pick(rng, methods)})}};
            break;
        default:
            return heuristic_reply(request, seed);
    }
    return reply.dump();
}

std::shared_ptr<AgentBackend> make_heuristic_backend(std::uint64_t seed)
{
    return std::make_shared<ScriptedBackend>(heuristic_reply, seed, "scripted");
}

std::shared_ptr<AgentBackend> make_chaos_backend(std::uint64_t seed, ChaosProfile profile)
{
    return std::make_shared<ScriptedBackend>(
        [profile](const BackendRequest& r, std::uint64_t s) { return chaos_reply(r, s, profile); }, seed, "randomized");
}

std::shared_ptr<AgentBackend> make_scripted(Role, const BackendSpec& spec)
{
    if (spec.type == "scripted")
        return make_heuristic_backend(spec.seed);
    if (spec.type == "randomized")
        return make_chaos_backend(spec.seed);
    return nullptr;
}

} // namespace tmlpred::orch
