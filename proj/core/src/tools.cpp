// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/error.hpp>
#include <tmlpred/tools.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <regex>

namespace tmlpred::orch
{

namespace
{

struct Prohibition
{
    std::string label;
    std::regex pattern;
};

const std::vector<Prohibition>& prohibitions()
{
    auto constexpr flags = std::regex::icase | std::regex::ECMAScript;
    static const std::vector<Prohibition> list {
        {"fine-tuning", std::regex(R"(\bfine[- ]?tun)", flags)},
        {"creating new datasets",
         std::regex(R"(\b(creat|build|collect|construct|curat|annotat|compil)\w*\s+(a\s+|an\s+|the\s+)?new\s+(\w+\s+)?(dataset|data\s*set|corpus|corpora|data|benchmark)s?\b)",
                    flags)},
        {"downloading models locally",
         std::regex(R"(\bdownload\w*\s+(the\s+|a\s+|an\s+)?([\w-]+\s+){0,2}(model|weights|checkpoint)s?\b)", flags)},
        {"training from scratch",
         std::regex(R"(\bfrom\s+scratch\b|\b(pre-?)?train\w*\s+(a\s+|an\s+)?new\s+(\w+\s+)?models?\b)", flags)},
        {"accessing external APIs",
         std::regex(R"(\b(external|third[- ]party|paid|proprietary|commercial)\s+(\w+\s+)?apis?\b)", flags)},
    };
    return list;
}

} // namespace

std::vector<std::string> capability_check(std::string_view method)
{
    std::vector<std::string> out;
    std::string const s(method);
    for (auto const& p: prohibitions())
        if (std::regex_search(s, p.pattern))
            out.push_back(p.label);
    return out;
}

Json SearchRequest::to_json() const
{
    Json j {{"text", text}, {"task", std::string(task_id(task))}};
    j["language"] = language ? Json(*language) : Json(nullptr);
    j["family"] = family ? Json(*family) : Json(nullptr);
    j["candidates"] = candidates;
    return j;
}

SearchRequest SearchRequest::from_json(const Json& doc)
{
    SearchRequest r;
    try
    {
        r.text = doc.value("text", std::string {});
        r.task = task_from_string(doc.at("task").get<std::string>());
        if (doc.contains("language") && doc["language"].is_string())
            r.language = doc["language"].get<std::string>();
        if (doc.contains("family") && doc["family"].is_string())
            r.family = doc["family"].get<std::string>();
        r.candidates = doc.value("candidates", std::vector<std::string> {});
    }
    catch (const nlohmann::json::exception& e)
    {
        throw InputError(fmt::format("search request: {}", e.what()));
    }
    return r;
}

CorpusSearchProvider::CorpusSearchProvider(corpus::CorpusView reduced,
                                           const metrics::MetricRegistry& registry,
                                           const langsim::SimilaritySplit* split,
                                           std::size_t max_hits):
    reduced_(std::move(reduced)), registry_(registry), split_(split), max_hits_(max_hits)
{
    if (reduced_.role() != corpus::ViewRole::ReducedOnly)
        throw InputError("the corpus search tool only accepts a ReducedOnly view");
}

std::vector<SearchHit> CorpusSearchProvider::search(const SearchRequest& request) const
{
    auto const* mapping = reduced_.mapping(request.task);
    if (!mapping)
        return {};
    auto const task = request.task;
    std::vector<SearchHit> hits;
    std::set<std::tuple<std::string, std::string>> seen;

    auto emit = [&](const std::string& language, const std::string& family, std::string_view relation) {
        if (!seen.emplace(text::fold(language), text::fold(family)).second)
            return;
        std::optional<double> distance;
        if (request.language && split_)
            distance = split_->distance(language, *request.language);
        for (auto const& rec: reduced_.lookup(task, language, family))
        {
            auto const rank = registry_.family_rank(task, rec.metric_name);
            if (!rank)
                continue;
            double normalized = 0.0;
            try
            {
                normalized = registry_.normalize(rec.metric_name, rec.raw_value, task);
            }
            catch (const InputError&)
            {
                continue;
            }
            SearchHit hit;
            hit.source_id = fmt::format("{}/{}/{}/{}/{}", task_id(task), language, family, rec.metric_name, rec.paper_id);
            hit.title = fmt::format("{} {} on {}", family, rec.metric_name, language);
            hit.snippet = fmt::format("{} reports {} {} = {} for {} ({})", rec.paper_id, family, rec.metric_name,
                                      text::format_number(rec.raw_value), language, task_display_name(task));
            hit.content = {
                {"task", std::string(task_id(task))},
                {"language", language},
                {"family", family},
                {"metric", rec.metric_name},
                {"raw_value", rec.raw_value},
                {"normalized", normalized},
                {"metric_family", *registry_.family_of(task, rec.metric_name)},
                {"family_rank", *rank},
                {"paper_id", rec.paper_id},
                {"relation", std::string(relation)},
                {"distance", distance ? Json(*distance) : Json(nullptr)},
            };
            hit.citation = {rec.paper_id, fmt::format("{}/{}/{}/{}", task_id(task), language, family, rec.metric_name)};
            hits.push_back(std::move(hit));
        }
    };

    std::vector<std::string> families;
    if (request.family)
        families.push_back(*request.family);
    for (auto const& c: request.candidates)
        families.push_back(c);

    if (request.language)
    {
        for (auto const& f: families)
            emit(*request.language, f, "direct");
        if (auto it = mapping->entries.find(*request.language); it != mapping->entries.end())
            for (auto const& [family, _]: it->second)
                emit(*request.language, family, families.empty() ? "direct" : "language_prior");
    }
    for (auto const& f: families)
        for (auto const& lang: reduced_.languages_for_family(task, f))
            emit(lang, f, "family_transfer");

    if (hits.size() > max_hits_)
        hits.resize(max_hits_);
    return hits;
}

FixtureSearchProvider FixtureSearchProvider::from_json(const Json& doc)
{
    FixtureSearchProvider p;
    try
    {
        for (auto const& entry: doc.at("results"))
        {
            Entry e;
            for (auto const& m: entry.at("match"))
                e.match.push_back(text::fold(m.get<std::string>()));
            for (auto const& h: entry.at("hits"))
            {
                SearchHit hit;
                hit.source_id = h.value("url", h.value("source_id", std::string {}));
                hit.title = h.value("title", std::string {});
                hit.snippet = h.value("snippet", std::string {});
                hit.content = h.value("content", Json::object());
                hit.citation = {h.value("paper_id", hit.source_id), h.value("locator", hit.source_id)};
                if (hit.citation.paper_id.empty())
                    throw InputError("search fixture hit without a source");
                e.hits.push_back(std::move(hit));
            }
            p.entries_.push_back(std::move(e));
        }
    }
    catch (const nlohmann::json::exception& ex)
    {
        throw InputError(fmt::format("search fixture: {}", ex.what()));
    }
    return p;
}

FixtureSearchProvider FixtureSearchProvider::load(const std::string& path)
{
    return from_json(text::read_json_file(path));
}

std::vector<SearchHit> FixtureSearchProvider::search(const SearchRequest& request) const
{
    auto const haystack = text::fold(request.text);
    std::vector<SearchHit> out;
    for (auto const& e: entries_)
    {
        bool const all = std::all_of(e.match.begin(), e.match.end(),
                                     [&](auto const& term) { return haystack.find(term) != std::string::npos; });
        if (all)
            out.insert(out.end(), e.hits.begin(), e.hits.end());
    }
    return out;
}

bool is_off_topic(const SearchHit& hit, const SearchRequest& request, const corpus::LanguageTable* names)
{
    auto const body = text::fold(hit.title + " " + hit.snippet + " " + hit.content.dump());
    auto mentions = [&](std::string_view term) {
        auto const t = text::fold(term);
        return !t.empty() && text::contains_word(body, t);
    };
    std::vector<std::string> terms;
    if (request.language)
    {
        terms.push_back(*request.language);
        if (names)
            terms.push_back(names->display(*request.language));
    }
    if (request.family)
        terms.push_back(*request.family);
    for (auto const& c: request.candidates)
        terms.push_back(c);
    terms.emplace_back(task_display_name(request.task));
    terms.emplace_back(task_id(request.task));
    return std::none_of(terms.begin(), terms.end(), mentions);
}

} // namespace tmlpred::orch
