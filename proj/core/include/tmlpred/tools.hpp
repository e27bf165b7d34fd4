// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tmlpred/corpus.hpp>
#include <tmlpred/kb.hpp>
#include <tmlpred/langsim.hpp>
#include <tmlpred/metrics.hpp>
#include <tmlpred/task.hpp>

#include <optional>
#include <string>
#include <vector>

/// Thought-agent tools: capability screening and evidence search providers.
namespace tmlpred::orch
{

/// Prohibited-operation labels found in a proposed method. Empty means compliant.
std::vector<std::string> capability_check(std::string_view method);

struct SearchRequest
{
    std::string text;
    Task task = Task::CodeGeneration;
    std::optional<std::string> language;
    std::optional<std::string> family;
    std::vector<std::string> candidates;

    Json to_json() const;
    static SearchRequest from_json(const Json& doc);
};

struct SearchHit
{
    std::string source_id;
    std::string title;
    std::string snippet;
    Json content = Json::object();
    kb::Citation citation;
};

class SearchProvider
{
  public:
    virtual ~SearchProvider() = default;
    /// Evidence kind recorded on the trail ("corpus" or "search").
    virtual std::string kind() const = 0;
    virtual std::vector<SearchHit> search(const SearchRequest& request) const = 0;
};

/// Searches the evidence corpus through a ReducedOnly view. Hits carry
/// normalized values, the metric family rank, and the typological distance
/// between the hit language and the requested language when known.
class CorpusSearchProvider final: public SearchProvider
{
  public:
    /// Throws InputError unless `reduced` is a ReducedOnly view.
    CorpusSearchProvider(corpus::CorpusView reduced,
                         const metrics::MetricRegistry& registry,
                         const langsim::SimilaritySplit* split = nullptr,
                         std::size_t max_hits = 40);

    std::string kind() const override { return "corpus"; }
    std::vector<SearchHit> search(const SearchRequest& request) const override;

  private:
    corpus::CorpusView reduced_;
    const metrics::MetricRegistry& registry_;
    const langsim::SimilaritySplit* split_;
    std::size_t max_hits_;
};

/// Canned web results: `{ "results": [ { "match": ["term", ...], "hits": [hit...] } ] }`.
/// An entry applies when every match term occurs in the request text.
class FixtureSearchProvider final: public SearchProvider
{
  public:
    static FixtureSearchProvider from_json(const Json& doc);
    static FixtureSearchProvider load(const std::string& path);

    std::string kind() const override { return "search"; }
    std::vector<SearchHit> search(const SearchRequest& request) const override;

  private:
    struct Entry
    {
        std::vector<std::string> match;
        std::vector<SearchHit> hits;
    };
    std::vector<Entry> entries_;
};

/// True when the hit mentions none of the request's language, family,
/// candidates, or task. Such hits are kept but flagged.
bool is_off_topic(const SearchHit& hit, const SearchRequest& request, const corpus::LanguageTable* names = nullptr);

} // namespace tmlpred::orch
