// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/error.hpp>
#include <tmlpred/kb.hpp>
#include <tmlpred/langsim.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace tmlpred::kb
{

KbSourceDocument parse_kb_source(const Json& doc)
{
    if (!doc.is_object())
        throw InputError("kb source: each entry must be an object");
    KbSourceDocument out;
    try
    {
        out.doc_id = text::trim(doc.at("doc_id").get<std::string>());
        out.text = doc.at("text").get<std::string>();
        out.title = doc.value("title", std::string {});
        if (auto it = doc.find("citation"); it != doc.end())
        {
            out.citation.paper_id = it->value("paper_id", std::string {});
            out.citation.locator = it->value("locator", std::string {});
        }
    }
    catch (const nlohmann::json::exception& e)
    {
        throw InputError(fmt::format("kb source: {}", e.what()));
    }
    if (out.doc_id.empty())
        throw InputError("kb source: empty doc_id");
    return out;
}

std::vector<KbSourceDocument> load_kb_source(const std::string& path)
{
    std::vector<KbSourceDocument> out;
    for (auto const& line: text::read_jsonl_file(path))
        out.push_back(parse_kb_source(line));
    return out;
}

HashEmbedder::HashEmbedder(std::size_t dimension, std::uint64_t seed): dimension_(dimension), seed_(seed)
{
    if (dimension == 0)
        throw InputError("embedder dimension must be positive");
}

std::string HashEmbedder::name() const
{
    return fmt::format("hash-{}-{}", dimension_, seed_);
}

std::vector<double> HashEmbedder::embed(std::string_view input) const
{
    std::vector<double> v(dimension_, 0.0);
    auto const tokens = text::tokenize(input);
    auto bump = [&](std::string_view feature, double weight) {
        auto const h = text::fnv1a(feature, text::fnv1a(std::to_string(seed_)));
        auto const slot = static_cast<std::size_t>(h % dimension_);
        v[slot] += (h >> 63) ? -weight : weight;
    };
    for (std::size_t i = 0; i < tokens.size(); ++i)
    {
        bump(tokens[i], 1.0);
        if (i + 1 < tokens.size())
            bump(tokens[i] + " " + tokens[i + 1], 0.5);
    }
    return v;
}

namespace
{

std::uint64_t mix_fingerprint(std::uint64_t fp, const KbDocument& doc)
{
    fp = text::fnv1a(doc.doc_id, fp);
    fp = text::fnv1a(std::string_view("\0", 1), fp);
    return text::fnv1a(doc.text, fp);
}

constexpr std::uint64_t empty_fingerprint = 14695981039346656037ull;

} // namespace

VectorStore::VectorStore(std::size_t dimension): dimension_(dimension), fingerprint_(empty_fingerprint)
{
    if (dimension == 0)
        throw InputError("vector store dimension must be positive");
}

VectorStore::VectorStore(const VectorStore& other)
{
    std::shared_lock lock(other.mutex_);
    dimension_ = other.dimension_;
    docs_ = other.docs_;
    unit_ = other.unit_;
    index_ = other.index_;
    fingerprint_ = other.fingerprint_;
}

VectorStore& VectorStore::operator=(const VectorStore& other)
{
    if (this == &other)
        return *this;
    std::scoped_lock lock(mutex_);
    std::shared_lock other_lock(other.mutex_);
    dimension_ = other.dimension_;
    docs_ = other.docs_;
    unit_ = other.unit_;
    index_ = other.index_;
    fingerprint_ = other.fingerprint_;
    return *this;
}

std::size_t VectorStore::size() const
{
    std::shared_lock lock(mutex_);
    return docs_.size();
}

std::string VectorStore::version() const
{
    std::shared_lock lock(mutex_);
    return fmt::format("{}:{}:{}", dimension_, docs_.size(), text::hex64(fingerprint_));
}

bool VectorStore::add(KbDocument doc)
{
    if (doc.embedding.size() != dimension_)
        throw InputError(fmt::format("document {}: embedding dimension {} does not match store dimension {}",
                                     doc.doc_id, doc.embedding.size(), dimension_));
    std::vector<double> unit;
    try
    {
        unit = langsim::l2_normalize(doc.embedding);
    }
    catch (const InputError&)
    {
        throw InputError(fmt::format("document {}: zero embedding", doc.doc_id));
    }

    std::scoped_lock lock(mutex_);
    if (auto it = index_.find(doc.doc_id); it != index_.end())
    {
        if (docs_[it->second].text != doc.text)
            throw InputError(fmt::format("document {}: duplicate doc_id with different text", doc.doc_id));
        return false;
    }
    fingerprint_ = mix_fingerprint(fingerprint_, doc);
    index_.emplace(doc.doc_id, docs_.size());
    docs_.push_back(std::move(doc));
    unit_.push_back(std::move(unit));
    return true;
}

std::vector<KbDocument> VectorStore::documents() const
{
    std::shared_lock lock(mutex_);
    return docs_;
}

namespace
{

Json citation_json(const Citation& c)
{
    return Json {{"paper_id", c.paper_id}, {"locator", c.locator}};
}

Json document_json(const KbDocument& d, bool with_embedding)
{
    Json j {{"doc_id", d.doc_id}, {"text", d.text}, {"citation", citation_json(d.citation)}};
    if (!d.title.empty())
        j["title"] = d.title;
    if (with_embedding)
        j["embedding"] = d.embedding;
    return j;
}

KbDocument document_from_json(const Json& j)
{
    auto src = parse_kb_source(j);
    KbDocument d {src.doc_id, src.text, {}, src.citation, src.title};
    if (auto it = j.find("embedding"); it != j.end())
        d.embedding = it->get<std::vector<double>>();
    return d;
}

} // namespace

Json VectorStore::to_json() const
{
    std::shared_lock lock(mutex_);
    Json docs = Json::array();
    for (auto const& d: docs_)
        docs.push_back(document_json(d, true));
    return Json {{"dimension", dimension_}, {"documents", std::move(docs)}};
}

VectorStore VectorStore::from_json(const Json& doc)
{
    try
    {
        VectorStore store(doc.at("dimension").get<std::size_t>());
        for (auto const& d: doc.at("documents"))
            store.add(document_from_json(d));
        return store;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw InputError(fmt::format("vector store: {}", e.what()));
    }
}

std::vector<RetrievalResult> retrieve(std::span<const double> query_embedding,
                                      const VectorStore& store,
                                      double threshold,
                                      std::size_t k)
{
    if (query_embedding.size() != store.dimension())
        throw InputError(fmt::format("query embedding dimension {} does not match store dimension {}",
                                     query_embedding.size(), store.dimension()));
    std::vector<double> q;
    try
    {
        q = langsim::l2_normalize(query_embedding);
    }
    catch (const InputError&)
    {
        throw InputError("query embedding is the zero vector");
    }

    std::vector<RetrievalResult> hits;
    store.for_each([&](const KbDocument& doc, std::span<const double> unit) {
        double dot = 0.0;
        for (std::size_t i = 0; i < unit.size(); ++i)
            dot += q[i] * unit[i];
        dot = std::clamp(dot, -1.0, 1.0);
        if (dot >= threshold)
            hits.push_back({doc, dot});
    });
    std::sort(hits.begin(), hits.end(), [](auto const& a, auto const& b) {
        if (a.similarity != b.similarity)
            return a.similarity > b.similarity;
        return a.document.doc_id < b.document.doc_id;
    });
    if (hits.size() > k)
        hits.resize(k);
    return hits;
}

std::optional<std::vector<RetrievalResult>> RetrievalCache::find(const Key& key) const
{
    std::shared_lock lock(mutex_);
    if (auto it = entries_.find(key); it != entries_.end())
        return it->second;
    return std::nullopt;
}

std::vector<RetrievalResult> RetrievalCache::insert(const Key& key, std::vector<RetrievalResult> results)
{
    std::scoped_lock lock(mutex_);
    auto [it, inserted] = entries_.try_emplace(key, std::move(results));
    return it->second;
}

void RetrievalCache::clear()
{
    std::scoped_lock lock(mutex_);
    entries_.clear();
}

std::size_t RetrievalCache::size() const
{
    std::shared_lock lock(mutex_);
    return entries_.size();
}

CacheStats RetrievalCache::stats() const
{
    std::scoped_lock lock(stats_mutex_);
    return stats_;
}

void RetrievalCache::record(bool hit)
{
    std::scoped_lock lock(stats_mutex_);
    if (hit)
        ++stats_.hits;
    else
        ++stats_.misses;
}

Json to_json(const RetrievalResult& result)
{
    auto j = document_json(result.document, false);
    j["similarity"] = result.similarity;
    return j;
}

void RetrievalCache::save(const std::string& path) const
{
    std::shared_lock lock(mutex_);
    std::string out;
    for (auto const& [key, results]: entries_)
    {
        Json rows = Json::array();
        for (auto const& r: results)
        {
            auto j = document_json(r.document, true);
            j["similarity"] = r.similarity;
            rows.push_back(std::move(j));
        }
        Json line {{"query", std::get<0>(key)},
                   {"threshold", std::get<1>(key)},
                   {"k", std::get<2>(key)},
                   {"store_version", std::get<3>(key)},
                   {"results", std::move(rows)}};
        out += text::canonical_dump(line);
        out += '\n';
    }
    text::write_file(path, out);
}

void RetrievalCache::load(const std::string& path)
{
    auto lines = text::read_jsonl_file(path);
    std::scoped_lock lock(mutex_);
    try
    {
        for (auto const& line: lines)
        {
            Key key {line.at("query").get<std::string>(), line.at("threshold").get<double>(),
                     line.at("k").get<std::size_t>(), line.at("store_version").get<std::string>()};
            std::vector<RetrievalResult> results;
            for (auto const& r: line.at("results"))
                results.push_back({document_from_json(r), r.at("similarity").get<double>()});
            entries_.try_emplace(std::move(key), std::move(results));
        }
    }
    catch (const nlohmann::json::exception& e)
    {
        throw InputError(fmt::format("retrieval cache {}: {}", path, e.what()));
    }
}

CachedRetrieval cached_retrieve(std::string_view query_key,
                                std::span<const double> query_embedding,
                                const VectorStore& store,
                                RetrievalCache& cache,
                                double threshold,
                                std::size_t k)
{
    RetrievalCache::Key key {std::string(query_key), threshold, k, store.version()};
    if (auto hit = cache.find(key))
    {
        cache.record(true);
        return {std::move(*hit), true};
    }
    cache.record(false);
    return {cache.insert(key, retrieve(query_embedding, store, threshold, k)), false};
}

VectorStore ingest_documents(std::span<const KbSourceDocument> docs, const EmbeddingBackend& embedder)
{
    VectorStore store(embedder.dimension());
    for (auto const& src: docs)
    {
        std::vector<double> embedding;
        try
        {
            embedding = embedder.embed(src.title.empty() ? src.text : src.title);
        }
        catch (const std::exception& e)
        {
            throw BackendError(fmt::format("embedder failed on {}: {}", src.doc_id, e.what()));
        }
        if (embedding.size() != embedder.dimension())
            throw BackendError(fmt::format("embedder returned dimension {} for {}", embedding.size(), src.doc_id));
        if (std::all_of(embedding.begin(), embedding.end(), [](double x) { return x == 0.0; }))
            throw BackendError(fmt::format("embedder returned a zero vector for {}", src.doc_id));
        store.add(KbDocument {src.doc_id, src.text, std::move(embedding), src.citation, src.title});
    }
    return store;
}

} // namespace tmlpred::kb
