// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tmlpred/text.hpp>

#include <cstdint>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <tuple>
#include <vector>

/// Expert-knowledge store: thresholded cosine top-k retrieval with a response cache.
namespace tmlpred::kb
{

struct Citation
{
    std::string paper_id;
    std::string locator;

    bool operator==(const Citation&) const = default;
};

struct KbSourceDocument
{
    std::string doc_id;
    std::string text;
    Citation citation;
    /// Short heading; when set it is what gets embedded instead of `text`.
    std::string title;
};

struct KbDocument
{
    std::string doc_id;
    std::string text;
    std::vector<double> embedding;
    Citation citation;
    std::string title;

    bool operator==(const KbDocument&) const = default;
};

/// `{ "doc_id", "title"?, "text", "citation": {"paper_id", "locator"} }` per line.
std::vector<KbSourceDocument> load_kb_source(const std::string& path);
KbSourceDocument parse_kb_source(const Json& doc);

class EmbeddingBackend
{
  public:
    virtual ~EmbeddingBackend() = default;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<double> embed(std::string_view text) const = 0;
    virtual std::string name() const = 0;
};

/// Deterministic signed feature hashing over unigrams and adjacent bigrams.
class HashEmbedder final: public EmbeddingBackend
{
  public:
    explicit HashEmbedder(std::size_t dimension = 256, std::uint64_t seed = 0);

    std::size_t dimension() const override { return dimension_; }
    std::vector<double> embed(std::string_view text) const override;
    std::string name() const override;

  private:
    std::size_t dimension_;
    std::uint64_t seed_;
};

/// Read-mostly document store. Retrieval takes a shared lock; `add` takes
/// the exclusive one.
class VectorStore
{
  public:
    explicit VectorStore(std::size_t dimension);
    VectorStore(const VectorStore& other);
    VectorStore& operator=(const VectorStore& other);

    std::size_t dimension() const noexcept { return dimension_; }
    std::size_t size() const;

    /// Content fingerprint; changes whenever a document is added.
    std::string version() const;

    /// Adds a document. Re-adding the same doc_id with the same text is a no-op
    /// and returns false. Throws InputError on dimension mismatch, a zero
    /// embedding, or the same doc_id with different text.
    bool add(KbDocument doc);

    std::vector<KbDocument> documents() const;

    /// Calls `fn(doc, unit_embedding)` for every document under the shared lock.
    template <typename Fn>
    void for_each(Fn&& fn) const
    {
        std::shared_lock lock(mutex_);
        for (std::size_t i = 0; i < docs_.size(); ++i)
            fn(docs_[i], std::span<const double>(unit_[i]));
    }

    Json to_json() const;
    static VectorStore from_json(const Json& doc);

  private:
    mutable std::shared_mutex mutex_;
    std::size_t dimension_;
    std::vector<KbDocument> docs_;
    std::vector<std::vector<double>> unit_;
    std::map<std::string, std::size_t, std::less<>> index_;
    std::uint64_t fingerprint_;
};

struct RetrievalResult
{
    KbDocument document;
    double similarity = 0.0;

    bool operator==(const RetrievalResult&) const = default;
};

inline constexpr double default_threshold = 0.90;
inline constexpr std::size_t default_top_k = 2;

/// Documents with cosine similarity >= threshold, best first (ties by doc_id),
/// truncated to k. Filtering happens before truncation.
/// Throws InputError on dimension mismatch or a zero query.
std::vector<RetrievalResult> retrieve(std::span<const double> query_embedding,
                                      const VectorStore& store,
                                      double threshold = default_threshold,
                                      std::size_t k = default_top_k);

struct CacheStats
{
    std::size_t hits = 0;
    std::size_t misses = 0;
};

/// Retrieval results keyed by (query key, threshold, k, store version).
class RetrievalCache
{
  public:
    using Key = std::tuple<std::string, double, std::size_t, std::string>;

    std::optional<std::vector<RetrievalResult>> find(const Key& key) const;
    /// Inserts unless present; returns the stored value either way.
    std::vector<RetrievalResult> insert(const Key& key, std::vector<RetrievalResult> results);

    void clear();
    std::size_t size() const;
    CacheStats stats() const;
    void record(bool hit);

    /// On-disk spill as JSON Lines.
    void save(const std::string& path) const;
    void load(const std::string& path);

  private:
    mutable std::shared_mutex mutex_;
    std::map<Key, std::vector<RetrievalResult>> entries_;
    mutable std::mutex stats_mutex_;
    CacheStats stats_;
};

struct CachedRetrieval
{
    std::vector<RetrievalResult> results;
    bool cache_hit = false;
};

CachedRetrieval cached_retrieve(std::string_view query_key,
                                std::span<const double> query_embedding,
                                const VectorStore& store,
                                RetrievalCache& cache,
                                double threshold = default_threshold,
                                std::size_t k = default_top_k);

/// Embeds and stores every document, deduplicating by doc_id. Throws
/// InputError for conflicting duplicates and BackendError when the embedder
/// fails or returns a zero vector.
VectorStore ingest_documents(std::span<const KbSourceDocument> docs, const EmbeddingBackend& embedder);

Json to_json(const RetrievalResult& result);

} // namespace tmlpred::kb
