// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tmlpred/text.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

/// Typological language similarity: cosine distance over feature vectors with
/// missing values, and the percentile threshold that splits pairs into close
/// and distant.
namespace tmlpred::langsim
{

struct TypologicalVector
{
    std::string language;
    std::vector<double> features;
    std::vector<bool> present_mask;

    /// Builds a vector where NaN entries are treated as missing.
    static TypologicalVector from_values(std::string language, std::vector<std::optional<double>> values);

    std::size_t size() const noexcept { return features.size(); }
};

/// Scales `v` to unit Euclidean norm over the entries selected by `mask` (all
/// entries when `mask` is empty). Masked-out entries are copied as 0.
/// Throws InputError for a zero vector.
std::vector<double> l2_normalize(std::span<const double> v, const std::vector<bool>& mask = {});

/// 1 - cos(u, v) over the features present in both vectors, clamped to [0, 2].
/// Throws InputError when the intersection is empty or either side is zero there.
double cosine_distance(const TypologicalVector& u, const TypologicalVector& v);

/// Percentile with linear interpolation between order statistics
/// (rank = (n - 1) * p / 100). `values` need not be sorted.
double percentile(std::vector<double> values, double p);

enum class Proximity
{
    Close,
    Distant,
};

std::string_view to_string(Proximity p) noexcept;

/// Close iff distance <= tau.
Proximity classify_distance(double distance, double tau) noexcept;
Proximity classify_pair(const TypologicalVector& a, const TypologicalVector& b, double tau);

/// Typology file contents: block sizes plus one vector per language.
class TypologyTable
{
  public:
    struct Blocks
    {
        std::size_t syntax = 0;
        std::size_t family = 0;
        std::size_t geo = 0;
        std::size_t total() const noexcept { return syntax + family + geo; }
    };

    TypologyTable() = default;
    TypologyTable(Blocks blocks, std::vector<TypologicalVector> vectors);

    /// `{ "_blocks": {...}, "<iso639-3>": { "features": [number|null, ...] } }`
    static TypologyTable from_json(const Json& doc);
    static TypologyTable load(const std::string& path);

    const Blocks& blocks() const noexcept { return blocks_; }
    const std::vector<TypologicalVector>& vectors() const noexcept { return vectors_; }
    const TypologicalVector* find(std::string_view language) const;

  private:
    Blocks blocks_;
    std::vector<TypologicalVector> vectors_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

/// All unordered pairwise distances among `vectors` that have a nonempty
/// shared feature set. Pairs without one are skipped.
std::vector<double> pairwise_distances(std::span<const TypologicalVector> vectors);

/// The `pct`-th percentile of pairwise distances. Throws InputError for fewer
/// than two vectors or when no pair is comparable.
double close_threshold(std::span<const TypologicalVector> vectors, double pct = 10.0);

/// Threshold plus the close/distant partition of every comparable pair.
class SimilaritySplit
{
  public:
    using Pair = std::pair<std::string, std::string>;

    static SimilaritySplit build(const TypologyTable& table, double pct = 10.0);

    double tau() const noexcept { return tau_; }
    const std::map<Pair, double>& distances() const noexcept { return distances_; }
    std::size_t close_count() const noexcept { return close_count_; }
    std::size_t pair_count() const noexcept { return distances_.size(); }

    /// Distance between two languages (order-insensitive); nullopt when either
    /// has no vector or they share no features.
    std::optional<double> distance(std::string_view a, std::string_view b) const;

    /// Throws InputError when the pair is not comparable.
    Proximity classify(std::string_view a, std::string_view b) const;

    bool has_vector(std::string_view language) const;

    Json to_json() const;

  private:
    static Pair key(std::string_view a, std::string_view b);

    double tau_ = 0.0;
    std::map<Pair, double> distances_;
    std::map<std::string, bool, std::less<>> languages_;
    std::size_t close_count_ = 0;
};

} // namespace tmlpred::langsim
