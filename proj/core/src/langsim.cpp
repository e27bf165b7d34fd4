// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/error.hpp>
#include <tmlpred/langsim.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace tmlpred::langsim
{

TypologicalVector TypologicalVector::from_values(std::string language, std::vector<std::optional<double>> values)
{
    TypologicalVector v;
    v.language = std::move(language);
    v.features.reserve(values.size());
    v.present_mask.reserve(values.size());
    for (auto const& value: values)
    {
        bool const present = value.has_value() && std::isfinite(*value);
        v.features.push_back(present ? *value : 0.0);
        v.present_mask.push_back(present);
    }
    return v;
}

std::vector<double> l2_normalize(std::span<const double> v, const std::vector<bool>& mask)
{
    if (!mask.empty() && mask.size() != v.size())
        throw InputError("feature mask length differs from vector length");
    auto const selected = [&](std::size_t i) { return mask.empty() || mask[i]; };

    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (selected(i))
            sum += v[i] * v[i];
    if (!(sum > 0.0))
        throw InputError("cannot normalize a zero vector");

    auto const norm = std::sqrt(sum);
    std::vector<double> out(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i)
        if (selected(i))
            out[i] = v[i] / norm;
    return out;
}

double cosine_distance(const TypologicalVector& u, const TypologicalVector& v)
{
    if (u.features.size() != v.features.size())
        throw InputError(fmt::format("vector length mismatch: {} has {}, {} has {}", u.language, u.features.size(),
                                     v.language, v.features.size()));

    std::vector<bool> shared(u.features.size());
    bool any = false;
    for (std::size_t i = 0; i < shared.size(); ++i)
    {
        shared[i] = u.present_mask[i] && v.present_mask[i];
        any = any || shared[i];
    }
    if (!any)
        throw InputError(fmt::format("languages {} and {} share no present features", u.language, v.language));

    auto const a = l2_normalize(u.features, shared);
    auto const b = l2_normalize(v.features, shared);
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        dot += a[i] * b[i];
    return std::clamp(1.0 - dot, 0.0, 2.0);
}

double percentile(std::vector<double> values, double p)
{
    if (values.empty())
        throw InputError("percentile of an empty sample");
    if (!(p >= 0.0 && p <= 100.0))
        throw InputError(fmt::format("percentile {} outside [0, 100]", p));
    std::sort(values.begin(), values.end());
    auto const rank = static_cast<double>(values.size() - 1) * p / 100.0;
    auto const lo = static_cast<std::size_t>(std::floor(rank));
    auto const hi = std::min(lo + 1, values.size() - 1);
    auto const frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::string_view to_string(Proximity p) noexcept
{
    return p == Proximity::Close ? "close" : "distant";
}

Proximity classify_distance(double distance, double tau) noexcept
{
    return distance <= tau ? Proximity::Close : Proximity::Distant;
}

Proximity classify_pair(const TypologicalVector& a, const TypologicalVector& b, double tau)
{
    return classify_distance(cosine_distance(a, b), tau);
}

TypologyTable::TypologyTable(Blocks blocks, std::vector<TypologicalVector> vectors):
    blocks_(blocks), vectors_(std::move(vectors))
{
    std::sort(vectors_.begin(), vectors_.end(),
              [](auto const& a, auto const& b) { return a.language < b.language; });
    for (std::size_t i = 0; i < vectors_.size(); ++i)
    {
        auto const& v = vectors_[i];
        if (blocks_.total() != 0 && v.features.size() != blocks_.total())
            throw InputError(fmt::format("language {}: {} features, blocks declare {}", v.language,
                                         v.features.size(), blocks_.total()));
        if (std::none_of(v.present_mask.begin(), v.present_mask.end(), [](bool b) { return b; }))
            throw InputError(fmt::format("language {}: no feature present", v.language));
        if (!index_.emplace(v.language, i).second)
            throw InputError(fmt::format("language {} listed twice", v.language));
    }
}

TypologyTable TypologyTable::from_json(const Json& doc)
{
    if (!doc.is_object())
        throw InputError("typology file must be a JSON object");
    Blocks blocks;
    if (!doc.contains("_blocks") || !doc["_blocks"].is_object())
        throw InputError("typology file needs a '_blocks' header object");
    {
        auto const& b = doc["_blocks"];
        blocks.syntax = b.value("syntax", std::size_t {0});
        blocks.family = b.value("family", std::size_t {0});
        blocks.geo = b.value("geo", std::size_t {0});
    }

    std::vector<TypologicalVector> vectors;
    for (auto const& [key, entry]: doc.items())
    {
        if (key == "_blocks")
            continue;
        if (!entry.is_object() || !entry.contains("features") || !entry["features"].is_array())
            throw InputError(fmt::format("typology entry '{}' needs a 'features' array", key));
        std::vector<std::optional<double>> values;
        for (auto const& f: entry["features"])
        {
            if (f.is_null())
                values.emplace_back(std::nullopt);
            else if (f.is_number())
                values.emplace_back(f.get<double>());
            else
                throw InputError(fmt::format("typology entry '{}': features must be numbers or null", key));
        }
        vectors.push_back(TypologicalVector::from_values(text::fold(key), std::move(values)));
    }
    return TypologyTable(blocks, std::move(vectors));
}

TypologyTable TypologyTable::load(const std::string& path)
{
    try
    {
        return from_json(text::read_json_file(path));
    }
    catch (const InputError& e)
    {
        throw InputError(fmt::format("{}: {}", path, e.what()));
    }
}

const TypologicalVector* TypologyTable::find(std::string_view language) const
{
    auto it = index_.find(text::fold(language));
    return it == index_.end() ? nullptr : &vectors_[it->second];
}

namespace
{
bool comparable(const TypologicalVector& a, const TypologicalVector& b)
{
    if (a.features.size() != b.features.size())
        return false;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.features.size(); ++i)
    {
        if (a.present_mask[i] && b.present_mask[i])
        {
            na += a.features[i] * a.features[i];
            nb += b.features[i] * b.features[i];
        }
    }
    return na > 0.0 && nb > 0.0;
}
} // namespace

std::vector<double> pairwise_distances(std::span<const TypologicalVector> vectors)
{
    std::vector<double> out;
    for (std::size_t i = 0; i < vectors.size(); ++i)
        for (std::size_t j = i + 1; j < vectors.size(); ++j)
            if (comparable(vectors[i], vectors[j]))
                out.push_back(cosine_distance(vectors[i], vectors[j]));
    return out;
}

double close_threshold(std::span<const TypologicalVector> vectors, double pct)
{
    if (vectors.size() < 2)
        throw InputError("close threshold needs at least two language vectors");
    auto distances = pairwise_distances(vectors);
    if (distances.empty())
        throw InputError("no comparable language pair for the close threshold");
    return percentile(std::move(distances), pct);
}

SimilaritySplit SimilaritySplit::build(const TypologyTable& table, double pct)
{
    SimilaritySplit split;
    auto const& vectors = table.vectors();
    split.tau_ = close_threshold(vectors, pct);
    for (auto const& v: vectors)
        split.languages_.emplace(v.language, true);
    for (std::size_t i = 0; i < vectors.size(); ++i)
    {
        for (std::size_t j = i + 1; j < vectors.size(); ++j)
        {
            if (!comparable(vectors[i], vectors[j]))
                continue;
            auto const d = cosine_distance(vectors[i], vectors[j]);
            split.distances_.emplace(key(vectors[i].language, vectors[j].language), d);
            if (classify_distance(d, split.tau_) == Proximity::Close)
                ++split.close_count_;
        }
    }
    return split;
}

SimilaritySplit::Pair SimilaritySplit::key(std::string_view a, std::string_view b)
{
    auto x = text::fold(a);
    auto y = text::fold(b);
    if (y < x)
        std::swap(x, y);
    return {std::move(x), std::move(y)};
}

std::optional<double> SimilaritySplit::distance(std::string_view a, std::string_view b) const
{
    if (text::fold(a) == text::fold(b) && has_vector(a))
        return 0.0;
    auto it = distances_.find(key(a, b));
    if (it == distances_.end())
        return std::nullopt;
    return it->second;
}

Proximity SimilaritySplit::classify(std::string_view a, std::string_view b) const
{
    auto const d = distance(a, b);
    if (!d)
        throw InputError(fmt::format("no typological distance between '{}' and '{}'", a, b));
    return classify_distance(*d, tau_);
}

bool SimilaritySplit::has_vector(std::string_view language) const
{
    return languages_.contains(text::fold(language));
}

Json SimilaritySplit::to_json() const
{
    Json close = Json::array();
    Json distant = Json::array();
    for (auto const& [pair, d]: distances_)
    {
        Json entry = {{"a", pair.first}, {"b", pair.second}, {"distance", d}};
        (classify_distance(d, tau_) == Proximity::Close ? close : distant).push_back(std::move(entry));
    }
    return {{"tau", tau_}, {"pairs_close", close}, {"pairs_distant", distant}};
}

} // namespace tmlpred::langsim
