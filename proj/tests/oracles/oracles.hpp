// SPDX-License-Identifier: Apache-2.0
#pragma once

// Brute-force reference implementations. They share no code with the
// library and favour obviousness over speed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace oracle
{

/// 1 - cos over entries present in both, computed in long double.
inline std::optional<double> cosine_distance(const std::vector<std::optional<double>>& u,
                                             const std::vector<std::optional<double>>& v)
{
    long double dot = 0, nu = 0, nv = 0;
    std::size_t shared = 0;
    for (std::size_t i = 0; i < u.size() && i < v.size(); ++i)
    {
        if (!u[i] || !v[i])
            continue;
        ++shared;
        dot += static_cast<long double>(*u[i]) * *v[i];
        nu += static_cast<long double>(*u[i]) * *u[i];
        nv += static_cast<long double>(*v[i]) * *v[i];
    }
    if (shared == 0 || nu == 0 || nv == 0)
        return std::nullopt;
    long double c = dot / (std::sqrt(nu) * std::sqrt(nv));
    c = std::clamp(c, -1.0L, 1.0L);
    return static_cast<double>(1.0L - c);
}

/// Sort, then interpolate linearly at rank (n-1) * p / 100.
inline double percentile(std::vector<double> xs, double p)
{
    std::sort(xs.begin(), xs.end());
    if (xs.size() == 1)
        return xs[0];
    double const rank = (static_cast<double>(xs.size()) - 1.0) * p / 100.0;
    auto const lo = static_cast<std::size_t>(std::floor(rank));
    auto const hi = std::min(lo + 1, xs.size() - 1);
    double const frac = rank - static_cast<double>(lo);
    return xs[lo] + frac * (xs[hi] - xs[lo]);
}

struct Doc
{
    std::string id;
    std::vector<double> embedding;
};

/// Full scan: cosine of every document, keep >= threshold, order by
/// similarity then id, cut at k.
inline std::vector<std::pair<std::string, double>> retrieve(const std::vector<double>& query,
                                                            const std::vector<Doc>& docs,
                                                            double threshold,
                                                            std::size_t k)
{
    std::vector<std::pair<std::string, double>> all;
    for (auto const& d: docs)
    {
        long double dot = 0, nq = 0, nd = 0;
        for (std::size_t i = 0; i < query.size(); ++i)
        {
            dot += static_cast<long double>(query[i]) * d.embedding[i];
            nq += static_cast<long double>(query[i]) * query[i];
            nd += static_cast<long double>(d.embedding[i]) * d.embedding[i];
        }
        auto const sim = static_cast<double>(dot / (std::sqrt(nq) * std::sqrt(nd)));
        if (sim >= threshold)
            all.emplace_back(d.id, sim);
    }
    std::sort(all.begin(), all.end(), [](auto const& a, auto const& b) {
        if (a.second != b.second)
            return a.second > b.second;
        return a.first < b.first;
    });
    if (all.size() > k)
        all.resize(k);
    return all;
}

inline double mae(const std::vector<std::pair<double, double>>& pairs)
{
    double sum = 0;
    for (auto const& [p, t]: pairs)
        sum += std::fabs(p - t);
    return sum / static_cast<double>(pairs.size());
}

/// Verdict table written out as intervals.
inline std::string verdict(double avg)
{
    if (avg >= 4.25)
        return "Accept";
    if (avg >= 3.25 && avg < 4.25)
        return "Minor revision";
    if (avg >= 2.5 && avg < 3.25)
        return "Major revision";
    return "Reject";
}

/// Value normalization as a decision table.
inline double normalize_text(const std::string& raw)
{
    std::string s = raw;
    while (!s.empty() && s.back() == ' ')
        s.pop_back();
    bool const percent = !s.empty() && s.back() == '%';
    if (percent)
        s.pop_back();
    double const v = std::stod(s);
    if (percent)
        return v;
    if (v >= 0.0 && v <= 1.0)
        return v * 100.0;
    return v;
}

} // namespace oracle
