#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "dwidn/core/error.hpp"

namespace dwidn::analysis {

struct BlandAltmanResult {
    double bias = 0, sd = 0;
    double loa_low = 0, loa_high = 0;
    std::vector<double> differences; // a - b
    std::vector<double> means;       // (a + b) / 2
};

inline BlandAltmanResult bland_altman(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw Error("bland_altman: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " values");
    if (a.size() < 2)
        throw Error("bland_altman: need at least 2 pairs");
    BlandAltmanResult r;
    for (std::size_t i = 0; i < a.size(); ++i) {
        r.differences.push_back(a[i] - b[i]);
        r.means.push_back(0.5 * (a[i] + b[i]));
    }
    const double n = double(a.size());
    r.bias = std::accumulate(r.differences.begin(), r.differences.end(), 0.0) / n;
    double sq = 0;
    for (double d : r.differences)
        sq += (d - r.bias) * (d - r.bias);
    r.sd = std::sqrt(sq / (n - 1));
    r.loa_low = r.bias - 1.96 * r.sd;
    r.loa_high = r.bias + 1.96 * r.sd;
    return r;
}

struct WilcoxonResult {
    double w_plus = 0, w_minus = 0;
    std::size_t n = 0; // non-zero differences
    double p_value = 1;
    bool exact = false;
};

/// Mid-ranks of |d| (1-based), ties sharing the average rank.
inline std::vector<double> abs_ranks(const std::vector<double>& d)
{
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return std::abs(d[i]) < std::abs(d[j]); });
    std::vector<double> ranks(d.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && std::abs(d[idx[j + 1]]) == std::abs(d[idx[i]]))
            ++j;
        const double r = 0.5 * double(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

/// Null distribution of W+ for the given ranks under random signs: entry s
/// is P(2 W+ = s). Ranks must be multiples of 0.5 (mid-ranks are).
inline std::vector<double> signed_rank_null_distribution(const std::vector<double>& ranks)
{
    std::size_t total = 0;
    std::vector<std::size_t> doubled;
    for (double r : ranks) {
        doubled.push_back(std::size_t(std::lround(2 * r)));
        total += doubled.back();
    }
    std::vector<double> dist(total + 1, 0.0), next(total + 1);
    dist[0] = 1.0;
    std::size_t reach = 0;
    for (std::size_t r : doubled) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t s = 0; s <= reach; ++s) {
            next[s] += 0.5 * dist[s];
            next[s + r] += 0.5 * dist[s];
        }
        reach += r;
        dist.swap(next);
    }
    return dist;
}

inline constexpr std::size_t kWilcoxonExactMax = 20;

/// Paired signed-rank test on a - b. Zero differences are dropped. Two-sided
/// p = min(1, 2 min(P(W+ <= w), P(W+ >= w))): exact over all sign patterns
/// for n <= 20, otherwise the normal approximation with tie and continuity
/// corrections.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw Error("wilcoxon_signed_rank: unequal sample sizes");
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i])
            d.push_back(a[i] - b[i]);
    if (d.empty())
        throw Error("wilcoxon_signed_rank: all differences are zero");
    const auto ranks = abs_ranks(d);
    WilcoxonResult r;
    r.n = d.size();
    for (std::size_t i = 0; i < d.size(); ++i)
        (d[i] > 0 ? r.w_plus : r.w_minus) += ranks[i];

    if (r.n <= kWilcoxonExactMax) {
        r.exact = true;
        const auto dist = signed_rank_null_distribution(ranks);
        const std::size_t w2 = std::size_t(std::lround(2 * r.w_plus));
        double lower = 0, upper = 0;
        for (std::size_t s = 0; s < dist.size(); ++s) {
            if (s <= w2)
                lower += dist[s];
            if (s >= w2)
                upper += dist[s];
        }
        r.p_value = std::min(1.0, 2 * std::min(lower, upper));
        return r;
    }
    const double n = double(r.n);
    const double mean = n * (n + 1) / 4;
    double tie = 0;
    std::vector<double> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i])
            ++j;
        const double t = double(j - i);
        tie += t * t * t - t;
        i = j;
    }
    const double var = n * (n + 1) * (2 * n + 1) / 24 - tie / 48;
    const double z = std::max(0.0, std::abs(r.w_plus - mean) - 0.5) / std::sqrt(var);
    r.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    return r;
}

enum class KappaWeighting { linear, quadratic };

/// 1 - sum(w O) / sum(w E) for a k x k contingency table (rows: rater A,
/// columns: rater B) with disagreement weights |i-j|/(k-1), squared for the
/// quadratic scheme.
inline double weighted_kappa_from_table(const std::vector<std::vector<double>>& table, KappaWeighting weighting)
{
    const std::size_t k = table.size();
    if (k < 2)
        throw Error("weighted kappa: need at least 2 categories");
    double total = 0;
    std::vector<double> row(k, 0.0), col(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        if (table[i].size() != k)
            throw Error("weighted kappa: table must be square");
        for (std::size_t j = 0; j < k; ++j) {
            if (table[i][j] < 0)
                throw Error("weighted kappa: negative count");
            total += table[i][j];
            row[i] += table[i][j];
            col[j] += table[i][j];
        }
    }
    if (!(total > 0))
        throw Error("weighted kappa: empty table");
    double observed = 0, expected = 0;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            double w = std::abs(double(i) - double(j)) / double(k - 1);
            if (weighting == KappaWeighting::quadratic)
                w *= w;
            observed += w * table[i][j] / total;
            expected += w * (row[i] / total) * (col[j] / total);
        }
    if (expected == 0)
        throw Error("weighted kappa undefined: chance disagreement is zero because both raters use a single "
                    "category only");
    return 1.0 - observed / expected;
}

/// Scores are category numbers 1..n_categories.
inline double weighted_cohens_kappa(std::span<const int> a, std::span<const int> b, int n_categories,
                                    KappaWeighting weighting)
{
    if (a.size() != b.size())
        throw Error("weighted kappa: unequal number of ratings");
    if (n_categories < 2)
        throw Error("weighted kappa: need at least 2 categories");
    std::vector<std::vector<double>> table(n_categories, std::vector<double>(n_categories, 0.0));
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] < 1 || a[i] > n_categories || b[i] < 1 || b[i] > n_categories)
            throw Error("weighted kappa: score outside 1.." + std::to_string(n_categories));
        table[a[i] - 1][b[i] - 1] += 1;
    }
    return weighted_kappa_from_table(table, weighting);
}

} // namespace dwidn::analysis
