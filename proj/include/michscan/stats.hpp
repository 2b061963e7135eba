#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "michscan/error.hpp"

namespace michscan {

enum class SampleSource { pre_deployment, runtime };

/// Pearson correlations against the golden template, one value per trace.
struct SimilaritySample {
    std::vector<double> values;
    SampleSource source = SampleSource::pre_deployment;

    friend bool operator==(const SimilaritySample&, const SimilaritySample&) = default;
};

enum class Alternative { two_sided };

/// Method request; `automatic` resolves to exact when the data allows it.
enum class Method { automatic, exact, normal_approx };

enum class ResolvedMethod { exact, normal_approx };

struct UTestResult {
    double u1 = 0.0, u2 = 0.0;
    double r1 = 0.0, r2 = 0.0;
    std::size_t n1 = 0, n2 = 0;
    double p_value = 1.0;
    ResolvedMethod method = ResolvedMethod::normal_approx;
    bool tie_correction_applied = false;
    bool small_sample_warning = false;
};

/// Sample Pearson correlation coefficient, clamped to [-1, 1].
inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw InvalidArgument("pearson requires equal-length sequences");
    if (a.size() < 2)
        throw InvalidArgument("pearson requires at least two points");

    const std::size_t n = a.size();
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_a += a[i];
        mean_b += b[i];
    }
    mean_a /= double(n);
    mean_b /= double(n);

    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - mean_a;
        const double db = b[i] - mean_b;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if (saa == 0.0 || sbb == 0.0)
        throw DegenerateInput("pearson is undefined for a constant sequence");

    if (sab == saa && saa == sbb)
        return 1.0;
    if (sab == -saa && saa == sbb)
        return -1.0;
    const double r = sab / (std::sqrt(saa) * std::sqrt(sbb));
    return std::clamp(r, -1.0, 1.0);
}

/// Ranks 1..n in input order; tied values receive the mean of the ranks they
/// span, so the rank sum is exactly n(n+1)/2.
inline std::vector<double> rank_midranks(std::span<const double> values) {
    if (values.empty())
        throw InvalidArgument("cannot rank an empty sequence");
    for (double v : values)
        if (!std::isfinite(v))
            throw InvalidArgument("cannot rank non-finite values");

    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });

    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]])
            ++j;
        const double midrank = double(i + j + 2) / 2.0; // 1-based mean of [i, j]
        for (std::size_t k = i; k <= j; ++k)
            ranks[order[k]] = midrank;
        i = j + 1;
    }
    return ranks;
}

namespace detail {

using int128 = __int128;

/// True when the exact null distribution can be tabulated in 128-bit counts.
inline bool exact_u_feasible(std::size_t n1, std::size_t n2) {
    if (n1 == 0 || n2 == 0)
        return false;
    if (n1 * n2 > 1000000)
        return false;
    const double log2_total = (std::lgamma(double(n1 + n2 + 1)) - std::lgamma(double(n1 + 1)) -
                               std::lgamma(double(n2 + 1))) /
                              std::log(2.0);
    return log2_total < 120.0;
}

/// counts[u] = number of size-n1 subsets of ranks 1..n1+n2 whose U statistic
/// equals u, computed as the Gaussian binomial coefficient
/// [n1+n2 choose n1]_q via exact integer polynomial arithmetic.
inline std::vector<int128> u_statistic_counts(std::size_t n1, std::size_t n2) {
    std::vector<int128> c{1};
    for (std::size_t i = 1; i <= n1; ++i) {
        const std::size_t m = n2 + i;
        std::vector<int128> t(c.size() + m, 0);
        for (std::size_t u = 0; u < c.size(); ++u) {
            t[u] += c[u];
            t[u + m] -= c[u];
        }
        for (std::size_t u = i; u < t.size(); ++u)
            t[u] += t[u - i];
        t.resize(i * n2 + 1);
        c = std::move(t);
    }
    return c;
}

inline double exact_two_sided_p(double u1, double u2, std::size_t n1, std::size_t n2) {
    const auto counts = u_statistic_counts(n1, n2);
    int128 total = 0;
    for (int128 v : counts)
        total += v;
    const auto u_min = std::size_t(std::llround(std::min(u1, u2)));
    int128 cum = 0;
    for (std::size_t u = 0; u <= u_min && u < counts.size(); ++u)
        cum += counts[u];
    const long double p = 2.0L * static_cast<long double>(cum) / static_cast<long double>(total);
    return std::min(1.0, double(p));
}

} // namespace detail

/// Exact null probability mass of U over {0 .. n1*n2} for tie-free data,
/// all rank assignments equally likely.
inline std::vector<double> exact_u_distribution(std::size_t n1, std::size_t n2) {
    if (n1 == 0 || n2 == 0)
        throw InvalidArgument("group sizes must be positive");
    if (n1 * n2 > 400 || n1 + n2 > 25)
        throw InvalidArgument("exact_u_distribution bounds exceeded (n1*n2 <= 400, n1+n2 <= 25)");

    const auto counts = detail::u_statistic_counts(n1, n2);
    detail::int128 total = 0;
    for (detail::int128 v : counts)
        total += v;
    std::vector<double> probs(counts.size());
    for (std::size_t u = 0; u < counts.size(); ++u)
        probs[u] = double(static_cast<long double>(counts[u]) / static_cast<long double>(total));
    return probs;
}

/// Two-sided Mann-Whitney U-Test. `automatic` resolves to the exact
/// distribution for tie-free data with min(n1, n2) <= 8 (the regime where
/// the normal approximation cannot reach small P-values), and to the
/// tie-corrected normal approximation with continuity correction otherwise.
inline UTestResult mann_whitney(std::span<const double> group1, std::span<const double> group2,
                                Alternative = Alternative::two_sided,
                                Method method = Method::automatic) {
    if (group1.empty() || group2.empty())
        throw InvalidArgument("mann_whitney requires non-empty groups");

    const std::size_t n1 = group1.size();
    const std::size_t n2 = group2.size();
    const std::size_t n = n1 + n2;

    std::vector<double> pooled;
    pooled.reserve(n);
    pooled.insert(pooled.end(), group1.begin(), group1.end());
    pooled.insert(pooled.end(), group2.begin(), group2.end());
    const std::vector<double> ranks = rank_midranks(pooled);

    double r1 = 0.0, r2 = 0.0;
    for (std::size_t i = 0; i < n1; ++i)
        r1 += ranks[i];
    for (std::size_t i = n1; i < n; ++i)
        r2 += ranks[i];

    // Tie-group sizes over the pooled sample.
    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    double tie_term = 0.0;
    bool has_ties = false;
    std::size_t run_start = 0;
    for (std::size_t i = 1; i <= n; ++i) {
        if (i == n || sorted[i] != sorted[run_start]) {
            const double t = double(i - run_start);
            if (t > 1.0) {
                has_ties = true;
                tie_term += t * t * t - t;
            }
            run_start = i;
        }
    }
    if (has_ties && sorted.front() == sorted.back())
        throw DegenerateInput("all observations are identical across both groups");

    UTestResult res;
    res.n1 = n1;
    res.n2 = n2;
    res.r1 = r1;
    res.r2 = r2;
    res.u1 = double(n1) * double(n2) + double(n1) * double(n1 + 1) / 2.0 - r1;
    res.u2 = double(n1) * double(n2) + double(n2) * double(n2 + 1) / 2.0 - r2;
    res.small_sample_warning = std::min(n1, n2) < 5;

    bool use_exact = false;
    if (method == Method::exact) {
        if (has_ties)
            throw InvalidArgument("exact method requires tie-free data");
        if (!detail::exact_u_feasible(n1, n2))
            throw InvalidArgument("exact method infeasible for these group sizes");
        use_exact = true;
    } else if (method == Method::automatic) {
        use_exact = !has_ties && std::min(n1, n2) <= 8 && detail::exact_u_feasible(n1, n2);
    }

    if (use_exact) {
        res.method = ResolvedMethod::exact;
        res.tie_correction_applied = false;
        res.p_value = detail::exact_two_sided_p(res.u1, res.u2, n1, n2);
    } else {
        res.method = ResolvedMethod::normal_approx;
        res.tie_correction_applied = has_ties;
        const double mean_u = double(n1) * double(n2) / 2.0;
        const double var_u = double(n1) * double(n2) / 12.0 *
                             (double(n + 1) - tie_term / (double(n) * double(n - 1)));
        if (!(var_u > 0.0))
            throw DegenerateInput("Mann-Whitney variance vanished (fully tied data)");
        const double z = std::max(0.0, (std::abs(res.u1 - mean_u) - 0.5) / std::sqrt(var_u));
        res.p_value = std::erfc(z / std::sqrt(2.0));
    }

    res.p_value = std::clamp(res.p_value, std::numeric_limits<double>::denorm_min(), 1.0);
    return res;
}

} // namespace michscan
