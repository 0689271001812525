#pragma once

// Exact stationary LRU / move-to-front quantities under the independent
// reference model, computed by enumerating residual subsets with a bitmask.
// A permutation-level oracle built on the ordering law lives alongside for
// cross-checking.

#include <irmlru/core_model.hpp>
#include <irmlru/summation.hpp>

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace irmlru {

/// Size caps for the enumeration engines. Runtime is exponential in N.
struct EngineLimits {
    int max_items = 20;          // residual / occupancy / search cost
    int max_items_kernel = 18;   // full pair-kernel sweeps
    int max_items_jacobian = 12; // quadrature-based sensitivity kernel
    int max_items_oracle = 9;    // N! permutation enumeration
    int max_items_rational = 12; // exact-rational residual evaluation
};

inline constexpr double kConditioningThreshold = 1e-6;

using SubsetMask = std::uint32_t;

struct SubsetTerm {
    SubsetMask mask = 0;
    double subset_mass = 0.0;
    int cardinality = 0;
};

/// p_R and sum_{i in R} p_i^2 for every R subset of [N], built incrementally.
class SubsetTable {
public:
    explicit SubsetTable(std::span<const double> p)
        : n_(static_cast<int>(p.size()))
        , mass_(std::size_t{1} << p.size())
        , square_(std::size_t{1} << p.size())
    {
        // Rescale by the extended-precision total: a double vector sums to 1
        // only within rounding, and every sum here is linear in that scale.
        long double total = 0.0L;
        for (double x : p)
            total += x;
        for (SubsetMask mask = 1; mask < mass_.size(); ++mask) {
            const int low = std::countr_zero(mask);
            const SubsetMask rest = mask & (mask - 1);
            const long double x = p[static_cast<std::size_t>(low)] / total;
            mass_[mask] = mass_[rest] + x;
            square_[mask] = square_[rest] + x * x;
        }
    }

    int n_items() const noexcept { return n_; }
    std::size_t size() const noexcept { return mass_.size(); }
    long double mass(SubsetMask mask) const noexcept { return mass_[mask]; }
    long double square_sum(SubsetMask mask) const noexcept { return square_[mask]; }

    SubsetTerm term(SubsetMask mask) const noexcept
    {
        return {mask, static_cast<double>(mass_[mask]), std::popcount(mask)};
    }

private:
    int n_;
    std::vector<long double> mass_;
    std::vector<long double> square_;
};

enum class HitRateMethod { residual, pair_square, brute_force, per_item };

inline std::string_view to_string(HitRateMethod m) noexcept
{
    switch (m) {
    case HitRateMethod::residual: return "residual";
    case HitRateMethod::pair_square: return "pair_square";
    case HitRateMethod::brute_force: return "brute_force";
    case HitRateMethod::per_item: return "per_item";
    }
    return "unknown";
}

struct HitRateResult {
    double value = 0.0;
    int capacity = 0;
    HitRateMethod method = HitRateMethod::residual;
    bool full_capacity = false; // C = N, answered by the constant path
};

struct OccupancyProfile {
    std::vector<double> pi;
    int capacity = 0;
};

/// Law of the stationary move-to-front search cost D. Index c - 1 holds
/// P(D <= c) and P(D = c) respectively.
struct SearchCostDistribution {
    std::vector<double> cdf;
    std::vector<double> pmf;

    std::size_t n_items() const noexcept { return cdf.size(); }
    double cdf_at(int depth) const { return cdf.at(static_cast<std::size_t>(depth - 1)); }
    double pmf_at(int depth) const { return pmf.at(static_cast<std::size_t>(depth - 1)); }
};

namespace detail {

inline void require_items_at_most(std::size_t n, int cap, ErrorCode code, const char* what)
{
    if (n > static_cast<std::size_t>(cap))
        throw Error(code, std::string(what) + ": N = " + std::to_string(n) + " exceeds cap " +
                              std::to_string(cap));
}

inline double checked_probability(long double value, const char* what)
{
    if (!(value >= -1e-9L && value <= 1.0L + 1e-9L))
        throw Error(ErrorCode::NumericalError,
                    std::string(what) + " left [0,1]: " + std::to_string(static_cast<double>(value)));
    return static_cast<double>(std::clamp<long double>(value, 0.0L, 1.0L));
}

inline std::vector<long double> residual_weights(const ModelParams& params)
{
    std::vector<long double> alpha(static_cast<std::size_t>(params.n_items()) + 1, 0.0L);
    for (int m = params.residual_order(); m <= params.n_items(); ++m)
        alpha[static_cast<std::size_t>(m)] =
            static_cast<long double>(residual_coefficient(m, params));
    return alpha;
}

// Sum over |R| >= L of alpha_|R| * (sum_{i in R} p_i^2) / p_R. The positive
// inner sums are grouped by |R| so that the alternating combination only
// touches N values.
inline long double residual_sum(const SubsetTable& table, const ModelParams& params)
{
    const int n = table.n_items();
    const int L = params.residual_order();
    std::vector<CompensatedSum<long double>> by_size(static_cast<std::size_t>(n) + 1);
    for (SubsetMask mask = 1; mask < table.size(); ++mask) {
        const int m = std::popcount(mask);
        if (m < L)
            continue;
        by_size[static_cast<std::size_t>(m)] += table.square_sum(mask) / table.mass(mask);
    }
    const auto alpha = residual_weights(params);
    CompensatedSum<long double> total;
    for (int m = L; m <= n; ++m)
        total += alpha[static_cast<std::size_t>(m)] * by_size[static_cast<std::size_t>(m)].value();
    return total.value();
}

// Ordering-law probability of a full permutation of clock rates.
inline long double ordering_product(std::span<const double> rates, std::span<const int> sigma)
{
    const std::size_t n = sigma.size();
    long double prob = 1.0L;
    long double remaining = 0.0L;
    for (std::size_t r = n; r-- > 0;) {
        remaining += rates[static_cast<std::size_t>(sigma[r])];
        prob *= rates[static_cast<std::size_t>(sigma[r])] / remaining;
    }
    return prob;
}

} // namespace detail

/// The residual-subset sum before rounding to double. Finite differences of
/// H at small steps need the extra digits.
inline long double hit_rate_residual_extended(const PopularityVector& p, const ModelParams& params,
                                              const EngineLimits& limits = {})
{
    params.require_matches(p);
    if (params.full())
        return 1.0L;
    detail::require_items_at_most(p.size(), limits.max_items, ErrorCode::TooManyItems,
                                  "hit_rate_residual");
    return detail::residual_sum(SubsetTable(p.probs()), params);
}

/// Exact hit rate from the residual-subset expansion.
inline HitRateResult hit_rate_residual(const PopularityVector& p, const ModelParams& params,
                                       const EngineLimits& limits = {})
{
    const long double h = hit_rate_residual_extended(p, params, limits);
    return {detail::checked_probability(h, "hit rate"), params.capacity(), HitRateMethod::residual,
            params.full()};
}

/// pi_k = P(k cached) = p_k * sum_{R containing k, |R| >= L} alpha_|R| / p_R.
inline OccupancyProfile occupancy_per_item(const PopularityVector& p, const ModelParams& params,
                                           const EngineLimits& limits = {})
{
    params.require_matches(p);
    const std::size_t n = p.size();
    if (params.full())
        return {std::vector<double>(n, 1.0), params.capacity()};
    detail::require_items_at_most(n, limits.max_items, ErrorCode::TooManyItems,
                                  "occupancy_per_item");
    const SubsetTable table(p.probs());
    const int L = params.residual_order();

    // inverse_mass[k][m] = sum over R containing k with |R| = m of 1 / p_R
    std::vector<std::vector<CompensatedSum<long double>>> inverse_mass(
        n, std::vector<CompensatedSum<long double>>(n + 1));
    for (SubsetMask mask = 1; mask < table.size(); ++mask) {
        const int m = std::popcount(mask);
        if (m < L)
            continue;
        const long double w = 1.0L / table.mass(mask);
        for (SubsetMask bits = mask; bits != 0; bits &= bits - 1)
            inverse_mass[static_cast<std::size_t>(std::countr_zero(bits))]
                        [static_cast<std::size_t>(m)] += w;
    }
    const auto alpha = detail::residual_weights(params);
    OccupancyProfile out{std::vector<double>(n), params.capacity()};
    for (std::size_t k = 0; k < n; ++k) {
        CompensatedSum<long double> s;
        for (int m = L; m <= static_cast<int>(n); ++m)
            s += alpha[static_cast<std::size_t>(m)] *
                 inverse_mass[k][static_cast<std::size_t>(m)].value();
        out.pi[k] = detail::checked_probability(table.mass(SubsetMask{1} << k) * s.value(), "occupancy probability");
    }
    return out;
}

/// Hit rate through the per-item occupancy form, sum_k p_k pi_k.
inline HitRateResult hit_rate_per_item(const PopularityVector& p, const ModelParams& params,
                                       const EngineLimits& limits = {})
{
    const auto occ = occupancy_per_item(p, params, limits);
    CompensatedSum<long double> h;
    for (std::size_t k = 0; k < p.size(); ++k)
        h += static_cast<long double>(p[k]) * occ.pi[k];
    return {detail::checked_probability(h.value(), "hit rate"), params.capacity(),
            HitRateMethod::per_item, params.full()};
}

/// P(D <= C) = H_C for every capacity; the subset table is shared.
inline SearchCostDistribution search_cost_distribution(const PopularityVector& p,
                                                       const EngineLimits& limits = {})
{
    const std::size_t n = p.size();
    detail::require_items_at_most(n, limits.max_items, ErrorCode::TooManyItems,
                                  "search_cost_distribution");
    const SubsetTable table(p.probs());
    SearchCostDistribution out;
    out.cdf.resize(n);
    out.pmf.resize(n);
    for (std::size_t c = 1; c < n; ++c) {
        const ModelParams params(static_cast<int>(n), static_cast<int>(c));
        out.cdf[c - 1] = detail::checked_probability(detail::residual_sum(table, params), "cdf");
    }
    out.cdf[n - 1] = 1.0;
    double previous = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        double mass = out.cdf[c] - previous;
        if (mass < -1e-12)
            throw Error(ErrorCode::NumericalError,
                        "search-cost pmf negative at depth " + std::to_string(c + 1));
        out.pmf[c] = std::max(mass, 0.0);
        previous = out.cdf[c];
    }
    return out;
}

/// E g(D) via the tail-sum decomposition g(1) + sum_c (g(c+1) - g(c)) P(D > c).
inline double expected_cost_functional(const SearchCostDistribution& dist,
                                       std::span<const double> g)
{
    const std::size_t n = dist.n_items();
    if (g.size() != n)
        throw Error(ErrorCode::BadLength, "cost vector has " + std::to_string(g.size()) +
                                              " entries, expected " + std::to_string(n));
    CompensatedSum<long double> total;
    total += g[0];
    for (std::size_t c = 1; c < n; ++c)
        total += static_cast<long double>(g[c] - g[c - 1]) * (1.0L - dist.cdf[c - 1]);
    return static_cast<double>(total.value());
}

inline double expected_cost_functional(const PopularityVector& p, std::span<const double> g,
                                       const EngineLimits& limits = {})
{
    if (g.size() != p.size())
        throw Error(ErrorCode::BadLength, "cost vector has " + std::to_string(g.size()) +
                                              " entries, expected " + std::to_string(p.size()));
    return expected_cost_functional(search_cost_distribution(p, limits), g);
}

/// E D = 1 + sum_c M_c(p).
inline double expected_search_cost(const SearchCostDistribution& dist)
{
    std::vector<double> depth(dist.n_items());
    std::iota(depth.begin(), depth.end(), 1.0);
    return expected_cost_functional(dist, depth);
}

/// Ground truth by enumerating all N! recency orders under the ordering law.
inline HitRateResult brute_force_hit_rate(const PopularityVector& p, const ModelParams& params,
                                          const EngineLimits& limits = {})
{
    params.require_matches(p);
    detail::require_items_at_most(p.size(), limits.max_items_oracle,
                                  ErrorCode::TooManyItemsForOracle, "brute_force_hit_rate");
    std::vector<int> sigma(p.size());
    std::iota(sigma.begin(), sigma.end(), 0);
    const auto c = static_cast<std::size_t>(params.capacity());
    CompensatedSum<long double> h;
    do {
        long double cached = 0.0L;
        for (std::size_t r = 0; r < c; ++r)
            cached += p[static_cast<std::size_t>(sigma[r])];
        h += detail::ordering_product(p.probs(), sigma) * cached;
    } while (std::next_permutation(sigma.begin(), sigma.end()));
    return {detail::checked_probability(h.value(), "hit rate"), params.capacity(),
            HitRateMethod::brute_force, params.full()};
}

/// Permutation-level occupancy probabilities; companion to brute_force_hit_rate.
inline OccupancyProfile brute_force_occupancy(const PopularityVector& p, const ModelParams& params,
                                              const EngineLimits& limits = {})
{
    params.require_matches(p);
    detail::require_items_at_most(p.size(), limits.max_items_oracle,
                                  ErrorCode::TooManyItemsForOracle, "brute_force_occupancy");
    const std::size_t n = p.size();
    std::vector<int> sigma(n);
    std::iota(sigma.begin(), sigma.end(), 0);
    std::vector<CompensatedSum<long double>> acc(n);
    do {
        const long double w = detail::ordering_product(p.probs(), sigma);
        for (std::size_t r = 0; r < static_cast<std::size_t>(params.capacity()); ++r)
            acc[static_cast<std::size_t>(sigma[r])] += w;
    } while (std::next_permutation(sigma.begin(), sigma.end()));
    OccupancyProfile out{std::vector<double>(n), params.capacity()};
    for (std::size_t k = 0; k < n; ++k)
        out.pi[k] = static_cast<double>(acc[k].value());
    return out;
}

// ---------------------------------------------------------------------------
// Exact-rational evaluation of the residual expansion. Every double is a
// dyadic rational k / 2^e, so with a common exponent the subset masses are
// integers K_R and each term is alpha_m * Q_R / (2^e K_R). The fraction is
// accumulated unreduced and normalized once at the end.

using Rational = boost::multiprecision::cpp_rational;

inline Rational hit_rate_residual_rational(const PopularityVector& p, const ModelParams& params,
                                           const EngineLimits& limits = {})
{
    using boost::multiprecision::cpp_int;
    params.require_matches(p);
    if (params.full())
        return Rational(1);
    detail::require_items_at_most(p.size(), limits.max_items_rational, ErrorCode::TooManyItems,
                                  "hit_rate_residual_rational");
    const std::size_t n = p.size();
    int min_exp = 0;
    for (double x : p.probs()) {
        int e = 0;
        std::frexp(x, &e);
        min_exp = std::min(min_exp, e - 53);
    }
    // x = k * 2^min_exp with integer k
    std::vector<cpp_int> k(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double scaled = std::ldexp(p[i], -min_exp);
        k[i] = cpp_int(scaled);
    }
    std::vector<cpp_int> mass(std::size_t{1} << n), square(std::size_t{1} << n);
    for (SubsetMask mask = 1; mask < mass.size(); ++mask) {
        const auto low = static_cast<std::size_t>(std::countr_zero(mask));
        mass[mask] = mass[mask & (mask - 1)] + k[low];
        square[mask] = square[mask & (mask - 1)] + k[low] * k[low];
    }
    // sum_i p_i^2 / p_R = (Q_R / K_R) * 2^min_exp
    cpp_int num = 0, den = 1;
    const int L = params.residual_order();
    for (SubsetMask mask = 1; mask < mass.size(); ++mask) {
        const int m = std::popcount(mask);
        if (m < L)
            continue;
        const cpp_int a = cpp_int(residual_coefficient(m, params)) * square[mask];
        num = num * mass[mask] + a * den;
        den *= mass[mask];
    }
    Rational h(num, den);
    if (min_exp < 0)
        h /= Rational(cpp_int(1) << -min_exp);
    else
        h *= Rational(cpp_int(1) << min_exp);
    return h;
}

} // namespace irmlru
