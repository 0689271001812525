#pragma once

// Pair-square decomposition of the LRU hit rate and the positive pair kernels
// that govern its derivative along rays out of the uniform vector.
//
//   H_C(p)       = C/N + sum_{a<b} (p_a - p_b)^2 J_ab(p)
//   dH/dtheta    = 1/(N theta) sum_{a<b} (p_a - p_b)^2 K_ab(p)
//   K_ab / N     = Phi_r + Psi_r / N,   r = N - C - 1
//
// Phi_r and Psi_r are alternating subset sums over T = [N] \ {a, b}; they are
// also available as integrals of the positive product form of B_r, which is
// how their sign is certified numerically.

#include <irmlru/core_model.hpp>
#include <irmlru/exact_engine.hpp>
#include <irmlru/quadrature.hpp>
#include <irmlru/summation.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace irmlru {

/// Strictly-upper-triangular J_ab and K_ab, stored densely (row a, column b).
struct PairKernelMatrix {
    std::vector<double> j_values;
    std::vector<double> k_values;
    ModelParams params;
    bool conditioning_warning = false;

    std::size_t n() const noexcept { return static_cast<std::size_t>(params.n_items()); }
    double j(std::size_t a, std::size_t b) const { return j_values.at(a * n() + b); }
    double k(std::size_t a, std::size_t b) const { return k_values.at(a * n() + b); }
};

struct KernelSplit {
    double phi = 0.0;
    double psi = 0.0;
    double pair_mass = 0.0; // s = p_a + p_b
    int residual_rank = 0;  // r = L - 2
    std::vector<int> complement;
};

struct PairTerm {
    int a = 0;
    int b = 0;
    double value = 0.0;
};

struct RadialDerivativeReport {
    double theta = 0.0;
    double derivative = 0.0;
    std::vector<PairTerm> pair_terms;
    bool conditioning_warning = false;
};

struct BPolynomialValue {
    double alternating = 0.0;
    double product_form = 0.0;
};

struct PhiPsiQuadrature {
    double phi = 0.0;
    double psi = 0.0;
    int phi_order = 0;
    int psi_order = 0;
    double min_integrand = 0.0; // smallest B_r value met at any node
};

namespace detail {

inline void check_pair(const PopularityVector& p, const ModelParams& params, int a, int b,
                       const EngineLimits& limits)
{
    params.require_matches(p);
    params.require_partial();
    require_items_at_most(p.size(), limits.max_items_kernel, ErrorCode::TooManyItems,
                          "pair kernel");
    const int n = params.n_items();
    if (a < 0 || b < 0 || a >= n || b >= n || a >= b)
        throw Error(ErrorCode::BadPair, "pair (" + std::to_string(a) + ", " + std::to_string(b) +
                                            ") must satisfy 0 <= a < b < N");
}

inline bool poorly_conditioned(const PopularityVector& p)
{
    return p.min() < kConditioningThreshold;
}

inline std::vector<int> complement_of_pair(int n, int a, int b)
{
    std::vector<int> t;
    for (int j = 0; j < n; ++j)
        if (j != a && j != b)
            t.push_back(j);
    return t;
}

inline SubsetMask pair_mask(int a, int b)
{
    return (SubsetMask{1} << a) | (SubsetMask{1} << b);
}

// Expands a mask over the positions of `t` into a mask over [N].
inline SubsetMask scatter(SubsetMask local, std::span<const int> t)
{
    SubsetMask out = 0;
    for (; local != 0; local &= local - 1)
        out |= SubsetMask{1} << t[static_cast<std::size_t>(std::countr_zero(local))];
    return out;
}

// Per-size sums over U subset of T of 1/(s+p_U) and 1/(s+p_U)^2.
struct ComplementSums {
    std::vector<long double> inverse;
    std::vector<long double> inverse_square;
};

inline ComplementSums complement_sums(const PopularityVector& p, int a, int b)
{
    const auto t = complement_of_pair(static_cast<int>(p.size()), a, b);
    const std::size_t count = std::size_t{1} << t.size();
    std::vector<long double> mass(count);
    mass[0] = static_cast<long double>(p[static_cast<std::size_t>(a)]) +
              p[static_cast<std::size_t>(b)];
    std::vector<CompensatedSum<long double>> inv(t.size() + 1), inv2(t.size() + 1);
    for (SubsetMask u = 0; u < count; ++u) {
        if (u != 0) {
            const int low = std::countr_zero(u);
            mass[u] = mass[u & (u - 1)] + p[static_cast<std::size_t>(t[static_cast<std::size_t>(low)])];
        }
        const auto k = static_cast<std::size_t>(std::popcount(u));
        const long double w = 1.0L / mass[u];
        inv[k] += w;
        inv2[k] += w * w;
    }
    ComplementSums out;
    for (std::size_t k = 0; k <= t.size(); ++k) {
        out.inverse.push_back(inv[k].value());
        out.inverse_square.push_back(inv2[k].value());
    }
    return out;
}

inline long double signed_binomial(int k, int r)
{
    if (k < r)
        return 0.0L;
    const auto c = static_cast<long double>(binomial(k, r));
    return ((k - r) % 2 == 0) ? c : -c;
}

// Coefficient of z^r in prod_j (f_j + z g_j), f_j = 1 - y e^{-p_j t},
// g_j = e^{-p_j t}. All terms are nonnegative.
inline long double product_form(double y, double t, int r, std::span<const double> rates)
{
    std::vector<long double> e(static_cast<std::size_t>(r) + 1, 0.0L);
    e[0] = 1.0L;
    for (double rate : rates) {
        const double decay = std::exp(-rate * t);
        // 1 - y e^{-rt} = (1 - y) - y expm1(-rt), both parts nonnegative
        const long double keep = (1.0L - y) - static_cast<long double>(y) * std::expm1(-rate * t);
        for (std::size_t k = e.size(); k-- > 0;) {
            e[k] = e[k] * keep + (k > 0 ? e[k - 1] * decay : 0.0L);
        }
    }
    return std::pow(static_cast<long double>(y), r) * e[static_cast<std::size_t>(r)];
}

} // namespace detail

/// Pair coefficient J_ab of the pair-square expansion (0-based a < b).
inline double pair_coeff_J(const PopularityVector& p, const ModelParams& params, int a, int b,
                           const EngineLimits& limits = {})
{
    detail::check_pair(p, params, a, b, limits);
    const auto t = detail::complement_of_pair(params.n_items(), a, b);
    const SubsetTable table(p.probs());
    const SubsetMask ab = detail::pair_mask(a, b);
    const int L = params.residual_order();
    std::vector<CompensatedSum<long double>> by_size(static_cast<std::size_t>(params.n_items()) + 1);
    for (SubsetMask u = 0; u < (SubsetMask{1} << t.size()); ++u) {
        const SubsetMask r = ab | detail::scatter(u, t);
        const int m = std::popcount(r);
        if (m < L)
            continue;
        by_size[static_cast<std::size_t>(m)] += 1.0L / (m * table.mass(r));
    }
    CompensatedSum<long double> j;
    for (int m = L; m <= params.n_items(); ++m)
        j += static_cast<long double>(residual_coefficient(m, params)) *
             by_size[static_cast<std::size_t>(m)].value();
    return static_cast<double>(j.value());
}

/// K_ab straight from its defining subset sum over R containing {a, b}.
inline double pair_kernel_K(const PopularityVector& p, const ModelParams& params, int a, int b,
                            const EngineLimits& limits = {})
{
    detail::check_pair(p, params, a, b, limits);
    const auto t = detail::complement_of_pair(params.n_items(), a, b);
    const SubsetTable table(p.probs());
    const SubsetMask ab = detail::pair_mask(a, b);
    const int L = params.residual_order();
    const long double n = params.n_items();
    std::vector<CompensatedSum<long double>> by_size(static_cast<std::size_t>(params.n_items()) + 1);
    for (SubsetMask u = 0; u < (SubsetMask{1} << t.size()); ++u) {
        const SubsetMask r = ab | detail::scatter(u, t);
        const int m = std::popcount(r);
        if (m < L)
            continue;
        const long double pr = table.mass(r);
        by_size[static_cast<std::size_t>(m)] += n * (1.0L / (m * pr) + 1.0L / (n * pr * pr));
    }
    CompensatedSum<long double> k;
    for (int m = L; m <= params.n_items(); ++m)
        k += static_cast<long double>(residual_coefficient(m, params)) *
             by_size[static_cast<std::size_t>(m)].value();
    const double value = static_cast<double>(k.value());
    if (!(value > 0.0))
        throw Error(ErrorCode::NonPositiveKernel,
                    "K(" + std::to_string(a) + "," + std::to_string(b) +
                        ") = " + std::to_string(value) + " is not positive; this is an engine bug");
    return value;
}

/// Phi_r and Psi_r as alternating sums over U subset of T.
inline KernelSplit kernel_split(const PopularityVector& p, const ModelParams& params, int a, int b,
                                const EngineLimits& limits = {})
{
    detail::check_pair(p, params, a, b, limits);
    KernelSplit out;
    out.complement = detail::complement_of_pair(params.n_items(), a, b);
    out.pair_mass = p[static_cast<std::size_t>(a)] + p[static_cast<std::size_t>(b)];
    out.residual_rank = params.residual_order() - 2;
    const int r = out.residual_rank;
    const auto sums = detail::complement_sums(p, a, b);
    CompensatedSum<long double> phi, psi;
    for (int k = r; k <= static_cast<int>(out.complement.size()); ++k) {
        const long double c = detail::signed_binomial(k, r);
        phi += c * sums.inverse[static_cast<std::size_t>(k)] / (k + 2);
        psi += c * sums.inverse_square[static_cast<std::size_t>(k)];
    }
    out.phi = static_cast<double>(phi.value());
    out.psi = static_cast<double>(psi.value());
    return out;
}

/// Full J and K matrices in one sweep: each residual subset R feeds every
/// pair inside it.
inline PairKernelMatrix pair_kernel_matrix(const PopularityVector& p, const ModelParams& params,
                                           const EngineLimits& limits = {})
{
    params.require_matches(p);
    params.require_partial();
    detail::require_items_at_most(p.size(), limits.max_items_kernel, ErrorCode::TooManyItems,
                                  "pair_kernel_matrix");
    const std::size_t n = p.size();
    const int L = params.residual_order();
    const SubsetTable table(p.probs());
    // [pair][size] accumulators of 1/(m p_R) and 1/p_R^2
    std::vector<std::vector<CompensatedSum<long double>>> first(
        n * n, std::vector<CompensatedSum<long double>>(n + 1));
    auto second = first;
    std::vector<int> members;
    members.reserve(n);
    for (SubsetMask mask = 1; mask < table.size(); ++mask) {
        const int m = std::popcount(mask);
        if (m < L)
            continue;
        const long double pr = table.mass(mask);
        const long double w1 = 1.0L / (m * pr);
        const long double w2 = 1.0L / (pr * pr);
        members.clear();
        for (SubsetMask bits = mask; bits != 0; bits &= bits - 1)
            members.push_back(std::countr_zero(bits));
        for (std::size_t x = 0; x < members.size(); ++x)
            for (std::size_t y = x + 1; y < members.size(); ++y) {
                const std::size_t idx = static_cast<std::size_t>(members[x]) * n +
                                        static_cast<std::size_t>(members[y]);
                first[idx][static_cast<std::size_t>(m)] += w1;
                second[idx][static_cast<std::size_t>(m)] += w2;
            }
    }
    const auto alpha = detail::residual_weights(params);
    PairKernelMatrix out{std::vector<double>(n * n, 0.0), std::vector<double>(n * n, 0.0), params,
                         detail::poorly_conditioned(p)};
    const long double nn = static_cast<long double>(n);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) {
            const std::size_t idx = a * n + b;
            CompensatedSum<long double> j, k2;
            for (int m = L; m <= static_cast<int>(n); ++m) {
                j += alpha[static_cast<std::size_t>(m)] * first[idx][static_cast<std::size_t>(m)].value();
                k2 += alpha[static_cast<std::size_t>(m)] * second[idx][static_cast<std::size_t>(m)].value();
            }
            out.j_values[idx] = static_cast<double>(j.value());
            out.k_values[idx] = static_cast<double>(nn * j.value() + k2.value());
            if (!(out.k_values[idx] > 0.0))
                throw Error(ErrorCode::NonPositiveKernel,
                            "K(" + std::to_string(a) + "," + std::to_string(b) +
                                ") is not positive; this is an engine bug");
        }
    return out;
}

/// C/N + sum_{a<b} (p_a - p_b)^2 J_ab.
inline HitRateResult hit_rate_pair_square(const PopularityVector& p, const ModelParams& params,
                                          const EngineLimits& limits = {})
{
    params.require_matches(p);
    if (params.full())
        return {1.0, params.capacity(), HitRateMethod::pair_square, true};
    const auto kernels = pair_kernel_matrix(p, params, limits);
    const std::size_t n = p.size();
    CompensatedSum<long double> h;
    h += static_cast<long double>(params.capacity()) / static_cast<long double>(n);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) {
            const long double d = static_cast<long double>(p[a]) - p[b];
            h += d * d * kernels.j(a, b);
        }
    return {detail::checked_probability(h.value(), "hit rate"), params.capacity(),
            HitRateMethod::pair_square, false};
}

/// B_r(y, t) as the alternating subset sum and as the positive product form.
inline BPolynomialValue b_polynomial(double y, double t, int r, std::span<const double> rates)
{
    if (r < 0 || static_cast<std::size_t>(r) > rates.size())
        throw Error(ErrorCode::RankOutOfRange,
                    "rank " + std::to_string(r) + " outside [0, " + std::to_string(rates.size()) + "]");
    if (!(y >= 0.0 && y <= 1.0) || !(t >= 0.0))
        throw Error(ErrorCode::BadArgument, "b_polynomial needs y in [0,1] and t >= 0");
    if (rates.size() > 24)
        throw Error(ErrorCode::TooManyItems, "alternating form enumerates 2^|T| subsets; |T| <= 24");
    std::vector<CompensatedSum<long double>> by_size(rates.size() + 1);
    std::vector<long double> mass(std::size_t{1} << rates.size());
    for (SubsetMask u = 0; u < mass.size(); ++u) {
        if (u != 0)
            mass[u] = mass[u & (u - 1)] + rates[static_cast<std::size_t>(std::countr_zero(u))];
        by_size[static_cast<std::size_t>(std::popcount(u))] += std::exp(-mass[u] * t);
    }
    CompensatedSum<long double> alt;
    for (int k = r; k <= static_cast<int>(rates.size()); ++k)
        alt += detail::signed_binomial(k, r) * std::pow(static_cast<long double>(y), k) *
               by_size[static_cast<std::size_t>(k)].value();
    return {static_cast<double>(alt.value()),
            static_cast<double>(detail::product_form(y, t, r, rates))};
}

/// Phi_r and Psi_r as integrals of the product form of B_r:
///   Phi = int e^{-st} int_0^1 y B_r(y,t) dy dt,   Psi = int t e^{-st} B_r(1,t) dt.
inline PhiPsiQuadrature phi_psi_quadrature(const PopularityVector& p, const ModelParams& params,
                                           int a, int b, const QuadratureConfig& quad = {},
                                           const EngineLimits& limits = {})
{
    detail::check_pair(p, params, a, b, limits);
    quad.validate();
    const auto t_items = detail::complement_of_pair(params.n_items(), a, b);
    std::vector<double> rates;
    for (int j : t_items)
        rates.push_back(p[static_cast<std::size_t>(j)]);
    const int r = params.residual_order() - 2;
    const double s = p[static_cast<std::size_t>(a)] + p[static_cast<std::size_t>(b)];
    const GaussRule& ylaw = gauss_legendre_unit(quad.y_order);

    double min_b = std::numeric_limits<double>::infinity();
    auto inner = [&](double t) {
        long double acc = 0.0L;
        for (std::size_t i = 0; i < ylaw.size(); ++i) {
            const double y = ylaw.nodes[i];
            const long double bval = detail::product_form(y, t, r, rates);
            min_b = std::min(min_b, static_cast<double>(bval));
            acc += static_cast<long double>(ylaw.weights[i]) * y * bval;
        }
        return static_cast<double>(acc);
    };
    auto psi_integrand = [&](double t) {
        const long double bval = detail::product_form(1.0, t, r, rates);
        min_b = std::min(min_b, static_cast<double>(bval));
        return static_cast<double>(t * bval);
    };
    const auto phi = integrate_exponential(inner, s, quad);
    const auto psi = integrate_exponential(psi_integrand, s, quad);
    return {phi.value, psi.value, phi.order, psi.order, min_b};
}

/// dH_C/dtheta along u + theta (q - u), as a sum of positive pair terms.
inline RadialDerivativeReport radial_derivative(const PopularityVector& q, double theta,
                                                const ModelParams& params,
                                                const EngineLimits& limits = {})
{
    if (!(theta >= 0.0 && theta <= 1.0))
        throw Error(ErrorCode::ThetaOutOfRange, "theta must lie in [0, 1]");
    params.require_matches(q);
    params.require_partial();
    RadialDerivativeReport out;
    out.theta = theta;
    if (theta == 0.0)
        return out; // pair differences scale like theta, so the limit is 0
    const auto x = ray_point(q, theta);
    out.conditioning_warning = detail::poorly_conditioned(x);
    const auto kernels = pair_kernel_matrix(x, params, limits);
    const std::size_t n = q.size();
    CompensatedSum<long double> total;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) {
            // p_a(theta) - p_b(theta) = theta (q_a - q_b), so the term is
            // theta (q_a - q_b)^2 K_ab / N
            const long double d = static_cast<long double>(q[a]) - q[b];
            const long double term = theta * d * d * kernels.k(a, b) / static_cast<long double>(n);
            out.pair_terms.push_back({static_cast<int>(a), static_cast<int>(b), static_cast<double>(term)});
            total += term;
        }
    out.derivative = static_cast<double>(total.value());
    return out;
}

} // namespace irmlru
