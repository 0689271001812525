#pragma once

// Occupancy probabilities as functions of raw clock rates and their
// sensitivities. With A_i ~ Exp(lambda_i) independent and S_C the C smallest
// ages, pi_k(lambda) = P(k in S_C) and for i != k
//
//   d pi_k / d lambda_i = -lambda_k G_ik,
//   G_ik = int_0^inf t e^{-(lambda_i + lambda_k) t} P(M_ik(t) = C - 1) dt,
//
// where M_ik(t) counts the other clocks that rang before t. The resulting
// master identity gives a second, independent route to dH/dtheta.

#include <irmlru/core_model.hpp>
#include <irmlru/exact_engine.hpp>
#include <irmlru/quadrature.hpp>
#include <irmlru/random.hpp>
#include <irmlru/summation.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace irmlru {

/// Strictly positive clock rates; no normalization (pi is homogeneous of degree 0).
class RateVector {
public:
    explicit RateVector(std::vector<double> rates) : rates_(std::move(rates))
    {
        if (rates_.size() < 2)
            throw Error(ErrorCode::BadLength, "rate vector needs at least 2 entries");
        for (std::size_t i = 0; i < rates_.size(); ++i)
            if (!(rates_[i] > 0.0) || !std::isfinite(rates_[i]))
                throw Error(ErrorCode::NonPositiveEntry,
                            "rate " + std::to_string(i) + " is not a finite positive number");
    }

    explicit RateVector(const PopularityVector& p) : rates_(p.to_vector()) {}

    std::size_t size() const noexcept { return rates_.size(); }
    double operator[](std::size_t i) const noexcept { return rates_[i]; }
    std::span<const double> rates() const noexcept { return rates_; }

    PopularityVector normalized() const { return validate_popularity(rates_); }

private:
    std::vector<double> rates_;
};

struct SensitivityKernel {
    std::vector<double> g_values; // N x N, symmetric, diagonal zero
    QuadratureConfig quad_config;
    std::size_t n = 0;

    double g(std::size_t i, std::size_t k) const { return g_values.at(i * n + k); }
};

struct JacobianReport {
    std::vector<double> jacobian; // row i, column k: d pi_k / d lambda_i
    std::size_t n = 0;
    std::optional<double> t1;
    std::optional<double> t2;
    std::optional<double> derivative;

    double at(std::size_t i, std::size_t k) const { return jacobian.at(i * n + k); }
};

/// P(exactly m successes) for independent Bernoulli trials.
inline double poisson_binomial_pmf(std::span<const double> success_probs, int m)
{
    if (m < 0 || static_cast<std::size_t>(m) > success_probs.size())
        throw Error(ErrorCode::MOutOfRange, "success count " + std::to_string(m) + " outside [0, " +
                                                std::to_string(success_probs.size()) + "]");
    std::vector<long double> dist(static_cast<std::size_t>(m) + 1, 0.0L);
    dist[0] = 1.0L;
    for (double x : success_probs) {
        if (!(x >= 0.0 && x <= 1.0))
            throw Error(ErrorCode::ProbOutOfRange, "success probability outside [0, 1]");
        for (std::size_t j = dist.size(); j-- > 0;)
            dist[j] = dist[j] * (1.0L - x) + (j > 0 ? dist[j - 1] * x : 0.0L);
    }
    return static_cast<double>(dist[static_cast<std::size_t>(m)]);
}

namespace detail {

inline void check_rates(const RateVector& lambda, const ModelParams& params)
{
    if (lambda.size() != static_cast<std::size_t>(params.n_items()))
        throw Error(ErrorCode::BadLength, "rate vector has " + std::to_string(lambda.size()) +
                                              " entries, parameters say " +
                                              std::to_string(params.n_items()));
    params.require_partial();
}

} // namespace detail

/// G_ik by order-doubling Gauss-Laguerre against e^{-(lambda_i + lambda_k) t}.
/// Always evaluated on the ordered pair (min, max) so G_ik == G_ki bit for bit.
inline double sensitivity_G(const RateVector& lambda, const ModelParams& params, int i, int k,
                            const QuadratureConfig& quad = {})
{
    detail::check_rates(lambda, params);
    const int n = params.n_items();
    if (i < 0 || k < 0 || i >= n || k >= n || i == k)
        throw Error(ErrorCode::BadPair, "sensitivity kernel needs two distinct items");
    const auto lo = static_cast<std::size_t>(std::min(i, k));
    const auto hi = static_cast<std::size_t>(std::max(i, k));
    std::vector<double> others;
    for (std::size_t j = 0; j < lambda.size(); ++j)
        if (j != lo && j != hi)
            others.push_back(lambda[j]);
    const int target = params.capacity() - 1;
    std::vector<double> fired(others.size());
    auto integrand = [&](double t) {
        for (std::size_t j = 0; j < others.size(); ++j)
            fired[j] = -std::expm1(-others[j] * t);
        return t * poisson_binomial_pmf(fired, target);
    };
    return integrate_exponential(integrand, lambda[lo] + lambda[hi], quad).value;
}

inline SensitivityKernel sensitivity_kernel(const RateVector& lambda, const ModelParams& params,
                                            const QuadratureConfig& quad = {},
                                            const EngineLimits& limits = {})
{
    detail::check_rates(lambda, params);
    detail::require_items_at_most(lambda.size(), limits.max_items_jacobian,
                                  ErrorCode::TooManyItems, "sensitivity_kernel");
    const std::size_t n = lambda.size();
    SensitivityKernel out{std::vector<double>(n * n, 0.0), quad, n};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = i + 1; k < n; ++k) {
            const double g = sensitivity_G(lambda, params, static_cast<int>(i), static_cast<int>(k), quad);
            out.g_values[i * n + k] = g;
            out.g_values[k * n + i] = g;
        }
    return out;
}

namespace detail {

inline std::vector<double> jacobian_from_kernel(const RateVector& lambda, const SensitivityKernel& g)
{
    const std::size_t n = lambda.size();
    std::vector<double> jac(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        CompensatedSum<long double> diag;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i)
                continue;
            const double entry = lambda[k] * g.g(i, k);
            jac[i * n + k] = -entry;
            diag += entry;
        }
        jac[i * n + i] = static_cast<double>(diag.value());
    }
    return jac;
}

} // namespace detail

/// d pi_k / d lambda_i for all i, k. Off-diagonal -lambda_k G_ik, diagonal
/// fixed by the vanishing row sums.
inline JacobianReport occupancy_jacobian(const RateVector& lambda, const ModelParams& params,
                                         const QuadratureConfig& quad = {},
                                         const EngineLimits& limits = {})
{
    const auto g = sensitivity_kernel(lambda, params, quad, limits);
    JacobianReport out;
    out.n = lambda.size();
    out.jacobian = detail::jacobian_from_kernel(lambda, g);
    return out;
}

/// pi(lambda) through the exact engine on lambda / sum(lambda).
inline OccupancyProfile occupancy_at_rates(const RateVector& lambda, const ModelParams& params,
                                           const EngineLimits& limits = {})
{
    long double total = 0.0L;
    for (double x : lambda.rates())
        total += x;
    std::vector<double> p(lambda.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        p[i] = static_cast<double>(lambda[i] / total);
    return occupancy_per_item(validate_popularity(p), params, limits);
}

/// Ordering-law probability that the clocks ring in the order sigma (0-based).
inline double ordering_probability(const RateVector& lambda, std::span<const int> sigma)
{
    const std::size_t n = lambda.size();
    if (sigma.size() != n)
        throw Error(ErrorCode::NotAPermutation, "sigma has the wrong length");
    std::vector<bool> seen(n, false);
    for (int s : sigma) {
        if (s < 0 || static_cast<std::size_t>(s) >= n || seen[static_cast<std::size_t>(s)])
            throw Error(ErrorCode::NotAPermutation, "sigma is not a permutation of [N]");
        seen[static_cast<std::size_t>(s)] = true;
    }
    return static_cast<double>(detail::ordering_product(lambda.rates(), sigma));
}

/// Second route to dH/dtheta along u + theta (q - u):
///   T1 = (H_C(p(theta)) - C/N) / theta,
///   T2 = 1/(N theta) sum_{i<k} G_ik (lambda_i - lambda_k)^2.
inline JacobianReport master_identity_derivative(const PopularityVector& q, double theta,
                                                 const ModelParams& params,
                                                 const QuadratureConfig& quad = {},
                                                 const EngineLimits& limits = {})
{
    if (!(theta > 0.0 && theta <= 1.0))
        throw Error(ErrorCode::ThetaOutOfRange, "master identity needs theta in (0, 1]");
    params.require_matches(q);
    params.require_partial();
    const auto x = ray_point(q, theta);
    const RateVector lambda(x);
    const auto g = sensitivity_kernel(lambda, params, quad, limits);
    const std::size_t n = q.size();
    const double h = hit_rate_residual(x, params, limits).value;

    JacobianReport out;
    out.n = n;
    out.jacobian = detail::jacobian_from_kernel(lambda, g);
    out.t1 = (h - static_cast<double>(params.capacity()) / static_cast<double>(n)) / theta;
    // lambda_i - lambda_k = theta (q_i - q_k)
    CompensatedSum<long double> t2;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = i + 1; k < n; ++k) {
            const long double d = static_cast<long double>(q[i]) - q[k];
            t2 += g.g(i, k) * d * d;
        }
    out.t2 = static_cast<double>(t2.value() * theta / static_cast<long double>(n));
    out.derivative = *out.t1 + *out.t2;
    return out;
}

/// sum_{i<k} G_ik (lambda_i - lambda_k)(lambda_k delta_i - lambda_i delta_k): the
/// occupancy-sensitivity part of a directional derivative along delta.
inline double directional_minor_sum(const RateVector& lambda, std::span<const double> delta,
                                    const SensitivityKernel& g)
{
    if (delta.size() != lambda.size())
        throw Error(ErrorCode::BadLength, "direction has the wrong length");
    CompensatedSum<long double> total;
    for (std::size_t i = 0; i < lambda.size(); ++i)
        for (std::size_t k = i + 1; k < lambda.size(); ++k)
            total += g.g(i, k) * (static_cast<long double>(lambda[i]) - lambda[k]) *
                     (static_cast<long double>(lambda[k]) * delta[i] -
                      static_cast<long double>(lambda[i]) * delta[k]);
    return static_cast<double>(total.value());
}

struct MinorWitness {
    std::vector<double> lambda;
    std::vector<double> delta;
    int capacity = 0;
    double value = 0.0;
    int trials_used = 0;
};

/// Randomized demonstrator (not a proof): looks for a point and a zero-sum
/// tangent direction where the directional minor sum is negative. Rates are
/// uniform on [0.1, 1]^N, directions are centred Gaussians.
inline std::optional<MinorWitness> find_negative_minor(int n, int trials, std::uint64_t seed,
                                                       const QuadratureConfig& quad = {})
{
    if (n < 2)
        throw Error(ErrorCode::BadLength, "need at least 2 items");
    Rng rng(seed);
    std::normal_distribution<double> normal;
    std::mt19937_64 gauss_engine(rng.next());
    for (int trial = 1; trial <= trials; ++trial) {
        std::vector<double> rates(static_cast<std::size_t>(n));
        for (double& x : rates)
            x = rng.uniform(0.1, 1.0);
        const int capacity = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(n - 1)));
        std::vector<double> delta(static_cast<std::size_t>(n));
        double mean = 0.0;
        for (double& d : delta) {
            d = normal(gauss_engine);
            mean += d;
        }
        mean /= n;
        for (double& d : delta)
            d -= mean;
        const RateVector lambda(rates);
        const ModelParams params(n, capacity);
        const auto g = sensitivity_kernel(lambda, params, quad);
        const double value = directional_minor_sum(lambda, delta, g);
        if (value < 0.0)
            return MinorWitness{rates, delta, capacity, value, trial};
    }
    return std::nullopt;
}

} // namespace irmlru
