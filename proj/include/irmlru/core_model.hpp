#pragma once

// Domain types shared by every engine: popularity vectors on the open
// simplex, cache parameters, rays out of the uniform vector, and the exact
// integer coefficients of the residual-subset expansion.

#include <irmlru/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace irmlru {

inline constexpr double kSumTolerance = 1e-6;

/// Request distribution of the independent reference model. Always a point
/// of the open simplex: N >= 2, every entry > 0, entries sum to one.
class PopularityVector {
public:
    static PopularityVector uniform(std::size_t n)
    {
        if (n < 2)
            throw Error(ErrorCode::BadLength, "popularity vector needs at least 2 items");
        return PopularityVector(std::vector<double>(n, 1.0 / static_cast<double>(n)));
    }

    std::size_t size() const noexcept { return probs_.size(); }
    double operator[](std::size_t i) const noexcept { return probs_[i]; }
    std::span<const double> probs() const noexcept { return probs_; }
    const std::vector<double>& to_vector() const noexcept { return probs_; }

    double min() const noexcept { return *std::min_element(probs_.begin(), probs_.end()); }
    double max() const noexcept { return *std::max_element(probs_.begin(), probs_.end()); }

    bool is_uniform(double tol = 0.0) const noexcept
    {
        const double u = 1.0 / static_cast<double>(size());
        for (double x : probs_)
            if (std::fabs(x - u) > tol)
                return false;
        return true;
    }

    friend bool operator==(const PopularityVector&, const PopularityVector&) = default;

private:
    explicit PopularityVector(std::vector<double> probs) : probs_(std::move(probs)) {}

    friend PopularityVector validate_popularity(std::span<const double>);
    friend PopularityVector ray_point(const PopularityVector&, double);

    std::vector<double> probs_;
};

/// Checks membership in the open simplex and renormalizes by the sum.
inline PopularityVector validate_popularity(std::span<const double> raw)
{
    if (raw.size() < 2)
        throw Error(ErrorCode::BadLength,
                    "popularity vector needs at least 2 items, got " + std::to_string(raw.size()));
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (!(raw[i] > 0.0) || !std::isfinite(raw[i]))
            throw Error(ErrorCode::NonPositiveEntry,
                        "entry " + std::to_string(i) + " is not a finite positive number");
    }
    long double sum = 0;
    for (double x : raw)
        sum += x;
    if (std::fabs(static_cast<double>(sum) - 1.0) > kSumTolerance)
        throw Error(ErrorCode::SumOutOfTolerance,
                    "entries sum to " + std::to_string(static_cast<double>(sum)));
    std::vector<double> probs(raw.begin(), raw.end());
    for (double& x : probs)
        x = static_cast<double>(x / sum);
    return PopularityVector(std::move(probs));
}

inline PopularityVector validate_popularity(const std::vector<double>& raw)
{
    return validate_popularity(std::span<const double>(raw));
}

/// Cache geometry: N items, capacity C, residual order L = N - C + 1.
class ModelParams {
public:
    ModelParams(int n_items, int capacity) : n_(n_items), c_(capacity)
    {
        if (n_items < 1)
            throw Error(ErrorCode::BadLength, "item count must be positive");
        if (capacity < 1 || capacity > n_items)
            throw Error(ErrorCode::CapacityOutOfRange,
                        "capacity " + std::to_string(capacity) + " outside [1, " +
                            std::to_string(n_items) + "]");
    }

    int n_items() const noexcept { return n_; }
    int capacity() const noexcept { return c_; }
    int residual_order() const noexcept { return n_ - c_ + 1; }
    bool full() const noexcept { return c_ == n_; }

    /// Throws CapacityFull for C = N, which the residual machinery excludes.
    void require_partial() const
    {
        if (full())
            throw Error(ErrorCode::CapacityFull, "formula requires capacity < item count");
    }

    void require_matches(const PopularityVector& p) const
    {
        if (p.size() != static_cast<std::size_t>(n_))
            throw Error(ErrorCode::BadLength, "popularity vector has " + std::to_string(p.size()) +
                                                  " items, parameters say " + std::to_string(n_));
    }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;

private:
    int n_;
    int c_;
};

/// u + theta (q - u). The two endpoints are reproduced exactly.
inline PopularityVector ray_point(const PopularityVector& q, double theta)
{
    if (!(theta >= 0.0 && theta <= 1.0))
        throw Error(ErrorCode::ThetaOutOfRange, "theta must lie in [0, 1]");
    const double u = 1.0 / static_cast<double>(q.size());
    std::vector<double> x(q.size());
    for (std::size_t i = 0; i < q.size(); ++i)
        x[i] = (1.0 - theta) * u + theta * q[i];
    return PopularityVector(std::move(x));
}

struct RayPath {
    PopularityVector endpoint;
    double theta = 0.0;

    PopularityVector point() const { return ray_point(endpoint, theta); }
};

/// Exact binomial coefficient, n <= 63.
constexpr std::int64_t binomial(int n, int k)
{
    if (k < 0 || n < 0 || k > n)
        return 0;
    if (n > 63)
        throw Error(ErrorCode::TooManyItems, "binomial helper supports n <= 63");
    if (k > n - k)
        k = n - k;
    unsigned __int128 r = 1;
    for (int i = 1; i <= k; ++i)
        r = r * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
    return static_cast<std::int64_t>(r);
}

/// alpha_m = (-1)^(m-L) C(m-2, m-L), the weight of a residual subset of size m.
inline std::int64_t residual_coefficient(int m, const ModelParams& params)
{
    params.require_partial();
    const int L = params.residual_order();
    if (m < L || m > params.n_items())
        throw Error(ErrorCode::MOutOfRange, "subset size " + std::to_string(m) + " outside [" +
                                                std::to_string(L) + ", " +
                                                std::to_string(params.n_items()) + "]");
    const std::int64_t magnitude = binomial(m - 2, m - L);
    return ((m - L) % 2 == 0) ? magnitude : -magnitude;
}

/// Zipf-like workload: p_i proportional to i^-exponent (items numbered from 1).
inline PopularityVector zipf_vector(int n, double exponent)
{
    if (n < 2)
        throw Error(ErrorCode::BadLength, "zipf vector needs n >= 2");
    if (!(exponent >= 0.0) || !std::isfinite(exponent))
        throw Error(ErrorCode::BadArgument, "zipf exponent must be finite and >= 0");
    if (exponent == 0.0)
        return PopularityVector::uniform(static_cast<std::size_t>(n));
    std::vector<double> w(static_cast<std::size_t>(n));
    long double total = 0;
    for (int i = 0; i < n; ++i) {
        w[static_cast<std::size_t>(i)] = std::pow(static_cast<double>(i + 1), -exponent);
        total += w[static_cast<std::size_t>(i)];
    }
    for (double& x : w)
        x = static_cast<double>(x / total);
    return validate_popularity(w);
}

} // namespace irmlru
