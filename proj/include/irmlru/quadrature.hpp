#pragma once

// Gauss rules used by the kernel and sensitivity integrals.
//
// Half-line integrals of the form  int_0^inf e^{-rate t} f(t) dt  are done
// with Gauss-Laguerre after the substitution x = rate * t. The order starts
// at `t_order` and doubles until two successive estimates agree, which gives
// a convergence certificate for every value returned.

#include <irmlru/error.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <vector>

namespace irmlru {

struct QuadratureConfig {
    int t_order = 32;
    int y_order = 32;
    int refine_limit = 6;
    double tolerance = 1e-9;

    void validate() const
    {
        if (t_order < 16)
            throw Error(ErrorCode::BadArgument, "t_order must be >= 16");
        if (y_order < 16)
            throw Error(ErrorCode::BadArgument, "y_order must be >= 16");
        if (refine_limit < 1 || refine_limit > 10)
            throw Error(ErrorCode::BadArgument, "refine_limit must lie in [1, 10]");
        if (!(tolerance > 0.0))
            throw Error(ErrorCode::BadArgument, "tolerance must be positive");
    }
};

struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    std::size_t size() const noexcept { return nodes.size(); }
};

namespace detail {

inline GaussRule compute_gauss_legendre_unit(int n)
{
    GaussRule rule;
    rule.nodes.resize(static_cast<std::size_t>(n));
    rule.weights.resize(static_cast<std::size_t>(n));
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p1 = 1.0, p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
            }
            dp = n * (z * p1 - p2) / (z * z - 1.0);
            const double step = p1 / dp;
            z -= step;
            if (std::fabs(step) < 1e-16)
                break;
        }
        const double w = 2.0 / ((1.0 - z * z) * dp * dp);
        // map [-1, 1] -> [0, 1]
        rule.nodes[static_cast<std::size_t>(i)] = 0.5 * (1.0 - z);
        rule.nodes[static_cast<std::size_t>(n - 1 - i)] = 0.5 * (1.0 + z);
        rule.weights[static_cast<std::size_t>(i)] = 0.5 * w;
        rule.weights[static_cast<std::size_t>(n - 1 - i)] = 0.5 * w;
    }
    return rule;
}

// Orthonormal Laguerre recurrence evaluated with running rescaling so that
// large nodes do not overflow. Returns phi_n / phi_n' and log(sum_{k<n} phi_k^2).
struct LaguerreEval {
    double newton_step;
    double log_christoffel_sum;
};

inline LaguerreEval evaluate_laguerre(int n, double x)
{
    double prev = 0.0, cur = 1.0;   // phi_{k-1}, phi_k
    double dprev = 0.0, dcur = 0.0; // derivatives
    double sum = 0.0;
    double log_scale = 0.0;
    for (int k = 0; k < n; ++k) {
        sum += cur * cur;
        const double next = ((x - (2.0 * k + 1.0)) * cur - k * prev) / (k + 1.0);
        const double dnext = (cur + (x - (2.0 * k + 1.0)) * dcur - k * dprev) / (k + 1.0);
        prev = cur;
        cur = next;
        dprev = dcur;
        dcur = dnext;
        const double mag = std::fabs(cur) + std::fabs(prev);
        if (mag > 1e150) {
            const double f = 1.0 / mag;
            prev *= f;
            cur *= f;
            dprev *= f;
            dcur *= f;
            sum *= f * f;
            log_scale -= std::log(f);
        }
    }
    return {cur / dcur, std::log(sum) + 2.0 * log_scale};
}

inline GaussRule compute_gauss_laguerre(int n)
{
    // Golub-Welsch: eigenvalues of the Jacobi matrix, then Newton polish and
    // Christoffel weights from the recurrence.
    Eigen::VectorXd diag(n);
    Eigen::VectorXd sub(std::max(n - 1, 0));
    for (int k = 0; k < n; ++k)
        diag(k) = 2.0 * k + 1.0;
    for (int k = 1; k < n; ++k)
        sub(k - 1) = static_cast<double>(k);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw Error(ErrorCode::NumericalError, "Laguerre Jacobi matrix eigen-solve failed");

    GaussRule rule;
    rule.nodes.resize(static_cast<std::size_t>(n));
    rule.weights.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double x = solver.eigenvalues()(i);
        for (int iter = 0; iter < 4; ++iter) {
            const double step = evaluate_laguerre(n, x).newton_step;
            x -= step;
            if (std::fabs(step) <= 1e-15 * x)
                break;
        }
        rule.nodes[static_cast<std::size_t>(i)] = x;
        rule.weights[static_cast<std::size_t>(i)] =
            std::exp(-evaluate_laguerre(n, x).log_christoffel_sum);
    }
    return rule;
}

template <GaussRule (*Make)(int)>
const GaussRule& cached_rule(int n)
{
    static std::mutex mutex;
    static std::map<int, std::unique_ptr<const GaussRule>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[n];
    if (!slot)
        slot = std::make_unique<const GaussRule>(Make(n));
    return *slot;
}

} // namespace detail

/// n-point Gauss-Legendre rule on [0, 1].
inline const GaussRule& gauss_legendre_unit(int n)
{
    if (n < 1)
        throw Error(ErrorCode::BadArgument, "Gauss-Legendre order must be positive");
    return detail::cached_rule<detail::compute_gauss_legendre_unit>(n);
}

/// n-point Gauss-Laguerre rule for weight e^{-x} on [0, inf).
inline const GaussRule& gauss_laguerre(int n)
{
    if (n < 1)
        throw Error(ErrorCode::BadArgument, "Gauss-Laguerre order must be positive");
    return detail::cached_rule<detail::compute_gauss_laguerre>(n);
}

struct QuadratureEstimate {
    double value = 0.0;
    int order = 0;
    double last_change = 0.0;
};

/// int_0^inf e^{-rate t} f(t) dt with order doubling. `f` must be finite on
/// the nodes; the convergence test is |I_k - I_{k-1}| <= tol * max(1, |I_k|).
template <typename F>
QuadratureEstimate integrate_exponential(F&& f, double rate, const QuadratureConfig& cfg)
{
    cfg.validate();
    if (!(rate > 0.0))
        throw Error(ErrorCode::BadArgument, "exponential weight rate must be positive");
    auto estimate = [&](int order) {
        const GaussRule& rule = gauss_laguerre(order);
        long double acc = 0.0L;
        for (std::size_t i = 0; i < rule.size(); ++i) {
            if (rule.weights[i] == 0.0)
                continue;
            acc += static_cast<long double>(rule.weights[i]) * f(rule.nodes[i] / rate);
        }
        return static_cast<double>(acc / rate);
    };
    int order = cfg.t_order;
    double previous = estimate(order);
    double change = 0.0;
    for (int level = 1; level <= cfg.refine_limit; ++level) {
        order *= 2;
        const double current = estimate(order);
        change = std::fabs(current - previous);
        if (change <= cfg.tolerance * std::max(1.0, std::fabs(current)))
            return {current, order, change};
        previous = current;
    }
    throw Error(ErrorCode::QuadratureNotConverged,
                "no agreement after " + std::to_string(cfg.refine_limit) +
                    " doublings (last change " + std::to_string(change) + ", order " +
                    std::to_string(order) + ")");
}

} // namespace irmlru
