// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <irmlru/exact_engine.hpp>
#include <irmlru/kernel_engine.hpp>
#include <irmlru/occupancy_jacobian.hpp>
#include <irmlru/simulator.hpp>

#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

using namespace irmlru;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Worst-case tracker for one criterion.
struct Worst {
    double value = 0.0;
    long checks = 0;
    long violations = 0;

    void error(double e, double tol)
    {
        ++checks;
        if (!(e <= tol))
            ++violations;
        if (std::isnan(e) || e > value)
            value = e;
    }
    void require(bool ok)
    {
        ++checks;
        if (!ok)
            ++violations;
    }
};

std::string sci(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return buf;
}

PopularityVector draw(std::mt19937_64& gen, int n)
{
    return validate_popularity(oracle::random_simplex_point(gen, static_cast<std::size_t>(n)));
}

int draw_int(std::mt19937_64& gen, int lo, int hi)
{
    return std::uniform_int_distribution<int>(lo, hi)(gen);
}

// Hit rate for every capacity from all N! recency orders, each weighted by
// its size-biased probability. Index c holds H_c.
std::vector<long double> permutation_oracle(const PopularityVector& p)
{
    const std::size_t n = p.size();
    std::vector<int> sigma(n);
    std::iota(sigma.begin(), sigma.end(), 0);
    std::vector<long double> h(n + 1, 0.0L);
    do {
        long double prob = 1.0L, remaining = 1.0L;
        for (std::size_t r = 0; r < n; ++r) {
            const long double x = p[static_cast<std::size_t>(sigma[r])];
            prob *= x / remaining;
            remaining -= x;
        }
        long double cached = 0.0L;
        for (std::size_t c = 1; c <= n; ++c) {
            cached += p[static_cast<std::size_t>(sigma[c - 1])];
            h[c] += prob * cached;
        }
    } while (std::next_permutation(sigma.begin(), sigma.end()));
    return h;
}

Outcome uniform_baseline()
{
    Worst w;
    for (int n = 2; n <= 12; ++n)
        for (int c = 1; c < n; ++c) {
            const double h = hit_rate_residual(PopularityVector::uniform(static_cast<std::size_t>(n)), ModelParams(n, c)).value;
            w.error(std::abs(h - static_cast<double>(c) / n), 1e-12);
        }
    return {w.violations == 0, "max |H - C/N| = " + sci(w.value) + " over " + std::to_string(w.checks) +
                                   " (N, C) pairs, tol 1e-12"};
}

Outcome endpoint_capacity()
{
    std::mt19937_64 gen(101);
    Worst w;
    for (int i = 0; i < 500; ++i) {
        const int n = draw_int(gen, 2, 12);
        const auto p = draw(gen, n);
        long double sq = 0.0L;
        for (double x : p.probs())
            sq += static_cast<long double>(x) * x;
        w.error(std::abs(hit_rate_residual(p, ModelParams(n, 1)).value - static_cast<double>(sq)), 1e-12);
    }
    return {w.violations == 0, "max |H_1 - sum p^2| = " + sci(w.value) + " over 500 vectors, tol 1e-12"};
}

Outcome oracle_equivalence()
{
    std::mt19937_64 gen(202);
    Worst w;
    for (int n = 2; n <= 7; ++n)
        for (int i = 0; i < 200; ++i) {
            const auto p = draw(gen, n);
            const auto oracle = permutation_oracle(p);
            for (int c = 1; c < n; ++c)
                w.error(std::abs(hit_rate_residual(p, ModelParams(n, c)).value -
                                 static_cast<double>(oracle[static_cast<std::size_t>(c)])),
                        1e-10);
        }
    return {w.violations == 0, "max |residual - permutation oracle| = " + sci(w.value) + " over " +
                                   std::to_string(w.checks) + " (p, C), N = 2..7, tol 1e-10"};
}

Outcome pair_square()
{
    std::mt19937_64 gen(303);
    Worst w;
    for (int i = 0; i < 500; ++i) {
        const int n = draw_int(gen, 2, 12);
        const auto p = draw(gen, n);
        const ModelParams params(n, draw_int(gen, 1, n - 1));
        w.error(std::abs(hit_rate_pair_square(p, params).value - hit_rate_residual(p, params).value), 1e-10);
    }
    return {w.violations == 0, "max |pair-square - residual| = " + sci(w.value) + " over 500 (p, C), tol 1e-10"};
}

Outcome kernel_positivity()
{
    std::mt19937_64 gen(404);
    long positive_checks = 0, nonpositive = 0;
    Worst split, quad;
    double min_k = HUGE_VAL;
    for (int i = 0; i < 1000; ++i) {
        const int n = 2 + i % 11;
        const auto p = draw(gen, n);
        for (int c = 1; c < n; ++c) {
            const ModelParams params(n, c);
            const auto m = pair_kernel_matrix(p, params);
            for (std::size_t a = 0; a < p.size(); ++a)
                for (std::size_t b = a + 1; b < p.size(); ++b) {
                    ++positive_checks;
                    nonpositive += !(m.k(a, b) > 0.0);
                    min_k = std::min(min_k, m.k(a, b));
                }
            const int a = draw_int(gen, 0, n - 2);
            const int b = draw_int(gen, a + 1, n - 1);
            const auto s = kernel_split(p, params, a, b);
            split.error(std::abs(m.k(static_cast<std::size_t>(a), static_cast<std::size_t>(b)) -
                                 (n * s.phi + s.psi)),
                        1e-10);
            if (n <= 6 && i % 5 == 0) {
                const auto q = phi_psi_quadrature(p, params, a, b);
                quad.error(std::max(std::abs(q.phi - s.phi), std::abs(q.psi - s.psi)), 1e-8);
            }
        }
    }
    const bool pass = nonpositive == 0 && split.violations == 0 && quad.violations == 0;
    return {pass, std::to_string(positive_checks - nonpositive) + "/" + std::to_string(positive_checks) +
                      " K > 0 (min " + sci(min_k) + "); max |K - (N Phi + Psi)| = " + sci(split.value) +
                      " over " + std::to_string(split.checks) + " (tol 1e-10); max quadrature error " +
                      sci(quad.value) + " over " + std::to_string(quad.checks) + " (tol 1e-8, N <= 6)"};
}

Outcome radial_derivative_fd()
{
    std::mt19937_64 gen(505);
    Worst rel;
    long nonpositive = 0, points = 0;
    const double h = 1e-5;
    for (int r = 0; r < 50; ++r) {
        const int n = draw_int(gen, 2, 10);
        const auto q = draw(gen, n);
        const ModelParams params(n, draw_int(gen, 1, n - 1));
        auto h_at = [&](double th) { return hit_rate_residual_extended(ray_point(q, th), params); };
        for (int j = 0; j < 100; ++j) {
            const double th = (j + 0.5) / 100.0;
            const double d = radial_derivative(q, th, params).derivative;
            const auto fd = static_cast<double>((h_at(th + h) - h_at(th - h)) / (2 * h));
            ++points;
            nonpositive += !(d > 0.0);
            rel.error(std::abs(d - fd) / std::abs(fd), 1e-6);
        }
    }
    return {rel.violations == 0 && nonpositive == 0,
            "max rel |dH/dtheta - central difference| = " + sci(rel.value) + " (tol 1e-6); " +
                std::to_string(points - nonpositive) + "/" + std::to_string(points) + " points with derivative > 0"};
}

Outcome master_identity()
{
    std::mt19937_64 gen(606);
    std::uniform_real_distribution<double> theta(0.02, 1.0);
    Worst w;
    long sign_failures = 0;
    double min_t2 = HUGE_VAL;
    for (int i = 0; i < 100; ++i) {
        const int n = draw_int(gen, 2, 8);
        const auto q = draw(gen, n);
        const ModelParams params(n, draw_int(gen, 1, n - 1));
        const double th = theta(gen);
        const auto m = master_identity_derivative(q, th, params);
        w.error(std::abs(*m.derivative - radial_derivative(q, th, params).derivative), 1e-7);
        sign_failures += !(*m.t1 >= 0.0) + !(*m.t2 > 0.0);
        min_t2 = std::min(min_t2, *m.t2);
    }
    return {w.violations == 0 && sign_failures == 0,
            "max |T1 + T2 - kernel derivative| = " + sci(w.value) + " over 100 (q, theta, C), tol 1e-7; " +
                std::to_string(sign_failures) + " sign failures, min T2 = " + sci(min_t2)};
}

Outcome jacobian_structure()
{
    std::mt19937_64 gen(707);
    std::uniform_real_distribution<double> rate(0.1, 1.0);
    Worst row, fd;
    long positive_off = 0, asymmetric = 0;
    const double h = 1e-5;
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 2 + trial % 7;
        std::vector<double> rates(static_cast<std::size_t>(n));
        for (double& x : rates)
            x = rate(gen);
        const ModelParams params(n, draw_int(gen, 1, n - 1));
        const RateVector lambda(rates);
        const auto g = sensitivity_kernel(lambda, params);
        const auto jac = occupancy_jacobian(lambda, params);
        const auto un = static_cast<std::size_t>(n);
        for (std::size_t i = 0; i < un; ++i) {
            long double sum = 0.0L;
            for (std::size_t k = 0; k < un; ++k) {
                sum += jac.at(i, k);
                if (k != i) {
                    positive_off += !(jac.at(i, k) <= 0.0);
                    asymmetric += g.g(i, k) != g.g(k, i);
                }
            }
            row.error(std::abs(static_cast<double>(sum)), 1e-9);
            auto up = rates, down = rates;
            up[i] += h;
            down[i] -= h;
            const auto pu = occupancy_at_rates(RateVector(up), params);
            const auto pd = occupancy_at_rates(RateVector(down), params);
            for (std::size_t k = 0; k < un; ++k)
                fd.error(std::abs(jac.at(i, k) - (pu.pi[k] - pd.pi[k]) / (2 * h)), 1e-5);
        }
    }
    return {row.violations == 0 && fd.violations == 0 && positive_off == 0 && asymmetric == 0,
            "max |row sum| = " + sci(row.value) + " (tol 1e-9); " + std::to_string(positive_off) +
                " positive off-diagonals; " + std::to_string(asymmetric) + " asymmetric G pairs; max |J - FD| = " +
                sci(fd.value) + " (tol 1e-5), N = 2..8"};
}

Outcome stochastic_order()
{
    std::mt19937_64 gen(808);
    long checks = 0, failures = 0;
    double min_gap = HUGE_VAL;
    for (int r = 0; r < 20; ++r) {
        const int n = draw_int(gen, 2, 12);
        const auto q = draw(gen, n);
        std::vector<SearchCostDistribution> along;
        for (int j = 1; j <= 10; ++j)
            along.push_back(search_cost_distribution(ray_point(q, j / 10.0)));
        for (std::size_t lo = 0; lo < along.size(); ++lo)
            for (std::size_t hi = lo + 1; hi < along.size(); ++hi)
                for (int c = 1; c < n; ++c) {
                    const double gap = along[hi].cdf_at(c) - along[lo].cdf_at(c);
                    ++checks;
                    failures += !(gap > 1e-12);
                    min_gap = std::min(min_gap, gap);
                }
    }
    return {failures == 0, std::to_string(checks - failures) + "/" + std::to_string(checks) +
                               " (theta1 < theta2, C) with cdf gap > 1e-12 on 20 rays; min gap " + sci(min_gap)};
}

double cdf_error_z(double freq, double exact, double se)
{
    const double diff = std::abs(freq - exact);
    return se > 0.0 ? diff / se : (diff < 1e-12 ? 0.0 : HUGE_VAL);
}

Outcome simulation_agreement()
{
    std::mt19937_64 gen(909);
    double worst_z = 0.0;
    long checks = 0, failures = 0;
    auto check = [&](double z) {
        ++checks;
        failures += !(z <= 4.0);
        worst_z = std::max(worst_z, z);
    };
    for (int i = 0; i < 12; ++i) {
        const int n = 2 + i % 5;
        const auto p = draw(gen, n);
        const ModelParams params(n, draw_int(gen, 1, n - 1));
        const double exact = hit_rate_residual(p, params).value;
        const auto dist = search_cost_distribution(p);
        SimConfig cfg;
        cfg.seed = 4000 + static_cast<std::uint64_t>(i);
        cfg.samples = 100000;
        cfg.steps = 1000000;
        cfg.burn_in = 10000;
        for (const auto& r : {estimate_hit_rate_stationary(p, params, cfg), simulate_mtf_chain(p, params, cfg)}) {
            check(cdf_error_z(r.hit_rate_estimate, exact, r.std_error));
            for (std::size_t d = 0; d < p.size(); ++d)
                check(cdf_error_z(static_cast<double>(r.search_cost_histogram[d]) / static_cast<double>(r.samples_used),
                                  dist.pmf[d], r.search_cost_std_error[d]));
        }
    }
    return {failures == 0, std::to_string(checks - failures) + "/" + std::to_string(checks) +
                               " hit-rate and pmf-bin estimates within 4 standard errors (worst " +
                               sci(worst_z) + " SE); 1e5 stationary samples, 1e6 chain steps, N = 2..6"};
}

Outcome monotone_functionals()
{
    std::mt19937_64 gen(1111);
    std::exponential_distribution<double> step(1.0);
    long checks = 0, failures = 0;
    Worst flat;
    for (int f = 0; f < 20; ++f) {
        const int n = draw_int(gen, 2, 12);
        std::vector<double> g(static_cast<std::size_t>(n));
        double acc = std::uniform_real_distribution<double>(-2.0, 2.0)(gen);
        for (double& x : g) {
            x = acc;
            // some flat stretches, never flat overall
            if (gen() % 3 != 0 || &x == &g.front())
                acc += step(gen);
        }
        for (int r = 0; r < 5; ++r) {
            const auto q = draw(gen, n);
            double previous = expected_cost_functional(ray_point(q, 0.0), g);
            for (int j = 1; j <= 10; ++j) {
                const auto dist = search_cost_distribution(ray_point(q, j / 10.0));
                const double value = expected_cost_functional(dist, g);
                // direct sum against the pmf as a second route
                long double direct = 0.0L;
                for (std::size_t d = 0; d < g.size(); ++d)
                    direct += static_cast<long double>(g[d]) * dist.pmf[d];
                flat.error(std::abs(value - static_cast<double>(direct)), 1e-12 * (1.0 + std::abs(value)));
                ++checks;
                failures += !(value < previous);
                previous = value;
            }
        }
    }
    return {failures == 0 && flat.violations == 0,
            std::to_string(checks - failures) + "/" + std::to_string(checks) +
                " strict decreases for 20 nondecreasing g x 5 rays; max |tail form - pmf form| = " + sci(flat.value)};
}

} // namespace

int main()
{
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {"uniform baseline", uniform_baseline},
        {"endpoint capacity", endpoint_capacity},
        {"permutation oracle equivalence", oracle_equivalence},
        {"pair-square decomposition", pair_square},
        {"kernel positivity and split", kernel_positivity},
        {"radial derivative", radial_derivative_fd},
        {"two-route derivative consistency", master_identity},
        {"occupancy Jacobian structure", jacobian_structure},
        {"stochastic order along rays", stochastic_order},
        {"simulation agreement", simulation_agreement},
        {"monotone cost functionals", monotone_functionals},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failed += !o.pass;
        std::printf("%s [%2zu] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name,
                    o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
    return failed == 0 ? 0 : 1;
}
