#pragma once

// `irmlru` command-line tool. Every subcommand validates its inputs, runs one
// engine operation and emits a single CSV or JSON table. Items are numbered
// from 1 in all output.

#include "table_io.hpp"
#include "verify_suite.hpp"

#include <irmlru/exact_engine.hpp>
#include <irmlru/kernel_engine.hpp>
#include <irmlru/occupancy_jacobian.hpp>
#include <irmlru/simulator.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace irmlru::cli {

inline constexpr const char* kOutputDirEnv = "IRMLRU_OUTPUT_DIR";

/// Bad user input; `field` names the flag at fault. Exit status 2.
struct UsageError : std::runtime_error {
    UsageError(std::string f, const std::string& msg)
        : std::runtime_error(f + ": " + msg), field(std::move(f))
    {
    }
    std::string field;
};

struct Options {
    std::string command;
    std::string p_list, q_list, p_file, zipf;
    int n_uniform = 4;
    int capacity = 0;
    std::string format = "csv";
    std::string output;
    std::string grid;
    double theta = 1.0;
    bool brute_force = false;
    std::string cost;
    QuadratureConfig quad;
    SimConfig sim;
    std::string method = "both";
    bool histogram = false;
    int max_n = -1;
    std::string tier = "quick";
};

namespace detail {

// Runs f and turns engine validation failures into usage errors for `field`.
template <class F>
auto in_field(const std::string& field, F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const Error& e) {
        throw UsageError(field, e.what());
    }
}

inline std::vector<double> parse_number_list(const std::string& field, const std::string& text)
{
    std::vector<double> out;
    for (const auto& tok : split(text, ',')) {
        const auto v = parse_double(tok);
        if (!v)
            throw UsageError(field, "'" + tok + "' is not a number");
        out.push_back(*v);
    }
    return out;
}

inline std::vector<double> read_popularity_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw UsageError("--p-file", "cannot open '" + path + "'");
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto body = trim(text);
    std::vector<double> out;
    if (!body.empty() && body.front() == '{') {
        try {
            const auto doc = nlohmann::json::parse(body);
            for (const auto& v : doc.at("probs"))
                out.push_back(v.get<double>());
        } catch (const nlohmann::json::exception& e) {
            throw UsageError("--p-file", std::string("bad JSON: ") + e.what());
        }
        return out;
    }
    std::istringstream lines(text);
    std::string line;
    int lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        const auto hash = line.find('#');
        const auto value = trim(std::string_view(line).substr(0, hash));
        if (value.empty())
            continue;
        const auto v = parse_double(value);
        if (!v)
            throw UsageError("--p-file", "line " + std::to_string(lineno) + " is not a number");
        out.push_back(*v);
    }
    return out;
}

inline PopularityVector popularity(const Options& o)
{
    const int sources = !o.p_list.empty() + !o.q_list.empty() + !o.p_file.empty() + !o.zipf.empty();
    if (sources != 1)
        throw UsageError("--p", "give exactly one of --p, --q, --p-file, --zipf");
    if (!o.zipf.empty()) {
        const auto parts = split(o.zipf, ',');
        const auto n = parts.size() == 2 ? parse_double(parts[0]) : std::nullopt;
        const auto s = parts.size() == 2 ? parse_double(parts[1]) : std::nullopt;
        if (!n || !s || *n != std::floor(*n))
            throw UsageError("--zipf", "expected n,s");
        return in_field("--zipf", [&] { return zipf_vector(static_cast<int>(*n), *s); });
    }
    if (!o.p_file.empty()) {
        const auto raw = read_popularity_file(o.p_file);
        return in_field("--p-file", [&] { return validate_popularity(raw); });
    }
    const std::string field = o.p_list.empty() ? "--q" : "--p";
    const std::string& text = o.p_list.empty() ? o.q_list : o.p_list;
    if (trim(text) == "uniform") {
        if (o.n_uniform < 2)
            throw UsageError("--n", "uniform popularity needs N >= 2");
        return PopularityVector::uniform(static_cast<std::size_t>(o.n_uniform));
    }
    const auto raw = parse_number_list(field, text);
    return in_field(field, [&] { return validate_popularity(raw); });
}

inline ModelParams model(const Options& o, const PopularityVector& p)
{
    return in_field("--capacity", [&] {
        const ModelParams params(static_cast<int>(p.size()), o.capacity);
        params.require_matches(p);
        return params;
    });
}

inline ModelParams partial_model(const Options& o, const PopularityVector& p)
{
    const auto params = model(o, p);
    in_field("--capacity", [&] { params.require_partial(); });
    return params;
}

inline std::vector<double> theta_grid(const Options& o)
{
    if (o.grid.empty()) {
        std::vector<double> g;
        for (int i = 0; i <= 10; ++i)
            g.push_back(i / 10.0);
        return g;
    }
    const auto g = parse_number_list("--grid", o.grid);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(g[i] >= 0.0 && g[i] <= 1.0))
            throw UsageError("--grid", "theta values must lie in [0, 1]");
        if (i > 0 && !(g[i] > g[i - 1]))
            throw UsageError("--grid", "theta values must be strictly increasing");
    }
    return g;
}

inline Cell master_cell(const PopularityVector& q, double theta, const ModelParams& params,
                        const QuadratureConfig& quad)
{
    if (q.size() > static_cast<std::size_t>(EngineLimits{}.max_items_jacobian))
        return std::monostate{};
    if (theta == 0.0)
        return 0.0; // both terms vanish in the limit
    return *master_identity_derivative(q, theta, params, quad).derivative;
}

inline void warn_conditioning(std::ostream& err, bool flagged)
{
    if (flagged)
        err << "warning: some popularity is below " << format_double(kConditioningThreshold)
            << "; kernel values lose relative accuracy\n";
}

inline Table cmd_hitrate(const Options& o)
{
    const auto p = popularity(o);
    const auto params = model(o, p);
    Table t;
    t.columns = {"n", "capacity", "residual", "pair_square"};
    if (o.brute_force)
        t.columns.push_back("brute_force");
    const auto residual = hit_rate_residual(p, params);
    const auto pair = hit_rate_pair_square(p, params);
    std::vector<Cell> row{static_cast<std::int64_t>(p.size()), static_cast<std::int64_t>(params.capacity()),
                          residual.value, pair.value};
    if (o.brute_force)
        row.push_back(in_field("--brute-force", [&] { return brute_force_hit_rate(p, params).value; }));
    t.add_row(std::move(row));
    return t;
}

inline Table cmd_sweep(const Options& o, std::ostream& err)
{
    const auto q = popularity(o);
    const auto params = partial_model(o, q);
    const auto grid = theta_grid(o);
    Table t;
    t.columns = {"theta", "H_C", "derivative", "master_derivative"};
    bool flagged = false;
    for (double th : grid) {
        const auto x = ray_point(q, th);
        const auto d = radial_derivative(q, th, params);
        flagged = flagged || d.conditioning_warning;
        t.add_row({th, hit_rate_residual(x, params).value, d.derivative, master_cell(q, th, params, o.quad)});
    }
    warn_conditioning(err, flagged);
    return t;
}

inline Table cmd_derivative(const Options& o, std::ostream& err)
{
    const auto q = popularity(o);
    const auto params = partial_model(o, q);
    if (!(o.theta >= 0.0 && o.theta <= 1.0))
        throw UsageError("--theta", "theta must lie in [0, 1]");
    const auto d = radial_derivative(q, o.theta, params);
    warn_conditioning(err, d.conditioning_warning);
    Table t;
    t.columns = {"a", "b", "term"};
    for (const auto& term : d.pair_terms)
        t.add_row({static_cast<std::int64_t>(term.a + 1), static_cast<std::int64_t>(term.b + 1), term.value});
    t.footer.emplace_back("theta", o.theta);
    t.footer.emplace_back("derivative", d.derivative);
    t.footer.emplace_back("master_derivative", master_cell(q, o.theta, params, o.quad));
    return t;
}

inline Table cmd_kernel(const Options& o, std::ostream& err)
{
    const auto p = popularity(o);
    const auto params = partial_model(o, p);
    const auto m = pair_kernel_matrix(p, params);
    warn_conditioning(err, m.conditioning_warning);
    Table t;
    t.columns = {"a", "b", "J", "K", "Phi", "Psi", "Phi_quad", "Psi_quad"};
    const int n = params.n_items();
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) {
            const auto s = kernel_split(p, params, a, b);
            const auto q = phi_psi_quadrature(p, params, a, b, o.quad);
            const auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b);
            t.add_row({static_cast<std::int64_t>(a + 1), static_cast<std::int64_t>(b + 1), m.j(ua, ub),
                       m.k(ua, ub), s.phi, s.psi, q.phi, q.psi});
        }
    return t;
}

inline Table cmd_searchcost(const Options& o)
{
    const auto p = popularity(o);
    const auto dist = search_cost_distribution(p);
    Table t;
    t.columns = {"depth", "cdf", "pmf"};
    for (std::size_t d = 0; d < dist.n_items(); ++d)
        t.add_row({static_cast<std::int64_t>(d + 1), dist.cdf[d], dist.pmf[d]});
    t.footer.emplace_back("expected_search_cost", expected_search_cost(dist));
    if (!o.cost.empty()) {
        const auto g = parse_number_list("--cost", o.cost);
        t.footer.emplace_back("expected_cost", in_field("--cost", [&] { return expected_cost_functional(dist, g); }));
    }
    return t;
}

inline Table cmd_simulate(const Options& o, std::ostream& err)
{
    const auto p = popularity(o);
    const auto params = partial_model(o, p);
    in_field("--samples", [&] { o.sim.validate(); });
    if (o.method != "stationary" && o.method != "chain" && o.method != "both")
        throw UsageError("--method", "expected stationary, chain or both");
    std::optional<double> exact;
    std::optional<SearchCostDistribution> dist;
    if (p.size() <= static_cast<std::size_t>(EngineLimits{}.max_items)) {
        exact = hit_rate_residual(p, params).value;
        dist = search_cost_distribution(p);
    }
    std::vector<std::pair<std::string, SimResult>> runs;
    if (o.method != "chain")
        runs.emplace_back("stationary", estimate_hit_rate_stationary(p, params, o.sim));
    if (o.method != "stationary") {
        runs.emplace_back("chain", simulate_mtf_chain(p, params, o.sim));
        if (runs.back().second.burn_in_heuristic)
            err << "warning: chain burn-in " << runs.back().second.burn_in_used
                << " comes from the default heuristic; no mixing guarantee\n";
    }
    auto opt = [](const std::optional<double>& v) -> Cell { return v ? Cell{*v} : Cell{}; };
    Table t;
    if (o.histogram) {
        t.columns = {"method", "depth", "count", "frequency", "exact_pmf"};
        for (const auto& [name, r] : runs)
            for (std::size_t d = 0; d < r.search_cost_histogram.size(); ++d) {
                const auto count = r.search_cost_histogram[d];
                t.add_row({name, static_cast<std::int64_t>(d + 1), count,
                           static_cast<double>(count) / static_cast<double>(r.samples_used),
                           opt(dist ? std::optional<double>(dist->pmf[d]) : std::nullopt)});
            }
        return t;
    }
    t.columns = {"method", "hit_rate", "std_error", "samples_used", "burn_in", "burn_in_heuristic", "exact", "z"};
    for (const auto& [name, r] : runs) {
        std::optional<double> z;
        if (exact && r.std_error > 0.0)
            z = (r.hit_rate_estimate - *exact) / r.std_error;
        t.add_row({name, r.hit_rate_estimate, r.std_error, r.samples_used, r.burn_in_used,
                   name == "chain" && r.burn_in_heuristic, opt(exact), opt(z)});
    }
    return t;
}

inline Table cmd_verify(const Options& o, bool& all_pass)
{
    VerifyOptions v;
    if (o.tier == "quick")
        v.tier = VerifyTier::quick;
    else if (o.tier == "full")
        v.tier = VerifyTier::full;
    else
        throw UsageError("--tier", "expected quick or full");
    v.max_n = o.max_n > 0 ? o.max_n : (v.tier == VerifyTier::full ? 12 : 6);
    if (v.max_n < 2 || v.max_n > 12)
        throw UsageError("--max-n", "must lie in [2, 12]");
    v.seed = o.sim.seed;
    v.quad = o.quad;
    Table t;
    t.columns = {"property", "checks", "max_error", "tolerance", "pass", "note"};
    all_pass = true;
    for (const auto& r : run_verify(v)) {
        all_pass = all_pass && r.pass;
        t.add_row({r.property, r.checks, r.max_error, r.tolerance, r.pass, r.note});
    }
    return t;
}

inline void add_source_options(CLI::App* sub, Options& o, bool with_capacity)
{
    sub->add_option("--p", o.p_list, "popularity list a,b,c or 'uniform'");
    sub->add_option("--q", o.q_list, "ray endpoint list or 'uniform' (same as --p)");
    sub->add_option("--p-file", o.p_file, "file with one probability per line, or {\"probs\": [...]}");
    sub->add_option("--zipf", o.zipf, "Zipf popularity n,s");
    sub->add_option("--n", o.n_uniform, "item count for 'uniform'");
    if (with_capacity)
        sub->add_option("--capacity,-C", o.capacity, "cache capacity C")->required();
}

inline void add_output_options(CLI::App* sub, Options& o)
{
    sub->add_option("--format", o.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--output,-o", o.output, "output file (relative paths use $" + std::string(kOutputDirEnv) + ")");
}

inline void add_quad_options(CLI::App* sub, Options& o)
{
    sub->add_option("--t-order", o.quad.t_order, "initial Gauss-Laguerre order");
    sub->add_option("--y-order", o.quad.y_order, "Gauss-Legendre order on [0,1]");
    sub->add_option("--refine-limit", o.quad.refine_limit, "maximum order doublings");
    sub->add_option("--quad-tol", o.quad.tolerance, "quadrature tolerance");
}

inline std::filesystem::path output_path(const std::string& requested)
{
    std::filesystem::path path(requested);
    if (path.is_relative())
        if (const char* dir = std::getenv(kOutputDirEnv); dir && *dir)
            path = std::filesystem::path(dir) / path;
    return path;
}

} // namespace detail

/// Entry point shared by the executable and the tests. Returns the exit status.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    using namespace detail;
    Options o;
    CLI::App app{"Exact hit rates, kernels and checks for stationary LRU caches under independent requests",
                 "irmlru"};
    app.require_subcommand(1);

    auto* hitrate = app.add_subcommand("hitrate", "hit rate by the residual and pair-square formulas");
    add_source_options(hitrate, o, true);
    hitrate->add_flag("--brute-force", o.brute_force, "add the permutation oracle (N <= 9)");

    auto* sweep = app.add_subcommand("sweep", "hit rate and derivative along the ray u + theta (q - u)");
    add_source_options(sweep, o, true);
    sweep->add_option("--grid", o.grid, "strictly increasing theta values in [0,1]");

    auto* kernel = app.add_subcommand("kernel", "pair kernels J, K and their split into Phi, Psi");
    add_source_options(kernel, o, true);

    auto* derivative = app.add_subcommand("derivative", "per-pair terms of the radial derivative");
    add_source_options(derivative, o, true);
    derivative->add_option("--theta", o.theta, "position on the ray");

    auto* searchcost = app.add_subcommand("searchcost", "stationary distribution of the list depth of a request");
    add_source_options(searchcost, o, false);
    searchcost->add_option("--cost", o.cost, "nondecreasing costs g(1),...,g(N) for an extra footer");

    auto* simulate = app.add_subcommand("simulate", "Monte Carlo estimates against the exact engine");
    add_source_options(simulate, o, true);
    simulate->add_option("--method", o.method, "stationary, chain or both");
    simulate->add_option("--samples", o.sim.samples, "stationary samples per replica");
    simulate->add_option("--steps", o.sim.steps, "chain steps per replica after burn-in");
    simulate->add_option("--burn-in", o.sim.burn_in, "chain burn-in (default: heuristic)");
    simulate->add_option("--replicas", o.sim.replicas, "independent replicas");
    simulate->add_flag("--histogram", o.histogram, "emit the depth histogram instead");

    auto* verify = app.add_subcommand("verify", "run the invariant suite and report pass/fail per property");
    verify->add_option("--max-n", o.max_n, "largest N to test");
    verify->add_option("--tier", o.tier, "quick or full");

    for (auto* sub : {hitrate, sweep, kernel, derivative, searchcost, simulate, verify})
        add_output_options(sub, o);
    for (auto* sub : {sweep, kernel, derivative, verify})
        add_quad_options(sub, o);
    for (auto* sub : {simulate, verify})
        sub->add_option("--seed", o.sim.seed, "random seed");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0)
            return app.exit(e, out, err);
        err << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        in_field("--t-order", [&] { o.quad.validate(); });
        Table table;
        bool verify_pass = true;
        std::string command;
        if (*hitrate)
            command = "hitrate", table = cmd_hitrate(o);
        else if (*sweep)
            command = "sweep", table = cmd_sweep(o, err);
        else if (*kernel)
            command = "kernel", table = cmd_kernel(o, err);
        else if (*derivative)
            command = "derivative", table = cmd_derivative(o, err);
        else if (*searchcost)
            command = "searchcost", table = cmd_searchcost(o);
        else if (*simulate)
            command = "simulate", table = cmd_simulate(o, err);
        else
            command = "verify", table = cmd_verify(o, verify_pass);

        std::ofstream file;
        std::ostream* sink = &out;
        if (!o.output.empty()) {
            const auto path = output_path(o.output);
            file.open(path);
            if (!file)
                throw UsageError("--output", "cannot write '" + path.string() + "'");
            sink = &file;
        }
        if (o.format == "json")
            write_json(*sink, command, table);
        else
            write_csv(*sink, table);
        if (!verify_pass)
            err << "verify: at least one property failed\n";
        return verify_pass ? 0 : 1;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace irmlru::cli
