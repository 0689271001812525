#include "cli_app.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace irmlru;
using irmlru::cli::read_csv;

namespace {

struct Outcome {
    int status = 0;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args)
{
    std::ostringstream out, err;
    const int status = cli::run(args, out, err);
    return {status, out.str(), err.str()};
}

cli::CsvDocument parse(const std::string& text)
{
    std::istringstream in(text);
    return read_csv(in);
}

double number(const std::string& s)
{
    const auto v = cli::parse_double(s);
    EXPECT_TRUE(v.has_value()) << s;
    return v.value_or(0.0);
}

std::filesystem::path scratch_dir()
{
    auto dir = std::filesystem::temp_directory_path() / ("irmlru_cli_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

TEST(CliHitrate, TwoItemExample)
{
    const auto r = run({"hitrate", "--p", "0.7,0.3", "--capacity", "1", "--brute-force"});
    ASSERT_EQ(r.status, 0) << r.err;
    const auto doc = parse(r.out);
    ASSERT_EQ(doc.rows.size(), 1u);
    EXPECT_NEAR(number(doc.rows[0][doc.column("residual")]), 0.58, 1e-15);
    EXPECT_NEAR(number(doc.rows[0][doc.column("pair_square")]), 0.58, 1e-15);
    EXPECT_NEAR(number(doc.rows[0][doc.column("brute_force")]), 0.58, 1e-15);
}

TEST(CliHitrate, CsvRoundTripsExactly)
{
    const std::vector<double> raw{0.41, 0.23, 0.17, 0.11, 0.08};
    const auto r = run({"hitrate", "--p", "0.41,0.23,0.17,0.11,0.08", "--capacity", "2"});
    ASSERT_EQ(r.status, 0) << r.err;
    const auto doc = parse(r.out);
    const auto p = validate_popularity(raw);
    EXPECT_EQ(number(doc.rows[0][doc.column("residual")]), hit_rate_residual(p, ModelParams(5, 2)).value);
    EXPECT_EQ(number(doc.rows[0][doc.column("pair_square")]), hit_rate_pair_square(p, ModelParams(5, 2)).value);
}

TEST(CliFormat, SeventeenDigitsRoundTrip)
{
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    for (int i = 0; i < 2000; ++i) {
        const double v = u(gen) * std::pow(10.0, static_cast<int>(gen() % 40) - 20);
        EXPECT_EQ(number(cli::format_double(v)), v);
    }
    EXPECT_EQ(cli::format_double(0.1), "0.10000000000000001");
}

TEST(CliSweep, UniformRayHasZeroDerivative)
{
    const auto r = run({"sweep", "--q", "uniform", "--capacity", "2", "--grid", "0,0.5,1"});
    ASSERT_EQ(r.status, 0) << r.err;
    const auto doc = parse(r.out);
    ASSERT_EQ(doc.rows.size(), 3u);
    for (const auto& row : doc.rows) {
        EXPECT_EQ(number(row[doc.column("derivative")]), 0.0);
        EXPECT_NEAR(number(row[doc.column("master_derivative")]), 0.0, 1e-15);
        EXPECT_NEAR(number(row[doc.column("H_C")]), 0.5, 1e-15);
    }
}

TEST(CliSweep, NonuniformRayIncreases)
{
    const auto r = run({"sweep", "--q", "0.5,0.2,0.15,0.1,0.05", "--capacity", "2"});
    ASSERT_EQ(r.status, 0) << r.err;
    const auto doc = parse(r.out);
    ASSERT_EQ(doc.rows.size(), 11u);
    for (std::size_t i = 1; i < doc.rows.size(); ++i) {
        EXPECT_GT(number(doc.rows[i][doc.column("H_C")]), number(doc.rows[i - 1][doc.column("H_C")]));
        const double d = number(doc.rows[i][doc.column("derivative")]);
        EXPECT_GT(d, 0.0);
        EXPECT_GT(number(doc.rows[i][doc.column("master_derivative")]), 0.0);
        EXPECT_NEAR(number(doc.rows[i][doc.column("master_derivative")]), d, 1e-7);
    }
}

TEST(CliKernel, RowsPerPair)
{
    const auto r = run({"kernel", "--zipf", "4,1", "--capacity", "2", "--format", "json"});
    ASSERT_EQ(r.status, 0) << r.err;
    const auto doc = nlohmann::json::parse(r.out);
    EXPECT_EQ(doc["command"], "kernel");
    ASSERT_EQ(doc["rows"].size(), 6u);
    for (const auto& row : doc["rows"]) {
        const double k = row["K"].get<double>();
        EXPECT_GT(k, 0.0);
        EXPECT_NEAR(k, 4 * row["Phi"].get<double>() + row["Psi"].get<double>(), 1e-10 * k);
        EXPECT_NEAR(row["Phi_quad"].get<double>(), row["Phi"].get<double>(), 1e-8);
        EXPECT_NEAR(row["Psi_quad"].get<double>(), row["Psi"].get<double>(), 1e-8);
        EXPECT_GE(row["a"].get<int>(), 1);
        EXPECT_GT(row["b"].get<int>(), row["a"].get<int>());
    }
}

TEST(CliDerivative, FooterMatchesTermSum)
{
    const auto r = run({"derivative", "--q", "0.6,0.3,0.1", "--capacity", "1", "--theta", "0.5"});
    ASSERT_EQ(r.status, 0) << r.err;
    const auto doc = parse(r.out);
    double total = 0.0;
    for (const auto& row : doc.rows)
        total += number(row[doc.column("term")]);
    EXPECT_NEAR(total, number(doc.footer.at("derivative")), 1e-15);
    EXPECT_NEAR(number(doc.footer.at("master_derivative")), number(doc.footer.at("derivative")), 1e-7);
}

TEST(CliSearchcost, TableAndFooter)
{
    const auto r = run({"searchcost", "--p", "0.5,0.3,0.2", "--cost", "1,2,3"});
    ASSERT_EQ(r.status, 0) << r.err;
    const auto doc = parse(r.out);
    ASSERT_EQ(doc.rows.size(), 3u);
    EXPECT_NEAR(number(doc.rows[0][doc.column("cdf")]), 0.38, 1e-15);
    EXPECT_NEAR(number(doc.rows[1][doc.column("cdf")]), 1007.0 / 1400.0, 1e-15);
    EXPECT_NEAR(number(doc.rows[2][doc.column("cdf")]), 1.0, 1e-15);
    const double expected = 1.0 + (1.0 - 0.38) + (1.0 - 1007.0 / 1400.0);
    EXPECT_NEAR(number(doc.footer.at("expected_search_cost")), expected, 1e-14);
    EXPECT_NEAR(number(doc.footer.at("expected_cost")), expected, 1e-14);
}

TEST(CliSimulate, DeterministicAndWarnsAboutBurnIn)
{
    const std::vector<std::string> args{"simulate", "--p", "0.5,0.3,0.2", "--capacity", "2",
                                        "--samples", "20000", "--steps", "20000", "--seed", "9"};
    const auto a = run(args);
    const auto b = run(args);
    ASSERT_EQ(a.status, 0) << a.err;
    EXPECT_EQ(a.out, b.out);
    EXPECT_NE(a.err.find("burn-in"), std::string::npos);
    const auto doc = parse(a.out);
    ASSERT_EQ(doc.rows.size(), 2u);
    for (const auto& row : doc.rows)
        EXPECT_LT(std::abs(number(row[doc.column("z")])), 4.0);

    const auto hist = run({"simulate", "--p", "0.5,0.3,0.2", "--capacity", "2", "--method", "chain",
                           "--steps", "5000", "--burn-in", "100", "--histogram"});
    ASSERT_EQ(hist.status, 0) << hist.err;
    EXPECT_EQ(hist.err.find("burn-in"), std::string::npos);
    const auto hdoc = parse(hist.out);
    std::int64_t total = 0;
    for (const auto& row : hdoc.rows)
        total += std::stoll(row[hdoc.column("count")]);
    EXPECT_EQ(total, 5000);
}

TEST(CliVerify, PassesAndIsDeterministic)
{
    const auto a = run({"verify", "--max-n", "7"});
    ASSERT_EQ(a.status, 0) << a.out << a.err;
    const auto doc = parse(a.out);
    EXPECT_GE(doc.rows.size(), 11u);
    for (const auto& row : doc.rows)
        EXPECT_EQ(row[doc.column("pass")], "true") << row[0];
    const auto b = run({"verify", "--max-n", "7"});
    EXPECT_EQ(a.out, b.out);
}

TEST(CliErrors, ValidationExitsWithTwoAndNamesTheField)
{
    auto expect_field = [](std::vector<std::string> args, const std::string& field) {
        const auto r = run(std::move(args));
        EXPECT_EQ(r.status, 2) << r.err;
        EXPECT_NE(r.err.find(field), std::string::npos) << r.err;
    };
    expect_field({"hitrate", "--p", "0.7,0.3", "--capacity", "3"}, "--capacity");
    expect_field({"hitrate", "--p", "0.7,0.4", "--capacity", "1"}, "--p");
    expect_field({"hitrate", "--p", "0.7,abc", "--capacity", "1"}, "--p");
    expect_field({"hitrate", "--p", "0.7,0.3"}, "--capacity");
    expect_field({"hitrate", "--p", "0.7,0.3", "--zipf", "3,1", "--capacity", "1"}, "--p");
    expect_field({"sweep", "--q", "0.7,0.3", "--capacity", "1", "--grid", "0.5,0.2"}, "--grid");
    expect_field({"sweep", "--q", "0.7,0.3", "--capacity", "2"}, "--capacity");
    expect_field({"derivative", "--q", "0.7,0.3", "--capacity", "1", "--theta", "1.5"}, "--theta");
    expect_field({"simulate", "--p", "0.7,0.3", "--capacity", "1", "--samples", "0"}, "--samples");
    expect_field({"verify", "--tier", "slow"}, "--tier");
    expect_field({"hitrate", "--p", "0.7,0.3", "--capacity", "1", "--format", "xml"}, "--format");
    expect_field({"sweep", "--q", "0.7,0.3", "--capacity", "1", "--t-order", "4"}, "--t-order");
    expect_field({"hitrate", "--p-file", "/nonexistent/p.txt", "--capacity", "1"}, "--p-file");
    EXPECT_EQ(run({}).status, 2);
}

TEST(CliFiles, PopularityFilesAndOutputDirectory)
{
    const auto dir = scratch_dir();
    {
        std::ofstream f(dir / "p.txt");
        f << "# popularity\n0.5\n0.3  # second\n\n0.2\n";
        std::ofstream j(dir / "p.json");
        j << R"({"probs": [0.5, 0.3, 0.2]})";
    }
    const auto plain = run({"hitrate", "--p-file", (dir / "p.txt").string(), "--capacity", "2"});
    const auto json = run({"hitrate", "--p-file", (dir / "p.json").string(), "--capacity", "2"});
    ASSERT_EQ(plain.status, 0) << plain.err;
    EXPECT_EQ(plain.out, json.out);
    EXPECT_NEAR(number(parse(plain.out).rows[0][2]), 1007.0 / 1400.0, 1e-15);

    ::setenv(cli::kOutputDirEnv, dir.c_str(), 1);
    const auto written = run({"searchcost", "--p", "0.5,0.3,0.2", "--output", "cost.csv"});
    ::unsetenv(cli::kOutputDirEnv);
    ASSERT_EQ(written.status, 0) << written.err;
    EXPECT_TRUE(written.out.empty());
    std::ifstream back(dir / "cost.csv");
    const auto doc = read_csv(back);
    EXPECT_EQ(doc.rows.size(), 3u);
    std::filesystem::remove_all(dir);
}
