#include "catch_amalgamated.hpp"

#include <semiclassic/cli.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace semiclassic;
using Catch::Approx;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "semiclassic");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(int(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

int run_binary(const std::string& args) {
    const int status = std::system((std::string(SEMICLASSIC_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
}

std::string tmp(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("semiclassic_test_" + name)).string();
}

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    return {std::istreambuf_iterator<char>(f), {}};
}

double field(const std::string& text, const std::string& key) {
    const auto at = text.find(key + " = ");
    REQUIRE(at != std::string::npos);
    return std::stod(text.substr(at + key.size() + 3));
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace

TEST_CASE("tf-solve", "[cli]") {
    const std::string path = tmp("tf.json");
    const Run r = run({"tf-solve", "--lambda", "1", "--Z", "1", "--out", path});
    REQUIRE(r.code == exit_ok);
    REQUIRE(field(r.out, "slope0") == Approx(-1.588071).margin(1e-4));
    REQUIRE(field(r.out, "C_TF(lambda)") == Approx(0.3843725621).epsilon(1e-8));
    const auto j = nlohmann::json::parse(slurp(path));
    REQUIRE(tf_solution_from_json(j).slope0 == Approx(field(r.out, "slope0")).epsilon(1e-10));

    const Run ion = run({"tf-solve", "--lambda", "0.5", "--Z", "10"});
    REQUIRE(ion.code == exit_ok);
    REQUIRE(field(ion.out, "mu") > 0.0);

    const Run missing = run({"tf-solve", "--Z", "1"});
    REQUIRE(missing.code == exit_usage);
    REQUIRE(missing.err.find("--lambda") != std::string::npos);
    REQUIRE(missing.err.find("Usage") != std::string::npos);

    REQUIRE(run({"tf-solve", "--lambda", "-1", "--Z", "1"}).code == exit_usage);
    REQUIRE(run({}).code == exit_usage);
    REQUIRE(run({"--help"}).code == exit_ok);
}

TEST_CASE("verify", "[cli]") {
    const Run s = run({"verify", "specfun"});
    REQUIRE(s.code == exit_ok);
    REQUIRE(s.out.find("k2_second_moment = 4.712389 vs 3π/2 PASS") != std::string::npos);

    const Run id = run({"verify", "identity"});
    REQUIRE(id.code == exit_ok);
    REQUIRE(id.out.find("identity_chain_ratio(lambda=1) = 1") != std::string::npos);
    REQUIRE(id.out.find("0.942809 vs 2√2/3 PASS") != std::string::npos);

    REQUIRE(run({"verify", "nonsense"}).code == exit_usage);
    REQUIRE(run({"verify"}).code == exit_usage);

    // a per-halving 2x gain sits exactly on the asymptotic rate of an error-per-step controller
    const Run n = run({"verify", "numerics"});
    REQUIRE(n.code == exit_verification);
    REQUIRE(n.err.find("first failing check: ivp_tolerance_halving_violations") != std::string::npos);
    REQUIRE(n.out.find("ivp_fixed_step_order") != std::string::npos);

    for (const std::string suite : {"kinetic", "thomas_fermi", "coherent", "bounds"}) {
        const Run v = run({"verify", suite});
        INFO(v.out);
        REQUIRE(v.code == exit_ok);
        REQUIRE(v.out.find("FAIL") == std::string::npos);
    }
}

TEST_CASE("budget", "[cli]") {
    const std::string csv = tmp("budget.csv"), js = tmp("budget.json");
    const Run r = run({"budget", "--csv", csv, "--json", js});
    REQUIRE(r.code == exit_ok);
    REQUIRE(r.out.find("binding term: intermediary_zone") != std::string::npos);
    REQUIRE(r.out.find("margin to -4/3") != std::string::npos);
    const auto rows = csv_rows(slurp(csv));
    REQUIRE(rows.size() == 10);
    REQUIRE(slurp(csv).rfind("name,reference,alpha,value,exponent\n", 0) == 0);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const std::string& e = rows[i].back();
        if (e != "inf") REQUIRE(std::stod(e) > -4.0 / 3.0);
    }
    const auto j = nlohmann::json::parse(slurp(js));
    REQUIRE(j["terms"].size() == 9);
    REQUIRE_FALSE(j.contains("violation"));

    const Run z = run({"budget", "--Z", "1000", "--delta", "0.5"});
    REQUIRE(z.code == exit_ok);
    REQUIRE(run({"budget", "--Z", "1000", "--alpha", "1e-3"}).code == exit_usage);
    REQUIRE(run({"budget", "--t", "0.9"}).code == exit_usage);

    const std::string bad_csv = tmp("violation.csv"), bad_js = tmp("violation.json");
    const Run v = run({"budget", "--r", "0.85", "--csv", bad_csv, "--json", bad_js});
    REQUIRE(v.code == exit_budget);
    REQUIRE(v.err.find("inner_zone") != std::string::npos);
    REQUIRE(csv_rows(slurp(bad_csv)).size() == 10);
    const auto vj = nlohmann::json::parse(slurp(bad_js));
    REQUIRE(vj["violation"]["term"] == "inner_zone");
    REQUIRE(vj["violation"]["exponent"].get<double>() == Approx(3 * 0.85 - 4));
}

TEST_CASE("asymptotics", "[cli]") {
    SECTION("single row") {
        const Run r = run({"asymptotics", "--Z", "137"});
        REQUIRE(r.code == exit_ok);
        const auto rows = csv_rows(r.out);
        REQUIRE(rows.size() == 2);
        REQUIRE(rows[0].size() == 11);
        REQUIRE(rows[0][0] == "Z");
        REQUIRE(rows[0][5] == "budget_total");
        REQUIRE(std::stod(rows[1][1]) == Approx(2.0 / (137.0 * pi)).epsilon(1e-15));
        for (std::size_t c = 0; c + 1 < rows[1].size(); ++c) REQUIRE(std::isfinite(std::stod(rows[1][c])));
        REQUIRE(rows[1].back() == "ok");
    }

    SECTION("units and orientation") {
        AsymptoticsConfig cfg;
        cfg.z_values = {50.0, 500.0};
        for (const auto& row : run_asymptotics(cfg)) {
            REQUIRE(row.ok());
            REQUIRE(row.E_lower_scaled == Approx(row.alpha * row.E_lower).epsilon(1e-14));
            REQUIRE(row.budget_total_rel == Approx(row.budget_total / row.alpha).epsilon(1e-14));
            REQUIRE(row.E_lower == Approx(row.E_ref - row.budget_total_rel).epsilon(1e-8));
            REQUIRE(row.ratio > 0.0);
            REQUIRE(row.ratio <= 1.0);
            REQUIRE(row.ratio * row.lower_over_ref == Approx(1.0).epsilon(1e-14));
        }
    }

    SECTION("lambda scaling of the reference") {
        AsymptoticsConfig a, b;
        a.z_values = b.z_values = {10.0, 100.0, 1000.0};
        b.lambda = 0.5;
        const auto ra = run_asymptotics(a), rb = run_asymptotics(b);
        const double expect = c_tf(0.5) / c_tf(1.0);
        for (std::size_t i = 0; i < ra.size(); ++i)
            REQUIRE(rb[i].E_ref / ra[i].E_ref == Approx(expect).epsilon(1e-12));
    }

    SECTION("determinism and threads") {
        const std::string p1 = tmp("as1.csv"), p2 = tmp("as2.csv");
        REQUIRE(run({"asymptotics", "--Z", "20", "200", "2000", "--csv", p1}).code == exit_ok);
        ::setenv("SEMICLASSIC_THREADS", "3", 1);
        REQUIRE(run({"asymptotics", "--Z", "20", "200", "2000", "--csv", p2}).code == exit_ok);
        REQUIRE(slurp(p1) == slurp(p2));
        REQUIRE(nlohmann::json::parse(slurp(p2 + ".meta.json"))["threads"] == 3);
        ::setenv("SEMICLASSIC_THREADS", "many", 1);
        REQUIRE(run({"asymptotics", "--Z", "20"}).code == exit_usage);
        ::unsetenv("SEMICLASSIC_THREADS");
    }

    SECTION("config file and overrides") {
        const std::string cfg = tmp("cfg.json");
        {
            std::ofstream f(cfg);
            f << R"({"delta": 0.5, "lambda": 0.8, "z_values": [30, 300], "r": 0.93})";
        }
        AsymptoticsConfig c;
        c.delta = 0.5;
        c.lambda = 0.8;
        c.z_values = {30.0, 300.0};
        c.partition.r = 0.93;
        const Run from_file = run({"asymptotics", "--config", cfg});
        REQUIRE(from_file.code == exit_ok);
        REQUIRE(from_file.out == asymptotics_csv(run_asymptotics(c)));

        c.z_values = {40.0};
        REQUIRE(run({"asymptotics", "--config", cfg, "--Z", "40"}).out == asymptotics_csv(run_asymptotics(c)));

        {
            std::ofstream f(cfg);
            f << R"({"delta": 0.5, "zeta": 1})";
        }
        REQUIRE(run({"asymptotics", "--config", cfg}).code == exit_usage);
        REQUIRE(run({"asymptotics", "--delta", "0.7"}).code == exit_usage);
    }

    SECTION("a failing row is marked and the sweep continues") {
        // at Z = 1 the coupling 2/pi makes alpha too large for the outer geometry
        const Run r = run({"asymptotics", "--Z", "1", "100"});
        REQUIRE(r.code == exit_computation);
        const auto rows = csv_rows(r.out);
        REQUIRE(rows[1].back().rfind("error:", 0) == 0);
        REQUIRE(rows[1][2] == "nan");
        REQUIRE(rows[2].back() == "ok");
    }
}

TEST_CASE("exit codes of the installed binary", "[cli]") {
    REQUIRE(run_binary("tf-solve --lambda 1 --Z 1") == exit_ok);
    REQUIRE(run_binary("tf-solve --Z 1") == exit_usage);
    REQUIRE(run_binary("verify nonsense") == exit_usage);
    REQUIRE(run_binary("budget --r 0.85") == exit_budget);
    REQUIRE(run_binary("asymptotics --Z 1") == exit_computation);
}
