#include "catch_amalgamated.hpp"

#include <semiclassic/thomas_fermi.hpp>

#include <cmath>
#include <map>
#include <mutex>

using namespace semiclassic;
using Catch::Approx;

namespace {

// Independent oracle: classical RK4 with a fixed step in ln x, started on the
// pure Sommerfeld tail at x = 1e6 with a first-order correction C x^{-kappa},
// bisecting on C until phi(1e-6) = 1 + s x.
double slope0_oracle() {
    const double kappa = 0.5 * (std::sqrt(73.0) - 7.0);
    const double u0 = std::log(1e6), u1 = std::log(1e-6), h = -2e-3;
    auto rhs = [](double u, double p, double q, double& dp, double& dq) {
        const double x = std::exp(u), pp = p > 0 ? p : 0;
        dp = q;
        dq = q + std::pow(x, 1.5) * std::pow(pp, 1.5);
    };
    auto run = [&](double C, double& slope) {
        const double X = std::exp(u0);
        double p = 144 / (X * X * X) * (1 + C * std::pow(X, -kappa));
        double q = 144 / (X * X * X) * (-3 - (3 + kappa) * C * std::pow(X, -kappa));
        double u = u0;
        const int n = int(std::round((u1 - u0) / h));
        for (int i = 0; i < n; ++i) {
            double k1p, k1q, k2p, k2q, k3p, k3q, k4p, k4q;
            rhs(u, p, q, k1p, k1q);
            rhs(u + h / 2, p + h / 2 * k1p, q + h / 2 * k1q, k2p, k2q);
            rhs(u + h / 2, p + h / 2 * k2p, q + h / 2 * k2q, k3p, k3q);
            rhs(u + h, p + h * k3p, q + h * k3q, k4p, k4q);
            p += h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p);
            q += h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q);
            u += h;
        }
        const double x = std::exp(u);
        slope = q / x - 2 * std::sqrt(x);
        return p - (1 + slope * x + 4.0 / 3.0 * std::pow(x, 1.5));
    };
    double lo = -20, hi = 0, s = 0;
    for (int i = 0; i < 80; ++i) {
        const double mid = 0.5 * (lo + hi);
        (run(mid, s) < 0 ? lo : hi) = mid;
    }
    run(0.5 * (lo + hi), s);
    return s;
}

// Solutions are deterministic; share them across test cases.
const TFSolution& cached(double lambda, double Z) {
    static std::map<std::pair<double, double>, TFSolution> cache;
    static std::mutex m;
    std::lock_guard<std::mutex> lock(m);
    auto key = std::make_pair(lambda, Z);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, solve(TFParams{lambda, Z})).first;
    return it->second;
}

}  // namespace

TEST_CASE("neutral screening slope", "[tf][solve]") {
    const TFSolution& s = cached(1.0, 1.0);
    const double oracle = slope0_oracle();
    REQUIRE(oracle == Approx(-1.588071).margin(1e-5));
    REQUIRE(s.slope0 == Approx(-1.588071).margin(1e-4));
    REQUIRE(s.slope0 == Approx(oracle).margin(1e-6));
    // Tabulated value of the universal neutral slope.
    REQUIRE(s.slope0 == Approx(-1.588071022611375).epsilon(1e-8));
    REQUIRE(s.mu == 0.0);
    REQUIRE(s.neutral());
}

TEST_CASE("neutral solution is insensitive to the far matching point", "[tf][solve]") {
    TFSolverOptions o;
    o.x_far = 1e8;
    const double s8 = solve_neutral_profile(o).slope0;
    o.x_far = 1e7;
    const double s7 = solve_neutral_profile(o).slope0;
    REQUIRE(s8 == Approx(s7).epsilon(1e-7));
}

TEST_CASE("solution invariants", "[tf][solve][property]") {
    for (double lambda : {0.5, 1.0}) {
        for (double Z : {1.0, 10.0}) {
            const TFSolution& s = cached(lambda, Z);
            for (double v : s.rho.values()) REQUIRE(v >= 0.0);
            REQUIRE(tf_mass(s) == Approx(std::min(lambda, 1.0) * Z).epsilon(1e-6));
            REQUIRE(tf_equation_residual(s) <= 1e-6);
            if (lambda < 1.0) REQUIRE(s.mu > 0.0);
            else REQUIRE(s.mu == 0.0);
        }
    }
}

TEST_CASE("ion solution", "[tf][solve]") {
    const TFSolution& s = cached(0.5, 1.0);
    REQUIRE(std::isfinite(s.edge_radius));
    REQUIRE(tf_mass(s) == Approx(0.5).margin(1e-6));
    REQUIRE(s.mu > 0.0);
    // Exterior potential of the ion: mu = (Z - N) / r0.
    REQUIRE(s.mu == Approx(0.5 / (s.edge_radius * s.length_scale())).epsilon(1e-14));
    REQUIRE(s.slope0 < -1.588071);
}

TEST_CASE("energy from two independent routes", "[tf][energy]") {
    for (double lambda : {0.3, 0.5, 0.8, 1.0}) {
        const TFSolution& s = cached(lambda, 1.0);
        const double e = tf_energy(s);
        REQUIRE(e < 0.0);
        REQUIRE(e == Approx(tf_energy_slope_route(s)).epsilon(1e-6));
    }
    // Virial theorem for the neutral atom: kinetic = -E.
    const TFSolution& n = cached(1.0, 1.0);
    REQUIRE(n.energy_terms.kinetic == Approx(-tf_energy(n)).epsilon(1e-6));
    REQUIRE(tf_energy(n) == Approx(-0.3843725621068308).epsilon(1e-7));
}

TEST_CASE("energy scaling with Z", "[tf][scaling][property]") {
    for (double lambda : {0.5, 1.0}) {
        const double e1 = tf_energy(cached(lambda, 1.0));
        for (double Z : {2.0, 10.0, 100.0, 137.0}) {
            const double eZ = tf_energy(cached(lambda, Z));
            REQUIRE(eZ / std::pow(Z, 7.0 / 3.0) == Approx(e1).epsilon(1e-6));
        }
    }
}

TEST_CASE("C_TF monotone in lambda and flat beyond neutrality", "[tf][property]") {
    double prev = 0.0;
    for (double lambda : {0.2, 0.4, 0.6, 0.8, 1.0}) {
        const double c = -tf_energy(cached(lambda, 1.0));
        REQUIRE(c >= prev);
        prev = c;
    }
    const double c1 = -tf_energy(cached(1.0, 1.0));
    REQUIRE(-tf_energy(cached(1.5, 1.0)) == Approx(c1).epsilon(1e-6));
    REQUIRE(-tf_energy(cached(2.0, 1.0)) == Approx(c1).epsilon(1e-6));
}

TEST_CASE("minimality under mass-preserving perturbations", "[tf][energy][property]") {
    const TFSolution& s = cached(0.5, 1.0);
    const auto& r = s.rho.grid();
    const auto& v = s.rho.values();
    // compare like with like: the perturbed densities use the default slopes
    const RadialFunction base(r, v);
    const double e0 = tf_functional(s.params, base).total();
    const double m_rho = coulomb_profile(base).mass;
    for (int k = 1; k <= 5; ++k) {
        // eta = w - c rho with w = rho times a log-normal bump, c fixing int eta = 0
        const double center = std::log(0.1 * k * s.length_scale());
        std::vector<double> w(r.size());
        for (std::size_t i = 0; i < r.size(); ++i) {
            const double z = std::log(r[i]) - center;
            w[i] = v[i] * std::exp(-z * z);
        }
        const double m_w = coulomb_profile(RadialFunction(r, w)).mass;
        const double c = m_w / m_rho;
        const double eps = 1e-3;
        std::vector<double> pert(r.size());
        for (std::size_t i = 0; i < r.size(); ++i) pert[i] = v[i] + eps * (w[i] - c * v[i]);
        RadialFunction rp(r, pert);
        REQUIRE(coulomb_profile(rp).mass == Approx(m_rho).epsilon(1e-9));
        const double e1 = tf_functional(s.params, rp).total();
        REQUIRE(e1 >= e0 - 1e-8 * std::abs(e0));
    }
}

TEST_CASE("equation residual flags non-solutions", "[tf][residual]") {
    const TFSolution& s = cached(1.0, 1.0);
    REQUIRE(tf_equation_residual(s) <= 1e-6);

    std::vector<double> scaled = s.rho.values();
    for (double& x : scaled) x *= 1.1;
    RadialFunction r11(s.rho.grid(), scaled, Tail::power_law(-6.0, 1.1 * s.rho.tail().coefficient));
    REQUIRE(tf_equation_residual(s.params, r11, 0.0) > 1e-2);

    std::vector<double> zero(s.rho.grid().size(), 0.0);
    RadialFunction r0(s.rho.grid(), zero);
    REQUIRE(tf_equation_residual(s.params, r0, 0.0) > 0.5);
}

TEST_CASE("TF potential", "[tf][potential]") {
    for (double lambda : {0.5, 1.0}) {
        const double Z = 10.0;
        const TFSolution& s = cached(lambda, Z);
        const RadialFunction V = tf_potential(s);
        const double r0 = s.rho.grid().front();
        REQUIRE(r0 * V(r0) == Approx(Z).epsilon(1e-6));
        for (std::size_t i = 0; i < V.grid().size(); i += 50) REQUIRE(V.values()[i] <= Z / V.grid()[i]);

        const double b = s.length_scale();
        for (double x : {1e-3, 0.1, 1.0, 3.0}) {
            const double r = b * x;
            REQUIRE(V(r) == Approx(Z / r * s.phi(r)).epsilon(1e-8));
        }

        // V^{N,Z}(x) = Z^{4/3} V^{lambda,1}(Z^{1/3} x)
        const TFSolution& s1 = cached(lambda, 1.0);
        for (double r : {1e-3, 0.05, 0.3, 1.0}) {
            if (!s.neutral() && r >= s.edge_radius * b) continue;
            REQUIRE(tf_potential_value(s, r) ==
                    Approx(std::pow(Z, 4.0 / 3.0) * tf_potential_value(s1, std::cbrt(Z) * r)).epsilon(1e-6));
        }
    }
    const TFSolution& ion = cached(0.5, 1.0);
    const double r_out = 2.0 * ion.edge_radius * ion.length_scale();
    REQUIRE(tf_potential_value(ion, r_out) < 0.0);
    REQUIRE(tf_potential(ion)(r_out) == 0.0);
}

TEST_CASE("mu N bookkeeping", "[tf][mu]") {
    REQUIRE(mu_times_mass_identity(cached(1.0, 1.0)) == 0.0);
    REQUIRE(mu_times_mass_identity(cached(1.5, 1.0)) == 0.0);
    const TFSolution& s = cached(0.5, 1.0);
    REQUIRE(mu_times_mass_identity(s) <= 1e-8 * (1.0 + s.mu * s.params.N()));
}

TEST_CASE("JSON round trip", "[tf][json]") {
    for (double lambda : {0.5, 1.0}) {
        const TFSolution& s = cached(lambda, 2.0);
        const nlohmann::json j = to_json(s);
        const TFSolution t = tf_solution_from_json(nlohmann::json::parse(j.dump()));
        REQUIRE(t.slope0 == s.slope0);
        REQUIRE(t.mu == s.mu);
        REQUIRE(t.edge_radius == s.edge_radius);
        REQUIRE(t.params.Z == s.params.Z);
        REQUIRE(t.params.lambda == s.params.lambda);
        REQUIRE(t.params.gamma_kin == s.params.gamma_kin);
        for (std::size_t i = 0; i < s.rho.values().size(); ++i) {
            REQUIRE(t.rho.values()[i] == Approx(s.rho.values()[i]).epsilon(1e-15));
            REQUIRE(t.phi.values()[i] == Approx(s.phi.values()[i]).epsilon(1e-15));
        }
        REQUIRE(tf_energy(t) == tf_energy(s));
    }
}

TEST_CASE("parameter validation", "[tf]") {
    REQUIRE_THROWS_AS(solve(TFParams{0.0, 1.0}), DomainError);
    REQUIRE_THROWS_AS(solve(TFParams{1.0, -1.0}), DomainError);
    REQUIRE_THROWS_AS(solve(TFParams{1.0, 1.0}, 1e-2), DomainError);
    REQUIRE(gamma_self_consistent(1.0) == Approx(0.5 * std::pow(6.0 * pi * pi, 2.0 / 3.0)).epsilon(1e-14));
}
