#include "catch_amalgamated.hpp"

#include <semiclassic/kinetic.hpp>

#include <cmath>
#include <random>

using namespace semiclassic;
using Catch::Approx;

namespace {

// int_0^s (t^2 + 2t/alpha)^{3/2} dt by the composite midpoint rule.
double F_midpoint(double alpha, double s, int n = 1000000) {
    const double h = s / n;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double t = (i + 0.5) * h;
        sum += std::pow(t * t + 2.0 * t / alpha, 1.5);
    }
    return sum * h;
}

// Antiderivative of (u^2 - b^2)^{3/2} with u = t + b, b = 1/alpha.
double F_closed(double alpha, double s) {
    const double b = 1.0 / alpha, u = s + b, w = std::sqrt(s * s + 2.0 * b * s);
    return u / 8.0 * (2.0 * u * u - 5.0 * b * b) * w + 3.0 * std::pow(b, 4) / 8.0 * std::log((u + w) / b);
}

}  // namespace

TEST_CASE("t_rel", "[kinetic]") {
    const Dispersion one(1.0);
    REQUIRE(t_rel(one, 0.0) == 0.0);
    REQUIRE(t_rel(one, 1.0) == Approx(std::sqrt(2.0) - 1.0).epsilon(1e-15));
    for (double a : {1.0, 0.1, 0.01}) {
        const Dispersion d(a);
        const double p = 1e4 / a;
        REQUIRE(t_rel(d, p) / p == Approx(1.0).margin(1e-3));
    }
    REQUIRE_THROWS_AS(t_rel(one, -1.0), DomainError);
    REQUIRE_THROWS_AS(Dispersion(0.0), DomainError);
}

TEST_CASE("t_rel is increasing and convex", "[kinetic][property]") {
    const Dispersion d(0.05);
    const auto ps = log_space(1e-3, 1e4, 400);
    for (std::size_t i = 1; i + 1 < ps.size(); ++i) {
        const double a = t_rel(d, ps[i - 1]), b = t_rel(d, ps[i]), c = t_rel(d, ps[i + 1]);
        REQUIRE(b > a);
        const double s1 = (b - a) / (ps[i] - ps[i - 1]), s2 = (c - b) / (ps[i + 1] - ps[i]);
        REQUIRE(s2 >= s1 * (1.0 - 1e-12));
    }
}

TEST_CASE("t_rel_inverse", "[kinetic]") {
    REQUIRE(t_rel_inverse(Dispersion(1.0), 0.0) == 0.0);
    REQUIRE(t_rel_inverse(Dispersion(1.0), std::sqrt(2.0) - 1.0) == Approx(1.0).epsilon(1e-12));
    REQUIRE(t_rel_inverse(Dispersion(0.01), 1.0) == Approx(std::sqrt(201.0)).epsilon(1e-15));

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> T(0.0, 1e3);
    for (double a : {1.0, 0.1, 0.007}) {
        const Dispersion d(a);
        for (int i = 0; i < 100; ++i) {
            const double t = T(rng);
            REQUIRE(std::abs(t_rel(d, t_rel_inverse(d, t)) - t) <= 1e-12 * (1.0 + t));
        }
    }
}

TEST_CASE("pointwise kinetic inequalities", "[kinetic][property]") {
    REQUIRE(nonrel_domination_check(Dispersion(1.0), 0.0));
    REQUIRE(nonrel_domination_check(Dispersion(1.0), 1.0));
    REQUIRE(quartic_lower_check(Dispersion(1.0), 0.0));
    REQUIRE(quartic_lower_check(Dispersion(1.0), 1.0));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> Q(0.0, 100.0);
    for (double a : {0.1, 0.01})
        for (int i = 0; i < 200; ++i) REQUIRE(nonrel_domination_check(Dispersion(a), Q(rng)));

    for (double a : {1.0, 0.1, 0.01}) {
        const Dispersion d(a);
        for (double p : log_space(1e-6, 100.0 / a, 1000)) {
            REQUIRE(linear_lower_check(d, p));
            REQUIRE(nonrel_domination_check(d, p));
            REQUIRE(quartic_lower_check(d, p));
        }
    }
}

TEST_CASE("taylor_32_bound", "[kinetic]") {
    REQUIRE(taylor_32_bound(0.0) == 1.0);
    REQUIRE(taylor_32_bound(1.0) == Approx(2.875));
    REQUIRE(taylor_32_bound(8.0) == Approx(37.0));
    REQUIRE_THROWS_AS(taylor_32_bound(-1e-3), DomainError);
    // (1+x)^{3/2} without first rounding 1+x
    for (double x : log_space(1e-9, 1e6, 3000)) REQUIRE(taylor_32_bound(x) >= 1.0 + std::expm1(1.5 * std::log1p(x)));
    for (double x : log_space(1e-12, 1e3, 50)) REQUIRE(taylor_32_excess(x) == Approx(1.5 * x + 0.375 * x * x).epsilon(1e-15));
    // where the relative gap x^2/24 is resolvable the excess dominates too
    for (double x : log_space(1e-3, 1e3, 50)) REQUIRE(taylor_32_excess(x) > std::expm1(1.5 * std::log1p(x)));
}

TEST_CASE("daubechies_F", "[kinetic][daubechies]") {
    const Dispersion one(1.0);
    REQUIRE(daubechies_F(one, 0.0) == 0.0);
    const double mid = F_midpoint(1.0, 1.0);
    REQUIRE(daubechies_F(one, 1.0) == Approx(mid).epsilon(1e-8));
    REQUIRE(daubechies_F(one, 1.0) == Approx(F_closed(1.0, 1.0)).epsilon(1e-11));
    REQUIRE(daubechies_F(Dispersion(0.2), 3.0) == Approx(F_closed(0.2, 3.0)).epsilon(1e-10));

    REQUIRE(daubechies_F_upper(one, 0.0) == 0.0);
    REQUIRE(daubechies_F_upper(one, 1.0) == Approx(std::pow(2.0, 1.5) * (0.4 + 3.0 / 14.0 + 1.0 / 48.0)).epsilon(1e-15));

    const Dispersion d(0.01);
    const double ratio = daubechies_F_upper(d, 1.0) / daubechies_F(d, 1.0);
    REQUIRE(ratio >= 1.0);
    REQUIRE(ratio <= 1.05);
}

TEST_CASE("daubechies_F is monotone, convex and below its majorant", "[kinetic][daubechies][property]") {
    const Dispersion d(0.3);
    std::vector<double> s, F;
    for (int i = 0; i <= 60; ++i) {
        s.push_back(0.1 * i);
        F.push_back(daubechies_F(d, s.back()));
    }
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
        REQUIRE(F[i] > F[i - 1]);
        REQUIRE(F[i + 1] - 2.0 * F[i] + F[i - 1] >= -1e-12);
    }

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const double a = std::pow(10.0, -3.0 * U(rng));
        const double sv = 10.0 / a * U(rng);
        const Dispersion da(a);
        REQUIRE(daubechies_F(da, sv) <= daubechies_F_upper(da, sv) * (1.0 + 1e-12));
    }
}
