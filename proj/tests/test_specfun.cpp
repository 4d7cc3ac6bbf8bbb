#include "catch_amalgamated.hpp"

#include <semiclassic/specfun.hpp>

#include <cmath>

using namespace semiclassic;
using Catch::Approx;

namespace {

// Independent oracle: K2(t) = int_0^inf exp(-t cosh u) cosh(2u) du by the
// trapezoid rule, which converges geometrically for this entire integrand.
double k2_trapezoid(double t) {
    const double h = 1e-3;
    double sum = 0.5 * std::exp(-t);
    for (int i = 1;; ++i) {
        const double u = i * h;
        const double term = std::exp(-t * std::cosh(u)) * std::cosh(2.0 * u);
        sum += term;
        if (t * std::cosh(u) > 800.0) break;
    }
    return sum * h;
}

// 64 log-uniform points on [a, b].
std::vector<double> sample(double a, double b) { return log_space(a, b, 64); }

}  // namespace

TEST_CASE("k2 against frozen reference values", "[specfun][k2]") {
    // mpmath besselk(2, t) at 25 digits
    REQUIRE(k2(1.0) == Approx(1.624838898635177482).epsilon(1e-12));
    REQUIRE(k2(10.0) == Approx(2.150981700693276873e-5).epsilon(1e-12));
    REQUIRE(k2(0.05) == Approx(799.5012070647721615).epsilon(1e-12));
    REQUIRE(k2(50.0) == Approx(3.54793183885819773842e-23).epsilon(1e-11));
    REQUIRE(k2(10.0) == Approx(2.1513e-5).epsilon(1e-3));
}

TEST_CASE("k2 methods agree with the trapezoid oracle", "[specfun][k2]") {
    for (double t : {0.05, 0.1, 0.5, 1.0, 3.0, 10.0, 30.0}) {
        const double ref = k2_trapezoid(t);
        REQUIRE(k2(t, K2Method::defining_integral) == Approx(ref).epsilon(1e-10));
        REQUIRE(k2(t, K2Method::gamma_rewrite) == Approx(ref).epsilon(1e-10));
    }
    for (double t : {0.001, 0.01, 0.05, 0.1, 0.2}) {
        REQUIRE(k2(t, K2Method::series_small_t) == Approx(k2_trapezoid(t)).epsilon(1e-10));
    }
}

TEST_CASE("k2 method cross-agreement", "[specfun][k2][property]") {
    for (double t : sample(0.05, 50.0)) {
        const double a = k2(t, K2Method::defining_integral);
        const double b = k2(t, K2Method::gamma_rewrite);
        REQUIRE(std::abs(a - b) <= 1e-9 * a);
    }
    // the series is only used below 0.05; validate it on the overlap window
    for (double t : log_space(0.05, 0.2, 16)) {
        const double a = k2(t, K2Method::defining_integral);
        REQUIRE(std::abs(k2(t, K2Method::series_small_t) - a) <= 1e-9 * a);
    }
}

TEST_CASE("k2 small-argument limit", "[specfun][k2]") {
    for (double t : {1e-3, 1e-4}) REQUIRE(t * t * k2(t) == Approx(2.0).epsilon(0.01));
    REQUIRE(1e-6 * k2(1e-3) == Approx(1.99999950000097153716677).epsilon(1e-13));
}

TEST_CASE("k2 is positive and strictly decreasing", "[specfun][k2][property]") {
    double prev = inf;
    for (double t : log_space(1e-3, 60.0, 200)) {
        const double v = k2(t);
        REQUIRE(v > 0.0);
        REQUIRE(v < prev);
        prev = v;
    }
}

TEST_CASE("k2 rejects non-positive arguments", "[specfun][k2]") {
    REQUIRE_THROWS_AS(k2(0.0), DomainError);
    REQUIRE_THROWS_AS(k2(-1.0), DomainError);
    REQUIRE_THROWS_AS(k2(-1.0, K2Method::gamma_rewrite), DomainError);
    REQUIRE_THROWS_AS(k2_upper_envelope(0.0), DomainError);
}

TEST_CASE("k2 upper envelope", "[specfun][envelope]") {
    REQUIRE(k2_upper_envelope(1.0) == Approx(4.0 * std::sqrt(pi / 2.0) * std::exp(-1.0) * 1.75).epsilon(1e-15));
    REQUIRE(k2_upper_envelope(1.0) == Approx(3.227479531135261909).epsilon(1e-14));
    REQUIRE(k2_upper_envelope(2.0) == Approx(4.0 * std::sqrt(pi / 4.0) * std::exp(-2.0) * (1.0 + 0.25 + 0.0625)).epsilon(1e-15));
    for (double t : sample(0.01, 50.0)) REQUIRE(k2(t) <= k2_upper_envelope(t));
}

TEST_CASE("k2 second moment", "[specfun][moment]") {
    REQUIRE(std::abs(k2_second_moment() - 1.5 * pi) <= 1e-8);
    REQUIRE(std::abs(k2_second_moment(QuadratureSpec{}.with_tol(1e-4)) - 1.5 * pi) <= 5e-4);
    const double env = integrate_1d([](double t) { return t == 0.0 ? 0.0 : t * t * k2_upper_envelope(t); }, 0.0, inf,
                                    QuadratureSpec{}.with_tol(1e-10).with_singularity(-0.5))
                           .value;
    REQUIRE(env >= 1.5 * pi);
}

TEST_CASE("localisation kernel", "[specfun][kernel]") {
    REQUIRE(localisation_kernel(1.0, 1.0) == Approx(0.04115765010945716627).epsilon(1e-12));
    for (double a : {0.1, 0.5, 2.0}) {
        for (double d : {0.3, 1.0, 4.0})
            REQUIRE(localisation_kernel(d, a) == Approx(std::pow(a, -4) * localisation_kernel(d / a, 1.0)).epsilon(1e-12));
        double prev = inf;
        for (double m : {1.0, 2.0, 4.0, 8.0}) {
            const double v = localisation_kernel(m * a, a);
            REQUIRE(v > 0.0);
            REQUIRE(v < prev);
            prev = v;
        }
    }
    REQUIRE_THROWS_AS(localisation_kernel(0.0, 1.0), DomainError);
    REQUIRE_THROWS_AS(localisation_kernel(1.0, -1.0), DomainError);
}

TEST_CASE("heat kernel", "[specfun][heat]") {
    REQUIRE(heat_kernel(1.0, 0.0, 1.0) == Approx(1.624838898635177482 / (2.0 * pi * pi)).epsilon(1e-12));
    REQUIRE(heat_kernel(0.7, 0.4, 1.3) == heat_kernel(0.7, 0.4, 1.3));
    REQUIRE_THROWS_AS(heat_kernel(0.0, 1.0, 1.0), DomainError);
    REQUIRE_THROWS_AS(heat_kernel(1.0, -1.0, 1.0), DomainError);

    SECTION("normalization equals the symbol at zero momentum") {
        for (double t : {0.5, 1.0, 2.0})
            for (double a : {0.5, 1.0}) REQUIRE(std::abs(heat_kernel_normalization(t, a) - std::exp(-t / a)) <= 1e-8);
    }

    SECTION("semigroup property at the origin") {
        const double lhs = heat_kernel_composition_at_origin(0.6, 0.9, 1.0);
        REQUIRE(lhs == Approx(heat_kernel(1.5, 0.0, 1.0)).epsilon(1e-6));
    }
}
