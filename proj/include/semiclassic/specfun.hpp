#pragma once

#include "numerics.hpp"

#include <cmath>

namespace semiclassic {

enum class K2Method { defining_integral, gamma_rewrite, series_small_t };

namespace detail {

// K2(t) = 1/2 int_0^inf x exp(-t(x + 1/x)/2) dx. Folding (0,1) onto (1,inf) by
// x -> 1/x and pulling out exp(-t) leaves a bounded, unimodal integrand.
inline double k2_defining(double t) {
    auto f = [t](double y) { return (y + 1.0 / (y * y * y)) * std::exp(-0.5 * t * (y + 1.0 / y - 2.0)); };
    const QuadratureSpec q = QuadratureSpec{}.with_tol(1e-13, 0.0).with_map(SemiInfiniteMap::exp_decay_map, 2.0 / t);
    return 0.5 * std::exp(-t) * integrate_1d(f, 1.0, inf, q).value;
}

// K2(t) = sqrt(pi/2t) e^{-t} / Gamma(5/2) int_0^inf e^{-xi} xi^{3/2} (1 + xi/2t)^{3/2} dxi
inline double k2_gamma(double t) {
    auto f = [t](double xi) { return std::exp(-xi) * std::pow(xi, 1.5) * std::pow(1.0 + xi / (2.0 * t), 1.5); };
    const QuadratureSpec q = QuadratureSpec{}.with_tol(1e-13, 0.0).with_map(SemiInfiniteMap::exp_decay_map, 2.0);
    const double gamma52 = 0.75 * std::sqrt(pi);
    return std::sqrt(pi / (2.0 * t)) * std::exp(-t) / gamma52 * integrate_1d(f, 0.0, inf, q).value;
}

// Ascending series: K2(t) = 2/t^2 - 1/2 - ln(t/2) I2(t)
//   + (t/2)^2/2 sum_k (psi(k+1) + psi(k+3)) (t^2/4)^k / (k! (k+2)!)
inline double k2_series(double t) {
    constexpr double euler_gamma = 0.57721566490153286060651209008240243;
    const double z = 0.25 * t * t;
    double i2 = 0.0, rest = 0.0;
    double term = 0.5;  // (t^2/4)^k / (k! (k+2)!) at k = 0
    double hk = 0.0;    // harmonic number H_k
    for (int k = 0; k < 60; ++k) {
        if (k > 0) {
            term *= z / (double(k) * double(k + 2));
            hk += 1.0 / k;
        }
        const double psi1 = -euler_gamma + hk;
        const double psi3 = -euler_gamma + hk + 1.0 / (k + 1) + 1.0 / (k + 2);
        i2 += term;
        rest += (psi1 + psi3) * term;
        if (term < 1e-18 * i2) break;
    }
    i2 *= z;
    return 2.0 / (t * t) - 0.5 - std::log(0.5 * t) * i2 + 0.5 * z * rest;
}

}  // namespace detail

/// Modified Bessel function of the second kind, order 2.
inline double k2(double t, K2Method method) {
    detail::require_positive(t, "k2");
    switch (method) {
        case K2Method::defining_integral: return detail::k2_defining(t);
        case K2Method::gamma_rewrite: return detail::k2_gamma(t);
        case K2Method::series_small_t: return detail::k2_series(t);
    }
    throw DomainError("k2: unknown method");
}

/// Picks the series below t = 0.05, the defining integral up to t = 1, and
/// the gamma rewrite above.
inline double k2(double t) {
    detail::require_positive(t, "k2");
    if (t < 0.05) return detail::k2_series(t);
    if (t < 1.0) return detail::k2_defining(t);
    return detail::k2_gamma(t);
}

/// 4 sqrt(pi/2t) e^{-t} (1 + 1/(2t) + 1/(2t)^2), an upper bound for K2 on t > 0.
inline double k2_upper_envelope(double t) {
    detail::require_positive(t, "k2_upper_envelope");
    const double u = 1.0 / (2.0 * t);
    return 4.0 * std::sqrt(pi / (2.0 * t)) * std::exp(-t) * (1.0 + u + u * u);
}

/// int_0^inf t^2 K2(t) dt (= 3 pi / 2).
inline double k2_second_moment(const QuadratureSpec& spec = {}) {
    auto f = [](double t) { return t == 0.0 ? 2.0 : t * t * k2(t); };
    return integrate_1d(f, 0.0, inf, spec.with_map(SemiInfiniteMap::exp_decay_map, 2.0)).value;
}

/// alpha^{-2} K2(d/alpha) / (4 pi^2 d^2).
inline double localisation_kernel(double d, double alpha) {
    detail::require_positive(d, "localisation_kernel");
    detail::require_positive(alpha, "localisation_kernel");
    return k2(d / alpha) / (4.0 * pi * pi * alpha * alpha * d * d);
}

/// Kernel of exp(-t T) for T = sqrt(p^2 + alpha^{-2}) - alpha^{-1}, as a
/// function of the separation d.
inline double heat_kernel(double t, double d, double alpha) {
    detail::require_positive(t, "heat_kernel");
    detail::require_positive(alpha, "heat_kernel");
    if (!(d >= 0.0)) throw DomainError("heat_kernel: separation must be non-negative");
    const double w2 = d * d + t * t;
    return t / (alpha * alpha * 2.0 * pi * pi) * k2(std::sqrt(w2) / alpha) / w2;
}

/// int heat_kernel(t, |x|, alpha) d^3x; the symbol at p = 0 is e^{-t/alpha}.
inline double heat_kernel_normalization(double t, double alpha, const QuadratureSpec& spec = {}) {
    auto f = [&](double d) { return heat_kernel(t, d, alpha); };
    const double L = std::max(t, alpha);
    return integrate_radial_3d(f, spec.with_map(SemiInfiniteMap::exp_decay_map, L), {L});
}

/// (H_t * H_s)(0) = int H_t(|y|) H_s(|y|) d^3y; equals H_{t+s}(0).
inline double heat_kernel_composition_at_origin(double t, double s, double alpha, const QuadratureSpec& spec = {}) {
    auto f = [&](double d) { return heat_kernel(t, d, alpha) * heat_kernel(s, d, alpha); };
    const double L = std::max(std::min(t, s), alpha);
    return integrate_radial_3d(f, spec.with_map(SemiInfiniteMap::exp_decay_map, L), {L});
}

}  // namespace semiclassic
