#pragma once

#include "numerics.hpp"

#include <cmath>

namespace semiclassic {

// Energies are in the scaled units H = alpha * H_rel: the relativistic kinetic
// symbol is sqrt(p^2 + alpha^-2) - alpha^-1 and its non-relativistic
// counterpart is alpha p^2 / 2.
struct Dispersion {
    double alpha = 1.0;

    explicit Dispersion(double a = 1.0) : alpha(a) {
        if (!(a > 0.0) || !std::isfinite(a)) throw DomainError("Dispersion: alpha must be positive");
    }
};

inline double t_rel(const Dispersion& d, double p) {
    if (!(p >= 0.0)) throw DomainError("t_rel: momentum must be non-negative");
    const double m = 1.0 / d.alpha;
    // p^2 / (sqrt(p^2 + m^2) + m) avoids the cancellation at small p.
    return p * p / (std::hypot(p, m) + m);
}

inline double t_rel_inverse(const Dispersion& d, double t) {
    if (!(t >= 0.0)) throw DomainError("t_rel_inverse: energy must be non-negative");
    return std::sqrt(t * t + 2.0 * t / d.alpha);
}

inline bool nonrel_domination_check(const Dispersion& d, double q) {
    return t_rel(d, q) <= d.alpha * q * q / 2.0 + 1e-15 * (1.0 + q * q);
}

inline bool quartic_lower_check(const Dispersion& d, double p) {
    const double a = d.alpha, p2 = p * p;
    return t_rel(d, p) >= a * p2 / 2.0 - a * a * a * p2 * p2 / 8.0 - 1e-15 * (1.0 + p2 * p2);
}

inline bool linear_lower_check(const Dispersion& d, double p) {
    return t_rel(d, p) >= p - 1.0 / d.alpha - 1e-15 * (1.0 + p);
}

/// 3x/2 + 3x^2/8, the bound below minus one, without the cancellation.
inline double taylor_32_excess(double x) {
    if (!(x >= 0.0)) throw DomainError("taylor_32_excess: x must be non-negative");
    return x * (1.5 + 0.375 * x);
}

/// 1 + 3x/2 + 3x^2/8, a majorant of (1 + x)^{3/2} on x >= 0. The gap is
/// x^3/16, below one ulp for x < 1e-5, so the sum is rounded up by two ulps
/// (more than its evaluation error) to keep the returned double a majorant.
inline double taylor_32_bound(double x) {
    if (x == 0.0) return 1.0;
    const double v = 1.0 + taylor_32_excess(x);
    return std::nextafter(std::nextafter(v, inf), inf);
}

/// F(s) = int_0^s [T^{-1}(t)]^3 dt.
inline double daubechies_F(const Dispersion& d, double s, const QuadratureSpec& spec = {}) {
    if (!(s >= 0.0)) throw DomainError("daubechies_F: s must be non-negative");
    if (s == 0.0) return 0.0;
    auto f = [&](double t) {
        const double p = t_rel_inverse(d, t);
        return p * p * p;
    };
    return integrate_1d(f, 0.0, s, spec).value;
}

inline double daubechies_F_upper(const Dispersion& d, double s) {
    if (!(s >= 0.0)) throw DomainError("daubechies_F_upper: s must be non-negative");
    const double a = d.alpha;
    const double s52 = s * s * std::sqrt(s);
    return std::pow(2.0 / a, 1.5) * s52 * (0.4 + 3.0 * a / 14.0 * s + a * a / 48.0 * s * s);
}

}  // namespace semiclassic
