#pragma once

#include "kinetic.hpp"
#include "numerics.hpp"
#include "thomas_fermi.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace semiclassic {

// Sign convention: [f]_- is the negative part with value <= 0, so every
// phase-space energy below is returned signed and non-positive.

/// 2 sqrt(2) / (15 pi^2): -(1/(2 pi)^3) int [p^2/2 - v]_- d^3p = K v^{5/2}.
inline constexpr double phase_space_K = 2.0 * 1.41421356237309504880 / (15.0 * pi * pi);

inline double momentum_integral_nonrel(double v) {
    if (!(v >= 0.0)) throw DomainError("momentum_integral_nonrel: v must be non-negative");
    return -16.0 * std::sqrt(2.0) * pi / 15.0 * v * v * std::sqrt(v);
}

/// int_{T(p) < v} (T(p) - v) d^3p for the relativistic symbol.
inline double momentum_integral_rel(const Dispersion& disp, double v, const QuadratureSpec& spec = {}) {
    if (!(v >= 0.0)) throw DomainError("momentum_integral_rel: v must be non-negative");
    if (v == 0.0) return 0.0;
    const double P = t_rel_inverse(disp, v);
    auto f = [&](double u) { return (t_rel(disp, u) - v) * u * u; };
    return 4.0 * pi * integrate_1d(f, 0.0, P, spec).value;
}

enum class PhaseSpaceDomain { full, outside_radius };

struct PhaseSpaceResult {
    double value = 0.0;
    double quadrature_error = 0.0;
    PhaseSpaceDomain domain = PhaseSpaceDomain::full;
    double q_min = 0.0;
};

namespace detail {

inline PhaseSpaceResult phase_space(const RadialFunction& V, double q_min, const QuadratureSpec& spec,
                                    const std::function<double(double)>& per_point) {
    if (!(q_min >= 0.0)) throw DomainError("phase_space_energy: q_min must be non-negative");
    auto g = [&](double, double v) { return per_point(v); };
    const QuadResult q = V.integrate_3d_result(g, spec, q_min);
    const double c = 1.0 / (8.0 * pi * pi * pi);
    return {-c * q.value, c * q.err_estimate, q_min > 0.0 ? PhaseSpaceDomain::outside_radius : PhaseSpaceDomain::full,
            q_min};
}

}  // namespace detail

/// -(1/(2 pi)^3) int_{|q| > q_min} |M([V(q) - mu_shift]_+)| d^3q with the
/// relativistic symbol. V must already be in the scaled units of disp.
inline PhaseSpaceResult phase_space_energy(const Dispersion& disp, const RadialFunction& V, double mu_shift,
                                           double q_min, const QuadratureSpec& spec = {}) {
    if (!(mu_shift >= 0.0)) throw DomainError("phase_space_energy: mu_shift must be non-negative");
    const QuadratureSpec inner = spec.with_tol(spec.rel_tol * 1e-2, spec.abs_tol);
    return detail::phase_space(V, q_min, spec, [&](double v) {
        const double w = v - mu_shift;
        return w > 0.0 ? -momentum_integral_rel(disp, w, inner) : 0.0;
    });
}

/// Same with the symbol p^2/2; the momentum integral is in closed form.
inline PhaseSpaceResult phase_space_energy_nonrel(const RadialFunction& V, double mu_shift, double q_min,
                                                  const QuadratureSpec& spec = {}, double spin_q = 1.0) {
    if (!(mu_shift >= 0.0)) throw DomainError("phase_space_energy_nonrel: mu_shift must be non-negative");
    if (!(spin_q > 0.0)) throw DomainError("phase_space_energy_nonrel: spin_q must be positive");
    return detail::phase_space(V, q_min, spec, [&](double v) {
        const double w = v - mu_shift;
        return w > 0.0 ? -spin_q * momentum_integral_nonrel(w) : 0.0;
    });
}

/// What the non-relativistic energy inside |q| < q_min can be at most when
/// V <= Z/|q|: (q_spin K) 4 pi int_0^{q_min} (Z/u)^{5/2} u^2 du.
inline double domain_restriction_tail_bound(double Z, double q_min, double spin_q = 1.0) {
    if (!(Z > 0.0) || !(q_min >= 0.0)) throw DomainError("domain_restriction_tail_bound: bad arguments");
    return spin_q * phase_space_K * 8.0 * pi * std::pow(Z, 2.5) * std::sqrt(q_min);
}

// ---------------------------------------------------------------------------
// Error terms of the lower bound

namespace detail {

inline void require_t_exponent(double t, const char* who) {
    if (!(t > 1.0 / 3.0 && t < 2.0 / 3.0)) throw DomainError(std::string(who) + ": t must lie in (1/3, 2/3)");
}

}  // namespace detail

struct QuarticForms {
    double direct;        // alpha^{(6-t)/2} (2Z)^{7/2} / (7 pi)
    double intermediate;  // (8 pi^2 (2Z)^{7/2} / 7) alpha^{-t/2}, before alpha^3 / (2 pi)^3
    double fixed_delta;   // (8 sqrt 2 / (7 pi)) alpha^{-(1+t)/2} delta^{7/2}
};

inline QuarticForms quartic_correction_forms(double Z, double alpha, double t) {
    detail::require_t_exponent(t, "quartic_correction_bound");
    detail::require_positive(Z, "quartic_correction_bound: Z");
    detail::require_positive(alpha, "quartic_correction_bound: alpha");
    const double z72 = std::pow(2.0 * Z, 3.5);
    const double delta = Z * alpha;
    return {std::pow(alpha, (6.0 - t) / 2.0) * z72 / (7.0 * pi), 8.0 * pi * pi * z72 / 7.0 * std::pow(alpha, -t / 2.0),
            8.0 * std::sqrt(2.0) / (7.0 * pi) * std::pow(alpha, -(1.0 + t) / 2.0) * std::pow(delta, 3.5)};
}

inline double quartic_correction_bound(double Z, double alpha, double t) {
    return quartic_correction_forms(Z, alpha, t).direct;
}

/// Region-swap bound in the rescaled variable omega, with V1 = V_TF^{lambda,1}.
inline double domain_change_error(const RadialFunction& V1, double delta, double alpha, double t,
                                  const QuadratureSpec& spec = {}) {
    detail::require_t_exponent(t, "domain_change_error");
    detail::require_positive(alpha, "domain_change_error: alpha");
    if (!(delta > 0.0 && delta <= 2.0 / pi * (1.0 + 1e-12)))
        throw DomainError("domain_change_error: delta = Z alpha must lie in (0, 2/pi]");
    const double d43 = std::pow(delta, 4.0 / 3.0);
    const double W = 0.25 * std::cbrt(delta) * std::pow(alpha, t - 1.0 / 3.0);
    auto g = [&](double, double v) {
        if (!(v > 0.0)) return 0.0;
        const double X = 2.0 * d43 * std::pow(alpha, -4.0 / 3.0) * v;
        const double Y = 0.5 * d43 * std::pow(alpha, 2.0 / 3.0) * v;
        return v * X * std::sqrt(X) / 3.0 * taylor_32_excess(Y);
    };
    return 4.0 * pi * std::cbrt(delta) * std::pow(alpha, 2.0 / 3.0) * V1.integrate_3d(g, spec, W);
}

/// [V_TF^{lambda,1}]_+ from a solution at any Z, via V^{N,Z}(x) = Z^{4/3} V^{lambda,1}(Z^{1/3} x).
inline RadialFunction unit_charge_potential(const TFSolution& sol) {
    const RadialFunction V = tf_potential(sol);
    const double Z = sol.params.Z, z13 = std::cbrt(Z), zm43 = std::pow(Z, -4.0 / 3.0);
    std::vector<double> w(V.grid().size()), v(w.size()), dv(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = z13 * V.grid()[i];
        v[i] = zm43 * V.values()[i];
        dv[i] = zm43 * V.log_slopes()[i];
    }
    return RadialFunction(w, v, dv, V.tail());
}

inline double domain_change_error(const TFSolution& sol, const Dispersion& disp, double t,
                                  const QuadratureSpec& spec = {}) {
    return domain_change_error(unit_charge_potential(sol), sol.params.Z * disp.alpha, disp.alpha, t, spec);
}

// ---------------------------------------------------------------------------
// Identity chain

struct IdentityChain {
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
    double phase_space = 0.0;   // signed, <= 0
    double half_coulomb = 0.0;  // (1/2) D(rho, rho)
    double mu_N = 0.0;
    double kinetic_coefficient_ratio = 0.0;
    double self_consistency_ratio = 0.0;
};

/// q K gamma^{5/2} / ((3/5) gamma): the phase-space coefficient of
/// [V]_+^{5/2} = gamma^{5/2} rho^{5/3} against the TF kinetic coefficient.
inline double kinetic_coefficient_ratio(double gamma_kin, double spin_q = 1.0) {
    return 5.0 / 3.0 * spin_q * phase_space_K * std::pow(gamma_kin, 1.5);
}

/// q K gamma^{3/2} / (2/5). The chain closes iff this is 1: with
/// [V]_+^{5/2} = gamma^{3/2} rho V, E_TF = -(2/5) int rho V - D/2 - mu N.
inline double self_consistency_ratio(double gamma_kin, double spin_q = 1.0) {
    return 2.5 * spin_q * phase_space_K * std::pow(gamma_kin, 1.5);
}

/// phase-space energy of [V_TF]_+ minus (1/2) D minus mu N, against E_TF.
inline IdentityChain tf_identity_chain(const TFSolution& sol, const QuadratureSpec& spec = {}) {
    IdentityChain c;
    const double q = sol.params.spin_q;
    c.phase_space = phase_space_energy_nonrel(tf_potential(sol), 0.0, 0.0, spec, q).value;
    c.half_coulomb = sol.energy_terms.repulsion;
    c.mu_N = sol.mu * sol.params.N();
    c.lhs = c.phase_space - c.half_coulomb - c.mu_N;
    c.rhs = tf_energy(sol);
    c.ratio = c.lhs / c.rhs;
    c.kinetic_coefficient_ratio = kinetic_coefficient_ratio(sol.params.gamma_kin, q);
    c.self_consistency_ratio = self_consistency_ratio(sol.params.gamma_kin, q);
    return c;
}

// ---------------------------------------------------------------------------
// Coherent states

struct CoherentSpec {
    double s_exponent = 0.5;
    std::function<double(double)> g_profile;
    double grad_sup = 0.0;
    double support_volume = 4.0 * pi / 3.0;

    /// g_alpha(r) = alpha^{-3s/2} g(r / alpha^s).
    double scaled(double alpha, double r) const {
        const double l = std::pow(alpha, s_exponent);
        return std::pow(l, -1.5) * g_profile(r / l);
    }

    void validate() const {
        if (!(s_exponent > 1.0 / 3.0 && s_exponent < 2.0 / 3.0))
            throw DomainError("CoherentSpec: s must lie in (1/3, 2/3)");
        if (!g_profile) throw PreconditionFailure("CoherentSpec: missing profile");
        if (!(grad_sup >= 0.0) || !(support_volume > 0.0)) throw DomainError("CoherentSpec: bad constants");
        for (double r : {1.0, 1.5, 4.0})
            if (g_profile(r) != 0.0) throw PreconditionFailure("CoherentSpec: profile not supported in the unit ball");
        const double n = integrate_1d([&](double r) { return 4.0 * pi * r * r * g_profile(r) * g_profile(r); }, 0.0,
                                      1.0, QuadratureSpec{}.with_tol(1e-12))
                             .value;
        if (!(std::abs(n - 1.0) <= 1e-10)) throw PreconditionFailure("CoherentSpec: profile is not L2-normalized");
    }
};

namespace detail {

inline double bump_shape(double r) { return r < 1.0 ? std::exp(-1.0 / (1.0 - r * r)) : 0.0; }

inline double bump_shape_derivative(double r) {
    if (r >= 1.0) return 0.0;
    const double d = 1.0 - r * r;
    return -2.0 * r / (d * d) * std::exp(-1.0 / d);
}

}  // namespace detail

/// c exp(-1/(1 - r^2)) on the unit ball with unit L2 norm.
inline CoherentSpec reference_bump(double s) {
    const double n = integrate_1d(
                         [](double r) {
                             const double g = detail::bump_shape(r);
                             return 4.0 * pi * r * r * g * g;
                         },
                         0.0, 1.0, QuadratureSpec{}.with_tol(1e-12))
                         .value;
    const double c = 1.0 / std::sqrt(n);
    // |g'| is unimodal on (0, 1): coarse scan, then golden section.
    double best = 0.0;
    const int m = 2000;
    for (int i = 1; i < m; ++i)
        if (std::abs(detail::bump_shape_derivative(double(i) / m)) > std::abs(detail::bump_shape_derivative(best)))
            best = double(i) / m;
    double a = best - 1.0 / m, b = best + 1.0 / m;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    auto h = [](double r) { return std::abs(detail::bump_shape_derivative(r)); };
    for (int it = 0; it < 100; ++it) {
        const double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
        if (h(x1) > h(x2)) b = x2;
        else a = x1;
    }
    CoherentSpec cs;
    cs.s_exponent = s;
    cs.g_profile = [c](double r) { return c * detail::bump_shape(r); };
    cs.grad_sup = c * h(0.5 * (a + b));
    cs.support_volume = 4.0 * pi / 3.0;
    cs.validate();
    return cs;
}

struct CoherentIdentity {
    double identity_lhs = 0.0;
    double identity_rhs = 0.0;
};

namespace detail {

/// (A * B)(q) for radial A, B with B supported in the ball of radius a,
/// through spherical means of A: 4 pi int_0^a B(u) u^2 mean_A(q, u) du.
inline double radial_convolution(const std::function<double(double)>& A, const std::function<double(double)>& B,
                                 double a, double q, const QuadratureSpec& spec) {
    const QuadratureSpec inner = spec.with_tol(spec.rel_tol * 1e-2, spec.abs_tol * 1e-2);
    auto mean = [&](double u) {
        if (q == 0.0 || u == 0.0) return A(std::max(q, u));
        const double lo = std::abs(q - u), hi = q + u;
        const double v = integrate_1d([&](double r) { return A(r) * r; }, lo, hi, inner).value;
        return v / (2.0 * q * u);
    };
    auto outer = [&](double u) { return 4.0 * pi * B(u) * u * u * mean(u); };
    if (q > 0.0 && q < a) return integrate_1d(outer, 0.0, a, std::vector<double>{q}, spec).value;
    return integrate_1d(outer, 0.0, a, spec).value;
}

inline double radial_norm2(const std::function<double(double)>& f, double scale, const QuadratureSpec& spec) {
    return integrate_1d([&](double r) { return 4.0 * pi * r * r * f(r) * f(r); }, 0.0, inf,
                        spec.with_map(SemiInfiniteMap::algebraic_map, scale))
        .value;
}

}  // namespace detail

/// (f, f) against (1/(2 pi)^3) int |(f, g^{p,q})|^2 dp dq; the p-integral is
/// done by Parseval, leaving int (|f|^2 * g_alpha^2)(q) dq as nested radial
/// quadratures. `scale` is a length on which f decays.
inline CoherentIdentity coherent_resolution_check(const std::function<double(double)>& f, const CoherentSpec& cs,
                                                  double alpha, double scale = 1.0,
                                                  const QuadratureSpec& spec = QuadratureSpec{}.with_tol(1e-11)) {
    cs.validate();
    detail::require_positive(alpha, "coherent_resolution_check: alpha");
    const double a = std::pow(alpha, cs.s_exponent);
    auto f2 = [&](double r) { return f(r) * f(r); };
    auto g2 = [&](double r) { return r < a ? std::pow(cs.scaled(alpha, r), 2) : 0.0; };
    CoherentIdentity out;
    out.identity_lhs = detail::radial_norm2(f, scale, spec);
    auto h = [&](double q) { return 4.0 * pi * q * q * detail::radial_convolution(f2, g2, a, q, spec); };
    out.identity_rhs = integrate_1d(h, 0.0, inf, spec.with_map(SemiInfiniteMap::algebraic_map, scale + a)).value;
    return out;
}

/// (f, (|x|^{-1} * g_alpha^2) f) two ways: the smeared potential from
/// Newton's theorem, and int (|f|^2 * g_alpha^2)(q) / |q| dq.
inline CoherentIdentity coherent_potential_check(const std::function<double(double)>& f, const CoherentSpec& cs,
                                                 double alpha, double scale = 1.0,
                                                 const QuadratureSpec& spec = QuadratureSpec{}.with_tol(1e-11)) {
    cs.validate();
    detail::require_positive(alpha, "coherent_potential_check: alpha");
    const double a = std::pow(alpha, cs.s_exponent);
    auto f2 = [&](double r) { return f(r) * f(r); };
    auto g2 = [&](double r) { return r < a ? std::pow(cs.scaled(alpha, r), 2) : 0.0; };
    const QuadratureSpec inner = spec.with_tol(spec.rel_tol * 1e-2, spec.abs_tol * 1e-2);
    auto smeared = [&](double r) {
        if (r >= a) return 1.0 / r;
        const double in = integrate_1d([&](double u) { return 4.0 * pi * u * u * g2(u); }, 0.0, r, inner).value;
        const double out = integrate_1d([&](double u) { return 4.0 * pi * u * g2(u); }, r, a, inner).value;
        return in / r + out;
    };
    const QuadratureSpec mapped = spec.with_map(SemiInfiniteMap::algebraic_map, scale + a);
    CoherentIdentity res;
    res.identity_lhs = integrate_1d([&](double r) { return 4.0 * pi * r * r * f2(r) * smeared(r); }, 0.0, inf,
                                    std::vector<double>{a}, mapped)
                           .value;
    auto h = [&](double q) { return 4.0 * pi * q * detail::radial_convolution(f2, g2, a, q, spec); };
    res.identity_rhs = integrate_1d(h, 0.0, inf, std::vector<double>{a}, mapped).value;
    return res;
}

/// 3 alpha ||grad g_alpha||_inf^2 Vol(supp g_alpha) per unit ||f||^2.
inline double coherent_kinetic_error_bound(const CoherentSpec& cs, double alpha) {
    detail::require_positive(alpha, "coherent_kinetic_error_bound: alpha");
    return 3.0 * cs.grad_sup * cs.grad_sup * cs.support_volume * std::pow(alpha, 1.0 - 2.0 * cs.s_exponent);
}

/// |1/R - (g_alpha^2 * |x|^{-1})(R)|, with the angular integral done by
/// quadrature rather than by Newton's theorem.
inline double newton_smearing_check(double alpha, double s, const CoherentSpec& cs, double radius) {
    detail::require_positive(alpha, "newton_smearing_check: alpha");
    detail::require_positive(radius, "newton_smearing_check: radius");
    CoherentSpec c = cs;
    c.s_exponent = s;
    const double a = std::pow(alpha, s);
    const QuadratureSpec spec = QuadratureSpec{}.with_tol(1e-13, 0.0);
    // c = 1 - w^2 maps the angular 1/sqrt singularity at u = R away.
    auto angular = [&](double u) {
        auto k = [&](double w) {
            return 2.0 * w / std::sqrt((radius - u) * (radius - u) + 2.0 * radius * u * w * w);
        };
        return integrate_1d(k, 0.0, std::sqrt(2.0), spec).value;
    };
    auto outer = [&](double u) {
        const double g = c.scaled(alpha, u);
        return 2.0 * pi * u * u * g * g * angular(u);
    };
    const double conv = radius < a ? integrate_1d(outer, 0.0, a, std::vector<double>{radius}, spec).value
                                   : integrate_1d(outer, 0.0, a, spec).value;
    return std::abs(1.0 / radius - conv);
}

}  // namespace semiclassic
