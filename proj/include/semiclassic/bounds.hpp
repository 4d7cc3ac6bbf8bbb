#pragma once

#include "kinetic.hpp"
#include "numerics.hpp"
#include "semiclassics.hpp"
#include "specfun.hpp"
#include "thomas_fermi.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace semiclassic {

struct DivergentIntegral : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BudgetViolation : std::runtime_error {
    std::string term;
    double exponent;
    BudgetViolation(std::string name, double e)
        : std::runtime_error("error budget term '" + name + "' has alpha exponent " + std::to_string(e) +
                             " <= -4/3"),
          term(std::move(name)), exponent(e) {}
};

// ---------------------------------------------------------------------------
// Partition of unity

struct PartitionParams {
    double r = 0.95;
    double t = 0.5;
    double s = 0.55;
    double beta = 0.1;
    double alpha = 1e-3;

    /// Only what the construction itself needs: ordered exponents and
    /// disjoint ramps, (1 - beta) alpha^t > (1 + beta) alpha^r.
    void validate_structure() const {
        if (!(beta > 0.0 && beta < 0.5)) throw DomainError("PartitionParams: beta must lie in (0, 1/2)");
        if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("PartitionParams: alpha must lie in (0, 1)");
        if (!(t > 0.0 && t < s && s < 1.0)) throw DomainError("PartitionParams: need 0 < t < s < 1");
        if (!(t < r && r < 1.0)) throw DomainError("PartitionParams: need t < r < 1");
        if (!((1.0 - beta) * std::pow(alpha, t) > (1.0 + beta) * std::pow(alpha, r)))
            throw DomainError("PartitionParams: alpha too large, the two ramps overlap");
    }

    /// The exponent window in which every error term is o(alpha^{-4/3}).
    void validate() const {
        validate_structure();
        if (!(r > 8.0 / 9.0 && r < 1.0)) throw DomainError("PartitionParams: r must lie in (8/9, 1)");
        if (!(t > 1.0 / 3.0 && t < 2.0 / 3.0)) throw DomainError("PartitionParams: t must lie in (1/3, 2/3)");
        if (!(s > t && s < 2.0 / 3.0)) throw DomainError("PartitionParams: s must lie in (t, 2/3)");
    }

    double inner_scale() const { return std::pow(alpha, r); }
    double outer_scale() const { return std::pow(alpha, t); }
};

namespace detail {

inline double ramp_f(double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; }
inline double ramp_df(double x) { return x > 0.0 ? std::exp(-1.0 / x) / (x * x) : 0.0; }

/// C-infinity step: 0 for x <= 0, 1 for x >= 1.
inline double smooth_step(double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double a = ramp_f(x), b = ramp_f(1.0 - x);
    return a / (a + b);
}

inline double smooth_step_derivative(double x) {
    if (x <= 0.0 || x >= 1.0) return 0.0;
    const double a = ramp_f(x), b = ramp_f(1.0 - x);
    return (ramp_df(x) * b + a * ramp_df(1.0 - x)) / ((a + b) * (a + b));
}

}  // namespace detail

/// theta_1 = cos(pi sigma / 2), theta_2 = sin(pi sigma / 2) with sigma ramping
/// from 0 at 1 - beta to 1 at 1 + beta.
struct Theta {
    double beta;
    double sigma(double xi) const { return detail::smooth_step((xi - (1.0 - beta)) / (2.0 * beta)); }
    double dsigma(double xi) const {
        return detail::smooth_step_derivative((xi - (1.0 - beta)) / (2.0 * beta)) / (2.0 * beta);
    }
    double theta1(double xi) const { return std::cos(0.5 * pi * sigma(xi)); }
    double theta2(double xi) const { return std::sin(0.5 * pi * sigma(xi)); }
    double dtheta1(double xi) const { return -0.5 * pi * std::sin(0.5 * pi * sigma(xi)) * dsigma(xi); }
    double dtheta2(double xi) const { return 0.5 * pi * std::cos(0.5 * pi * sigma(xi)) * dsigma(xi); }
};

struct Partition {
    PartitionParams params;
    Theta theta;

    double chi1(double x) const { return theta.theta1(x / params.inner_scale()); }
    double chi2(double x) const {
        return theta.theta1(x / params.outer_scale()) * theta.theta2(x / params.inner_scale());
    }
    double chi3(double x) const { return theta.theta2(x / params.outer_scale()); }
    double chi(int j, double x) const { return j == 1 ? chi1(x) : j == 2 ? chi2(x) : chi3(x); }

    /// d chi_j / d|x|.
    double grad(int j, double x) const {
        const double l = params.inner_scale(), L = params.outer_scale();
        switch (j) {
        case 1: return theta.dtheta1(x / l) / l;
        case 2:
            return theta.dtheta1(x / L) / L * theta.theta2(x / l) + theta.theta1(x / L) * theta.dtheta2(x / l) / l;
        case 3: return theta.dtheta2(x / L) / L;
        default: throw DomainError("Partition: index must be 1, 2 or 3");
        }
    }

    /// sup of |grad chi_j|^2 over lo < |x| < hi: dense scan of both ramps,
    /// refined by golden-section search around the best sample.
    double sup_grad_sq(int j, double lo, double hi) const {
        const double l = params.inner_scale(), L = params.outer_scale(), b = params.beta;
        double best = 0.0, arg = lo;
        auto g = [&](double x) { return std::pow(grad(j, x), 2); };
        for (auto [a0, a1] : {std::pair{(1 - b) * l, (1 + b) * l}, std::pair{(1 - b) * L, (1 + b) * L}}) {
            const double u0 = std::max(a0, lo), u1 = std::min(a1, hi);
            if (!(u1 > u0)) continue;
            const int n = 4000;
            for (int i = 0; i <= n; ++i) {
                const double x = u0 + (u1 - u0) * i / n;
                if (g(x) > best) best = g(x), arg = x;
            }
            double a = std::max(u0, arg - (u1 - u0) / n), c = std::min(u1, arg + (u1 - u0) / n);
            if (!(arg >= u0 && arg <= u1)) continue;
            const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
            for (int it = 0; it < 80; ++it) {
                const double x1 = c - gr * (c - a), x2 = a + gr * (c - a);
                if (g(x1) > g(x2)) c = x2;
                else a = x1;
            }
            best = std::max(best, g(0.5 * (a + c)));
        }
        return best;
    }
};

inline Partition make_partition(const PartitionParams& pp) {
    pp.validate_structure();
    return Partition{pp, Theta{pp.beta}};
}

// ---------------------------------------------------------------------------
// Mean-field reduction

/// c(phi) = (1/2) int int phi(x) phi(y) / |x - y| for radial phi supported in
/// the ball of radius a, by Newton's theorem: 4 pi int u phi(u) Q(u) du with
/// Q the enclosed mass.
inline double mean_field_constant(const std::function<double(double)>& phi, double a,
                                  const QuadratureSpec& spec = QuadratureSpec{}.with_tol(1e-12)) {
    detail::require_positive(a, "mean_field_constant: support radius");
    const QuadratureSpec inner = spec.with_tol(std::max(spec.rel_tol * 1e-1, 1e-13), spec.abs_tol * 1e-2);
    auto Q = [&](double u) {
        if (u == 0.0) return 0.0;
        return integrate_1d([&](double v) { return 4.0 * pi * phi(v) * v * v; }, 0.0, u, inner).value;
    };
    return integrate_1d([&](double u) { return 4.0 * pi * u * phi(u) * Q(u); }, 0.0, a, spec).value;
}

inline double mean_field_constant(const CoherentSpec& cs,
                                  const QuadratureSpec& spec = QuadratureSpec{}.with_tol(1e-12)) {
    cs.validate();
    return mean_field_constant([&](double r) { return std::pow(cs.g_profile(r), 2); }, 1.0, spec);
}

/// Unitary radial Fourier transform (2 pi)^{-3/2} 4 pi int phi(r) r^2 sinc(p r) dr.
inline double radial_fourier(const std::function<double(double)>& phi, double a, double p, const QuadratureSpec& spec) {
    auto f = [&](double r) {
        const double x = p * r;
        const double sinc = std::abs(x) < 1e-4 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
        return phi(r) * r * r * sinc;
    };
    return std::pow(2.0 * pi, -1.5) * 4.0 * pi * integrate_1d(f, 0.0, a, spec).value;
}

/// The same constant as 2 pi int |phi^(p)|^2 / p^2 d^3p = 8 pi^2 int |phi^(p)|^2 dp.
inline double mean_field_constant_momentum(const std::function<double(double)>& phi, double a,
                                           const QuadratureSpec& spec = QuadratureSpec{}.with_tol(1e-11, 1e-15)) {
    const QuadratureSpec inner = spec.with_tol(std::max(spec.rel_tol * 1e-2, 1e-13), 1e-15);
    auto h = [&](double p) { return std::pow(radial_fourier(phi, a, p, inner), 2); };
    // phi^ oscillates with period ~ 2 pi / a; past p = 400 / a a smooth profile has nothing left
    std::vector<double> breaks;
    for (int k = 1; k < 400; ++k) breaks.push_back(k / a);
    return 8.0 * pi * pi * integrate_1d(h, 0.0, 400.0 / a, breaks, spec).value;
}

inline double mean_field_error(double lambda, double delta, double alpha, double s, double c_phi) {
    detail::require_positive(lambda, "mean_field_error: lambda");
    detail::require_positive(delta, "mean_field_error: delta");
    detail::require_positive(alpha, "mean_field_error: alpha");
    if (!(s > 1.0 / 3.0 && s < 2.0 / 3.0)) throw DomainError("mean_field_error: s must lie in (1/3, 2/3)");
    return lambda * delta * c_phi * std::pow(alpha, -s);
}

// ---------------------------------------------------------------------------
// Zone near the nucleus

inline constexpr double lieb_yau_constant = 4.4827;
inline constexpr double daubechies_constant = 0.163;

inline double lieb_yau_ball_bound(double C0, double R, int q_spin, double chi_mass_fraction = 1.0) {
    detail::require_positive(C0, "lieb_yau_ball_bound: C0");
    detail::require_positive(R, "lieb_yau_ball_bound: R");
    if (q_spin < 1) throw DomainError("lieb_yau_ball_bound: q must be a positive integer");
    if (!(chi_mass_fraction >= 0.0 && chi_mass_fraction <= 1.0))
        throw DomainError("lieb_yau_ball_bound: mass fraction must lie in [0, 1]");
    return -lieb_yau_constant * std::pow(C0, 4) / R * q_spin * chi_mass_fraction;
}

struct InnerZoneBound {
    double value = 0.0;
    double exponent = 0.0;
    /// alpha below which alpha^{-1} >= C alpha^{1-2r}, C = (3/2)(c_1 + c_2).
    double alpha_threshold = 0.0;
    bool smallness_holds = false;
};

namespace detail {

inline InnerZoneBound inner_zone(const PartitionParams& pp, int q_spin) {
    const Partition P = make_partition(pp);
    const double l = pp.inner_scale(), b = pp.beta;
    const double C0 = 2.0 * (1.0 + b) * std::pow(pp.alpha, pp.r - 1.0), R = (1.0 + b) * l;
    InnerZoneBound out;
    out.value = lieb_yau_ball_bound(C0, R, q_spin, 1.0);
    out.exponent = 3.0 * pp.r - 4.0;
    // c_j alpha^{-2r} = sup_{|x| < 2l} |grad chi_j|^2
    const double c = (P.sup_grad_sq(1, 0.0, 2.0 * l) + P.sup_grad_sq(2, 0.0, 2.0 * l)) * l * l;
    const double C = 1.5 * c;
    out.alpha_threshold = C <= 1.0 ? 1.0 : std::pow(C, -1.0 / (2.0 * (1.0 - pp.r)));
    out.smallness_holds = pp.alpha <= out.alpha_threshold;
    return out;
}

}  // namespace detail

/// -4.4827 C0^4 R^{-1} q with R = (1 + beta) alpha^r, C0 = 2 (1 + beta) alpha^{r-1}.
/// With enforce_smallness the alpha-smallness condition that lets the
/// alpha^{1-2r} localisation remainder be absorbed is checked.
inline InnerZoneBound inner_zone_bound(const PartitionParams& pp, int q_spin = 2, bool enforce_smallness = true) {
    pp.validate();
    InnerZoneBound out = detail::inner_zone(pp, q_spin);
    if (enforce_smallness && !out.smallness_holds) {
        std::ostringstream os;
        os << "inner_zone_bound: alpha = " << pp.alpha << " exceeds the smallness threshold " << out.alpha_threshold;
        throw PreconditionFailure(os.str());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Intermediary zone

enum class FForm { exact, taylor_majorant };

/// -q 0.163 int F(|V|) d^3x over lo < |x| < hi for a callable V.
inline double daubechies_eigenvalue_sum_bound(const Dispersion& disp, const std::function<double(double)>& V,
                                              double lo, double hi, int q_spin, const QuadratureSpec& spec = {},
                                              FForm form = FForm::exact) {
    if (q_spin < 1) throw DomainError("daubechies_eigenvalue_sum_bound: q must be a positive integer");
    if (!(lo >= 0.0 && hi > lo)) throw DomainError("daubechies_eigenvalue_sum_bound: bad interval");
    const QuadratureSpec inner = spec.with_tol(std::max(spec.rel_tol * 1e-2, 1e-13), 0.0);
    auto F = [&](double s) {
        return form == FForm::exact ? daubechies_F(disp, s, inner) : daubechies_F_upper(disp, s);
    };
    auto f = [&](double u) { return 4.0 * pi * u * u * F(std::abs(V(u))); };
    if (std::isinf(hi))
        return -q_spin * daubechies_constant *
               integrate_1d(f, lo, inf, spec.with_map(SemiInfiniteMap::algebraic_map, std::max(lo, 1.0))).value;
    return -q_spin * daubechies_constant * integrate_1d(f, lo, hi, spec).value;
}

/// Same for a tabulated V. F(s) grows like s^4 and decays like s^{5/2}, so
/// the head must be milder than r^{-3/4} and a power-law tail steeper than r^{-6/5}.
inline double daubechies_eigenvalue_sum_bound(const Dispersion& disp, const RadialFunction& V, int q_spin,
                                              const QuadratureSpec& spec = {}, FForm form = FForm::exact) {
    if (q_spin < 1) throw DomainError("daubechies_eigenvalue_sum_bound: q must be a positive integer");
    if (V.head_exponent() <= -0.75)
        throw DivergentIntegral("daubechies_eigenvalue_sum_bound: F(|V|) not integrable at the origin");
    if (V.tail().kind == TailKind::power_law && V.tail().coefficient != 0.0 && V.tail().exponent >= -1.2)
        throw DivergentIntegral("daubechies_eigenvalue_sum_bound: F(|V|) not integrable at infinity");
    const QuadratureSpec inner = spec.with_tol(std::max(spec.rel_tol * 1e-2, 1e-13), 0.0);
    auto g = [&](double, double v) {
        const double s = std::abs(v);
        if (s == 0.0) return 0.0;
        return form == FForm::exact ? daubechies_F(disp, s, inner) : daubechies_F_upper(disp, s);
    };
    return -q_spin * daubechies_constant * V.integrate_3d(g, spec);
}

struct IntermediaryTerm {
    double value;
    double exponent;
};

struct IntermediaryZone {
    double value = 0.0;       // the (negative) lower bound
    double prefactor = 0.0;   // q 0.163 4 pi 2^{3/2} (2 delta)^{5/2}
    std::vector<IntermediaryTerm> terms;  // the six signed powers inside the bracket
    double exponent = 0.0;    // leading exponent (t - 3)/2
    /// alpha below which delta / (2 alpha^r) >= C alpha^{1-2r}.
    double alpha_threshold = 0.0;
};

namespace detail {

inline IntermediaryZone intermediary_zone(const PartitionParams& pp, double delta, int q_spin) {
    const double a = pp.alpha, r = pp.r, t = pp.t;
    IntermediaryZone z;
    z.prefactor = q_spin * daubechies_constant * 4.0 * pi * std::pow(2.0, 1.5) * std::pow(2.0 * delta, 2.5);
    auto P = [a](double e) { return std::pow(a, e); };
    z.terms = {{0.8 * P((t - 3) / 2), (t - 3) / 2},
               {-0.8 * P((r - 3) / 2), (r - 3) / 2},
               {6 * delta / 7 * P(-(r + 1) / 2), -(r + 1) / 2},
               {-6 * delta / 7 * P(-(t + 1) / 2), -(t + 1) / 2},
               {4 * delta * delta / 72 * P((1 - 3 * r) / 2), (1 - 3 * r) / 2},
               {-4 * delta * delta / 72 * P((1 - 3 * t) / 2), (1 - 3 * t) / 2}};
    double sum = 0.0;
    for (const auto& x : z.terms) sum += x.value;
    z.value = -z.prefactor * sum;
    z.exponent = (t - 3) / 2;
    const Partition part = make_partition(pp);
    const double l = pp.inner_scale();
    const double C = 1.5 * (part.sup_grad_sq(1, 0.0, 2.0 * l) + part.sup_grad_sq(2, 0.0, 2.0 * l)) * l * l;
    // delta alpha^{r-1} / 2 >= C
    z.alpha_threshold = 2.0 * C / delta <= 1.0 ? 1.0 : std::pow(2.0 * C / delta, -1.0 / (1.0 - r));
    return z;
}

}  // namespace detail

/// -q 0.163 int_{alpha^r < |x| < alpha^t} F_upper(2 delta / |x|) d^3x in closed form.
inline IntermediaryZone intermediary_zone_closed_form(const PartitionParams& pp, double delta, int q_spin = 2) {
    pp.validate();
    if (!(delta > 0.0 && delta <= 2.0 / pi * (1.0 + 1e-12)))
        throw DomainError("intermediary_zone_closed_form: delta must lie in (0, 2/pi]");
    return detail::intermediary_zone(pp, delta, q_spin);
}

// ---------------------------------------------------------------------------
// Off-diagonal localisation terms

/// Braces of the decay envelope in tau = 4 gamma alpha^{r-1}. `exact_integral`
/// is int_tau^inf t^{-3} (1 + 1/t + 1/t^2)^2 dt with e^{-t} pulled out;
/// `as_printed` is the closed form tau^{-4}/4 + ... + tau^{-8}/8, which is
/// smaller than the integral it stands for.
enum class BracesForm { exact_integral, as_printed };

inline double decay_braces(double tau, BracesForm form) {
    if (form == BracesForm::exact_integral)
        return std::pow(tau, -2) / 2 + 2 * std::pow(tau, -3) / 3 + 3 * std::pow(tau, -4) / 4 +
               2 * std::pow(tau, -5) / 5 + std::pow(tau, -6) / 6;
    return std::pow(tau, -4) / 4 + 2 * std::pow(tau, -5) / 5 + std::pow(tau, -6) / 2 + 2 * std::pow(tau, -7) / 7 +
           std::pow(tau, -8) / 8;
}

/// log of the envelope, usable far below the smallest double alpha.
inline double lemma_decay_log_envelope(double log_alpha, double r, double gamma_sep,
                                       BracesForm form = BracesForm::exact_integral) {
    if (!(gamma_sep > 0.0 && gamma_sep < 1.0)) throw DomainError("lemma_decay_envelope: gamma must lie in (0, 1)");
    if (!(log_alpha < 0.0)) throw DomainError("lemma_decay_envelope: alpha must lie in (0, 1)");
    const double log_tau = std::log(4.0 * gamma_sep) + (r - 1.0) * log_alpha;
    const double tau = std::exp(log_tau);
    // C_ball l^{3/2} (alpha gamma)^{-2} / (4 pi^2) * sqrt(128 pi^2 gamma / alpha * e^{-tau} * braces)
    const double log_cball = 0.5 * std::log(4.0 * pi / 3.0) + 1.5 * std::log(2.0);
    double log_braces;
    if (form == BracesForm::exact_integral) {
        // leading tau^{-2}/2 factored out to stay finite for huge tau
        const double rest = 1.0 + 4.0 / (3 * tau) + 1.5 / (tau * tau) + 0.8 / std::pow(tau, 3) + 1.0 / (3 * std::pow(tau, 4));
        log_braces = std::log(0.5) - 2.0 * log_tau + std::log(rest);
    } else {
        const double rest = 1.0 + 1.6 / tau + 2.0 / (tau * tau) + 8.0 / (7 * std::pow(tau, 3)) + 0.5 / std::pow(tau, 4);
        log_braces = std::log(0.25) - 4.0 * log_tau + std::log(rest);
    }
    return log_cball + 1.5 * r * log_alpha - 2.0 * (log_alpha + std::log(gamma_sep)) - std::log(4.0 * pi * pi) +
           0.5 * (std::log(128.0 * pi * pi * gamma_sep) - log_alpha - tau + log_braces);
}

inline double lemma_decay_envelope(const PartitionParams& pp, double gamma_sep,
                                   BracesForm form = BracesForm::exact_integral) {
    pp.validate_structure();
    return std::exp(lemma_decay_log_envelope(std::log(pp.alpha), pp.r, gamma_sep, form));
}

/// Brute-force Cauchy-Schwarz bound: ||chi_-||_2 (alpha gamma)^{-2} / (4 pi^2)
/// (int_{|x| > a_out l} (K2(gamma |x| / alpha) / |x|^2)^2 d^3x)^{1/2},
/// with chi_- the indicator of the 2l-ball and gamma = 1 - b_in / a_out.
inline double kernel_offdiag_numeric(const PartitionParams& pp, double a_out, double b_in,
                                     const QuadratureSpec& spec = QuadratureSpec{}.with_tol(1e-10)) {
    pp.validate_structure();
    detail::require_positive(a_out, "kernel_offdiag_numeric: a_out");
    detail::require_positive(b_in, "kernel_offdiag_numeric: b_in");
    const double gamma = 1.0 - b_in / a_out;
    if (!(gamma > 0.0)) throw DomainError("kernel_offdiag_numeric: need b_in < a_out");
    const double a = pp.alpha, l = pp.inner_scale();
    const double chi_minus = std::sqrt(4.0 * pi / 3.0) * std::pow(2.0 * l, 1.5);
    // u = gamma |x| / alpha
    const double u0 = gamma * a_out * l / a;
    auto f = [](double u) {
        const double k = k2(u);
        return k * k / (u * u);
    };
    const double I = 4.0 * pi * std::pow(gamma / a, 1.0) *
                     integrate_1d(f, u0, inf, spec.with_map(SemiInfiniteMap::exp_decay_map, 0.5)).value;
    return chi_minus * std::pow(a * gamma, -2) / (4.0 * pi * pi) * std::sqrt(I);
}

enum class LocalisationRegion { inner, outer };

/// (3/2) c alpha with c = sup |grad chi_j|^2 over |x| < 2l (inner) or
/// |x| > 2l (outer); only the four mean-value-theorem terms are accepted.
inline double localisation_gradient_bound(const PartitionParams& pp, LocalisationRegion region, int j) {
    pp.validate_structure();
    const bool ok = region == LocalisationRegion::inner ? (j == 1 || j == 2) : (j == 2 || j == 3);
    if (!ok)
        throw DomainError("localisation_gradient_bound: this term vanishes or decays faster than any power; "
                          "use lemma_decay_envelope");
    const Partition P = make_partition(pp);
    const double l = pp.inner_scale();
    const double c = region == LocalisationRegion::inner ? P.sup_grad_sq(j, 0.0, 2.0 * l)
                                                         : P.sup_grad_sq(j, 2.0 * l, inf);
    return 1.5 * c * pp.alpha;
}

// ---------------------------------------------------------------------------
// Error budget

struct BudgetTerm {
    std::string name;
    double value = 0.0;     // magnitude in units of alpha H, per atom
    double exponent = 0.0;  // alpha exponent; +inf for faster than any power
    std::string reference;
};

struct ErrorBudget {
    double alpha = 0.0;
    double delta = 0.0;
    double lambda = 0.0;
    std::vector<BudgetTerm> terms;
    std::vector<std::string> notes;

    double total() const {
        double s = 0.0;
        for (const auto& t : terms) s += t.value;
        return s;
    }
    const BudgetTerm& binding_term() const {
        return *std::min_element(terms.begin(), terms.end(),
                                 [](const BudgetTerm& a, const BudgetTerm& b) { return a.exponent < b.exponent; });
    }
    const BudgetTerm& term(const std::string& name) const {
        for (const auto& t : terms)
            if (t.name == name) return t;
        throw DomainError("ErrorBudget: no term named " + name);
    }
};

namespace detail {

inline std::string exponent_text(double e) {
    if (std::isinf(e)) return "inf";
    std::ostringstream os;
    os.precision(17);
    os << e;
    return os.str();
}

}  // namespace detail

inline std::string to_csv(const ErrorBudget& b) {
    std::ostringstream os;
    os.precision(17);
    os << "name,reference,alpha,value,exponent\n";
    for (const auto& t : b.terms)
        os << t.name << ",\"" << t.reference << "\"," << b.alpha << ',' << t.value << ','
           << detail::exponent_text(t.exponent) << '\n';
    return os.str();
}

inline nlohmann::json to_json(const ErrorBudget& b) {
    nlohmann::json j;
    j["alpha"] = b.alpha;
    j["delta"] = b.delta;
    j["lambda"] = b.lambda;
    j["total"] = b.total();
    j["binding_term"] = b.binding_term().name;
    j["terms"] = nlohmann::json::array();
    for (const auto& t : b.terms) {
        nlohmann::json e{{"name", t.name}, {"value", t.value}, {"reference", t.reference}};
        if (std::isinf(t.exponent)) e["exponent"] = "inf";
        else e["exponent"] = t.exponent;
        j["terms"].push_back(e);
    }
    j["notes"] = b.notes;
    return j;
}

/// Analytic alpha exponents of the nine terms, in budget order.
inline std::vector<std::pair<std::string, double>> budget_exponents(const PartitionParams& pp) {
    const double r = pp.r, t = pp.t, s = pp.s;
    return {{"mean_field", -s},
            {"inner_zone", 3 * r - 4},
            {"intermediary_zone", (t - 3) / 2},
            {"localisation_outer", -2 * t},
            {"localisation_decay", inf},
            {"coherent_kinetic", -2 * s},
            {"domain_change", -(1 + t) / 2},
            {"quartic", -(1 + t) / 2},
            {"mu_N", inf}};
}

/// Budget for the atom with coupling delta = Z alpha; `sol` supplies the
/// TF profile at this lambda (any Z, it is rescaled).
inline ErrorBudget assemble_error_budget(const PartitionParams& pp, const TFSolution& sol, double delta,
                                         const CoherentSpec& cs, double c_phi, const QuadratureSpec& spec = {}) {
    pp.validate_structure();
    for (const auto& [name, e] : budget_exponents(pp))
        if (!(e > -4.0 / 3.0)) throw BudgetViolation(name, e);
    pp.validate();
    if (std::abs(cs.s_exponent - pp.s) > 1e-15) throw DomainError("assemble_error_budget: coherent s differs from pp.s");
    if (!(delta > 0.0 && delta <= 2.0 / pi * (1.0 + 1e-12)))
        throw DomainError("assemble_error_budget: delta must lie in (0, 2/pi]");

    const double a = pp.alpha, lambda = sol.params.lambda, N = lambda * delta / a, b = pp.beta;
    const Partition P = make_partition(pp);
    const double l = pp.inner_scale();
    ErrorBudget B;
    B.alpha = a;
    B.delta = delta;
    B.lambda = lambda;
    const auto ex = budget_exponents(pp);
    auto add = [&](std::size_t i, double v, std::string ref) { B.terms.push_back({ex[i].first, v, ex[i].second, ref}); };

    add(0, mean_field_error(lambda, delta, a, pp.s, c_phi), "electron repulsion smeared on the coherent-state scale");

    const InnerZoneBound iz = detail::inner_zone(pp, 2);
    add(1, std::abs(iz.value), "Lieb-Yau ball bound with R = (1+beta) alpha^r");
    if (!iz.smallness_holds) {
        std::ostringstream os;
        os << "inner_zone: the alpha^{1-2r} remainder is absorbed only for alpha <= " << iz.alpha_threshold;
        B.notes.push_back(os.str());
    }

    const IntermediaryZone mz = detail::intermediary_zone(pp, delta, 2);
    add(2, std::abs(mz.value), "Daubechies bound on the chi_2 zone, Taylor majorant of F");
    if (a > mz.alpha_threshold) {
        std::ostringstream os;
        os << "intermediary_zone: the alpha^{1-2r} remainder is absorbed only for alpha <= " << mz.alpha_threshold;
        B.notes.push_back(os.str());
    }

    const double c_out = P.sup_grad_sq(2, 2.0 * l, inf) + P.sup_grad_sq(3, 2.0 * l, inf);
    add(3, N * 1.5 * c_out * a, "mean-value bound on chi_+ L_2 chi_+ and chi_+ L_3 chi_+");

    const double g1 = 1.0 - (1.0 + b) / 2.0;
    const double g3 = 1.0 - 2.0 / ((1.0 - b) * std::pow(a, pp.t - pp.r));
    if (!(g3 > 0.0)) throw DomainError("assemble_error_budget: alpha too large for the outer off-diagonal geometry");
    // L_1 and L_2 (worst of its two geometries) at gamma_1, L_3 at gamma_3; each with its transpose.
    const double decay = 2.0 * (2.0 * lemma_decay_envelope(pp, g1) + lemma_decay_envelope(pp, g3));
    add(4, N * decay, "off-diagonal localisation terms, decay envelope");

    add(5, N * coherent_kinetic_error_bound(cs, a), "coherent-state kinetic error");

    const RadialFunction V1 = unit_charge_potential(sol);
    add(6, domain_change_error(V1, delta, a, pp.t, spec) / std::pow(2.0 * pi, 3), "relativistic vs classical allowed region");

    add(7, quartic_correction_bound(delta / a, a, pp.t), "quartic correction of the kinetic symbol");

    // alpha |mu int rho - mu N| at Z = delta / alpha, from the solution's
    // relative mass defect and mu ~ Z^{4/3}.
    const double Z = delta / a, Zs = sol.params.Z;
    const double rel = sol.neutral() ? 0.0 : (tf_mass(sol) - sol.params.N()) / sol.params.N();
    add(8, a * std::abs(sol.mu * std::pow(Z / Zs, 4.0 / 3.0) * lambda * Z * rel), "chemical potential bookkeeping");
    return B;
}

inline ErrorBudget assemble_error_budget(const PartitionParams& pp, const TFSolution& sol, const Dispersion& disp,
                                         const CoherentSpec& cs) {
    if (std::abs(disp.alpha - pp.alpha) > 1e-14 * pp.alpha)
        throw DomainError("assemble_error_budget: dispersion alpha differs from the partition alpha");
    return assemble_error_budget(pp, sol, sol.params.Z * disp.alpha, cs, mean_field_constant(cs));
}

}  // namespace semiclassic
