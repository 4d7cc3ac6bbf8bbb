#pragma once

#include "numerics.hpp"

#include <json.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace semiclassic {

struct ShootingFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ToleranceFailure : std::runtime_error {
    double achieved;
    ToleranceFailure(const std::string& what, double a) : std::runtime_error(what), achieved(a) {}
};

/// Kinetic coefficient of the functional as printed: (3 pi^2)^{2/3}.
inline double gamma_default() { return std::pow(3.0 * pi * pi, 2.0 / 3.0); }

/// The gamma for which (3/5) gamma rho^{5/3} is the Legendre dual of the
/// semiclassical phase-space energy with q spin states.
inline double gamma_self_consistent(double spin_q = 1.0) {
    return std::pow(3.0 * pi * pi / (std::sqrt(2.0) * spin_q), 2.0 / 3.0);
}

struct TFParams {
    double lambda = 1.0;
    double Z = 1.0;
    double gamma_kin = gamma_default();
    // Spin multiplicity of the phase-space measure. The functional does not
    // depend on it; it is carried along for the semiclassical comparisons.
    int spin_q = 1;

    void validate() const {
        if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("TFParams: lambda must be positive");
        if (!(Z > 0.0) || !std::isfinite(Z)) throw DomainError("TFParams: Z must be positive");
        if (!(gamma_kin > 0.0) || !std::isfinite(gamma_kin)) throw DomainError("TFParams: gamma_kin must be positive");
        if (spin_q < 1) throw DomainError("TFParams: spin_q must be a positive integer");
    }
    double N() const { return lambda * Z; }
    /// Radius unit b of the screening variable x = r / b.
    double length_scale() const { return gamma_kin * std::pow(4.0 * pi, -2.0 / 3.0) * std::pow(Z, -1.0 / 3.0); }
};

struct TFEnergyTerms {
    double kinetic = 0.0;
    double attraction = 0.0;
    double repulsion = 0.0;
    double total() const { return kinetic + attraction + repulsion; }
};

/// Solved atom. `phi` and `rho` live on a common grid in the physical radius
/// r = b x; `slope0` is phi'(0) in the screening variable and `edge_radius`
/// is the edge x0 in that variable (infinity for lambda >= 1).
struct TFSolution {
    TFParams params;
    RadialFunction phi;
    RadialFunction rho;
    double slope0 = 0.0;
    double mu = 0.0;
    double edge_radius = inf;
    TFEnergyTerms energy_terms;

    double length_scale() const { return params.length_scale(); }
    bool neutral() const { return std::isinf(edge_radius); }
};

struct TFSolverOptions {
    double x_start = 1e-8;   // series matching point
    double x_far = 1e7;      // neutral: start of the inward integration
    double x_grid_end = 1e5; // neutral: last grid point before the tail
    int points_per_decade = 400;
    double ode_rtol = 1e-12;
};

// ---------------------------------------------------------------------------
// Radial Coulomb bookkeeping

/// Enclosed mass Q(r) = 4 pi int_0^r rho v^2 dv and outer potential
/// P(r) = 4 pi int_r^inf rho v dv at the grid nodes, so that
/// (rho * |x|^{-1})(r) = Q(r)/r + P(r).
struct CoulombProfile {
    std::vector<double> Q, P;
    double mass = 0.0;
    double newton(std::size_t i, double r) const { return Q[i] / r + P[i]; }
};

namespace detail {

struct HeadLaw {
    double c, p;  // rho ~ c r^p below the grid
};

inline HeadLaw head_law(const RadialFunction& rho) {
    const double p = rho.head_exponent();
    return {rho.values()[0] * std::pow(rho.r_min(), -p), p};
}

}  // namespace detail

inline CoulombProfile coulomb_profile(const RadialFunction& rho) {
    const auto& r = rho.grid();
    const std::size_t n = r.size();
    std::vector<double> qc(n - 1), pc(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        auto fq = [&](double s) {
            const double x = std::exp(s);
            return 4.0 * pi * rho(x) * x * x * x;
        };
        auto fp = [&](double s) {
            const double x = std::exp(s);
            return 4.0 * pi * rho(x) * x * x;
        };
        qc[i] = detail::gk15(fq, std::log(r[i]), std::log(r[i + 1])).value;
        pc[i] = detail::gk15(fp, std::log(r[i]), std::log(r[i + 1])).value;
    }
    const auto h = detail::head_law(rho);
    if (!(h.p > -2.0)) throw DomainError("coulomb_profile: density too singular at the origin");
    CoulombProfile out;
    out.Q.resize(n);
    out.P.resize(n);
    out.Q[0] = 4.0 * pi * rho.values()[0] * std::pow(r[0], 3) / (h.p + 3.0);
    for (std::size_t i = 1; i < n; ++i) out.Q[i] = out.Q[i - 1] + qc[i - 1];
    double p_tail = 0.0, q_tail = 0.0;
    const Tail& t = rho.tail();
    if (t.kind == TailKind::power_law) {
        if (!(t.exponent < -3.0)) throw DomainError("coulomb_profile: density tail not integrable");
        const double R = r.back(), e = t.exponent;
        p_tail = -4.0 * pi * t.coefficient * std::pow(R, e + 2.0) / (e + 2.0);
        q_tail = -4.0 * pi * t.coefficient * std::pow(R, e + 3.0) / (e + 3.0);
    }
    out.P[n - 1] = p_tail;
    for (std::size_t i = n - 1; i-- > 0;) out.P[i] = out.P[i + 1] + pc[i];
    out.mass = out.Q[n - 1] + q_tail;
    return out;
}

/// int int rho(x) rho(y) / |x - y| d^3x d^3y = 2 int 4 pi rho(u) u Q(u) du.
inline double coulomb_self_energy(const RadialFunction& rho, const CoulombProfile& cp) {
    const auto& r = rho.grid();
    const std::size_t n = r.size();
    double body = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double si = std::log(r[i]);
        auto fq = [&](double s) {
            const double x = std::exp(s);
            return 4.0 * pi * rho(x) * x * x * x;
        };
        auto f = [&](double s) {
            const double x = std::exp(s);
            const double q = cp.Q[i] + (s > si ? detail::gk15(fq, si, s).value : 0.0);
            return 4.0 * pi * rho(x) * x * x * q;
        };
        body += detail::gk15(f, si, std::log(r[i + 1])).value;
    }
    const auto h = detail::head_law(rho);
    const double head = 16.0 * pi * pi * h.c * h.c * std::pow(r[0], 2.0 * h.p + 5.0) / ((h.p + 3.0) * (2.0 * h.p + 5.0));
    double tail = 0.0;
    const Tail& t = rho.tail();
    if (t.kind == TailKind::power_law) {
        const double R = r.back(), e = t.exponent, c = t.coefficient, QN = cp.Q[n - 1];
        const double a = QN - 4.0 * pi * c * std::pow(R, e + 3.0) / (e + 3.0);
        tail = a * (-4.0 * pi * c * std::pow(R, e + 2.0) / (e + 2.0)) +
               16.0 * pi * pi * c * c / (e + 3.0) * (-std::pow(R, 2.0 * e + 5.0) / (2.0 * e + 5.0));
    }
    return 2.0 * (body + head + tail);
}

/// Terms of the functional evaluated on an arbitrary radial density.
inline TFEnergyTerms tf_functional(const TFParams& params, const RadialFunction& rho, const QuadratureSpec& spec = {}) {
    params.validate();
    TFEnergyTerms e;
    e.kinetic = 0.6 * params.gamma_kin * rho.integrate_3d([](double, double v) { return v > 0.0 ? std::pow(v, 5.0 / 3.0) : 0.0; }, spec);
    e.attraction = -params.Z * rho.integrate_3d([](double r, double v) { return v / r; }, spec);
    e.repulsion = 0.5 * coulomb_self_energy(rho, coulomb_profile(rho));
    return e;
}

// ---------------------------------------------------------------------------
// Shooting

namespace detail {

// phi'' = [phi]_+^{3/2} / sqrt(x) in u = ln x with y = (phi, x phi').
inline State tf_rhs(double u, const State& y) {
    const double x = std::exp(u);
    const double p = y[0] > 0.0 ? y[0] : 0.0;
    return {y[1], y[1] + x * std::sqrt(x) * p * std::sqrt(p)};
}

inline IvpOptions tf_ivp(const TFSolverOptions& o) {
    IvpOptions iv;
    iv.rtol = o.ode_rtol;
    iv.atol = 1e-300;
    return iv;
}

// Decay exponent of the leading correction to 144/x^3.
inline double sommerfeld_kappa() { return 0.5 * (std::sqrt(73.0) - 7.0); }

// State at x on the one-parameter tail family 144/x^3 (1 + C x^{-kappa}).
inline State sommerfeld_state(double x, double C) {
    const double k = sommerfeld_kappa();
    const double w = C * std::pow(x, -k);
    const double phi = 144.0 / (x * x * x) * (1.0 + w);
    const double xdphi = 144.0 / (x * x * x) * (-3.0 - (3.0 + k) * w);
    return {phi, xdphi};
}

inline Trajectory shoot_inward(double C, const TFSolverOptions& o) {
    return solve_ivp(tf_rhs, sommerfeld_state(o.x_far, C), std::log(o.x_far), std::log(o.x_start), tf_ivp(o));
}

// Mismatch at x_start between the inward solution and the origin series
// 1 + s x + (4/3) x^{3/2} whose slope s is read off the same solution.
inline double inward_mismatch(const Trajectory& tr, double xs) {
    const State& y = tr.back();
    const double s = y[1] / xs - 2.0 * std::sqrt(xs);
    return y[0] - (1.0 + s * xs + 4.0 / 3.0 * xs * std::sqrt(xs));
}

inline State series_state(double x, double s0) {
    const double rx = std::sqrt(x);
    return {1.0 + s0 * x + 4.0 / 3.0 * x * rx, x * (s0 + 2.0 * rx)};
}

struct OutwardShot {
    Trajectory tr;
    bool hit_edge;
};

inline OutwardShot shoot_outward(double s0, const TFSolverOptions& o) {
    // Stop at the edge (phi = 0) or when phi turns upward (overshoot).
    auto event = [](double, const State& y) { return std::min(y[0], -y[1]); };
    Trajectory tr = solve_ivp(tf_rhs, series_state(o.x_start, s0), std::log(o.x_start), std::log(o.x_far), tf_ivp(o), event);
    const bool edge = tr.terminated_by_event() && tr.back()[0] <= -tr.back()[1];
    return {std::move(tr), edge};
}

}  // namespace detail

/// Neutral tail-family parameter C and the resulting inward trajectory.
struct NeutralShot {
    double C;
    double slope0;
    Trajectory tr;
};

inline NeutralShot solve_neutral_profile(const TFSolverOptions& o = {}) {
    auto F = [&](double C) { return detail::inward_mismatch(detail::shoot_inward(C, o), o.x_start); };
    double lo = -20.0, hi = 0.0;
    double flo = F(lo), fhi = F(hi);
    for (int k = 0; k < 20 && flo > 0.0; ++k) flo = F(lo *= 2.0);
    for (int k = 0; k < 20 && fhi < 0.0; ++k) fhi = F(hi = hi == 0.0 ? 20.0 : 2.0 * hi);
    if (!(flo < 0.0 && fhi > 0.0)) throw ShootingFailure("tf solve: no bracket for the neutral tail parameter");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (F(mid) < 0.0 ? lo : hi) = mid;
    }
    const double C = 0.5 * (lo + hi);
    Trajectory tr = detail::shoot_inward(C, o);
    const double xs = o.x_start;
    const double s0 = tr.back()[1] / xs - 2.0 * std::sqrt(xs);
    return {C, s0, std::move(tr)};
}

/// Ion: slope0 and edge x0 with -x0 phi'(x0) = 1 - lambda.
struct IonShot {
    double slope0;
    double edge;
    Trajectory tr;
};

inline IonShot solve_ion_profile(double lambda, double neutral_slope0, const TFSolverOptions& o = {}) {
    const double target = 1.0 - lambda;
    auto G = [&](double s0) {
        auto shot = detail::shoot_outward(s0, o);
        if (!shot.hit_edge) return -target;
        return -shot.tr.back()[1] - target;
    };
    double hi = neutral_slope0, lo = neutral_slope0 - 1.0;
    double glo = G(lo);
    for (int k = 0; k < 60 && glo <= 0.0; ++k) glo = G(lo -= std::pow(2.0, k));
    if (!(glo > 0.0)) throw ShootingFailure("tf solve: no bracket for the ionic slope");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (G(mid) > 0.0 ? lo : hi) = mid;
    }
    // lo stays on the edge-hitting side of the bracket.
    auto shot = detail::shoot_outward(lo, o);
    if (!shot.hit_edge) throw ShootingFailure("tf solve: final ionic shot missed the edge");
    const double edge = std::exp(shot.tr.x_back());
    return {lo, edge, std::move(shot.tr)};
}

// ---------------------------------------------------------------------------
// Solution assembly

namespace detail {

inline TFSolution assemble(const TFParams& p, const std::vector<double>& xs, const std::vector<State>& ys, double slope0,
                           double edge) {
    const double b = p.length_scale(), Z = p.Z, g = p.gamma_kin;
    const std::size_t n = xs.size();
    std::vector<double> r(n), phi(n), dphi(n), rho(n), drho(n);
    const double k = std::pow(Z / (g * b), 1.5);
    for (std::size_t i = 0; i < n; ++i) {
        r[i] = b * xs[i];
        phi[i] = std::max(ys[i][0], 0.0);
        dphi[i] = ys[i][1];
        // rho = (Z phi / (gamma b x))^{3/2}, d rho / d ln r = 3/2 k x^{-3/2} phi^{1/2} (x phi' - phi)
        const double x32 = std::pow(xs[i], -1.5);
        rho[i] = k * x32 * phi[i] * std::sqrt(phi[i]);
        drho[i] = 1.5 * k * x32 * std::sqrt(phi[i]) * (dphi[i] - phi[i]);
    }
    TFSolution s;
    s.params = p;
    s.slope0 = slope0;
    s.edge_radius = edge;
    if (std::isinf(edge)) {
        s.mu = 0.0;
        const double a = 144.0 * b * b * b;
        s.phi = RadialFunction(r, phi, dphi, Tail::power_law(-3.0, a));
        s.rho = RadialFunction(r, rho, drho, Tail::power_law(-6.0, std::pow(Z * a / g, 1.5)));
    } else {
        s.mu = Z * (1.0 - p.lambda) / (b * edge);
        phi.back() = 0.0;
        rho.back() = 0.0;
        drho.back() = 0.0;
        s.phi = RadialFunction(r, phi, dphi, Tail::zero());
        s.rho = RadialFunction(r, rho, drho, Tail::zero());
    }
    s.energy_terms = tf_functional(p, s.rho);
    return s;
}

}  // namespace detail

inline double tf_equation_residual(const TFParams& params, const RadialFunction& rho, double mu);

/// Solve the atom. Throws ToleranceFailure when the equation residual
/// exceeds tol.
inline TFSolution solve(const TFParams& params, double tol = 1e-6, const TFSolverOptions& o = {}) {
    params.validate();
    if (!(tol > 1e-12 && tol < 1e-3)) throw DomainError("tf solve: tol must lie in (1e-12, 1e-3)");
    NeutralShot ns = solve_neutral_profile(o);
    std::vector<double> xs;
    std::vector<State> ys;
    TFSolution sol;
    auto sample = [&](const Trajectory& tr, double x_lo, double x_hi) {
        const int n = std::max(2, int(std::ceil(o.points_per_decade * std::log10(x_hi / x_lo)))) + 1;
        xs = log_space(x_lo, x_hi, n);
        ys.clear();
        for (double x : xs) ys.push_back(tr(std::clamp(std::log(x), std::min(tr.x_front(), tr.x_back()),
                                                        std::max(tr.x_front(), tr.x_back()))));
    };
    if (params.lambda >= 1.0) {
        sample(ns.tr, o.x_start, o.x_grid_end);
        sol = detail::assemble(params, xs, ys, ns.slope0, inf);
    } else {
        IonShot is = solve_ion_profile(params.lambda, ns.slope0, o);
        sample(is.tr, o.x_start, is.edge);
        // rho vanishes like (x0 - x)^{3/2}; grade the mesh geometrically
        // toward the edge so the last cells stay well resolved.
        const double x0 = is.edge;
        while (xs.size() > 2 && xs.back() > x0 * (1.0 - 0.05)) xs.pop_back();
        for (double d = 0.05; d > 1e-11; d *= 0.85) xs.push_back(x0 * (1.0 - d));
        xs.push_back(x0);
        ys.clear();
        const double u_end = is.tr.x_back();
        for (double x : xs) ys.push_back(is.tr(std::min(std::log(x), u_end)));
        sol = detail::assemble(params, xs, ys, is.slope0, is.edge);
    }
    const double res = tf_equation_residual(params, sol.rho, sol.mu);
    if (!(res <= tol)) throw ToleranceFailure("tf solve: equation residual above tolerance", res);
    return sol;
}

inline double tf_energy(const TFSolution& s) { return s.energy_terms.total(); }

/// Energy from the shooting data alone:
/// E = (3/7) [Z^2 phi'(0) / b + mu (Z - N)].
inline double tf_energy_slope_route(const TFSolution& s) {
    const double Z = s.params.Z;
    const double charge = s.neutral() ? 0.0 : Z * (1.0 - s.params.lambda);
    return 3.0 / 7.0 * (Z * Z * s.slope0 / s.length_scale() + s.mu * charge);
}

/// C_TF(lambda) = -E(lambda, Z = 1).
inline double c_tf(double lambda, double gamma_kin = gamma_default()) {
    TFParams p{lambda, 1.0, gamma_kin, 1};
    return -tf_energy(solve(p));
}

/// sup over grid nodes of |gamma rho^{2/3} - [Z/r - rho*|x|^{-1} - mu]_+| / (1 + gamma rho^{2/3}).
inline double tf_equation_residual(const TFParams& params, const RadialFunction& rho, double mu) {
    const CoulombProfile cp = coulomb_profile(rho);
    const auto& r = rho.grid();
    double worst = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double lhs = params.gamma_kin * std::pow(std::max(rho.values()[i], 0.0), 2.0 / 3.0);
        const double rhs = std::max(params.Z / r[i] - cp.newton(i, r[i]) - mu, 0.0);
        worst = std::max(worst, std::abs(lhs - rhs) / (1.0 + lhs));
    }
    return worst;
}

inline double tf_equation_residual(const TFSolution& s) { return tf_equation_residual(s.params, s.rho, s.mu); }

/// [V_TF]_+ on the solution grid; V_TF itself continues negatively past the
/// edge of an ion, see tf_potential_value.
inline RadialFunction tf_potential(const TFSolution& s) {
    const auto& r = s.phi.grid();
    const auto& ph = s.phi.values();
    const auto& dph = s.phi.log_slopes();
    const double Z = s.params.Z;
    std::vector<double> v(r.size()), dv(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        v[i] = Z * ph[i] / r[i];
        dv[i] = Z * (dph[i] - ph[i]) / r[i];
    }
    Tail t = Tail::zero();
    if (s.neutral()) t = Tail::power_law(-4.0, Z * s.phi.tail().coefficient);
    return RadialFunction(r, v, dv, t);
}

/// Z/r - rho * |x|^{-1} - mu at r, including the negative region outside an ion.
inline double tf_potential_value(const TFSolution& s, double r) {
    if (!(r > 0.0)) throw DomainError("tf_potential_value: r must be positive");
    const double Z = s.params.Z;
    if (!s.neutral()) {
        const double r0 = s.edge_radius * s.length_scale();
        if (r >= r0) return Z * (1.0 - s.params.lambda) * (1.0 / r - 1.0 / r0);
    }
    return Z * s.phi(r) / r;
}

inline double tf_mass(const TFSolution& s) { return coulomb_profile(s.rho).mass; }

inline double mu_times_mass_identity(const TFSolution& s) {
    return std::abs(s.mu * tf_mass(s) - s.mu * s.params.N());
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const TFParams& p) {
    return {{"lambda", p.lambda}, {"Z", p.Z}, {"gamma_kin", p.gamma_kin}, {"spin_q", p.spin_q}};
}

inline TFParams tf_params_from_json(const nlohmann::json& j) {
    TFParams p;
    p.lambda = j.at("lambda").get<double>();
    p.Z = j.at("Z").get<double>();
    p.gamma_kin = j.value("gamma_kin", gamma_default());
    p.spin_q = j.value("spin_q", 1);
    p.validate();
    return p;
}

inline nlohmann::json to_json(const TFSolution& s) {
    nlohmann::json j;
    j["params"] = to_json(s.params);
    j["slope0"] = s.slope0;
    j["mu"] = s.mu;
    j["edge_radius"] = s.neutral() ? nlohmann::json(nullptr) : nlohmann::json(s.edge_radius);
    j["length_scale"] = s.length_scale();
    j["grid"] = s.rho.grid();
    j["phi"] = s.phi.values();
    j["dphi_dlnr"] = s.phi.log_slopes();
    j["rho"] = s.rho.values();
    j["energy_terms"] = {{"kinetic", s.energy_terms.kinetic},
                         {"attraction", s.energy_terms.attraction},
                         {"repulsion", s.energy_terms.repulsion},
                         {"total", s.energy_terms.total()}};
    return j;
}

inline TFSolution tf_solution_from_json(const nlohmann::json& j) {
    TFSolution s;
    s.params = tf_params_from_json(j.at("params"));
    s.slope0 = j.at("slope0").get<double>();
    s.mu = j.at("mu").get<double>();
    s.edge_radius = j.at("edge_radius").is_null() ? inf : j.at("edge_radius").get<double>();
    const auto r = j.at("grid").get<std::vector<double>>();
    const auto ph = j.at("phi").get<std::vector<double>>();
    const auto dph = j.at("dphi_dlnr").get<std::vector<double>>();
    const auto rho = j.at("rho").get<std::vector<double>>();
    const double b = s.length_scale(), Z = s.params.Z, g = s.params.gamma_kin;
    std::vector<double> drho(r.size());
    const double k = std::pow(Z / (g * b), 1.5);
    for (std::size_t i = 0; i < r.size(); ++i)
        drho[i] = 1.5 * k * std::pow(r[i] / b, -1.5) * std::sqrt(ph[i]) * (dph[i] - ph[i]);
    if (s.neutral()) {
        const double a = 144.0 * b * b * b;
        s.phi = RadialFunction(r, ph, dph, Tail::power_law(-3.0, a));
        s.rho = RadialFunction(r, rho, drho, Tail::power_law(-6.0, std::pow(Z * a / g, 1.5)));
    } else {
        drho.back() = 0.0;
        s.phi = RadialFunction(r, ph, dph, Tail::zero());
        s.rho = RadialFunction(r, rho, drho, Tail::zero());
    }
    const auto& e = j.at("energy_terms");
    s.energy_terms = {e.at("kinetic").get<double>(), e.at("attraction").get<double>(), e.at("repulsion").get<double>()};
    return s;
}

}  // namespace semiclassic
