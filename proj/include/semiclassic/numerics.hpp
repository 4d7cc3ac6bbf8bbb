#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace semiclassic {

inline constexpr double pi = 3.14159265358979323846264338327950288;
inline constexpr double inf = std::numeric_limits<double>::infinity();

struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

struct NonConvergence : std::runtime_error {
    double value;
    double error;
    NonConvergence(const std::string& what, double v, double e)
        : std::runtime_error(what), value(v), error(e) {}
};

struct StepFailure : std::runtime_error {
    double last_good_x;
    StepFailure(const std::string& what, double x)
        : std::runtime_error(what), last_good_x(x) {}
};

/// An operation was called outside the regime where its estimate holds.
struct PreconditionFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class SemiInfiniteMap { exp_decay_map, algebraic_map };

/// Tolerances and hints for integrate_1d.
///
/// `sing_a` / `sing_b` are caller-declared endpoint exponents e in (-1, 0):
/// the integrand behaves like |x - a|^e near a. A graded substitution removes
/// the singularity before the Kronrod rule sees it. `length_scale` sets the
/// decay length assumed by the semi-infinite maps.
struct QuadratureSpec {
    double rel_tol = 1e-10;
    double abs_tol = 1e-14;
    int max_subdivisions = 2000;
    SemiInfiniteMap semi_infinite_transform = SemiInfiniteMap::exp_decay_map;
    double sing_a = 0.0;
    double sing_b = 0.0;
    double length_scale = 1.0;

    void validate() const {
        if (!(rel_tol > 0.0) || !(abs_tol >= 0.0) || max_subdivisions < 1 || !(length_scale > 0.0))
            throw DomainError("QuadratureSpec: need rel_tol > 0, abs_tol >= 0, max_subdivisions >= 1");
        if (sing_a <= -1.0 || sing_b <= -1.0)
            throw DomainError("QuadratureSpec: singularity exponent must exceed -1");
    }

    QuadratureSpec with_tol(double rel, double abs = 0.0) const {
        QuadratureSpec s = *this;
        s.rel_tol = rel;
        s.abs_tol = abs;
        return s;
    }
    QuadratureSpec with_map(SemiInfiniteMap m, double scale = 1.0) const {
        QuadratureSpec s = *this;
        s.semi_infinite_transform = m;
        s.length_scale = scale;
        return s;
    }
    QuadratureSpec with_singularity(double at_a, double at_b = 0.0) const {
        QuadratureSpec s = *this;
        s.sing_a = at_a;
        s.sing_b = at_b;
        return s;
    }
};

struct QuadResult {
    double value = 0.0;
    double err_estimate = 0.0;
};

namespace detail {

inline void require_positive(double t, const char* who) {
    if (!(t > 0.0) || !std::isfinite(t)) throw DomainError(std::string(who) + ": argument must be positive and finite");
}

// Gauss-Kronrod 7/15 (QUADPACK qk15 abscissae and weights).
inline constexpr double xgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr double wgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double wg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class F>
QuadResult gk15(const F& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double resg = fc * wg[3];
    double resk = fc * wgk[7];
    double resabs = std::abs(resk);
    double fv1[7], fv2[7];
    for (int j = 0; j < 7; ++j) {
        const double dx = h * xgk[j];
        fv1[j] = f(c - dx);
        fv2[j] = f(c + dx);
        const double s = fv1[j] + fv2[j];
        resk += wgk[j] * s;
        resabs += wgk[j] * (std::abs(fv1[j]) + std::abs(fv2[j]));
        if (j % 2 == 1) resg += wg[j / 2] * s;
    }
    const double reskh = 0.5 * resk;
    double resasc = wgk[7] * std::abs(fc - reskh);
    for (int j = 0; j < 7; ++j)
        resasc += wgk[j] * (std::abs(fv1[j] - reskh) + std::abs(fv2[j] - reskh));
    const double ah = std::abs(h);
    double err = std::abs((resk - resg) * h);
    resasc *= ah;
    resabs *= ah;
    if (resasc != 0.0 && err != 0.0) err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
    const double eps = std::numeric_limits<double>::epsilon();
    if (resabs > std::numeric_limits<double>::min() / (50.0 * eps)) err = std::max(50.0 * eps * resabs, err);
    if (!std::isfinite(resk)) err = inf;
    return {resk * h, err};
}

struct Piece {
    double a, b, value, err;
    bool operator<(const Piece& o) const { return err < o.err; }
};

// Globally adaptive bisection on a finite interval with a smooth (mapped) integrand.
template <class F>
QuadResult adapt(const F& f, double a, double b, const QuadratureSpec& spec) {
    std::priority_queue<Piece> heap;
    std::vector<Piece> frozen;
    QuadResult r = gk15(f, a, b);
    heap.push({a, b, r.value, r.err_estimate});
    double total = r.value, total_err = r.err_estimate;
    int n = 1;
    bool stalled = false;
    for (;;) {
        if (total_err <= std::max(spec.rel_tol * std::abs(total), spec.abs_tol)) break;
        if (heap.empty()) {
            stalled = true;
            break;
        }
        if (n >= spec.max_subdivisions)
            throw NonConvergence("integrate_1d: max_subdivisions exhausted", total, total_err);
        Piece p = heap.top();
        heap.pop();
        const double m = 0.5 * (p.a + p.b);
        if (!(m > p.a && m < p.b) || std::abs(p.b - p.a) < 64 * std::numeric_limits<double>::epsilon() * std::max(std::abs(m), 1e-300)) {
            frozen.push_back(p);
            continue;
        }
        QuadResult l = gk15(f, p.a, m);
        QuadResult rr = gk15(f, m, p.b);
        total += l.value + rr.value - p.value;
        total_err += l.err_estimate + rr.err_estimate - p.err;
        heap.push({p.a, m, l.value, l.err_estimate});
        heap.push({m, p.b, rr.value, rr.err_estimate});
        ++n;
    }
    // Re-sum to shed accumulated rounding from the running updates.
    double v = 0.0, e = 0.0;
    for (const auto& p : frozen) { v += p.value; e += p.err; }
    while (!heap.empty()) { v += heap.top().value; e += heap.top().err; heap.pop(); }
    if (!std::isfinite(v))
        throw NonConvergence("integrate_1d: non-finite integrand", v, e);
    if (stalled && e > std::max(spec.rel_tol * std::abs(v), spec.abs_tol))
        throw NonConvergence("integrate_1d: roundoff limits the attainable accuracy", v, e);
    return {v, e};
}

template <class F>
QuadResult finite(const F& f, double a, double b, const QuadratureSpec& spec) {
    const bool sa = spec.sing_a < 0.0, sb = spec.sing_b < 0.0;
    if (sa && sb) {
        const double m = 0.5 * (a + b);
        QuadResult l = finite(f, a, m, spec.with_singularity(spec.sing_a, 0.0));
        QuadResult r = finite(f, m, b, spec.with_singularity(0.0, spec.sing_b));
        return {l.value + r.value, l.err_estimate + r.err_estimate};
    }
    if (sa) {
        // x = a + (b-a) w^k with k = 1/(1+e) turns (x-a)^e dx into a bounded integrand.
        const double k = 1.0 / (1.0 + spec.sing_a), L = b - a;
        auto g = [&](double w) { return f(a + L * std::pow(w, k)) * L * k * std::pow(w, k - 1.0); };
        return adapt(g, 0.0, 1.0, spec);
    }
    if (sb) {
        const double k = 1.0 / (1.0 + spec.sing_b), L = b - a;
        auto g = [&](double w) { return f(b - L * std::pow(w, k)) * L * k * std::pow(w, k - 1.0); };
        return adapt(g, 0.0, 1.0, spec);
    }
    return adapt(f, a, b, spec);
}

template <class F>
QuadResult to_infinity(const F& f, double a, const QuadratureSpec& spec) {
    const double L = spec.length_scale;
    if (spec.sing_a < 0.0) {
        QuadResult head = finite(f, a, a + L, spec.with_singularity(spec.sing_a, 0.0));
        QuadResult tail = to_infinity(f, a + L, spec.with_singularity(0.0, 0.0));
        return {head.value + tail.value, head.err_estimate + tail.err_estimate};
    }
    if (spec.semi_infinite_transform == SemiInfiniteMap::exp_decay_map) {
        auto g = [&](double u) {
            const double x = a - L * std::log(u);
            const double v = f(x);
            return v == 0.0 ? 0.0 : v * L / u;
        };
        return adapt(g, 0.0, 1.0, spec);
    }
    auto g = [&](double u) {
        const double w = 1.0 - u;
        const double v = f(a + L * u / w);
        return v == 0.0 ? 0.0 : v * L / (w * w);
    };
    return adapt(g, 0.0, 1.0, spec);
}

}  // namespace detail

/// Adaptive integral of f over [a, b]; b may be +infinity.
template <class F>
QuadResult integrate_1d(const F& f, double a, double b, const QuadratureSpec& spec = {}) {
    spec.validate();
    if (!(a < b)) throw DomainError("integrate_1d: need a < b");
    if (std::isinf(b)) return detail::to_infinity(f, a, spec);
    return detail::finite(f, a, b, spec);
}

/// Same as integrate_1d, splitting at interior breakpoints (kinks, jumps).
template <class F>
QuadResult integrate_1d(const F& f, double a, double b, const std::vector<double>& breaks,
                        const QuadratureSpec& spec) {
    std::vector<double> pts{a};
    for (double x : breaks)
        if (x > a && x < b) pts.push_back(x);
    std::sort(pts.begin(), pts.end());
    pts.push_back(b);
    QuadResult out;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        QuadratureSpec s = spec;
        if (i != 0) s.sing_a = 0.0;
        if (i + 2 != pts.size()) s.sing_b = 0.0;
        QuadResult r = integrate_1d(f, pts[i], pts[i + 1], s);
        out.value += r.value;
        out.err_estimate += r.err_estimate;
    }
    return out;
}

/// 4*pi * int_0^inf f(u) u^2 du for a spherically symmetric integrand.
template <class F>
double integrate_radial_3d(const F& f, const QuadratureSpec& spec = {},
                           const std::vector<double>& breaks = {}) {
    auto g = [&](double u) { return f(u) * u * u; };
    return 4.0 * pi * integrate_1d(g, 0.0, inf, breaks, spec).value;
}

/// int_a^b dx int_{lo(x)}^{hi(x)} f(x, y) dy, both levels adaptive.
template <class F, class Lo, class Hi>
double integrate_2d(const F& f, double a, double b, const Lo& lo, const Hi& hi,
                    const QuadratureSpec& outer, const QuadratureSpec& inner) {
    auto row = [&](double x) {
        const double y0 = lo(x), y1 = hi(x);
        if (!(y1 > y0)) return 0.0;
        return integrate_1d([&](double y) { return f(x, y); }, y0, y1, inner).value;
    };
    return integrate_1d(row, a, b, outer).value;
}

// ---------------------------------------------------------------------------
// Radial profiles

enum class TailKind { zero, power_law };

struct Tail {
    TailKind kind = TailKind::zero;
    double exponent = 0.0;
    double coefficient = 0.0;

    static Tail zero() { return {}; }
    static Tail power_law(double exponent, double coefficient) {
        return {TailKind::power_law, exponent, coefficient};
    }
    double operator()(double r) const {
        return kind == TailKind::zero ? 0.0 : coefficient * std::pow(r, exponent);
    }
};

/// Samples on a strictly increasing radial grid, interpolated by a monotone
/// cubic Hermite spline in log r.
class RadialFunction {
public:
    RadialFunction() = default;
    RadialFunction(std::vector<double> grid, std::vector<double> values, Tail tail = Tail::zero())
        : r_(std::move(grid)), v_(std::move(values)), tail_(tail) {
        if (r_.size() < 2 || r_.size() != v_.size())
            throw DomainError("RadialFunction: need >= 2 samples and matching lengths");
        s_.resize(r_.size());
        for (std::size_t i = 0; i < r_.size(); ++i) {
            if (!(r_[i] > 0.0) || (i > 0 && !(r_[i] > r_[i - 1])))
                throw DomainError("RadialFunction: grid must be positive and strictly increasing");
            s_[i] = std::log(r_[i]);
        }
        build_slopes();
    }

    /// Hermite variant with caller-supplied slopes df/d(ln r) at the nodes.
    RadialFunction(std::vector<double> grid, std::vector<double> values, std::vector<double> log_slopes,
                   Tail tail)
        : RadialFunction(std::move(grid), std::move(values), tail) {
        if (log_slopes.size() != r_.size()) throw DomainError("RadialFunction: slope count mismatch");
        d_ = std::move(log_slopes);
    }

    const std::vector<double>& grid() const { return r_; }
    const std::vector<double>& values() const { return v_; }
    const Tail& tail() const { return tail_; }
    const std::vector<double>& log_slopes() const { return d_; }
    double r_min() const { return r_.front(); }
    double r_max() const { return r_.back(); }

    double operator()(double r) const {
        if (r >= r_.back()) return r == r_.back() ? v_.back() : tail_(r);
        if (r <= r_.front()) return head(r);
        const double s = std::log(r);
        const std::size_t i = std::upper_bound(s_.begin(), s_.end(), s) - s_.begin() - 1;
        const double h = s_[i + 1] - s_[i];
        const double t = (s - s_[i]) / h;
        const double t2 = t * t, t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * v_[i] + (t3 - 2 * t2 + t) * h * d_[i] +
               (-2 * t3 + 3 * t2) * v_[i + 1] + (t3 - t2) * h * d_[i + 1];
    }

    /// Exponent of the log-log extrapolation used below the first grid point.
    double head_exponent() const {
        if (v_[0] > 0.0 && v_[1] > 0.0) return std::log(v_[1] / v_[0]) / (s_[1] - s_[0]);
        return 0.0;
    }

    /// int g(r, f(r)) 4 pi r^2 dr over r > r_from: Kronrod rule on every grid
    /// cell in log r, adaptive quadrature for the head (0, r_min) and the tail.
    template <class G>
    double integrate_3d(const G& g, const QuadratureSpec& spec = {}, double r_from = 0.0) const {
        return integrate_3d_result(g, spec, r_from).value;
    }

    /// As integrate_3d, with the summed quadrature error estimate.
    template <class G>
    QuadResult integrate_3d_result(const G& g, const QuadratureSpec& spec = {}, double r_from = 0.0) const {
        const auto& self = *this;
        auto in_s = [&](double s) {
            const double r = std::exp(s);
            return g(r, self(r)) * r * r * r;
        };
        const double s_from = r_from > 0.0 ? std::log(r_from) : -inf;
        QuadResult acc;
        auto add = [&acc](const QuadResult& q) {
            acc.value += q.value;
            acc.err_estimate += q.err_estimate;
        };
        for (std::size_t i = 0; i + 1 < r_.size(); ++i) {
            if (s_[i + 1] <= s_from) continue;
            add(detail::gk15(in_s, std::max(s_[i], s_from), s_[i + 1]));
        }
        if (r_from < r_.front()) {
            if (r_from > 0.0) {
                add(integrate_1d(in_s, s_from, s_[0], spec));
            } else {
                auto head_u = [&](double u) { return in_s(s_[0] + std::log(u)) / u; };
                add(integrate_1d(head_u, 0.0, 1.0, spec));
            }
        }
        const double t0 = std::max(r_.back(), r_from);
        if (tail_.kind == TailKind::power_law) {
            auto t = [&](double r) { return g(r, self(r)) * r * r; };
            add(integrate_1d(t, t0, inf, spec.with_map(SemiInfiniteMap::algebraic_map, t0)));
        } else if (g(2.0 * t0, 0.0) != 0.0) {
            throw DomainError("RadialFunction::integrate_3d: integrand nonzero on the zero tail");
        }
        return {4.0 * pi * acc.value, 4.0 * pi * acc.err_estimate};
    }

private:
    double head(double r) const {
        const double p = head_exponent();
        if (p == 0.0) return v_[0];
        return v_[0] * std::exp(p * (std::log(r) - s_[0]));
    }

    // Three-point derivative estimates with the Fritsch-Carlson / Hyman limiter.
    void build_slopes() {
        const std::size_t n = r_.size();
        std::vector<double> del(n - 1), h(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            h[i] = s_[i + 1] - s_[i];
            del[i] = (v_[i + 1] - v_[i]) / h[i];
        }
        d_.assign(n, 0.0);
        if (n == 2) {
            d_[0] = d_[1] = del[0];
            return;
        }
        for (std::size_t i = 1; i + 1 < n; ++i)
            d_[i] = (h[i] * del[i - 1] + h[i - 1] * del[i]) / (h[i - 1] + h[i]);
        d_[0] = ((2 * h[0] + h[1]) * del[0] - h[0] * del[1]) / (h[0] + h[1]);
        d_[n - 1] = ((2 * h[n - 2] + h[n - 3]) * del[n - 2] - h[n - 2] * del[n - 3]) / (h[n - 2] + h[n - 3]);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            if (del[i - 1] * del[i] <= 0.0) {
                d_[i] = 0.0;
                continue;
            }
            const double bound = 3.0 * std::min(std::abs(del[i - 1]), std::abs(del[i]));
            if (std::abs(d_[i]) > bound) d_[i] = std::copysign(bound, del[i]);
        }
        auto clamp_end = [&](std::size_t i, double dl) {
            if (d_[i] * dl <= 0.0) d_[i] = 0.0;
            else if (std::abs(d_[i]) > 3.0 * std::abs(dl)) d_[i] = 3.0 * dl;
        };
        clamp_end(0, del[0]);
        clamp_end(n - 1, del[n - 2]);
    }

    std::vector<double> r_, v_, s_, d_;
    Tail tail_;
};

// ---------------------------------------------------------------------------
// Initial-value problems

using State = std::vector<double>;

struct IvpOptions {
    double rtol = 1e-10;
    double atol = 1e-12;
    double h0 = 0.0;
    double h_max = inf;
    std::size_t max_steps = 2000000;
};

/// Dormand-Prince 5(4) trajectory with the 4th-order continuous extension.
class Trajectory {
public:
    const std::vector<double>& xs() const { return x_; }
    const std::vector<State>& ys() const { return y_; }
    double x_front() const { return x_.front(); }
    double x_back() const { return x_.back(); }
    const State& back() const { return y_.back(); }
    bool terminated_by_event() const { return event_; }

    State operator()(double x) const {
        const bool fwd = x_.back() >= x_.front();
        const double lo = std::min(x_.front(), x_.back()), hi = std::max(x_.front(), x_.back());
        if (x < lo || x > hi) throw DomainError("Trajectory: abscissa outside integrated range");
        std::size_t i;
        if (fwd) i = std::upper_bound(x_.begin(), x_.end(), x) - x_.begin();
        else i = std::upper_bound(x_.begin(), x_.end(), x, std::greater<double>()) - x_.begin();
        if (i == 0) i = 1;
        if (i >= x_.size()) i = x_.size() - 1;
        return dense(i - 1, x);
    }

    // internal
    std::vector<double> x_;
    std::vector<State> y_;
    std::vector<std::array<State, 5>> c_;
    bool event_ = false;

    State dense(std::size_t k, double x) const {
        const double h = x_[k + 1] - x_[k];
        const double th = (x - x_[k]) / h, th1 = 1.0 - th;
        const auto& c = c_[k];
        State out(c[0].size());
        for (std::size_t j = 0; j < out.size(); ++j)
            out[j] = c[0][j] + th * (c[1][j] + th1 * (c[2][j] + th * (c[3][j] + th1 * c[4][j])));
        return out;
    }
};

namespace detail {
struct Dopri {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                            a76 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;
    static constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                            d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                            d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;
};
}  // namespace detail

/// Integrates y' = rhs(x, y) from x0 to x1 (either direction).
///
/// `event(x, y)` is optional: integration stops at the first point where it
/// changes sign from positive to non-positive, located on the dense output.
template <class Rhs, class Event>
Trajectory solve_ivp(const Rhs& rhs, State y0, double x0, double x1, const IvpOptions& opt, const Event& event) {
    using D = detail::Dopri;
    if (x0 == x1) throw DomainError("solve_ivp: empty interval");
    const double dir = x1 > x0 ? 1.0 : -1.0;
    const std::size_t n = y0.size();
    Trajectory tr;
    tr.x_.push_back(x0);
    tr.y_.push_back(y0);

    auto axpy = [n](State& out, const State& y, double h, std::initializer_list<std::pair<double, const State*>> ks) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (const auto& [w, k] : ks) acc += w * (*k)[j];
            out[j] = y[j] + h * acc;
        }
    };
    auto err_norm = [&](const State& e, const State& ya, const State& yb) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double sc = opt.atol + opt.rtol * std::max(std::abs(ya[j]), std::abs(yb[j]));
            s += (e[j] / sc) * (e[j] / sc);
        }
        return std::sqrt(s / n);
    };

    double x = x0;
    State y = y0, k1 = rhs(x, y), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), yt(n), yn(n), ev(n);
    double h = opt.h0;
    if (h <= 0.0) {
        double d0 = 0.0, d1 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double sc = opt.atol + opt.rtol * std::abs(y[j]);
            d0 += (y[j] / sc) * (y[j] / sc);
            d1 += (k1[j] / sc) * (k1[j] / sc);
        }
        d0 = std::sqrt(d0 / n);
        d1 = std::sqrt(d1 / n);
        h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h = std::min(h, std::abs(x1 - x0));
    }
    h = std::min(h, opt.h_max);
    double g_prev = event(x, y);

    for (std::size_t step = 0;; ++step) {
        if (step >= opt.max_steps) throw StepFailure("solve_ivp: step budget exhausted", x);
        if (dir * (x + dir * h - x1) > 0.0) h = std::abs(x1 - x);
        const double hs = dir * h;
        axpy(yt, y, hs, {{D::a21, &k1}});
        k2 = rhs(x + D::c2 * hs, yt);
        axpy(yt, y, hs, {{D::a31, &k1}, {D::a32, &k2}});
        k3 = rhs(x + D::c3 * hs, yt);
        axpy(yt, y, hs, {{D::a41, &k1}, {D::a42, &k2}, {D::a43, &k3}});
        k4 = rhs(x + D::c4 * hs, yt);
        axpy(yt, y, hs, {{D::a51, &k1}, {D::a52, &k2}, {D::a53, &k3}, {D::a54, &k4}});
        k5 = rhs(x + D::c5 * hs, yt);
        axpy(yt, y, hs, {{D::a61, &k1}, {D::a62, &k2}, {D::a63, &k3}, {D::a64, &k4}, {D::a65, &k5}});
        k6 = rhs(x + hs, yt);
        axpy(yn, y, hs, {{D::a71, &k1}, {D::a73, &k3}, {D::a74, &k4}, {D::a75, &k5}, {D::a76, &k6}});
        k7 = rhs(x + hs, yn);
        for (std::size_t j = 0; j < n; ++j)
            ev[j] = hs * (D::e1 * k1[j] + D::e3 * k3[j] + D::e4 * k4[j] + D::e5 * k5[j] + D::e6 * k6[j] + D::e7 * k7[j]);
        const double err = err_norm(ev, y, yn);
        if (!std::isfinite(err)) {
            h *= 0.2;
            if (h < 1e-14 * std::max(std::abs(x), 1e-300)) throw StepFailure("solve_ivp: non-finite state", x);
            continue;
        }
        if (err <= 1.0) {
            std::array<State, 5> c;
            c[0] = y;
            c[1].resize(n);
            c[2].resize(n);
            c[3].resize(n);
            c[4].resize(n);
            for (std::size_t j = 0; j < n; ++j) {
                c[1][j] = yn[j] - y[j];
                c[2][j] = hs * k1[j] - c[1][j];
                c[3][j] = c[1][j] - hs * k7[j] - c[2][j];
                c[4][j] = hs * (D::d1 * k1[j] + D::d3 * k3[j] + D::d4 * k4[j] + D::d5 * k5[j] + D::d6 * k6[j] +
                                D::d7 * k7[j]);
            }
            const double xn = (std::abs(x1 - (x + hs)) <= 1e-15 * std::abs(x1)) ? x1 : x + hs;
            tr.c_.push_back(std::move(c));
            tr.x_.push_back(xn);
            tr.y_.push_back(yn);
            const double g = event(xn, yn);
            if (g_prev > 0.0 && g <= 0.0) {
                // Bisection for the sign change on the dense output of this step.
                const std::size_t k = tr.c_.size() - 1;
                double lo = x, hi = xn;
                for (int it = 0; it < 200 && lo != hi; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    if (mid == lo || mid == hi) break;
                    if (event(mid, tr.dense(k, mid)) > 0.0) lo = mid;
                    else hi = mid;
                }
                tr.y_.back() = tr.dense(k, hi);
                tr.x_.back() = hi;
                // Rebuild the last step's interpolant on the shortened interval.
                auto& cc = tr.c_.back();
                const State ya = cc[0];
                const double hh = hi - x;
                State ka = k1, kb = rhs(hi, tr.y_.back());
                for (std::size_t j = 0; j < n; ++j) {
                    cc[1][j] = tr.y_.back()[j] - ya[j];
                    cc[2][j] = hh * ka[j] - cc[1][j];
                    cc[3][j] = cc[1][j] - hh * kb[j] - cc[2][j];
                    cc[4][j] = 0.0;
                }
                tr.event_ = true;
                return tr;
            }
            g_prev = g;
            x = xn;
            y = yn;
            k1 = k7;
            if (x == x1) return tr;
        }
        const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
        h = std::min(h * (err <= 1.0 ? fac : std::min(fac, 1.0)), opt.h_max);
        if (h < 1e-14 * std::max(std::abs(x), 1e-300)) throw StepFailure("solve_ivp: step size underflow", x);
    }
}

template <class Rhs>
Trajectory solve_ivp(const Rhs& rhs, State y0, double x0, double x1, const IvpOptions& opt) {
    return solve_ivp(rhs, std::move(y0), x0, x1, opt, [](double, const State&) { return 1.0; });
}

/// Convenience form with a single tolerance used for both rtol and atol.
template <class Rhs>
Trajectory solve_ivp(const Rhs& rhs, State y0, double x0, double x1, double tol) {
    IvpOptions o;
    o.rtol = tol;
    o.atol = tol;
    return solve_ivp(rhs, std::move(y0), x0, x1, o);
}

/// Log-spaced points in [a, b], inclusive.
inline std::vector<double> log_space(double a, double b, std::size_t n) {
    std::vector<double> out(n);
    const double la = std::log(a), lb = std::log(b);
    for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(la + (lb - la) * double(i) / double(n - 1));
    out.front() = a;
    out.back() = b;
    return out;
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = double(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace semiclassic
