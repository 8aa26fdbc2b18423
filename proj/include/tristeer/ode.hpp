#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "tristeer/control.hpp"
#include "tristeer/errors.hpp"
#include "tristeer/sysmodel.hpp"

namespace tristeer {

enum class Method { RK4, RK45 };

struct IntegratorConfig {
    Method method = Method::RK45;
    double step = 1e-3;  ///< fixed step for RK4
    double abs_tol = 1e-9;
    double rel_tol = 1e-9;
    double max_step = 0.0;  ///< 0: unlimited (RK45)
    double guard_radius = 1e6;
    int piece_steps = 8;  ///< minimum RK45 steps per control piece in simulate

    void check() const {
        if (!(abs_tol > 0.0) || !(rel_tol > 0.0) || !(step > 0.0) || !(guard_radius > 0.0))
            throw DomainError("integrator tolerances, step and guard radius must be positive");
    }
};

/// Time-sampled linearization z' = A(t) z + B(t) w.
struct LtvSystem {
    std::vector<double> times;
    std::vector<Mat> A;
    std::vector<Mat> B;

    int states() const { return static_cast<int>(A.front().rows()); }
    int inputs() const { return static_cast<int>(B.front().cols()); }

    /// Piecewise-linear interpolation of the samples.
    std::pair<Mat, Mat> at(double t) const {
        if (times.size() == 1) return {A.front(), B.front()};
        auto it = std::upper_bound(times.begin(), times.end(), t);
        std::size_t i = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>((it - times.begin()) - 1, 0,
                                                                            static_cast<std::ptrdiff_t>(times.size()) - 2));
        double s = std::clamp((t - times[i]) / (times[i + 1] - times[i]), 0.0, 1.0);
        return {(1.0 - s) * A[i] + s * A[i + 1], (1.0 - s) * B[i] + s * B[i + 1]};
    }
};

/// Right-hand side in integration form x' = F(t, x).
using Rhs = std::function<Vec(double, const Vec&)>;
/// Called after every accepted step with the new (t, x); returning true stops integration.
using StepObserver = std::function<bool(double, const Vec&)>;

namespace detail {

inline double err_norm(const Vec& err, const Vec& y0, const Vec& y1, double atol, double rtol) {
    double e = 0.0;
    for (int i = 0; i < err.size(); ++i) {
        double sc = atol + rtol * std::max(std::abs(y0(i)), std::abs(y1(i)));
        e = std::max(e, std::abs(err(i)) / sc);
    }
    return e;
}

/// Integrates x' = F(t, x) from `a` to `b` (either direction) appending samples to
/// `traj` in the order visited. The first sample is assumed to be present already.
/// Returns false if the observer or the guard stopped integration early.
inline bool integrate_piece(const Rhs& F, double a, double b, const IntegratorConfig& cfg, Trajectory& traj,
                            const StepObserver& observer = {}) {
    const double dir = b >= a ? 1.0 : -1.0;
    const double len = std::abs(b - a);
    if (len == 0.0) return true;
    Vec x = traj.states.back();
    double t = a;
    Vec k1 = F(t, x);

    auto accept = [&](double tn, const Vec& xn, const Vec& kn) -> bool {
        traj.rate_lo.push_back(k1);
        traj.rate_hi.push_back(kn);
        traj.times.push_back(tn);
        traj.states.push_back(xn);
        if (!xn.allFinite() || xn.norm() > cfg.guard_radius) {
            traj.blown_up = true;
            traj.blow_up_time = tn;
            return false;
        }
        if (observer && observer(tn, xn)) return false;
        return true;
    };

    if (cfg.method == Method::RK4) {
        int n = std::max(1, static_cast<int>(std::ceil(len / cfg.step - 1e-9)));
        double h = dir * len / n;
        for (int i = 0; i < n; ++i) {
            double tn = (i + 1 == n) ? b : a + (i + 1) * h;
            double hh = tn - t;
            Vec s2 = F(t + 0.5 * hh, x + 0.5 * hh * k1);
            Vec s3 = F(t + 0.5 * hh, x + 0.5 * hh * s2);
            Vec s4 = F(tn, x + hh * s3);
            Vec xn = x + hh / 6.0 * (k1 + 2.0 * s2 + 2.0 * s3 + s4);
            Vec kn = F(tn, xn);
            if (!accept(tn, xn, kn)) return false;
            x = std::move(xn);
            t = tn;
            k1 = std::move(kn);
        }
        return true;
    }

    // Dormand-Prince 5(4), FSAL.
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;

    double hmax = cfg.max_step > 0.0 ? std::min(cfg.max_step, len) : len;
    double h;
    {
        // Standard starting-step heuristic.
        double d0 = 0.0, d1 = 0.0;
        for (int i = 0; i < x.size(); ++i) {
            double sc = cfg.abs_tol + cfg.rel_tol * std::abs(x(i));
            d0 = std::max(d0, std::abs(x(i)) / sc);
            d1 = std::max(d1, std::abs(k1(i)) / sc);
        }
        h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h = std::clamp(h, 1e-12 * std::max(1.0, len), hmax);
    }
    int rejects = 0;
    while (dir * (b - t) > 0.0) {
        bool last = false;
        if (h >= std::abs(b - t) * (1.0 - 1e-12)) {
            h = std::abs(b - t);
            last = true;
        }
        const double hs = dir * h;
        Vec k2 = F(t + c2 * hs, x + hs * (a21 * k1));
        Vec k3 = F(t + c3 * hs, x + hs * (a31 * k1 + a32 * k2));
        Vec k4 = F(t + c4 * hs, x + hs * (a41 * k1 + a42 * k2 + a43 * k3));
        Vec k5 = F(t + c5 * hs, x + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        double tn = last ? b : t + hs;
        Vec k6 = F(tn, x + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        Vec xn = x + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        Vec k7 = F(tn, xn);
        Vec err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        // Error per unit step: local error <= tol * h keeps the global error near tol.
        double en = xn.allFinite() ? err_norm(err, x, xn, cfg.abs_tol, cfg.rel_tol) / std::min(h, 1.0) : 1e10;
        if (en <= 1.0) {
            if (!accept(tn, xn, k7)) return false;
            t = tn;
            x = std::move(xn);
            k1 = std::move(k7);
            double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.25), 0.2, 5.0);
            if (rejects) fac = std::min(fac, 1.0);
            rejects = 0;
            h = std::min(h * fac, hmax);
        } else {
            ++rejects;
            h *= std::clamp(0.9 * std::pow(en, -0.25), 0.1, 0.9);
            if (h < 1e-14 * std::max(1.0, std::abs(t))) {
                // Step size underflow: treat as escape.
                traj.blown_up = true;
                traj.blow_up_time = t;
                return false;
            }
        }
    }
    return true;
}

/// Restart points from a to b: every breakpoint of a piecewise-constant control
/// (cubic controls are C1, so they are integrated in one go).
inline std::vector<double> pieces(const Control& u, double a, double b) {
    if (u.kind() == ControlKind::PiecewiseCubic) return {a, b};
    std::vector<double> k{a};
    double lo = std::min(a, b), hi = std::max(a, b);
    for (double t : u.breakpoints())
        if (t > lo && t < hi) k.push_back(t);
    k.push_back(b);
    if (b < a) std::sort(k.begin() + 1, k.end() - 1, std::greater<>());
    return k;
}

}  // namespace detail

/// Right-hand side with an explicit control argument, f(t, x, u).
using ControlledRhs = std::function<Vec(double, const Vec&, const Vec&)>;

/**
 * Integrates x' = f(t, x, u(t)) from `t_from` to `t_to`; t_to < t_from runs
 * backwards in time. Integration restarts at every control breakpoint, with the
 * control evaluated inside the active piece so jump discontinuities are honoured.
 * The returned trajectory always has increasing times.
 */
inline Trajectory simulate_rhs(const ControlledRhs& f, double t_from, double t_to, const Vec& x0, const Control& u,
                               const IntegratorConfig& cfg = {}, const StepObserver& observer = {}) {
    cfg.check();
    if (!u.covers(t_from, t_to)) throw DomainError("control not defined on the simulation interval");
    Trajectory traj;
    traj.times.push_back(t_from);
    traj.states.push_back(x0);
    if (t_from != t_to) {
        auto k = detail::pieces(u, t_from, t_to);
        for (std::size_t i = 0; i + 1 < k.size(); ++i) {
            double lo = std::min(k[i], k[i + 1]), hi = std::max(k[i], k[i + 1]);
            double eps = 1e-12 * (hi - lo);
            Rhs F = [&, lo, hi, eps](double t, const Vec& x) { return f(t, x, u.value(std::clamp(t, lo + eps, hi - eps))); };
            // The state can leave a region where f is flat and come back inside one
            // piece; a step cap keeps the stages from all landing on the flat part.
            IntegratorConfig pc = cfg;
            if (cfg.piece_steps > 0) {
                double cap = (hi - lo) / cfg.piece_steps;
                pc.max_step = pc.max_step > 0.0 ? std::min(pc.max_step, cap) : cap;
            }
            if (!detail::integrate_piece(F, k[i], k[i + 1], pc, traj, observer)) break;
        }
    }
    if (t_to < t_from) traj.reverse();
    return traj;
}

inline Trajectory simulate(const TriangularSystem& sys, double t_from, double t_to, const Vec& x0, const Control& u,
                           const IntegratorConfig& cfg = {}, const StepObserver& observer = {}) {
    if (x0.size() != sys.n()) throw DimensionError("initial state has wrong length");
    if (u.dim() != sys.m()) throw DimensionError("control has wrong dimension");
    return simulate_rhs([&sys](double t, const Vec& x, const Vec& v) { return sys.rhs(t, x, v); }, t_from, t_to, x0,
                        u, cfg, observer);
}

inline Trajectory simulate(const TriangularSystem& sys, double t_from, double t_to, const StateVector& x0,
                           const Control& u, const IntegratorConfig& cfg = {}) {
    return simulate(sys, t_from, t_to, x0.data(), u, cfg);
}

/// A and B of the (stage) system sampled along (traj, u) at the grid times.
inline LtvSystem linearize_along(const TriangularSystem& sys, const Trajectory& traj, const Control& u,
                                 const std::vector<double>& grid) {
    if (traj.blown_up) throw DomainError("cannot linearize along a blown-up trajectory");
    LtvSystem ltv;
    ltv.times = grid;
    for (double t : grid) {
        Vec x = traj.at(t), v = u.value(t);
        ltv.A.push_back(sys.jac_state(t, x, v));
        ltv.B.push_back(sys.jac_control(t, x, v));
    }
    return ltv;
}

/// Same as above with the state path given as a function of time.
inline LtvSystem linearize_along(const TriangularSystem& sys, const std::function<Vec(double)>& state,
                                 const std::function<Vec(double)>& control, const std::vector<double>& grid) {
    LtvSystem ltv;
    ltv.times = grid;
    for (double t : grid) {
        Vec x = state(t), v = control(t);
        ltv.A.push_back(sys.jac_state(t, x, v));
        ltv.B.push_back(sys.jac_control(t, x, v));
    }
    return ltv;
}

}  // namespace tristeer
