#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tristeer/control.hpp"
#include "tristeer/errors.hpp"
#include "tristeer/ode.hpp"
#include "tristeer/regpoint.hpp"
#include "tristeer/sysmodel.hpp"

namespace tristeer {

/// One member y(xi, .) of a stage family together with the last block's
/// prescribed derivative and its time derivative.
struct StageFamily {
    Vec xi;
    std::function<Vec(double)> y;
    std::function<Vec(double)> xdot;
    std::function<Vec(double)> xddot;
    std::vector<double> breaks;  ///< times where xddot may jump
};

/// Calibrated tolerances at one family parameter.
struct ToleranceProfile {
    double xi_norm = 0.0;
    double sigma = 0.0;
    double eps1 = 0.0;
    double eps2 = 0.0;
    double delta = 0.0;
    double delta1 = 0.0;
    double Delta1 = 0.0;
};

inline nlohmann::json to_json(const ToleranceProfile& t) {
    return {{"xi_norm", t.xi_norm}, {"sigma", t.sigma}, {"eps1", t.eps1}, {"eps2", t.eps2},
            {"delta", t.delta},     {"delta1", t.delta1}, {"Delta1", t.Delta1}};
}

/// Switch times run backwards from T to the left end; values[r] is held on
/// [switch_times[r+1], switch_times[r]].
struct SwitchingSchedule {
    std::vector<double> switch_times;
    std::vector<Vec> values;
    double dwell_min = 0.0;

    std::size_t segments() const { return values.size(); }
};

inline nlohmann::json to_json(const SwitchingSchedule& s) {
    nlohmann::json vals = nlohmann::json::array();
    for (const Vec& v : s.values) vals.push_back(std::vector<double>(v.data(), v.data() + v.size()));
    return {{"switch_times", s.switch_times}, {"values", vals}, {"dwell_min", s.dwell_min}};
}

enum class SelectionRule { Phi, WarmStart, Search };

struct Selection {
    Vec v;
    double defect = 0.0;
    int radius_exponent = 0;  ///< smallest a >= 0 with |v| <= 2^a, or the search radius used
    SelectionRule rule = SelectionRule::Phi;
    double phi_residual = 0.0;
};

struct SearchOptions {
    int points_per_radius = 128;
    int max_exponent = 20;
    int polish_candidates = 4;
    int polish_iterations = 30;
};

inline double halton(std::uint64_t index, int base) {
    double f = 1.0, r = 0.0;
    while (index > 0) {
        f /= base;
        r += f * static_cast<double>(index % static_cast<std::uint64_t>(base));
        index /= static_cast<std::uint64_t>(base);
    }
    return r;
}

namespace detail {

inline int radius_exponent(const Vec& v) {
    double n = v.norm();
    if (n <= 1.0) return 0;
    return static_cast<int>(std::ceil(std::log2(n) - 1e-12));
}

inline constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

/// Minimum-norm Gauss-Newton on |f_p(t, z, v) - target| over all coordinates of v.
inline Vec polish(const TriangularSystem& stage, int blk, double t, const Vec& z, const Vec& target, Vec v, int iters) {
    Vec r = stage.block_value(blk, t, z, v) - target;
    double rn = r.norm();
    for (int it = 0; it < iters && rn > 1e-14; ++it) {
        Mat J = stage.block_jac_next(blk, t, z, v);
        if (!J.allFinite()) break;
        Vec step = -Eigen::CompleteOrthogonalDecomposition<Mat>(J).solve(r);
        if (!step.allFinite() || step.norm() == 0.0) break;
        double alpha = 1.0;
        bool improved = false;
        for (int ls = 0; ls < 30; ++ls) {
            Vec cand = v + alpha * step;
            Vec rc = stage.block_value(blk, t, z, cand) - target;
            if (rc.allFinite() && rc.norm() < rn) {
                v = std::move(cand);
                r = std::move(rc);
                rn = r.norm();
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!improved) break;
    }
    return v;
}

}  // namespace detail

/**
 * Picks a control value with |f_p(t, z, v) - target| < delta/3: phi from the warm
 * start, else the warm start itself, else a Halton search over balls of radius
 * 2^a around the origin (best candidates refined by Gauss-Newton).
 */
inline Selection select_control_value(const ImplicitSolver& solver, double t, const Vec& z, const Vec& target,
                                      const Vec& warm, double delta, const SearchOptions& opt = {}) {
    const TriangularSystem& stage = *solver.sys;
    const int blk = solver.p - 1;
    const double bound = delta / 3.0;
    auto defect = [&](const Vec& v) {
        Vec r = stage.block_value(blk, t, z, v) - target;
        return r.allFinite() ? r.norm() : std::numeric_limits<double>::infinity();
    };
    try {
        PhiResult r = phi_solve(solver, t, z, target, warm);
        double d = defect(r.v);
        if (d < bound) return {r.v, d, detail::radius_exponent(r.v), SelectionRule::Phi, r.residual};
    } catch (const RegularityLost&) {
    }
    {
        double d = defect(warm);
        if (d < bound) return {warm, d, detail::radius_exponent(warm), SelectionRule::WarmStart, 0.0};
    }
    const int dim = stage.m();
    if (dim > 16) throw DefectUnsatisfiable("search supports at most 16 control coordinates");
    std::uint64_t index = 1;
    for (int a = 0; a <= opt.max_exponent; ++a) {
        double R = std::ldexp(1.0, a);
        std::vector<std::pair<double, Vec>> cands;
        int taken = 0;
        while (taken < opt.points_per_radius) {
            Vec v(dim);
            for (int j = 0; j < dim; ++j) v(j) = R * (2.0 * halton(index, detail::kPrimes[j]) - 1.0);
            ++index;
            if (v.norm() > R) continue;
            ++taken;
            double d = defect(v);
            if (d < bound) return {v, d, a, SelectionRule::Search, 0.0};
            cands.emplace_back(d, std::move(v));
        }
        std::stable_sort(cands.begin(), cands.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
        int n = std::min<int>(opt.polish_candidates, static_cast<int>(cands.size()));
        for (int c = 0; c < n; ++c) {
            Vec v = detail::polish(stage, blk, t, z, target, cands[static_cast<std::size_t>(c)].second,
                                   opt.polish_iterations);
            double d = defect(v);
            if (d < bound) return {v, d, std::max(a, detail::radius_exponent(v)), SelectionRule::Search, 0.0};
        }
    }
    throw DefectUnsatisfiable("no control value meets the defect bound at t=" + std::to_string(t));
}

struct TrackerOptions {
    double hysteresis = 0.1;
    double gain = 200.0;  ///< feedback rate towards the family, per window length
    double lattice_gain = 20.0;  ///< the same on a lattice, where defects average out
    double lean = 0.5;    ///< cap of the feedback as a fraction of delta
    double relean = 0.25; ///< growth of the miss against the leaned rate that forces re-selection
    int lattice = 64;          ///< 0: event-driven re-selection; else first lattice size (doubled until the defect holds)
    int lattice_max = 1 << 16;
    std::size_t max_segments = 400000;
    IntegratorConfig cfg{};
    SearchOptions search{};
};

struct TrackerResult {
    Trajectory z;
    Control v;
    SwitchingSchedule schedule;
    double delta = 0.0;
    double max_defect = 0.0;        ///< over every dense-output sample, with the value active there
    double max_phi_residual = 0.0;  ///< over every accepted phi selection
    double max_deviation = 0.0;     ///< sup |z - y| over samples
    int a_max = 0;
    double M = 1.0;
    int lattice = 0;  ///< lattice size used, 0 for event-driven runs
    std::size_t search_selections = 0;
};

namespace detail {

/// Cubic Hermite between two samples (either time order).
inline Vec hermite_between(double t0, const Vec& x0, const Vec& k0, double t1, const Vec& x1, const Vec& k1, double t) {
    double h = t1 - t0;
    double s = (t - t0) / h;
    double a = 1.0 - s;
    return (1.0 + 2.0 * s) * a * a * x0 + (s * a * a * h) * k0 + s * s * (3.0 - 2.0 * s) * x1 + (s * s * (s - 1.0) * h) * k1;
}

/// One backward tracking run; `lattice` > 0 re-selects on that many equal steps.
inline TrackerResult track(const ImplicitSolver& solver, const StageFamily& fam, double t_left, double T, double delta,
                           const TrackerOptions& opt, int lattice) {
    const TriangularSystem& stage = *solver.sys;
    const int blk = solver.p - 1;
    const double level = (1.0 - opt.hysteresis) * delta;
    const int off = stage.offset(blk), dim = stage.dim(blk);
    IntegratorConfig cfg = opt.cfg;
    double cap = (T - t_left) / 200.0;
    cfg.max_step = cfg.max_step > 0.0 ? std::min(cfg.max_step, cap) : cap;

    auto defect = [&](double s, const Vec& x, const Vec& v) {
        return (fam.xdot(s) - stage.block_value(blk, s, x, v)).norm();
    };
    const double kappa = (lattice > 0 ? opt.lattice_gain : opt.gain) / (T - t_left);
    auto lean_at = [&](double s, const Vec& x) -> Vec {
        Vec l = kappa * (x.segment(off, dim) - fam.y(s).segment(off, dim));
        double n = l.norm();
        if (n > opt.lean * delta) l *= opt.lean * delta / n;
        return l;
    };

    TrackerResult res;
    res.delta = delta;
    Trajectory back;  // samples in decreasing time
    back.times.push_back(T);
    back.states.push_back(fam.xi);
    std::vector<double> switches{T};
    std::vector<Vec> values;
    double t = T;
    Vec z = fam.xi;
    Vec warm = solver.anchor->x_star.at(static_cast<std::size_t>(solver.p));
    double tiny = 1e-13 * (1.0 + std::abs(T));
    double dwell = 0.0;
    std::vector<double> stops;
    for (double b : fam.breaks)
        if (b > t_left && b < T) stops.push_back(b);
    std::sort(stops.begin(), stops.end());
    auto next_stop = [&](double s) {  // largest knot below s, else t_left
        auto it = std::lower_bound(stops.begin(), stops.end(), s - tiny);
        return it == stops.begin() ? t_left : *std::prev(it);
    };

    auto record = [&](const Selection& sel) {
        if (sel.rule == SelectionRule::Phi) res.max_phi_residual = std::max(res.max_phi_residual, sel.phi_residual);
        if (sel.rule == SelectionRule::Search) ++res.search_selections;
        res.a_max = std::max(res.a_max, sel.radius_exponent);
        res.max_defect = std::max(res.max_defect, sel.defect);
    };
    auto append = [&](const Trajectory& seg, const Vec& v) {
        for (std::size_t i = 1; i < seg.size(); ++i) {
            res.max_defect = std::max(res.max_defect, defect(seg.times[i], seg.states[i], v));
            back.times.push_back(seg.times[i]);
            back.states.push_back(seg.states[i]);
            back.rate_lo.push_back(seg.rate_lo[i - 1]);
            back.rate_hi.push_back(seg.rate_hi[i - 1]);
        }
        dwell = t - seg.times.back();
        t = seg.times.back();
        z = seg.states.back();
        values.push_back(v);
        switches.push_back(t);
        warm = v;
    };

    while (t > t_left + tiny) {
        if (values.size() >= opt.max_segments)
            throw DefectUnsatisfiable("tracker exceeded " + std::to_string(opt.max_segments) + " segments");
        // Inside the defect band the selected rate leans towards the family, so
        // the deviation of the tracked block decays going backwards.
        // The selected rate also aims at the family rate half a dwell ahead, so the
        // defect sweeps through zero instead of drifting one way over the segment.
        const Vec lean = lean_at(t, z);
        const double t_next = lattice > 0 ? std::max(t_left, T - (T - t_left) * static_cast<double>(values.size() + 1) / lattice) : t_left;
        if (lattice > 0) {
            // Values are chosen on a fixed time lattice, aiming at the family rate
            // mid-step, so they vary continuously with xi.
            Selection sel = select_control_value(solver, t, z, fam.xdot(0.5 * (t + t_next)) + lean, warm, delta, opt.search);
            record(sel);
            const Vec v = sel.v;
            Rhs F = [&stage, &v](double s, const Vec& x) { return stage.rhs(s, x, v); };
            Trajectory seg;
            seg.times.push_back(t);
            seg.states.push_back(z);
            for (double stop = std::max(next_stop(t), t_next);; stop = std::max(next_stop(stop), t_next)) {
                IntegratorConfig piece = cfg;
                piece.max_step = std::min(cfg.max_step, 0.25 * (seg.times.back() - stop));
                detail::integrate_piece(F, seg.times.back(), stop, piece, seg);
                if (seg.blown_up || stop <= t_next) break;
            }
            if (seg.blown_up) throw DefectUnsatisfiable("tracker trajectory escaped the guard radius");
            append(seg, v);
            continue;
        }
        const Vec now = fam.xdot(t);
        // The lean has priority; the look-ahead gets what is left of the budget.
        Vec ahead = fam.xdot(std::max(t_left, t - 0.5 * dwell)) - now;
        double room = std::max(0.0, 0.55 * delta - lean.norm());
        if (ahead.norm() > room) ahead *= room / ahead.norm();
        const Vec offset = lean + ahead;
        Selection sel = select_control_value(solver, t, z, now + offset, warm, delta, opt.search);
        record(sel);
        const Vec v = sel.v;
        Rhs F = [&stage, &v](double s, const Vec& x) { return stage.rhs(s, x, v); };

        Trajectory seg;
        seg.times.push_back(t);
        seg.states.push_back(z);
        bool crossed = false;
        // Re-select when the defect reaches the level or the wanted lean has moved.
        auto aim = [&](double s, const Vec& x) {
            return (fam.xdot(s) + lean_at(s, x) - stage.block_value(blk, s, x, v)).norm();
        };
        const double aim0 = aim(t, z);
        auto trigger = [&](double s, const Vec& x) {
            return defect(s, x, v) >= level || aim(s, x) >= aim0 + opt.relean * delta;
        };
        StepObserver obs = [&](double s, const Vec& x) {
            if (trigger(s, x)) {
                crossed = true;
                return true;
            }
            return false;
        };
        // Family knots are step stops with at least four steps between them, so a
        // narrow feature of the family is never stepped over.
        for (double stop = next_stop(t); !crossed && !seg.blown_up; stop = next_stop(stop)) {
            IntegratorConfig piece = cfg;
            piece.max_step = std::min(cfg.max_step, 0.25 * (seg.times.back() - stop));
            detail::integrate_piece(F, seg.times.back(), stop, piece, seg, obs);
            if (stop <= t_left) break;
        }
        if (seg.blown_up) throw DefectUnsatisfiable("tracker trajectory escaped the guard radius");
        if (crossed) {
            std::size_t k = seg.size() - 1;
            double lo = seg.times[k - 1], hi = seg.times[k];  // lo: defect below level
            const Vec &x0 = seg.states[k - 1], &x1 = seg.states[k];
            const Vec &r0 = seg.rate_lo[k - 1], &r1 = seg.rate_hi[k - 1];
            for (int it = 0; it < 60 && std::abs(hi - lo) > tiny; ++it) {
                double mid = 0.5 * (lo + hi);
                Vec xm = detail::hermite_between(seg.times[k - 1], x0, r0, seg.times[k], x1, r1, mid);
                if (trigger(mid, xm))
                    hi = mid;
                else
                    lo = mid;
            }
            seg.times.pop_back();
            seg.states.pop_back();
            seg.rate_lo.pop_back();
            seg.rate_hi.pop_back();
            if (lo != seg.times.back()) {
                IntegratorConfig one = cfg;
                one.max_step = 0.0;
                detail::integrate_piece(F, seg.times.back(), lo, one, seg);
            }
            // Guarantee progress when the defect climbs within round-off of t.
            if (!(seg.times.back() < t - tiny)) {
                double s = std::max(t_left, t - 64.0 * tiny);
                seg = Trajectory{};
                seg.times.push_back(t);
                seg.states.push_back(z);
                IntegratorConfig one = cfg;
                one.max_step = 0.0;
                detail::integrate_piece(F, t, s, one, seg);
            }
        }
        append(seg, v);
    }
    switches.back() = t_left;
    back.times.back() = t_left;
    back.reverse();
    res.z = std::move(back);

    res.schedule.switch_times = switches;
    res.schedule.values = values;
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < switches.size(); ++i) dmin = std::min(dmin, switches[i] - switches[i + 1]);
    res.schedule.dwell_min = dmin;

    std::vector<double> bps(switches.rbegin(), switches.rend());
    std::vector<Vec> vals(values.rbegin(), values.rend());
    res.v = Control::piecewise_constant(std::move(bps), std::move(vals));
    res.M = std::ldexp(1.0, res.a_max) + 1.0;
    for (std::size_t i = 0; i < res.z.size(); ++i)
        res.max_deviation = std::max(res.max_deviation, (res.z.states[i] - fam.y(res.z.times[i])).norm());
    res.lattice = lattice;
    return res;
}

}  // namespace detail

/**
 * Backward construction from z(T) = xi of a reference trajectory and a
 * piecewise-constant control on [t_left, T].
 *
 * With `opt.lattice` > 0 values are re-selected on a uniform time lattice, doubled
 * until the defect stays below (1 - hysteresis) * delta. Otherwise every value is
 * held until the defect reaches (1 - hysteresis) * delta; the crossing is located
 * on the dense output and the segment is re-integrated up to it.
 */
inline TrackerResult build_reference(const ImplicitSolver& solver, const StageFamily& fam, double t_left, double T,
                                     double delta, const TrackerOptions& opt = {}) {
    if (!(delta > 0.0)) throw DomainError("tracking tolerance must be positive");
    if (!(t_left < T)) throw DomainError("tracker interval is empty");
    if (opt.lattice <= 0) return detail::track(solver, fam, t_left, T, delta, opt, 0);
    const double level = (1.0 - opt.hysteresis) * delta;
    for (int n = opt.lattice;; n *= 2) {
        TrackerResult r = detail::track(solver, fam, t_left, T, delta, opt, n);
        if (r.max_defect < level) return r;
        if (n >= opt.lattice_max)
            throw DefectUnsatisfiable("tracking lattice of " + std::to_string(n) + " steps misses the defect bound (" +
                                      std::to_string(r.max_defect) + " >= " + std::to_string(level) + ")");
    }
}

}  // namespace tristeer
