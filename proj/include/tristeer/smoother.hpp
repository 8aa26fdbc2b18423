#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "tristeer/control.hpp"
#include "tristeer/errors.hpp"

namespace tristeer {

struct Pin {
    Vec value;
    std::optional<Vec> derivative;  ///< absent: slope of the smoothed signal is kept
};

struct SmoothingSpec {
    double l1_budget = 1e-3;
    Pin left;
    Pin right;
    double ramp_width = 0.1;  ///< initial half-width h of the smoothing kernel
    double min_width = 1e-12;
};

struct SmoothingReport {
    double ramp_width = 0.0;
    double end_width = 0.0;
    double l1_distance = 0.0;
    double sup_norm = 0.0;
    double sup_bound = 0.0;
    int halvings = 0;
};

namespace detail {

// CDF and density of the triangle kernel on [-1, 1].
inline double tri_cdf(double u) {
    if (u <= -1.0) return 0.0;
    if (u <= 0.0) return 0.5 * (u + 1.0) * (u + 1.0);
    if (u < 1.0) return 1.0 - 0.5 * (1.0 - u) * (1.0 - u);
    return 1.0;
}

inline double tri_pdf(double u) { return std::abs(u) < 1.0 ? 1.0 - std::abs(u) : 0.0; }

/// Staircase convolved with the triangle kernel of half-width h, extended by
/// its end values outside its domain. Piecewise quadratic with knots s_r, s_r +- h;
/// evaluated in O(log n) from prefix sums of the jump moments.
class TriangleSmoothed {
public:
    TriangleSmoothed(const Control& v, double h) : h_(h) {
        const auto& bp = v.breakpoints();
        const auto& vals = v.values();
        first_ = vals.front();
        const Vec zero = Vec::Zero(first_.size());
        m0_.push_back(zero);
        m1_.push_back(zero);
        m2_.push_back(zero);
        for (std::size_t r = 1; r < vals.size(); ++r) {
            double sr = bp[r];
            Vec d = vals[r] - vals[r - 1];
            switches_.push_back(sr);
            m0_.push_back(m0_.back() + d);
            m1_.push_back(m1_.back() + sr * d);
            m2_.push_back(m2_.back() + (sr * sr) * d);
        }
    }

    std::pair<Vec, Vec> eval(double t) const {
        const double a = t + h_, b = t - h_, q = 1.0 / (h_ * h_);
        auto idx = [&](double x) {  // number of switches <= x
            return static_cast<std::size_t>(std::upper_bound(switches_.begin(), switches_.end(), x) - switches_.begin());
        };
        std::size_t ib = idx(b), it = idx(t), ia = idx(a);
        auto sum = [](const std::vector<Vec>& m, std::size_t i, std::size_t j) { return Vec(m[j] - m[i]); };
        Vec val = first_ + m0_[ib];
        Vec der = Vec::Zero(first_.size());
        if (ia - ib <= 32) {  // raw moments cancel badly when h is small
            for (std::size_t r = ib; r < ia; ++r) {
                Vec d = m0_[r + 1] - m0_[r];
                double s = switches_[r];
                if (s <= t) {
                    val += (1.0 - 0.5 * q * (s - b) * (s - b)) * d;
                    der += q * (s - b) * d;
                } else {
                    val += 0.5 * q * (a - s) * (a - s) * d;
                    der += q * (a - s) * d;
                }
            }
            return {val, der};
        }
        if (it > ib) {  // s in (t-h, t]: 1 - (s-b)^2 / (2h^2)
            Vec S0 = sum(m0_, ib, it), S1 = sum(m1_, ib, it), S2 = sum(m2_, ib, it);
            Vec sq = S2 - 2.0 * b * S1 + (b * b) * S0;
            val += S0 - 0.5 * q * sq;
            der += q * (S1 - b * S0);
        }
        if (ia > it) {  // s in (t, t+h]: (a-s)^2 / (2h^2)
            Vec S0 = sum(m0_, it, ia), S1 = sum(m1_, it, ia), S2 = sum(m2_, it, ia);
            Vec sq = (a * a) * S0 - 2.0 * a * S1 + S2;
            val += 0.5 * q * sq;
            der += q * (a * S0 - S1);
        }
        return {val, der};
    }

    std::vector<double> knots(double a, double b) const {
        std::vector<double> k;
        for (double s : switches_)
            for (double c : {s - h_, s, s + h_})
                if (c > a && c < b) k.push_back(c);
        std::sort(k.begin(), k.end());
        return k;
    }

private:
    double h_;
    Vec first_;
    std::vector<double> switches_;
    std::vector<Vec> m0_, m1_, m2_;  ///< prefix sums of d_r, s_r d_r, s_r^2 d_r
};

/// Drops knots closer than `gap` to their predecessor; the ends are kept.
inline std::vector<double> thin_knots(std::vector<double> k, double gap) {
    std::vector<double> out;
    for (std::size_t i = 0; i < k.size(); ++i) {
        if (!out.empty() && k[i] - out.back() <= gap) {
            if (i + 1 == k.size()) out.back() = k[i];
            continue;
        }
        out.push_back(k[i]);
    }
    return out;
}

inline Control smooth_once(const Control& v, const SmoothingSpec& spec, double h, double& end_width) {
    const double a = v.start(), b = v.end(), L = b - a;
    TriangleSmoothed S(v, h);
    double e = std::min(h, 0.25 * L);
    end_width = e;
    std::vector<double> k{a, a + e};
    for (double c : S.knots(a + e, b - e)) k.push_back(c);
    k.push_back(b - e);
    k.push_back(b);
    k = thin_knots(std::move(k), 1e-12 * L);
    std::vector<Vec> vals, ders;
    for (double t : k) {
        auto [val, der] = S.eval(t);
        vals.push_back(std::move(val));
        ders.push_back(std::move(der));
    }
    vals.front() = spec.left.value;
    if (spec.left.derivative) ders.front() = *spec.left.derivative;
    vals.back() = spec.right.value;
    if (spec.right.derivative) ders.back() = *spec.right.derivative;
    return Control::hermite(std::move(k), std::move(vals), std::move(ders));
}

}  // namespace detail

/**
 * C1 version of a piecewise-constant control: the staircase convolved with a
 * triangle kernel of half-width h (so it equals v away from switches), joined
 * to the pins by one cubic on each end strip of width min(h, L/4). h is halved
 * until the L1 distance meets the budget and the sup bound holds.
 */
inline Control smooth_control(const Control& v, const SmoothingSpec& spec, SmoothingReport* report = nullptr) {
    if (v.kind() != ControlKind::PiecewiseConstant) throw DomainError("smooth_control expects a piecewise-constant input");
    if (!(spec.l1_budget > 0.0)) throw DomainError("L1 budget must be positive");
    if (spec.left.value.size() != v.dim() || spec.right.value.size() != v.dim())
        throw DimensionError("pin values have wrong dimension");
    double vmax = v.sup_norm();
    double bound = 2.0 * std::max({spec.left.value.norm(), spec.right.value.norm(), vmax}) + 1.0;
    double h = std::min(spec.ramp_width, 0.5 * (v.end() - v.start()));
    int halvings = 0;
    while (h >= spec.min_width) {
        double e = 0.0;
        Control out = detail::smooth_once(v, spec, h, e);
        double l1 = std::isfinite(spec.l1_budget) ? l1_distance(out, v, 1e-3 * spec.l1_budget) : 0.0;
        double sup = out.sup_norm();
        if (l1 <= spec.l1_budget && sup < bound) {
            if (report) *report = {h, e, l1, sup, bound, halvings};
            return out;
        }
        h *= 0.5;
        ++halvings;
    }
    throw DomainError("smoothing budget unreachable with ramp width above the minimum");
}

struct FitReport {
    double sup_error = 0.0;
    int intervals = 0;
    double first_width = 0.0;
};

/**
 * C1 Hermite fit of a smooth reference on [a, b] with the left value and
 * derivative pinned. The first strip [a, a+e] absorbs the pin mismatch. Pieces
 * whose sampled error reaches `delta1` are bisected; `breaks` are extra knots
 * where the reference derivative may jump.
 */
inline Control smooth_family_segment(const std::function<Vec(double)>& u_ref, const std::function<Vec(double)>& du_ref,
                                     double a, double b, const Vec& pin_value, const Vec& pin_deriv, double delta1,
                                     FitReport* report = nullptr, int intervals = 64,
                                     const std::vector<double>& breaks = {}) {
    if (!(a < b)) throw DomainError("fit interval is empty");
    if (!(delta1 > 0.0)) throw DomainError("fit tolerance must be positive");
    Vec u0 = u_ref(a);
    double gap = (u0 - pin_value).norm();
    if (gap >= delta1) throw DomainError("left pin is farther than the fit tolerance from the reference");
    double dgap = (du_ref(a) - pin_deriv).norm();
    const double L = b - a;
    // A cubic with slope mismatch D on a strip of width e deviates by at most 4De/27.
    const double e = std::min(0.25 * L, dgap > 0.0 ? 5.0 * (delta1 - gap) / dgap : L / intervals);

    std::vector<double> k{a};
    for (int i = 0; i <= intervals; ++i) k.push_back(i == intervals ? b : a + e + (b - a - e) * i / intervals);
    for (double t : breaks)
        if (t > a + e && t < b) k.push_back(t);
    std::sort(k.begin(), k.end());
    k = detail::thin_knots(std::move(k), 1e-12 * L);

    struct Node {
        double t;
        Vec v, d;
    };
    auto node = [&](double t) { return Node{t, u_ref(t), du_ref(t)}; };
    std::vector<Node> nodes;
    for (double t : k) nodes.push_back(node(t));
    nodes.front().v = pin_value;
    nodes.front().d = pin_deriv;

    auto piece_error = [&](const Node& l, const Node& r) {
        Control c = Control::hermite({l.t, r.t}, {l.v, r.v}, {l.d, r.d});
        double err = 0.0;
        for (double s : {0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875}) {
            double t = l.t + s * (r.t - l.t);
            err = std::max(err, (c.value(t) - u_ref(t)).norm());
        }
        return err;
    };

    // Depth-first bisection; accepted pieces come out in order.
    std::vector<Node> out{nodes.front()};
    double worst = 0.0;
    const double min_width = 1e-11 * L;
    const std::size_t max_nodes = 400000;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
        std::vector<Node> stack{nodes[i + 1]};
        Node left = out.back();
        while (!stack.empty()) {
            const Node& right = stack.back();
            double err = piece_error(left, right);
            if (err < delta1) {
                worst = std::max(worst, err);
                out.push_back(right);
                left = right;
                stack.pop_back();
                continue;
            }
            if (right.t - left.t < min_width || out.size() + stack.size() > max_nodes)
                throw DomainError("reference fit did not reach the requested tolerance");
            stack.push_back(node(0.5 * (left.t + right.t)));
        }
    }
    std::vector<double> kt;
    std::vector<Vec> vals, ders;
    for (auto& n : out) {
        kt.push_back(n.t);
        vals.push_back(std::move(n.v));
        ders.push_back(std::move(n.d));
    }
    if (report) *report = {worst, static_cast<int>(kt.size()) - 1, e};
    return Control::hermite(std::move(kt), std::move(vals), std::move(ders));
}

inline Control smooth_family_segment(const Control& u_ref, const Vec& pin_value, const Vec& pin_deriv, double delta1,
                                     FitReport* report = nullptr) {
    return smooth_family_segment([&](double t) { return u_ref.value(t); },
                                 [&](double t) { return u_ref.derivative(t); }, u_ref.start(), u_ref.end(), pin_value,
                                 pin_deriv, delta1, report);
}

}  // namespace tristeer
