#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tristeer/errors.hpp"

namespace tristeer {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ControlKind { PiecewiseConstant, PiecewiseCubic };

inline const char* to_string(ControlKind k) {
    return k == ControlKind::PiecewiseConstant ? "piecewise-constant" : "piecewise-cubic";
}

/**
 * Time-parameterized input signal on [breakpoints.front(), breakpoints.back()].
 *
 * Piecewise-constant controls hold one value per segment and are right-continuous
 * (the last segment also owns the final breakpoint). Piecewise-cubic controls are
 * stored in Hermite form, one value and one derivative per breakpoint, so they are
 * C1 by construction and evaluate exactly to the stored data at every breakpoint.
 */
class Control {
public:
    Control() = default;

    static Control piecewise_constant(std::vector<double> breakpoints, std::vector<Vec> values) {
        if (breakpoints.size() < 2 || values.size() + 1 != breakpoints.size())
            throw DomainError("piecewise-constant control needs N+1 breakpoints for N values");
        Control c;
        c.kind_ = ControlKind::PiecewiseConstant;
        c.dim_ = static_cast<int>(values.front().size());
        c.knots_ = std::move(breakpoints);
        c.values_ = std::move(values);
        c.check();
        return c;
    }

    static Control constant(double a, double b, const Vec& value) {
        return piecewise_constant({a, b}, {value});
    }

    static Control hermite(std::vector<double> knots, std::vector<Vec> values, std::vector<Vec> derivs) {
        if (knots.size() < 2 || values.size() != knots.size() || derivs.size() != knots.size())
            throw DomainError("hermite control needs one value and derivative per knot");
        Control c;
        c.kind_ = ControlKind::PiecewiseCubic;
        c.dim_ = static_cast<int>(values.front().size());
        c.knots_ = std::move(knots);
        c.values_ = std::move(values);
        c.derivs_ = std::move(derivs);
        c.check();
        return c;
    }

    /// Cubic control sampling `f` and `df` on the given knots.
    static Control hermite_from(std::vector<double> knots, const std::function<Vec(double)>& f,
                                const std::function<Vec(double)>& df) {
        std::vector<Vec> v, d;
        v.reserve(knots.size());
        d.reserve(knots.size());
        for (double t : knots) {
            v.push_back(f(t));
            d.push_back(df(t));
        }
        return hermite(std::move(knots), std::move(v), std::move(d));
    }

    ControlKind kind() const noexcept { return kind_; }
    int dim() const noexcept { return dim_; }
    double start() const { return knots_.front(); }
    double end() const { return knots_.back(); }
    const std::vector<double>& breakpoints() const noexcept { return knots_; }
    /// Per-segment values (piecewise-constant) or per-knot values (piecewise-cubic).
    const std::vector<Vec>& values() const noexcept { return values_; }
    const std::vector<Vec>& derivatives() const noexcept { return derivs_; }
    std::size_t segment_count() const noexcept { return knots_.size() - 1; }
    bool empty() const noexcept { return knots_.empty(); }

    bool covers(double a, double b) const {
        double lo = std::min(a, b), hi = std::max(a, b);
        double tol = 1e-12 * (1.0 + std::abs(start()) + std::abs(end()));
        return lo >= start() - tol && hi <= end() + tol;
    }

    std::size_t segment_index(double t) const {
        double tol = 1e-12 * (1.0 + std::abs(start()) + std::abs(end()));
        if (t < start() - tol || t > end() + tol)
            throw DomainError("control evaluated at t=" + std::to_string(t) + " outside [" +
                              std::to_string(start()) + ", " + std::to_string(end()) + "]");
        auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
        std::ptrdiff_t i = (it - knots_.begin()) - 1;
        return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(segment_count()) - 1));
    }

    Vec value(double t) const {
        std::size_t i = segment_index(t);
        if (kind_ == ControlKind::PiecewiseConstant) return values_[i];
        double h = knots_[i + 1] - knots_[i];
        double s = std::clamp((t - knots_[i]) / h, 0.0, 1.0);
        double a = 1.0 - s;
        double h00 = (1.0 + 2.0 * s) * a * a, h10 = s * a * a, h01 = s * s * (3.0 - 2.0 * s), h11 = s * s * (s - 1.0);
        return h00 * values_[i] + (h10 * h) * derivs_[i] + h01 * values_[i + 1] + (h11 * h) * derivs_[i + 1];
    }

    Vec derivative(double t) const {
        std::size_t i = segment_index(t);
        if (kind_ == ControlKind::PiecewiseConstant) return Vec::Zero(dim_);
        double h = knots_[i + 1] - knots_[i];
        double s = std::clamp((t - knots_[i]) / h, 0.0, 1.0);
        double d00 = 6.0 * s * s - 6.0 * s, d10 = 3.0 * s * s - 4.0 * s + 1.0;
        double d01 = -6.0 * s * s + 6.0 * s, d11 = 3.0 * s * s - 2.0 * s;
        return (d00 / h) * values_[i] + d10 * derivs_[i] + (d01 / h) * values_[i + 1] + d11 * derivs_[i + 1];
    }

    /// Second derivative inside the active segment (one-sided at breakpoints).
    Vec second_derivative(double t) const {
        std::size_t i = segment_index(t);
        if (kind_ == ControlKind::PiecewiseConstant) return Vec::Zero(dim_);
        double h = knots_[i + 1] - knots_[i];
        double s = std::clamp((t - knots_[i]) / h, 0.0, 1.0);
        double e00 = 12.0 * s - 6.0, e10 = 6.0 * s - 4.0, e11 = 6.0 * s - 2.0;
        return (e00 / (h * h)) * (values_[i] - values_[i + 1]) + (e10 / h) * derivs_[i] + (e11 / h) * derivs_[i + 1];
    }

    /// The control t -> this(a + b - t); derivatives flip sign.
    Control reversed(double a, double b) const {
        std::vector<double> k(knots_.rbegin(), knots_.rend());
        for (double& t : k) t = a + b - t;
        if (kind_ == ControlKind::PiecewiseConstant)
            return piecewise_constant(std::move(k), std::vector<Vec>(values_.rbegin(), values_.rend()));
        std::vector<Vec> v(values_.rbegin(), values_.rend());
        std::vector<Vec> d;
        for (auto it = derivs_.rbegin(); it != derivs_.rend(); ++it) d.push_back(-*it);
        return hermite(std::move(k), std::move(v), std::move(d));
    }

    /// Restriction to [a, b]; new boundary knots are inserted where needed.
    Control restricted(double a, double b) const {
        if (!(a < b) || !covers(a, b)) throw DomainError("restriction interval outside control domain");
        std::vector<double> k{a};
        for (double t : knots_)
            if (t > a && t < b) k.push_back(t);
        k.push_back(b);
        if (kind_ == ControlKind::PiecewiseConstant) {
            std::vector<Vec> v;
            for (std::size_t i = 0; i + 1 < k.size(); ++i) v.push_back(values_[segment_index(0.5 * (k[i] + k[i + 1]))]);
            return piecewise_constant(std::move(k), std::move(v));
        }
        return hermite_from(std::move(k), [this](double t) { return value(t); },
                            [this](double t) { return derivative(t); });
    }

    /// Joins two controls of the same kind sharing the junction time. For cubic
    /// controls the right-hand data wins at the junction; callers check C1 matching.
    static Control concat(const Control& left, const Control& right) {
        if (left.kind_ != right.kind_ || left.dim_ != right.dim_)
            throw DomainError("cannot concatenate controls of different kind or dimension");
        if (std::abs(left.end() - right.start()) > 1e-12 * (1.0 + std::abs(left.end())))
            throw DomainError("concatenated controls do not share a junction time");
        std::vector<double> k(left.knots_.begin(), left.knots_.end() - 1);
        k.insert(k.end(), right.knots_.begin(), right.knots_.end());
        if (left.kind_ == ControlKind::PiecewiseConstant) {
            std::vector<Vec> v = left.values_;
            v.insert(v.end(), right.values_.begin(), right.values_.end());
            return piecewise_constant(std::move(k), std::move(v));
        }
        std::vector<Vec> v(left.values_.begin(), left.values_.end() - 1);
        std::vector<Vec> d(left.derivs_.begin(), left.derivs_.end() - 1);
        v.insert(v.end(), right.values_.begin(), right.values_.end());
        d.insert(d.end(), right.derivs_.begin(), right.derivs_.end());
        return hermite(std::move(k), std::move(v), std::move(d));
    }

    /// base + sum_j coeffs[j] * terms[j] for cubic controls on a common domain.
    static Control combine(const Control& base, std::span<const Control> terms, std::span<const double> coeffs) {
        if (base.kind_ != ControlKind::PiecewiseCubic) throw DomainError("combine needs cubic controls");
        std::vector<double> k = base.knots_;
        bool active = false;
        for (std::size_t j = 0; j < terms.size(); ++j) {
            if (coeffs[j] == 0.0) continue;
            active = true;
            if (terms[j].kind_ != ControlKind::PiecewiseCubic || terms[j].dim_ != base.dim_)
                throw DomainError("combine needs cubic controls of equal dimension");
            k.insert(k.end(), terms[j].knots_.begin(), terms[j].knots_.end());
        }
        if (!active) return base;
        std::sort(k.begin(), k.end());
        k.erase(std::unique(k.begin(), k.end()), k.end());
        std::vector<Vec> v, d;
        v.reserve(k.size());
        d.reserve(k.size());
        for (double t : k) {
            Vec val = base.value(t), der = base.derivative(t);
            for (std::size_t j = 0; j < terms.size(); ++j) {
                if (coeffs[j] == 0.0) continue;
                val += coeffs[j] * terms[j].value(t);
                der += coeffs[j] * terms[j].derivative(t);
            }
            v.push_back(std::move(val));
            d.push_back(std::move(der));
        }
        return hermite(std::move(k), std::move(v), std::move(d));
    }

    /// Exact sup of the Euclidean norm for constant pieces; for cubic pieces the
    /// max-abs component over segment endpoints and interior critical points.
    double sup_norm() const {
        double best = 0.0;
        if (kind_ == ControlKind::PiecewiseConstant) {
            for (const auto& v : values_) best = std::max(best, v.norm());
            return best;
        }
        for (std::size_t i = 0; i < segment_count(); ++i) {
            best = std::max({best, values_[i].norm(), values_[i + 1].norm()});
            for (double s : critical_points(i)) best = std::max(best, value(knots_[i] + s * (knots_[i + 1] - knots_[i])).norm());
        }
        return best;
    }

private:
    void check() const {
        for (std::size_t i = 0; i + 1 < knots_.size(); ++i)
            if (!(knots_[i] < knots_[i + 1])) throw DomainError("control breakpoints must be strictly increasing");
        for (const auto& v : values_)
            if (v.size() != dim_) throw DimensionError("control values have inconsistent dimension");
        for (const auto& v : derivs_)
            if (v.size() != dim_) throw DimensionError("control derivatives have inconsistent dimension");
    }

    // Roots in (0,1) of the derivative of each component on segment i.
    std::vector<double> critical_points(std::size_t i) const {
        std::vector<double> out;
        double h = knots_[i + 1] - knots_[i];
        for (int c = 0; c < dim_; ++c) {
            double y0 = values_[i](c), y1 = values_[i + 1](c), m0 = h * derivs_[i](c), m1 = h * derivs_[i + 1](c);
            // d/ds of the Hermite cubic: a s^2 + b s + c0
            double a = 6.0 * y0 + 3.0 * m0 - 6.0 * y1 + 3.0 * m1;
            double b = -6.0 * y0 - 4.0 * m0 + 6.0 * y1 - 2.0 * m1;
            double c0 = m0;
            if (std::abs(a) < 1e-300) {
                if (std::abs(b) > 1e-300) out.push_back(-c0 / b);
            } else {
                double disc = b * b - 4.0 * a * c0;
                if (disc >= 0.0) {
                    double sq = std::sqrt(disc);
                    out.push_back((-b + sq) / (2.0 * a));
                    out.push_back((-b - sq) / (2.0 * a));
                }
            }
        }
        std::erase_if(out, [](double s) { return !(s > 0.0 && s < 1.0); });
        return out;
    }

    ControlKind kind_ = ControlKind::PiecewiseConstant;
    int dim_ = 0;
    std::vector<double> knots_;
    std::vector<Vec> values_;
    std::vector<Vec> derivs_;
};

namespace detail {
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                               double fb, double whole, double tol, int depth) {
    double m = 0.5 * (a + b), lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm), right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

/// Adaptive Simpson quadrature of f over [a, b].
inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-10) {
    if (!(b > a)) return 0.0;
    double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 40);
}

/// L1 distance of two controls over the intersection of their domains, integrated
/// piece by piece over the union of breakpoints.
inline double l1_distance(const Control& a, const Control& b, double tol = 1e-10) {
    double lo = std::max(a.start(), b.start()), hi = std::min(a.end(), b.end());
    std::vector<double> k{lo, hi};
    for (double t : a.breakpoints()) if (t > lo && t < hi) k.push_back(t);
    for (double t : b.breakpoints()) if (t > lo && t < hi) k.push_back(t);
    std::sort(k.begin(), k.end());
    k.erase(std::unique(k.begin(), k.end()), k.end());
    double total = 0.0;
    double piece_tol = tol / static_cast<double>(k.size());
    for (std::size_t i = 0; i + 1 < k.size(); ++i) {
        // Evaluate strictly inside the piece so right-continuity never picks a neighbour.
        double l = k[i], r = k[i + 1], eps = 1e-13 * (r - l);
        auto f = [&](double t) {
            double tt = std::clamp(t, l + eps, r - eps);
            return (a.value(tt) - b.value(tt)).norm();
        };
        total += integrate(f, l, r, piece_tol);
    }
    return total;
}

/// Sup of |a - b| sampled on the union of breakpoints refined `refine` times per piece.
inline double sup_distance(const Control& a, const Control& b, int refine = 16) {
    double lo = std::max(a.start(), b.start()), hi = std::min(a.end(), b.end());
    std::vector<double> k{lo, hi};
    for (double t : a.breakpoints()) if (t > lo && t < hi) k.push_back(t);
    for (double t : b.breakpoints()) if (t > lo && t < hi) k.push_back(t);
    std::sort(k.begin(), k.end());
    k.erase(std::unique(k.begin(), k.end()), k.end());
    double best = 0.0;
    for (std::size_t i = 0; i + 1 < k.size(); ++i)
        for (int j = 0; j <= refine; ++j) {
            double t = k[i] + (k[i + 1] - k[i]) * j / refine;
            best = std::max(best, (a.value(t) - b.value(t)).norm());
        }
    return best;
}

}  // namespace tristeer
