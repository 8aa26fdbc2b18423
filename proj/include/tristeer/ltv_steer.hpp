#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "tristeer/control.hpp"
#include "tristeer/errors.hpp"
#include "tristeer/ode.hpp"

namespace tristeer {

/// Scalar weight on the steering window together with its derivative.
struct Weight {
    std::function<double(double)> rho;
    std::function<double(double)> drho;
};

/// ((s-a)(b-s))^2 normalised to peak 1: value and first derivative vanish at both ends.
inline Weight bump_weight(double a, double b) {
    double half = 0.5 * (b - a);
    double scale = 1.0 / (half * half * half * half);
    return {[a, b, scale](double s) {
                double q = (s - a) * (b - s);
                return scale * q * q;
            },
            [a, b, scale](double s) {
                double q = (s - a) * (b - s);
                return scale * 2.0 * q * (a + b - 2.0 * s);
            }};
}

inline Weight unit_weight() {
    return {[](double) { return 1.0; }, [](double) { return 0.0; }};
}

inline std::vector<double> uniform_grid(double a, double b, int intervals) {
    std::vector<double> g(static_cast<std::size_t>(intervals) + 1);
    for (int i = 0; i <= intervals; ++i) g[static_cast<std::size_t>(i)] = a + (b - a) * i / intervals;
    g.back() = b;
    return g;
}

namespace detail {

/// P(s) = transition matrix from s to the window end, P' = -P A, P(end) = I,
/// integrated backwards with RK4 on the sample grid (A linear between samples).
inline std::vector<Mat> transitions_to_end(const LtvSystem& ltv) {
    const std::size_t N = ltv.times.size();
    const int k = ltv.states();
    std::vector<Mat> P(N);
    P[N - 1] = Mat::Identity(k, k);
    for (std::size_t i = N - 1; i > 0; --i) {
        double h = ltv.times[i - 1] - ltv.times[i];  // negative
        const Mat& A1 = ltv.A[i];
        const Mat& A0 = ltv.A[i - 1];
        Mat Am = 0.5 * (A0 + A1);
        const Mat& X = P[i];
        Mat k1 = -X * A1;
        Mat k2 = -(X + 0.5 * h * k1) * Am;
        Mat k3 = -(X + 0.5 * h * k2) * Am;
        Mat k4 = -(X + h * k3) * A0;
        P[i - 1] = X + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return P;
}

inline std::vector<double> quadrature_weights(const std::vector<double>& t) {
    const std::size_t N = t.size();
    std::vector<double> w(N, 0.0);
    if (N < 2) return w;
    const std::size_t iv = N - 1;
    double h = (t.back() - t.front()) / static_cast<double>(iv);
    bool uniform = true;
    for (std::size_t i = 0; i + 1 < N; ++i)
        if (std::abs((t[i + 1] - t[i]) - h) > 1e-9 * std::abs(h)) uniform = false;
    if (uniform && iv % 2 == 0) {
        for (std::size_t i = 0; i < N; ++i) w[i] = h / 3.0 * ((i == 0 || i == iv) ? 1.0 : (i % 2 ? 4.0 : 2.0));
    } else {
        for (std::size_t i = 0; i + 1 < N; ++i) {
            double d = 0.5 * (t[i + 1] - t[i]);
            w[i] += d;
            w[i + 1] += d;
        }
    }
    return w;
}

inline std::vector<double> sample(const std::function<double(double)>& f, const std::vector<double>& t) {
    std::vector<double> out;
    out.reserve(t.size());
    for (double s : t) out.push_back(f(s));
    return out;
}

}  // namespace detail

/// W = int P(s) B(s) rho(s) B(s)^T P(s)^T ds over the LTV grid.
inline Mat gramian(const LtvSystem& ltv, const std::vector<double>& weight) {
    if (weight.size() != ltv.times.size()) throw DimensionError("weight samples must match the LTV grid");
    auto P = detail::transitions_to_end(ltv);
    auto q = detail::quadrature_weights(ltv.times);
    const int k = ltv.states();
    Mat W = Mat::Zero(k, k);
    for (std::size_t i = 0; i < ltv.times.size(); ++i) {
        Mat G = P[i] * ltv.B[i];
        W += (q[i] * weight[i]) * G * G.transpose();
    }
    return 0.5 * (W + W.transpose());
}

inline Mat gramian(const LtvSystem& ltv, const Weight& w) { return gramian(ltv, detail::sample(w.rho, ltv.times)); }

/// Integrates z' = A z + B w from z0 across the LTV window with RK4, `sub` steps per grid interval.
inline Vec simulate_ltv(const LtvSystem& ltv, const Control& w, const Vec& z0, int sub = 4) {
    Vec z = z0;
    auto F = [&](double t, const Vec& x) {
        auto [A, B] = ltv.at(t);
        return Vec(A * x + B * w.value(std::clamp(t, w.start(), w.end())));
    };
    for (std::size_t i = 0; i + 1 < ltv.times.size(); ++i) {
        double a = ltv.times[i], h = (ltv.times[i + 1] - a) / sub;
        for (int s = 0; s < sub; ++s) {
            double t = a + s * h;
            Vec k1 = F(t, z);
            Vec k2 = F(t + 0.5 * h, z + 0.5 * h * k1);
            Vec k3 = F(t + 0.5 * h, z + 0.5 * h * k2);
            Vec k4 = F(t + h, z + h * k3);
            z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
    }
    return z;
}

/// Controls w_1..w_k steering 0 to the unit vectors e_j across the LTV window.
struct SteeringBasis {
    double t_begin = 0.0;
    double t_end = 0.0;
    std::vector<Control> controls;
    std::vector<double> endpoint_errors;
    double gramian_min_eig = 0.0;
};

/**
 * Minimum-energy steering basis. Provisional controls q_j = rho B^T P^T e_j are
 * fitted as cubic Hermite pieces on the LTV grid; the realized endpoint matrix G
 * of those fitted controls replaces W in the inversion, so w_j = sum_i q_i (G^-1)_ij
 * hit e_j up to round-off under simulate_ltv. Values and derivatives at both ends
 * are taken from the weight, so a bump weight gives exact zeros there.
 */
inline SteeringBasis basis(const LtvSystem& ltv, const Weight& weight, double min_eig = 1e-10) {
    const std::size_t N = ltv.times.size();
    if (N < 3) throw DimensionError("steering needs at least three grid samples");
    const int k = ltv.states(), m = ltv.inputs();
    auto rho = detail::sample(weight.rho, ltv.times);
    auto drho = detail::sample(weight.drho, ltv.times);
    Mat W = gramian(ltv, rho);
    Eigen::SelfAdjointEigenSolver<Mat> eig(W);
    double lam_min = eig.eigenvalues().minCoeff();
    if (!(lam_min >= min_eig))
        throw GramianSingular("weighted Gramian is singular (min eigenvalue " + std::to_string(lam_min) + ")", lam_min);

    auto P = detail::transitions_to_end(ltv);
    // dB/ds by finite differences on the grid.
    std::vector<Mat> dB(N);
    for (std::size_t i = 0; i < N; ++i) {
        std::size_t l = i == 0 ? 0 : i - 1, r = i + 1 == N ? N - 1 : i + 1;
        dB[i] = (ltv.B[r] - ltv.B[l]) / (ltv.times[r] - ltv.times[l]);
    }
    std::vector<Control> q;
    for (int j = 0; j < k; ++j) {
        std::vector<Vec> vals, ders;
        for (std::size_t i = 0; i < N; ++i) {
            Vec Pe = P[i].transpose().col(j);  // P^T e_j
            Vec val = rho[i] * ltv.B[i].transpose() * Pe;
            Vec der = drho[i] * ltv.B[i].transpose() * Pe + rho[i] * dB[i].transpose() * Pe -
                      rho[i] * ltv.B[i].transpose() * ltv.A[i].transpose() * Pe;
            vals.push_back(std::move(val));
            ders.push_back(std::move(der));
        }
        q.push_back(Control::hermite(ltv.times, std::move(vals), std::move(ders)));
    }
    Mat G(k, k);
    for (int j = 0; j < k; ++j) G.col(j) = simulate_ltv(ltv, q[static_cast<std::size_t>(j)], Vec::Zero(k));
    Mat Ginv = G.fullPivLu().inverse();

    SteeringBasis out;
    out.t_begin = ltv.times.front();
    out.t_end = ltv.times.back();
    out.gramian_min_eig = lam_min;
    for (int j = 0; j < k; ++j) {
        std::vector<Vec> vals(N, Vec::Zero(m)), ders(N, Vec::Zero(m));
        for (std::size_t i = 0; i < N; ++i)
            for (int c = 0; c < k; ++c) {
                double coef = Ginv(c, j);
                vals[i] += coef * q[static_cast<std::size_t>(c)].values()[i];
                ders[i] += coef * q[static_cast<std::size_t>(c)].derivatives()[i];
            }
        out.controls.push_back(Control::hermite(ltv.times, std::move(vals), std::move(ders)));
        Vec e = Vec::Zero(k);
        e(j) = 1.0;
        out.endpoint_errors.push_back((simulate_ltv(ltv, out.controls.back(), Vec::Zero(k)) - e).norm());
    }
    return out;
}

/// sum_j target_j w_j evaluated knot by knot on the basis grid.
inline Control combine_basis(const SteeringBasis& b, const Vec& target) {
    const auto& knots = b.controls.front().breakpoints();
    const int m = b.controls.front().dim();
    std::vector<Vec> vals(knots.size(), Vec::Zero(m)), ders(knots.size(), Vec::Zero(m));
    for (std::size_t j = 0; j < b.controls.size(); ++j) {
        double c = target(static_cast<int>(j));
        if (c == 0.0) continue;
        for (std::size_t i = 0; i < knots.size(); ++i) {
            vals[i] += c * b.controls[j].values()[i];
            ders[i] += c * b.controls[j].derivatives()[i];
        }
    }
    return Control::hermite(knots, std::move(vals), std::move(ders));
}

/// Control steering 0 into `target` across the LTV window.
inline Control steer(const LtvSystem& ltv, const Vec& target, const Weight& weight, double min_eig = 1e-10) {
    if (target.size() != ltv.states()) throw DimensionError("target has wrong size");
    return combine_basis(basis(ltv, weight, min_eig), target);
}

}  // namespace tristeer
