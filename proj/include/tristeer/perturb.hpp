#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "tristeer/errors.hpp"
#include "tristeer/ode.hpp"
#include "tristeer/shooting.hpp"

namespace tristeer {

/// Additive disturbance x' = f(t, x, u) + h(t, x, u); `bound` is a sup bound on |h|.
struct Perturbation {
    std::string name = "zero";
    std::function<Vec(double, const Vec&, const Vec&)> h;  ///< empty: h = 0
    double bound = 0.0;
    double lipschitz_hint = std::numeric_limits<double>::quiet_NaN();

    bool is_zero() const { return !h; }
};

inline Trajectory simulate_perturbed(const TriangularSystem& sys, const Perturbation& pert, const Vec& x0,
                                     const Control& u, const IntegratorConfig& cfg) {
    if (pert.is_zero()) return simulate(sys, sys.t0(), sys.T(), x0, u, cfg);
    return simulate_rhs([&](double t, const Vec& x, const Vec& v) { return Vec(sys.rhs(t, x, v) + pert.h(t, x, v)); },
                        sys.t0(), sys.T(), x0, u, cfg);
}

/**
 * Registered disturbances: "zero"; "sin01", h = (0.1 sin(x1 + u1), 0, ...);
 * "shift02", 0.2 on the last state coordinate.
 */
inline Perturbation builtin_perturbation(const std::string& name, const TriangularSystem& sys) {
    Perturbation p;
    p.name = name;
    const int n = sys.n();
    if (name == "zero") return p;
    if (name == "sin01") {
        p.h = [n](double, const Vec& x, const Vec& u) {
            Vec out = Vec::Zero(n);
            out(0) = 0.1 * std::sin(x(0) + u(0));
            return out;
        };
        p.bound = 0.1;
        p.lipschitz_hint = 0.1;
        return p;
    }
    if (name == "shift02") {
        p.h = [n](double, const Vec&, const Vec&) {
            Vec out = Vec::Zero(n);
            out(n - 1) = 0.2;
            return out;
        };
        p.bound = 0.2;
        p.lipschitz_hint = 0.0;
        return p;
    }
    throw DomainError("unknown perturbation '" + name + "'");
}

inline std::vector<std::string> builtin_perturbations() { return {"zero", "sin01", "shift02"}; }

struct PerturbOptions {
    int max_rounds = 25;
    double tol = 1e-3;
    double alpha = 1.0;  ///< initial correction step, halved when the residual grows
};

struct PerturbedPlan {
    PlanResult plan;  ///< nominal plan for the last accepted target
    Vec target;       ///< nominal target that plan was made for
    int rounds = 0;   ///< corrections applied
    double residual = 0.0;
    std::vector<double> history;
    bool converged = false;
};

/**
 * Plans for shifted nominal targets until the perturbed endpoint lands on xT:
 * xi_{k+1} = xi_k + alpha (xT - x_pert(T)). A round whose residual grows is
 * discarded and retried from the best target with half the step.
 */
inline PerturbedPlan plan_perturbed(const TriangularSystem& sys, const RegularChain& anchor, const Perturbation& pert,
                                    const Vec& x0, const Vec& xT, const PerturbOptions& popt = {},
                                    const StageOptions& opt = {}) {
    const IntegratorConfig cfg = plan_config(sys, opt);
    auto miss_of = [&](const PlanResult& p) {
        Trajectory tr = simulate_perturbed(sys, pert, x0, p.control, cfg);
        if (tr.blown_up) return Vec(Vec::Constant(xT.size(), std::numeric_limits<double>::infinity()));
        return Vec(xT - tr.back());
    };

    PerturbedPlan best;
    best.target = xT;
    best.plan = plan(sys, anchor, x0, xT, opt);
    if (pert.is_zero()) {
        best.residual = best.plan.endpoint_error;
        best.history.push_back(best.residual);
        best.converged = best.residual <= popt.tol;
        return best;
    }
    Vec miss = miss_of(best.plan);
    best.residual = miss.norm();
    best.history.push_back(best.residual);
    if (best.residual <= popt.tol) {
        best.converged = true;
        return best;
    }
    double alpha = popt.alpha;
    for (int round = 1; round <= popt.max_rounds; ++round) {
        Vec xi = best.target + alpha * miss;
        double r = std::numeric_limits<double>::infinity();
        PlanResult p;
        Vec m;
        try {
            p = plan(sys, anchor, x0, xi, opt);
            m = miss_of(p);
            r = m.norm();
        } catch (const Error&) {
        }
        best.history.push_back(r);
        if (r < best.residual) {
            best.plan = std::move(p);
            best.target = xi;
            best.residual = r;
            best.rounds = round;
            miss = m;
            if (r <= popt.tol) {
                best.converged = true;
                return best;
            }
        } else {
            alpha *= 0.5;
        }
    }
    return best;
}

}  // namespace tristeer
