#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tristeer/control.hpp"
#include "tristeer/errors.hpp"
#include "tristeer/ltv_steer.hpp"
#include "tristeer/ode.hpp"
#include "tristeer/regpoint.hpp"
#include "tristeer/smoother.hpp"
#include "tristeer/sysmodel.hpp"
#include "tristeer/tracker.hpp"

namespace tristeer {

struct StageOptions {
    IntegratorConfig cfg{Method::RK45, 1e-3, 1e-10, 1e-10, 0.0, 1e6};
    int sigma_probes = 32;
    double sigma_margin_ratio = 0.1;
    int max_sigma_exponent = 40;
    int sigma_retries = 4;
    int ltv_intervals = 64;
    double rho = 0.4;
    double min_eig = 1e-10;
    double delta_start = 0.1;
    int delta_halvings = 24;
    double delta1_start = 1e-2;
    int delta1_refinements = 6;
    double eps1_start = 1.0;
    double eps1_max = 16.0;
    int eps1_halvings = 40;
    int eps2_halvings = 30;
    double fd_step = 1e-6;
    int fixed_point_iterations = 20;
    int newton_iterations = 40;
    double shot_tol = 1e-8;
    int smoothing_halvings = 40;
    double endpoint_tol = 1e-5;  ///< a stage whose trajectory misses xi by more is retried
    double steps_per_window = 256;  ///< max RK45 step is the window length over this
    TrackerOptions tracker{};
};

namespace detail {

/// Step cap for stage simulations: a smooth-looking state can hide short trips
/// of x_{i+1} into a region where f_i is flat.
inline IntegratorConfig capped(const IntegratorConfig& cfg, double span, double per = 256.0) {
    IntegratorConfig c = cfg;
    double cap = span / per;
    c.max_step = c.max_step > 0.0 ? std::min(c.max_step, cap) : cap;
    return c;
}

}  // namespace detail

/// Context shared by every member of one stage: the stage subsystem formed by
/// the first p blocks, the anchor and the steering horizon [t1, T].
struct StageContext {
    StageContext(const TriangularSystem& sys, RegularChain a, int p_)
        : stage(sys.truncated(p_)), anchor(std::move(a)), p(p_), t1(anchor.t1), T(sys.T()) {}
    StageContext(const StageContext&) = delete;
    StageContext& operator=(const StageContext&) = delete;

    TriangularSystem stage;
    RegularChain anchor;
    int p;
    double t1;
    double T;

    ImplicitSolver solver() const {
        ImplicitSolver s;
        s.sys = &stage;
        s.anchor = &anchor;
        s.p = p;
        return s;
    }
    int k() const { return stage.n(); }
    int m() const { return stage.m(); }
    Vec y_star() const { return anchor.y_star(p); }
    const Vec& next_star() const { return anchor.x_star.at(static_cast<std::size_t>(p)); }
    const Vec& next_rate() const { return anchor.z_star.at(static_cast<std::size_t>(p)); }
};

struct ShotReport {
    Vec lambda_star;
    int iterations = 0;
    double jacobian_dist_to_identity = 0.0;
    double endpoint_error = 0.0;
    bool used_newton = false;
    std::vector<double> trace;
};

inline nlohmann::json to_json(const ShotReport& s) {
    return {{"lambda_star", std::vector<double>(s.lambda_star.data(), s.lambda_star.data() + s.lambda_star.size())},
            {"iterations", s.iterations},
            {"jacobian_dist_to_identity", s.jacobian_dist_to_identity},
            {"endpoint_error", s.endpoint_error},
            {"used_newton", s.used_newton}};
}

struct StageResult;

/// Family member plus the stage result that produced it (empty for p = 1).
struct FamilyInstance {
    StageFamily family;
    std::shared_ptr<const StageResult> parent;
};

struct StageResult {
    int p = 1;
    Vec xi;
    Vec beta;
    double t1 = 0.0;
    double junction = 0.0;  ///< t1 + sigma
    double T = 0.0;
    ToleranceProfile tol;
    ShotReport shot;
    TrackerResult tracker;
    SmoothingReport smoothing;
    FitReport fit;
    double gramian_min_eig = 0.0;
    std::vector<double> basis_endpoint_errors;
    double phi0_gap = 0.0;     ///< |Phi_hat(0) - y(t1 + sigma)|
    double target_gap = 0.0;   ///< |target - Phi_hat(0)|
    int sigma_attempts = 0;
    Control control;           ///< v_hat on [t1, T]
    Trajectory trajectory;     ///< stage state from y* at t1 under v_hat
    double endpoint_error = 0.0;
    std::shared_ptr<const StageResult> parent;
};

/// The quadratic family of the first stage.
inline StageFamily base_family(const RegularChain& anchor, double T, const Vec& xi) {
    const double t1 = anchor.t1, L = T - t1;
    const Vec x1 = anchor.x_star.front(), z1 = anchor.z_star.front();
    if (xi.size() != x1.size()) throw DimensionError("family parameter has wrong size");
    const Vec c = xi - x1 - L * z1;
    StageFamily f;
    f.xi = xi;
    f.y = [=](double t) -> Vec {
        double s = t - t1;
        return x1 + s * z1 + (s * s / (L * L)) * c;
    };
    f.xdot = [=](double t) -> Vec { return z1 + (2.0 * (t - t1) / (L * L)) * c; };
    f.xddot = [=](double) -> Vec { return (2.0 / (L * L)) * c; };
    return f;
}

/// Family of stage p+1 induced by a stage-p result: the stage trajectory with
/// the control appended, and the control's derivative as the new last-block rate.
inline StageFamily family_from_result(const std::shared_ptr<const StageResult>& r) {
    StageFamily f;
    f.xi = Vec(r->xi.size() + r->beta.size());
    f.xi << r->xi, r->beta;
    f.y = [r](double t) -> Vec {
        Vec x = r->trajectory.at(t), v = r->control.value(t);
        Vec out(x.size() + v.size());
        out << x, v;
        return out;
    };
    f.xdot = [r](double t) -> Vec { return r->control.derivative(t); };
    f.xddot = [r](double t) -> Vec { return r->control.second_derivative(t); };
    f.breaks = r->control.breakpoints();
    return f;
}

namespace detail {

inline double dist_to_identity(const Mat& J) {
    Mat D = J - Mat::Identity(J.rows(), J.cols());
    if (!D.allFinite()) return std::numeric_limits<double>::infinity();
    return Eigen::JacobiSVD<Mat>(D).singularValues()(0);
}

/// phi chained along increasing times from the anchor value; throws RegularityLost.
inline std::vector<Vec> phi_path(const StageContext& ctx, const StageFamily& fam, const std::vector<double>& times,
                                 double* min_margin = nullptr) {
    ImplicitSolver s = ctx.solver();
    std::vector<Vec> out;
    Vec warm = ctx.next_star();
    double mm = std::numeric_limits<double>::infinity();
    for (double t : times) {
        PhiResult r = phi_solve(s, t, fam.y(t), fam.xdot(t), warm);
        mm = std::min(mm, r.margin);
        warm = r.v;
        out.push_back(warm);
    }
    if (min_margin) *min_margin = mm;
    return out;
}

inline void check_family_start(const StageContext& ctx, const StageFamily& fam) {
    double tol = 1e-8;
    double gy = (fam.y(ctx.t1) - ctx.y_star()).norm();
    double gz = (fam.xdot(ctx.t1) - ctx.anchor.z_star.at(static_cast<std::size_t>(ctx.p - 1))).norm();
    if (gy > tol * (1.0 + ctx.y_star().norm()) || gz > tol * (1.0 + gz))
        throw AnchorUnusable("family does not start at the anchor (|dy| = " + std::to_string(gy) +
                             ", |dz| = " + std::to_string(gz) + ")");
}

}  // namespace detail

/**
 * Largest sigma = (T - t1) 2^-a such that phi continues along the family at the
 * probe times with rank margin above a fraction of the anchor's, and the weighted
 * Gramian on [t1, t1 + sigma] is nonsingular.
 */
inline double select_sigma(const StageContext& ctx, const StageFamily& fam, const StageOptions& opt = {},
                           int first_exponent = 1) {
    detail::check_family_start(ctx, fam);
    ImplicitSolver s = ctx.solver();
    for (int a = first_exponent; a <= opt.max_sigma_exponent; ++a) {
        double sigma = std::ldexp(ctx.T - ctx.t1, -a);
        try {
            double margin = 0.0;
            detail::phi_path(ctx, fam, uniform_grid(ctx.t1, ctx.t1 + sigma, opt.sigma_probes - 1), &margin);
            if (margin < opt.sigma_margin_ratio * ctx.anchor.rank_margins.at(static_cast<std::size_t>(ctx.p - 1)))
                continue;
            auto grid = uniform_grid(ctx.t1, ctx.t1 + sigma, opt.ltv_intervals);
            auto u = detail::phi_path(ctx, fam, grid);
            LtvSystem ltv;
            ltv.times = grid;
            for (std::size_t i = 0; i < grid.size(); ++i) {
                Vec y = fam.y(grid[i]);
                ltv.A.push_back(ctx.stage.jac_state(grid[i], y, u[i]));
                ltv.B.push_back(ctx.stage.jac_control(grid[i], y, u[i]));
            }
            Mat W = gramian(ltv, bump_weight(ctx.t1, ctx.t1 + sigma));
            if (Eigen::SelfAdjointEigenSolver<Mat>(W).eigenvalues().minCoeff() >= opt.min_eig) return sigma;
        } catch (const RegularityLost&) {
        }
    }
    throw AnchorUnusable("no steering window length works around the anchor");
}

/**
 * Endpoint map on the steering window [t1, t1 + sigma]: the stage system is
 * driven from y* by u_delta1 + sum_j lambda_j w_j.
 */
class Shooter {
public:
    Shooter(const StageContext& ctx, const StageFamily& fam, double sigma, double delta1, const StageOptions& opt)
        : ctx_(&ctx), opt_(opt), a_(ctx.t1), b_(ctx.t1 + sigma) {
        grid_ = uniform_grid(a_, b_, opt.ltv_intervals);
        uref_grid_ = detail::phi_path(ctx, fam, grid_);
        fam_ = fam;
        ltv_.times = grid_;
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            Vec y = fam.y(grid_[i]);
            ltv_.A.push_back(ctx.stage.jac_state(grid_[i], y, uref_grid_[i]));
            ltv_.B.push_back(ctx.stage.jac_control(grid_[i], y, uref_grid_[i]));
        }
        basis_ = basis(ltv_, bump_weight(a_, b_), opt.min_eig);
        refit(delta1);
    }

    void refit(double delta1) {
        delta1_ = delta1;
        u_delta1_ = smooth_family_segment([this](double t) { return u_ref(t); },
                                          [this](double t) { return du_ref(t); }, a_, b_, ctx_->next_star(),
                                          ctx_->next_rate(), delta1, &fit_, 64, fam_.breaks);
        // Common knots of u_delta1 and the basis.
        knots_ = u_delta1_.breakpoints();
        knots_.insert(knots_.end(), grid_.begin(), grid_.end());
        std::sort(knots_.begin(), knots_.end());
        knots_ = detail::thin_knots(std::move(knots_), 1e-13 * (b_ - a_));
        knots_.front() = a_;
        knots_.back() = b_;
        uv_.clear();
        ud_.clear();
        for (double t : knots_) {
            uv_.push_back(u_delta1_.value(t));
            ud_.push_back(u_delta1_.derivative(t));
        }
        wv_.assign(basis_.controls.size(), {});
        wd_.assign(basis_.controls.size(), {});
        for (std::size_t j = 0; j < basis_.controls.size(); ++j)
            for (double t : knots_) {
                wv_[j].push_back(basis_.controls[j].value(t));
                wd_[j].push_back(basis_.controls[j].derivative(t));
            }
        phi0_ = phi_hat(Vec::Zero(ctx_->k()));
    }

    /// phi(t, y(xi,t), xdot_p(xi,t)) warm-started from the nearest grid value.
    Vec u_ref(double t) const {
        std::size_t i = nearest(t);
        return phi(ctx_->solver(), t, fam_.y(t), fam_.xdot(t), uref_grid_[i]);
    }

    /// Time derivative of u_ref by implicit differentiation on the selected columns.
    Vec du_ref(double t) const {
        const TriangularSystem& st = ctx_->stage;
        const int blk = ctx_->p - 1;
        Vec y = fam_.y(t), u = u_ref(t);
        Vec ydot = st.rhs(t, y, u);
        ydot.tail(st.dim(blk)) = fam_.xdot(t);
        double e = 1e-6 * std::max(1.0, std::abs(t));
        Vec ft = (st.block_value(blk, t + e, y, u) - st.block_value(blk, t - e, y, u)) / (2.0 * e);
        Mat Jy = st.block_jac_x(blk, t, y, u);
        Mat Ju = st.block_jac_next(blk, t, y, u);
        Vec rhs = fam_.xddot(t) - ft - Jy * ydot;
        const auto& sel = ctx_->anchor.column_selections.at(static_cast<std::size_t>(blk));
        Mat sub(Ju.rows(), static_cast<int>(sel.size()));
        for (std::size_t c = 0; c < sel.size(); ++c) sub.col(static_cast<int>(c)) = Ju.col(sel[c]);
        Vec ds = sub.partialPivLu().solve(rhs);
        Vec du = Vec::Zero(u.size());
        for (std::size_t c = 0; c < sel.size(); ++c) du(sel[c]) = ds(static_cast<int>(c));
        return du;
    }

    /// u_delta1 + sum_j lambda_j w_j on the common knots.
    Control control(const Vec& lambda) const {
        std::vector<Vec> v = uv_, d = ud_;
        for (std::size_t j = 0; j < wv_.size(); ++j) {
            double c = lambda(static_cast<int>(j));
            if (c == 0.0) continue;
            for (std::size_t i = 0; i < knots_.size(); ++i) {
                v[i] += c * wv_[j][i];
                d[i] += c * wd_[j][i];
            }
        }
        return Control::hermite(knots_, std::move(v), std::move(d));
    }

    /// Stage state at t1 + sigma; non-finite entries if the run escaped.
    Vec phi_hat(const Vec& lambda) const {
        Trajectory tr = simulate(ctx_->stage, a_, b_, ctx_->y_star(), control(lambda), detail::capped(opt_.cfg, ctx_->T - ctx_->t1, opt_.steps_per_window));
        if (tr.blown_up) return Vec::Constant(ctx_->k(), std::numeric_limits<double>::quiet_NaN());
        return tr.back();
    }

    /// Forward-difference Jacobian of phi_hat at lambda (reuses f0 if given).
    Mat jacobian(const Vec& lambda, const Vec* f0 = nullptr) const {
        const int k = ctx_->k();
        Vec base = f0 ? *f0 : phi_hat(lambda);
        Mat J(k, k);
        for (int j = 0; j < k; ++j) {
            Vec l = lambda;
            double h = opt_.fd_step * std::max(1.0, std::abs(lambda(j)));
            l(j) += h;
            J.col(j) = (phi_hat(l) - base) / h;
        }
        return J;
    }

    const Vec& phi0() const { return phi0_; }
    double start() const { return a_; }
    double end() const { return b_; }
    double sigma() const { return b_ - a_; }
    double delta1() const { return delta1_; }
    const SteeringBasis& steering_basis() const { return basis_; }
    const Control& u_delta1() const { return u_delta1_; }
    const FitReport& fit() const { return fit_; }
    const StageContext& context() const { return *ctx_; }
    const StageOptions& options() const { return opt_; }

private:
    std::size_t nearest(double t) const {
        double r = (t - a_) / (b_ - a_) * (static_cast<double>(grid_.size()) - 1.0);
        return static_cast<std::size_t>(std::clamp<long>(std::lround(r), 0, static_cast<long>(grid_.size()) - 1));
    }

    const StageContext* ctx_;
    StageOptions opt_;
    double a_, b_;
    StageFamily fam_;
    std::vector<double> grid_;
    std::vector<Vec> uref_grid_;
    LtvSystem ltv_;
    SteeringBasis basis_;
    double delta1_ = 0.0;
    Control u_delta1_;
    FitReport fit_;
    std::vector<double> knots_;
    std::vector<Vec> uv_, ud_;
    std::vector<std::vector<Vec>> wv_, wd_;
    Vec phi0_;
};

inline Vec phi_hat(const Shooter& sh, const Vec& lambda) { return sh.phi_hat(lambda); }

/**
 * Solves phi_hat(lambda) = target: fixed-point steps lambda -= phi_hat(lambda) - target,
 * then damped Newton with a finite-difference Jacobian if 20 steps do not reach
 * the tolerance. Every iterate stays inside the ball |lambda| < eps1.
 */
inline ShotReport solve_lambda(const Shooter& sh, const Vec& target, double eps1) {
    const StageOptions& opt = sh.options();
    const int k = static_cast<int>(target.size());
    ShotReport rep;
    Vec lam = Vec::Zero(k);
    Vec e = sh.phi0() - target;
    double en = e.norm();
    rep.trace.push_back(en);
    int it = 0;
    Vec best_lam = lam;
    double best = en;
    for (; it < opt.fixed_point_iterations && en > opt.shot_tol; ++it) {
        Vec next = lam - e;
        if (!(next.norm() < eps1)) break;
        Vec en_vec = sh.phi_hat(next) - target;
        double nn = en_vec.allFinite() ? en_vec.norm() : std::numeric_limits<double>::infinity();
        rep.trace.push_back(nn);
        if (!std::isfinite(nn)) break;
        lam = std::move(next);
        e = std::move(en_vec);
        en = nn;
        if (en < best) {
            best = en;
            best_lam = lam;
        }
    }
    if (best > opt.shot_tol) {
        rep.used_newton = true;
        lam = best_lam;
        en = best;
        e = sh.phi_hat(lam) - target;
        for (int n = 0; n < opt.newton_iterations && en > opt.shot_tol; ++n, ++it) {
            Mat J = sh.jacobian(lam, nullptr);
            Vec step = -J.fullPivLu().solve(e);
            if (!step.allFinite()) break;
            double alpha = 1.0;
            bool improved = false;
            for (int ls = 0; ls < 30; ++ls) {
                Vec cand = lam + alpha * step;
                if (cand.norm() < eps1) {
                    Vec ec = sh.phi_hat(cand) - target;
                    if (ec.allFinite() && ec.norm() < en) {
                        lam = std::move(cand);
                        e = std::move(ec);
                        en = e.norm();
                        improved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            rep.trace.push_back(en);
            if (!improved) break;
        }
        best = en;
        best_lam = lam;
    }
    if (best > opt.shot_tol)
        throw ShootingFailed("lambda correction did not converge (residual " + std::to_string(best) + ")", rep.trace);
    rep.lambda_star = best_lam;
    rep.iterations = it;
    rep.endpoint_error = best;
    rep.jacobian_dist_to_identity = detail::dist_to_identity(sh.jacobian(best_lam, nullptr));
    return rep;
}

namespace detail {

/// Largest r (doubling from eps1_start up to eps1_max, or halving) with
/// |d phi_hat/d lambda - I| < rho at lambda in {0, +-r e_j}.
inline double calibrate_eps1(const Shooter& sh, const Mat& J0) {
    const StageOptions& opt = sh.options();
    const int k = static_cast<int>(J0.rows());
    double d0 = dist_to_identity(J0);
    if (!(d0 < opt.rho))
        throw ShootingFailed("shooting Jacobian at lambda = 0 is far from identity (" + std::to_string(d0) + ")", {});
    auto ok = [&](double r) {
        for (int j = 0; j < k; ++j)
            for (double sgn : {1.0, -1.0}) {
                Vec l = Vec::Zero(k);
                l(j) = sgn * r;
                if (!(dist_to_identity(sh.jacobian(l)) < opt.rho)) return false;
            }
        return true;
    };
    double r = opt.eps1_start;
    if (ok(r)) {
        while (2.0 * r <= opt.eps1_max && ok(2.0 * r)) r *= 2.0;
        return r;
    }
    for (int i = 0; i < opt.eps1_halvings; ++i) {
        r *= 0.5;
        if (ok(r)) return r;
    }
    throw ShootingFailed("no lambda ball keeps the shooting Jacobian near identity", {});
}

/// Largest eps2 <= eps1/2 such that probe targets phi_hat(0) +- (3/4) eps2 e_j are hit.
inline double calibrate_eps2(const Shooter& sh, double eps1) {
    const StageOptions& opt = sh.options();
    const int k = static_cast<int>(sh.phi0().size());
    double eps2 = 0.5 * eps1;
    for (int i = 0; i <= opt.eps2_halvings; ++i, eps2 *= 0.5) {
        bool good = true;
        for (int j = 0; j < k && good; ++j)
            for (double sgn : {1.0, -1.0}) {
                Vec target = sh.phi0();
                target(j) += sgn * 0.75 * eps2;
                try {
                    solve_lambda(sh, target, eps1);
                } catch (const ShootingFailed&) {
                    good = false;
                    break;
                }
            }
        if (good) return eps2;
    }
    throw ShootingFailed("no coverage radius verified around phi_hat(0)", {});
}

inline std::shared_ptr<const StageResult> stage_attempt(const StageContext& ctx, const FamilyInstance& fi,
                                                        const Vec& beta, double sigma, const StageOptions& opt) {
    const StageFamily& fam = fi.family;
    auto res = std::make_shared<StageResult>();
    res->p = ctx.p;
    res->xi = fam.xi;
    res->beta = beta;
    res->t1 = ctx.t1;
    res->T = ctx.T;
    res->parent = fi.parent;
    res->tol.xi_norm = fam.xi.norm();
    res->tol.sigma = sigma;

    const IntegratorConfig scfg = detail::capped(opt.cfg, ctx.T - ctx.t1, opt.steps_per_window);
    Shooter sh(ctx, fam, sigma, opt.delta1_start, opt);
    const double tL = sh.end();
    res->junction = tL;
    res->gramian_min_eig = sh.steering_basis().gramian_min_eig;
    res->basis_endpoint_errors = sh.steering_basis().endpoint_errors;

    // Refit the reference more tightly until phi_hat(0) sits in the eps2/4 ball
    // around the family value at the junction; eps1, eps2 follow each refit.
    Vec y_junction = fam.y(tL);
    double eps1 = 0.0, eps2 = 0.0;
    for (int i = 0;; ++i) {
        Mat J0 = sh.jacobian(Vec::Zero(ctx.k()), &sh.phi0());
        eps1 = calibrate_eps1(sh, J0);
        eps2 = calibrate_eps2(sh, eps1);
        if ((sh.phi0() - y_junction).norm() < 0.25 * eps2) break;
        if (i >= opt.delta1_refinements)
            throw ShootingFailed("smoothed reference does not reproduce the family at the junction", {});
        sh.refit(sh.delta1() / 8.0);
    }
    res->tol.eps1 = eps1;
    res->tol.eps2 = eps2;
    res->tol.delta1 = sh.delta1();
    res->fit = sh.fit();
    res->phi0_gap = (sh.phi0() - y_junction).norm();

    // Tracking tolerance: halve until the reference stays in the eps2/4 tube.
    ImplicitSolver solver = ctx.solver();
    TrackerOptions topt = opt.tracker;
    topt.cfg = opt.cfg;
    double rate = 0.0;
    for (double t : uniform_grid(tL, ctx.T, 512)) rate = std::max(rate, fam.xdot(t).norm());
    for (double t : fam.breaks)
        if (t >= tL && t <= ctx.T) rate = std::max(rate, fam.xdot(t).norm());
    double delta = opt.delta_start * std::max(1.0, rate);
    TrackerResult tr;
    for (int i = 0;; ++i) {
        tr = build_reference(solver, fam, tL, ctx.T, delta, topt);
        if (tr.max_deviation < 0.25 * eps2) break;
        if (i >= opt.delta_halvings) throw DefectUnsatisfiable("tracking tolerance calibration failed");
        delta *= 0.5;
    }
    res->tol.delta = delta;

    // Smoothing width: halve until the backward run under the smoothed control
    // lands in the coverage ball around phi_hat(0).
    SmoothingSpec spec;
    spec.left = {sh.u_delta1().value(tL), sh.u_delta1().derivative(tL)};
    spec.right = {beta, Vec::Zero(beta.size())};
    spec.l1_budget = std::numeric_limits<double>::infinity();
    // The gap shrinks with h, so bisect on the halving count: the widest
    // accepted h of the form (T - tL) / 2^k, k in [2, 30].
    Control v_smooth;
    Vec target;
    auto attempt = [&](int k, Control& out, Vec& start, SmoothingReport& srep) {
        spec.ramp_width = std::ldexp(ctx.T - tL, -k);
        out = smooth_control(tr.v, spec, &srep);
        Trajectory back = simulate(ctx.stage, ctx.T, tL, fam.xi, out, scfg);
        if (back.blown_up) return false;
        start = back.front();
        return (start - sh.phi0()).norm() <= 0.75 * eps2;
    };
    // Bisection assumes the narrowest width passes and checks it only when
    // nothing wider did.
    int lo = 1, hi = 2 + std::min(opt.smoothing_halvings, 28);
    bool found = false;
    while (hi - lo > 1) {
        int mid = (lo + hi) / 2;
        Control c;
        Vec start;
        SmoothingReport srep;
        if (attempt(mid, c, start, srep)) {
            hi = mid;
            found = true;
            v_smooth = std::move(c);
            target = start;
            res->smoothing = srep;
        } else {
            lo = mid;
        }
    }
    if (!found) {
        SmoothingReport srep;
        if (!attempt(hi, v_smooth, target, srep))
            throw ShootingFailed("no smoothing width keeps the target in the coverage ball", {});
        res->smoothing = srep;
    }
    res->smoothing.halvings = hi - 2;
    res->smoothing.l1_distance = l1_distance(v_smooth, tr.v, 1e-6 * (ctx.T - tL));
    res->tol.Delta1 = res->smoothing.l1_distance;
    res->target_gap = (target - sh.phi0()).norm();
    if (!(res->target_gap <= 0.75 * eps2)) throw ShootingFailed("target outside the coverage ball", {});

    ShotReport shot = solve_lambda(sh, target, eps1);
    if (!(shot.jacobian_dist_to_identity < 2.0 * opt.rho))
        throw ShootingFailed("shooting Jacobian left the 2 rho ball at lambda*", shot.trace);
    res->shot = shot;
    res->tracker = std::move(tr);
    res->control = Control::concat(sh.control(shot.lambda_star), v_smooth);

    res->trajectory = simulate(ctx.stage, ctx.t1, ctx.T, ctx.y_star(), res->control, scfg);
    if (res->trajectory.blown_up) throw ShootingFailed("stage trajectory escaped", shot.trace);
    res->endpoint_error = (res->trajectory.back() - fam.xi).norm();
    if (!(res->endpoint_error <= opt.endpoint_tol))
        throw ShootingFailed("stage trajectory misses xi by " + std::to_string(res->endpoint_error), shot.trace);
    return res;
}

}  // namespace detail

/**
 * v_hat for (xi, beta) at one stage: sigma, calibrated tolerances, tracker and
 * smoother on [t1 + sigma, T], lambda-corrected steering on [t1, t1 + sigma].
 * On failure the window is halved up to `sigma_retries` times.
 */
inline std::shared_ptr<const StageResult> stage_control(const StageContext& ctx, const FamilyInstance& fi,
                                                        const Vec& beta, const StageOptions& opt = {}) {
    if (fi.family.xi.size() != ctx.k()) throw DimensionError("family parameter has wrong size");
    if (beta.size() != ctx.m()) throw DimensionError("beta has wrong size");
    // A stage window stays inside the parent's steering window, where the
    // parent control is the smooth corrected reference.
    int first = 1;
    if (fi.parent)
        first = 1 + static_cast<int>(std::lround(std::log2((ctx.T - ctx.t1) / (fi.parent->junction - fi.parent->t1))));
    double sigma = select_sigma(ctx, fi.family, opt, first);
    std::string last;
    for (int attempt = 0; attempt <= opt.sigma_retries; ++attempt, sigma *= 0.5) {
        try {
            auto r = detail::stage_attempt(ctx, fi, beta, sigma, opt);
            std::const_pointer_cast<StageResult>(r)->sigma_attempts = attempt + 1;
            return r;
        } catch (const ShootingFailed& e) {
            last = e.what();
        } catch (const DefectUnsatisfiable& e) {
            last = e.what();
        } catch (const GramianSingular& e) {
            last = e.what();
        } catch (const RegularityLost& e) {
            last = e.what();
        } catch (const DomainError& e) {
            last = e.what();
        }
    }
    throw PlanError({"stage " + std::to_string(ctx.p), last});
}

/// Lazily materialized stage: xi -> family member, (xi, beta) -> v_hat.
struct StagePlan {
    std::shared_ptr<const StageContext> ctx;
    std::function<FamilyInstance(const Vec&)> family;
    StageOptions opt;

    std::shared_ptr<const StageResult> control(const Vec& xi, const Vec& beta) const {
        return stage_control(*ctx, family(xi), beta, opt);
    }
};

inline StagePlan base_stage(const TriangularSystem& sys, const RegularChain& anchor, const StageOptions& opt = {}) {
    StagePlan s;
    auto ctx = std::make_shared<const StageContext>(sys, anchor, 1);
    s.ctx = ctx;
    s.opt = opt;
    s.family = [ctx](const Vec& xi) { return FamilyInstance{base_family(ctx->anchor, ctx->T, xi), nullptr}; };
    return s;
}

inline StagePlan extend_stage(const StagePlan& prev, const TriangularSystem& sys) {
    if (prev.ctx->p >= sys.nu()) throw DimensionError("cannot extend past the last block");
    StagePlan s;
    s.ctx = std::make_shared<const StageContext>(sys, prev.ctx->anchor, prev.ctx->p + 1);
    s.opt = prev.opt;
    const int k = prev.ctx->k(), m = prev.ctx->m();
    s.family = [prev, k, m](const Vec& xi) {
        if (xi.size() != k + m) throw DimensionError("family parameter has wrong size");
        auto r = prev.control(xi.head(k), xi.tail(m));
        return FamilyInstance{family_from_result(r), r};
    };
    return s;
}

struct HalfPlan {
    Control control;
    std::vector<std::shared_ptr<const StageResult>> stages;
};

/// Stage induction on [t1, T] of `sys` towards `target`, the last beta set to u*.
inline HalfPlan plan_half(const TriangularSystem& sys, const RegularChain& anchor, const Vec& target,
                          const StageOptions& opt = {}) {
    if (target.size() != sys.n()) throw DimensionError("target state has wrong length");
    HalfPlan out;
    StagePlan st = base_stage(sys, anchor, opt);
    FamilyInstance fi = st.family(target.head(sys.dim(0)));
    for (int p = 1; p <= sys.nu(); ++p) {
        Vec beta = p < sys.nu() ? Vec(target.segment(sys.offset(p), sys.dim(p))) : anchor.u_star();
        auto r = stage_control(*st.ctx, fi, beta, opt);
        out.stages.push_back(r);
        if (p < sys.nu()) {
            st = extend_stage(st, sys);
            fi = FamilyInstance{family_from_result(r), r};
        }
    }
    out.control = out.stages.back()->control;
    return out;
}

/// The anchor seen from the time-reversed system on [t0, t1] (anchor time t0).
inline RegularChain reversed_anchor(const TriangularSystem& reversed, const RegularChain& anchor) {
    return make_chain(reversed, reversed.t0(), anchor.x_star);
}

/// Integrator settings for full-horizon simulations of a plan.
inline IntegratorConfig plan_config(const TriangularSystem& sys, const StageOptions& opt = {}) {
    return detail::capped(opt.cfg, sys.T() - sys.t0(), 2.0 * opt.steps_per_window);
}

struct PlanResult {
    Control control;
    RegularChain anchor;
    HalfPlan forward;
    HalfPlan backward;  ///< planned in reversed time
    Trajectory trajectory;
    double endpoint_error = 0.0;
};

/// Backward half on [t0, t1]: planned on the reversed system, returned in forward time.
inline HalfPlan plan_backward(const TriangularSystem& sys, const RegularChain& anchor, const Vec& x0,
                              const StageOptions& opt = {}) {
    TriangularSystem rev = sys.time_reversed(sys.t0(), anchor.t1);
    HalfPlan h = plan_half(rev, reversed_anchor(rev, anchor), x0, opt);
    h.control = h.control.reversed(sys.t0(), anchor.t1);
    return h;
}

inline PlanResult assemble(const TriangularSystem& sys, const RegularChain& anchor, const Vec& x0, HalfPlan backward,
                           HalfPlan forward, const StageOptions& opt) {
    PlanResult r;
    r.anchor = anchor;
    r.backward = std::move(backward);
    r.forward = std::move(forward);
    r.control = Control::concat(r.backward.control, r.forward.control);
    r.trajectory = simulate(sys, sys.t0(), sys.T(), x0, r.control, plan_config(sys, opt));
    return r;
}

/**
 * Control on [t0, T] steering x0 to xT: forward half towards xT on [t1, T], backward
 * half towards x0 on the reversed system, joined at t1 where both equal u*.
 */
inline PlanResult plan(const TriangularSystem& sys, const RegularChain& anchor, const Vec& x0, const Vec& xT,
                       const StageOptions& opt = {}) {
    if (x0.size() != sys.n() || xT.size() != sys.n()) throw DimensionError("state has wrong length");
    if (!(anchor.t1 > sys.t0() && anchor.t1 < sys.T())) throw DomainError("anchor time must lie inside (t0, T)");
    HalfPlan fwd, bwd;
    try {
        fwd = plan_half(sys, anchor, xT, opt);
    } catch (const PlanError& e) {
        std::vector<std::string> chain{"forward half"};
        chain.insert(chain.end(), e.chain().begin(), e.chain().end());
        throw PlanError(chain);
    } catch (const Error& e) {
        throw PlanError({"forward half", e.what()});
    }
    try {
        bwd = plan_backward(sys, anchor, x0, opt);
    } catch (const PlanError& e) {
        std::vector<std::string> chain{"backward half"};
        chain.insert(chain.end(), e.chain().begin(), e.chain().end());
        throw PlanError(chain);
    } catch (const Error& e) {
        throw PlanError({"backward half", e.what()});
    }
    PlanResult r = assemble(sys, anchor, x0, std::move(bwd), std::move(fwd), opt);
    r.endpoint_error = r.trajectory.blown_up ? std::numeric_limits<double>::infinity() : (r.trajectory.back() - xT).norm();
    return r;
}

}  // namespace tristeer
