#pragma once

#include <fnmatch.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tristeer/io.hpp"
#include "tristeer/ltv_steer.hpp"
#include "tristeer/perturb.hpp"
#include "tristeer/registry.hpp"
#include "tristeer/shooting.hpp"

namespace tristeer {

struct CaseResult {
    std::string id;
    int criterion = 0;
    std::string metric;
    double measured = 0.0;
    double threshold = 0.0;
    bool strict = false;  ///< pass needs measured < threshold rather than <=
    bool pass = false;
    double wall_time = 0.0;
    std::string note;
};

namespace bench {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline CaseResult metric(std::string metric_name, double measured, double threshold, bool strict = false,
                         std::string note = {}) {
    CaseResult r;
    r.metric = std::move(metric_name);
    r.measured = measured;
    r.threshold = threshold;
    r.strict = strict;
    r.pass = strict ? measured < threshold : measured <= threshold;
    r.note = std::move(note);
    return r;
}

/// max |a - b| over two equal-length vectors, infinity for NaN.
inline double max_diff(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        double d = std::abs(a(i) - b(i));
        if (std::isnan(d)) return std::numeric_limits<double>::infinity();
        m = std::max(m, d);
    }
    return m;
}

/// Largest coefficient difference between two controls (infinity if the shapes differ).
inline double control_diff(const Control& a, const Control& b) {
    if (a.kind() != b.kind() || a.breakpoints() != b.breakpoints() || a.values().size() != b.values().size() ||
        a.derivatives().size() != b.derivatives().size())
        return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (std::size_t i = 0; i < a.values().size(); ++i) m = std::max(m, max_diff(a.values()[i], b.values()[i]));
    for (std::size_t i = 0; i < a.derivatives().size(); ++i)
        m = std::max(m, max_diff(a.derivatives()[i], b.derivatives()[i]));
    return m;
}

struct GridRun {
    Vec x0, xT;
    std::optional<PlanResult> plan;
    std::string error;
    double seconds = 0.0;
};

struct StageRun {
    std::string system;
    Vec xi, beta;
    std::shared_ptr<const StageResult> result;
    std::string error;
};

/// The five grid corners and centre of [-2,2] x [-1,3].
inline std::vector<Vec> grid_points() {
    std::vector<Vec> pts;
    for (auto [a, b] : std::vector<std::pair<double, double>>{{-2, -1}, {-2, 3}, {0, 1}, {2, -1}, {2, 3}}) {
        Vec p(2);
        p << a, b;
        pts.push_back(p);
    }
    return pts;
}

/// Runs shared by several cases, computed once per suite.
class Suite {
public:
    explicit Suite(std::uint64_t seed = 7, StageOptions opt = {}) : seed_(seed), opt_(std::move(opt)) {}

    std::uint64_t seed() const { return seed_; }
    const StageOptions& options() const { return opt_; }
    double anchor_time() const { return 0.5; }

    /// example11 planned for all 25 ordered pairs of grid_points().
    const std::vector<GridRun>& grid() {
        if (grid_) return *grid_;
        grid_.emplace();
        const TriangularSystem sys = builtin_system("example11");
        for (const Vec& a : grid_points())
            for (const Vec& b : grid_points()) {
                GridRun g;
                g.x0 = a;
                g.xT = b;
                auto t0 = Clock::now();
                try {
                    RegularChain anchor = find_matched_chain(sys, anchor_time(), a, b, seed_);
                    g.plan = plan(sys, anchor, a, b, opt_);
                } catch (const Error& e) {
                    g.error = e.what();
                }
                g.seconds = seconds_since(t0);
                grid_->push_back(std::move(g));
            }
        return *grid_;
    }

    /// Last-stage controls of dblint and chain3 for 10 random (xi, beta) each.
    const std::vector<StageRun>& stage_runs() {
        if (stage_runs_) return *stage_runs_;
        stage_runs_.emplace();
        std::mt19937_64 rng(seed_);
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        for (const std::string name : {"dblint", "chain3"}) {
            const TriangularSystem sys = builtin_system(name);
            std::vector<Vec> xs;
            for (int d : sys.dims()) xs.push_back(Vec::Zero(d));
            RegularChain anchor = make_chain(sys, anchor_time(), xs);
            StagePlan st = base_stage(sys, anchor, opt_);
            for (int p = 2; p <= sys.nu(); ++p) st = extend_stage(st, sys);
            for (int i = 0; i < 10; ++i) {
                StageRun r;
                r.system = name;
                r.xi = Vec(sys.n());
                r.beta = Vec(sys.m());
                for (int j = 0; j < r.xi.size(); ++j) r.xi(j) = unit(rng);
                for (int j = 0; j < r.beta.size(); ++j) r.beta(j) = unit(rng);
                try {
                    r.result = st.control(r.xi, r.beta);
                } catch (const Error& e) {
                    r.error = e.what();
                }
                stage_runs_->push_back(std::move(r));
            }
        }
        return *stage_runs_;
    }

    /// Every stage result behind the grid plans and the stage runs, parents included.
    std::vector<const StageResult*> accepted_stages() {
        std::vector<const StageResult*> out;
        std::set<const StageResult*> seen;
        auto walk = [&](const StageResult* s) {
            for (; s && seen.insert(s).second; s = s->parent.get()) out.push_back(s);
        };
        for (const GridRun& g : grid())
            if (g.plan) {
                for (const auto& s : g.plan->forward.stages) walk(s.get());
                for (const auto& s : g.plan->backward.stages) walk(s.get());
            }
        for (const StageRun& r : stage_runs()) walk(r.result.get());
        return out;
    }

    /// Failures among the shared runs, reported by the cases that use them.
    int failed_runs() {
        int n = 0;
        for (const GridRun& g : grid()) n += !g.plan;
        for (const StageRun& r : stage_runs()) n += !r.result;
        return n;
    }

private:
    std::uint64_t seed_;
    StageOptions opt_;
    std::optional<std::vector<GridRun>> grid_;
    std::optional<std::vector<StageRun>> stage_runs_;
};

// Criterion 1: v1 = 6/T^2 - 12t/T^3 and v2 = -2/T + 6t/T^2 steer the double integrator
// from the origin to e1 and e2.
inline std::vector<CaseResult> explicit_controls(Suite&) {
    double worst = 0.0, slowest = 0.0;
    IntegratorConfig cfg;
    cfg.abs_tol = 1e-13;
    cfg.rel_tol = 1e-13;
    for (double T : {0.5, 1.0, 2.0}) {
        const TriangularSystem sys = builtin_system("dblint", 0.0, T);
        for (int j = 0; j < 2; ++j) {
            auto t0 = Clock::now();
            double a = j == 0 ? 6.0 / (T * T) : -2.0 / T;
            double slope = j == 0 ? -12.0 / (T * T * T) : 6.0 / (T * T);
            Control v = Control::hermite({0.0, T}, {Vec::Constant(1, a), Vec::Constant(1, a + slope * T)},
                                         {Vec::Constant(1, slope), Vec::Constant(1, slope)});
            Trajectory tr = simulate(sys, 0.0, T, Vec::Zero(2), v, cfg);
            Vec e = Vec::Zero(2);
            e(j) = 1.0;
            worst = std::max(worst, (tr.back() - e).norm());
            slowest = std::max(slowest, seconds_since(t0));
        }
    }
    return {metric("endpoint_error", worst, 1e-9), metric("seconds_per_run", slowest, 0.1, true)};
}

/// Random block-triangular LTV system: superdiagonal blocks [I 0] plus small smooth
/// terms, lower blocks smooth and bounded, input only into the last block.
inline LtvSystem random_ltv(std::mt19937_64& rng, int intervals = 64) {
    std::uniform_int_distribution<int> pick(1, 4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<int> dims;
    int k = pick(rng);
    // Partition k into nondecreasing blocks.
    while (k > 0) {
        int prev = dims.empty() ? 1 : dims.back();
        int m = std::min(k, prev + static_cast<int>(rng() % 2));
        if (k - m > 0 && k - m < m) m = k;
        dims.push_back(m);
        k -= m;
    }
    int total = 0;
    for (int d : dims) total += d;
    int m_in = dims.back() + static_cast<int>(rng() % 2);
    std::vector<int> off{0};
    for (int d : dims) off.push_back(off.back() + d);
    Mat A0 = Mat::Zero(total, total), A1 = Mat::Zero(total, total), B0 = Mat::Zero(total, m_in), B1 = Mat::Zero(total, m_in);
    for (std::size_t i = 0; i < dims.size(); ++i) {
        for (std::size_t j = 0; j <= i; ++j)
            for (int r = 0; r < dims[i]; ++r)
                for (int c = 0; c < dims[j]; ++c) {
                    A0(off[i] + r, off[j] + c) = 0.5 * u(rng);
                    A1(off[i] + r, off[j] + c) = 0.5 * u(rng);
                }
        int next = i + 1 < dims.size() ? dims[i + 1] : m_in;
        Mat& S0 = i + 1 < dims.size() ? A0 : B0;
        Mat& S1 = i + 1 < dims.size() ? A1 : B1;
        int col = i + 1 < dims.size() ? off[i + 1] : 0;
        for (int r = 0; r < dims[i]; ++r) {
            S0(off[i] + r, col + r) = 1.0;
            for (int c = 0; c < next; ++c) S1(off[i] + r, col + c) = 0.2 * u(rng);
        }
    }
    double w = 1.0 + 2.0 * std::abs(u(rng));
    LtvSystem ltv;
    ltv.times = uniform_grid(0.0, 1.0, intervals);
    for (double t : ltv.times) {
        ltv.A.push_back(A0 + std::sin(w * t) * A1);
        ltv.B.push_back(B0 + std::cos(w * t) * B1);
    }
    return ltv;
}

// Criterion 2.
inline std::vector<CaseResult> ltv_basis(Suite& s) {
    std::mt19937_64 rng(s.seed());
    double worst = 0.0, flat = 0.0, min_eig = std::numeric_limits<double>::infinity();
    auto t0 = Clock::now();
    IntegratorConfig cfg;
    cfg.abs_tol = 1e-12;
    cfg.rel_tol = 1e-12;
    for (int n = 0; n < 20; ++n) {
        LtvSystem ltv = random_ltv(rng);
        SteeringBasis b = basis(ltv, bump_weight(0.0, 1.0), 1e-8);
        min_eig = std::min(min_eig, b.gramian_min_eig);
        const int k = ltv.states();
        for (int j = 0; j < k; ++j) {
            const Control& w = b.controls[static_cast<std::size_t>(j)];
            // Independent check: adaptive RK45 on the same sampled model.
            Trajectory tr = simulate_rhs(
                [&ltv](double t, const Vec& z, const Vec& v) {
                    auto [A, B] = ltv.at(t);
                    return Vec(A * z + B * v);
                },
                0.0, 1.0, Vec::Zero(k), w, cfg);
            Vec e = Vec::Zero(k);
            e(j) = 1.0;
            worst = std::max(worst, (tr.back() - e).norm());
            for (double t : {0.0, 1.0})
                flat = std::max({flat, w.value(t).lpNorm<Eigen::Infinity>(), w.derivative(t).lpNorm<Eigen::Infinity>()});
        }
    }
    double dt = seconds_since(t0);
    std::ostringstream note;
    note << "smallest Gramian eigenvalue " << min_eig;
    return {metric("endpoint_error", worst, 1e-6, false, note.str()), metric("boundary_flatness", flat, 0.0),
            metric("seconds_total", dt, 1.0, true)};
}

// Criterion 3.
inline std::vector<CaseResult> phi_residual(Suite& s) {
    double worst = 0.0;
    for (const StageResult* r : s.accepted_stages()) worst = std::max(worst, r->tracker.max_phi_residual);
    return {metric("max_phi_residual", worst, 1e-8, false, std::to_string(s.failed_runs()) + " failed runs")};
}

// Criterion 4.
inline std::vector<CaseResult> example11_grid(Suite& s) {
    double worst = 0.0, slowest = 0.0;
    int missed_region = 0, failed = 0;
    for (const GridRun& g : s.grid()) {
        slowest = std::max(slowest, g.seconds);
        if (!g.plan) {
            ++failed;
            worst = std::numeric_limits<double>::infinity();
            continue;
        }
        worst = std::max(worst, g.plan->endpoint_error);
        if (g.x0(0) != g.xT(0)) {
            double top = -std::numeric_limits<double>::infinity();
            for (const Vec& x : g.plan->trajectory.states) top = std::max(top, x(1));
            missed_region += !(top > 2.0);
        }
    }
    return {metric("endpoint_error", worst, 1e-4, false, std::to_string(failed) + " of 25 pairs failed"),
            metric("pairs_missing_x2_gt_2", missed_region, 0.0), metric("seconds_per_pair", slowest, 1.0)};
}

// Criterion 5: direction 1e-3 (1,1)/sqrt(2), target offsets 2^-a direction.
inline std::vector<CaseResult> example11_continuity(Suite& s) {
    const TriangularSystem sys = builtin_system("example11");
    const double pairs[5][4] = {{0, 0, 1, 2.5}, {-1, 0, 1, 1}, {0, 1, -1, 2}, {1, -1, -1, 0}, {-2, 2, 2, 2}};
    Vec dir(2);
    dir << 1.0, 1.0;
    dir *= 1e-3 / std::sqrt(2.0);
    double ratio = 0.0, last = 0.0;
    std::string note;
    for (const auto& p : pairs) {
        Vec x0(2), xT(2);
        x0 << p[0], p[1];
        xT << p[2], p[3];
        try {
            RegularChain anchor = find_matched_chain(sys, s.anchor_time(), x0, xT, s.seed());
            PlanResult base = plan(sys, anchor, x0, xT, s.options());
            double prev = std::numeric_limits<double>::infinity();
            for (int a = 1; a <= 4; ++a) {
                PlanResult r = plan(sys, anchor, x0, Vec(xT + std::ldexp(1.0, -a) * dir), s.options());
                double d = sup_distance(r.control, base.control);
                if (a > 1) ratio = std::max(ratio, d / prev);
                prev = d;
            }
            last = std::max(last, prev);
        } catch (const Error& e) {
            ratio = last = std::numeric_limits<double>::infinity();
            note = e.what();
        }
    }
    return {metric("max_ratio_next_over_prev", ratio, 2.0, false, note), metric("sup_distance_at_a4", last, 1e-2, true)};
}

// Criterion 6.
inline std::vector<CaseResult> stage_invariants(Suite& s, const std::string& system) {
    double pin = 0.0, endpoint = 0.0;
    int failed = 0;
    const TriangularSystem sys = builtin_system(system);
    std::vector<Vec> xs;
    for (int d : sys.dims()) xs.push_back(Vec::Zero(d));
    const RegularChain chain = make_chain(sys, s.anchor_time(), xs);
    for (const StageRun& run : s.stage_runs()) {
        if (run.system != system) continue;
        if (!run.result) {
            ++failed;
            pin = endpoint = std::numeric_limits<double>::infinity();
            continue;
        }
        for (const StageResult* r = run.result.get(); r; r = r->parent.get()) {
            const std::size_t p = static_cast<std::size_t>(r->p);
            pin = std::max(pin, max_diff(r->control.value(r->T), r->beta));
            pin = std::max(pin, max_diff(r->control.value(r->t1), chain.x_star.at(p)));
            pin = std::max(pin, max_diff(r->control.derivative(r->t1), chain.z_star.at(p)));
            endpoint = std::max(endpoint, r->endpoint_error);
        }
    }
    std::string note = std::to_string(failed) + " of 10 runs failed";
    return {metric("pin_mismatch", pin, 0.0, false, note), metric("endpoint_error", endpoint, 1e-6)};
}

// Criterion 7.
inline std::vector<CaseResult> shot_jacobian(Suite& s) {
    double worst = 0.0;
    for (const StageResult* r : s.accepted_stages()) worst = std::max(worst, r->shot.jacobian_dist_to_identity);
    return {metric("max_jacobian_dist_to_identity", worst, 0.8, true)};
}

// Criterion 8.
inline std::vector<CaseResult> example11_perturbed(Suite& s) {
    const TriangularSystem sys = builtin_system("example11");
    Vec x0 = Vec::Zero(2), xT(2);
    xT << 1.0, 2.5;
    RegularChain anchor = find_matched_chain(sys, s.anchor_time(), x0, xT, s.seed());
    PerturbOptions popt;
    popt.max_rounds = 25;
    double residual = std::numeric_limits<double>::infinity(), diff = std::numeric_limits<double>::infinity();
    std::string note;
    try {
        PerturbedPlan pp = plan_perturbed(sys, anchor, builtin_perturbation("sin01", sys), x0, xT, popt, s.options());
        residual = pp.residual;
        note = std::to_string(pp.rounds) + " rounds";
        PlanResult nominal = plan(sys, anchor, x0, xT, s.options());
        PerturbedPlan zero = plan_perturbed(sys, anchor, builtin_perturbation("zero", sys), x0, xT, popt, s.options());
        diff = control_diff(nominal.control, zero.plan.control);
    } catch (const Error& e) {
        note = e.what();
    }
    return {metric("perturbed_residual", residual, 1e-3, false, note), metric("zero_h_control_difference", diff, 0.0)};
}

// Criterion 9.
inline std::vector<CaseResult> tracker_defect(Suite& s) {
    double defect = 0.0, bound = 0.0;
    for (const StageResult* r : s.accepted_stages()) {
        defect = std::max(defect, r->tracker.max_defect / r->tracker.delta);
        bound = std::max(bound, r->tracker.v.sup_norm() / r->tracker.M);
    }
    return {metric("max_defect_over_delta", defect, 1.0, true), metric("max_sup_v_over_M", bound, 1.0)};
}

/// Minimizes |phi_hat(lambda) - target| on an 11 x 11 grid over the eps1 box, then on
/// grids around the best point, each 5 times finer, down to spacing 1e-7.
inline Vec lambda_grid_search(const Shooter& sh, const Vec& target, double eps1) {
    const int k = static_cast<int>(target.size());
    Vec centre = Vec::Zero(k);
    double half = eps1;
    const int n = 11;
    while (true) {
        double step = 2.0 * half / (n - 1);
        Vec best = centre;
        double best_val = std::numeric_limits<double>::infinity();
        std::vector<int> idx(static_cast<std::size_t>(k), 0);
        for (;;) {
            Vec l(k);
            for (int j = 0; j < k; ++j) l(j) = centre(j) - half + step * idx[static_cast<std::size_t>(j)];
            if (l.norm() < eps1) {
                Vec r = sh.phi_hat(l) - target;
                double v = r.allFinite() ? r.norm() : std::numeric_limits<double>::infinity();
                if (v < best_val) {
                    best_val = v;
                    best = l;
                }
            }
            int j = 0;
            while (j < k && ++idx[static_cast<std::size_t>(j)] == n) idx[static_cast<std::size_t>(j++)] = 0;
            if (j == k) break;
        }
        centre = best;
        if (step < 1e-7) return centre;
        half = 2.0 * step;
    }
}

// Criterion 10: last forward stage of example11 (0,0) -> (1,2.5), 5 probe targets.
inline std::vector<CaseResult> example11_lambda_grid(Suite& s) {
    const TriangularSystem sys = builtin_system("example11");
    Vec x0 = Vec::Zero(2), xT(2);
    xT << 1.0, 2.5;
    RegularChain anchor = find_matched_chain(sys, s.anchor_time(), x0, xT, s.seed());
    PlanResult pr = plan(sys, anchor, x0, xT, s.options());
    const auto& r = pr.forward.stages.back();
    StageContext ctx(sys, anchor, r->p);
    StageFamily fam = r->parent ? family_from_result(r->parent) : base_family(anchor, sys.T(), xT.head(sys.dim(0)));
    Shooter sh(ctx, fam, r->tol.sigma, r->tol.delta1, s.options());
    std::mt19937_64 rng(s.seed());
    std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
    double worst = 0.0;
    for (int i = 0; i < 5; ++i) {
        Vec dir(ctx.k());
        for (int j = 0; j < dir.size(); ++j) dir(j) = std::cos(angle(rng) + j);
        dir.normalize();
        Vec target = sh.phi0() + 0.5 * r->tol.eps2 * dir;
        ShotReport shot = solve_lambda(sh, target, r->tol.eps1);
        Vec oracle = lambda_grid_search(sh, target, r->tol.eps1);
        worst = std::max(worst, (shot.lambda_star - oracle).norm());
    }
    return {metric("lambda_distance_to_grid_minimum", worst, 1e-4)};
}

struct Case {
    std::string id;
    int criterion;
    std::function<std::vector<CaseResult>(Suite&)> run;
};

inline std::vector<Case> cases() {
    return {
        {"dblint-explicit", 1, explicit_controls},
        {"ltv-basis", 2, ltv_basis},
        {"all-phi-residual", 3, phi_residual},
        {"example11-grid", 4, example11_grid},
        {"example11-continuity", 5, example11_continuity},
        {"dblint-stage-invariants", 6, [](Suite& s) { return stage_invariants(s, "dblint"); }},
        {"chain3-stage-invariants", 6, [](Suite& s) { return stage_invariants(s, "chain3"); }},
        {"all-shot-jacobian", 7, shot_jacobian},
        {"example11-perturbed", 8, example11_perturbed},
        {"all-tracker-defect", 9, tracker_defect},
        {"example11-lambda-grid", 10, example11_lambda_grid},
    };
}

}  // namespace bench

/// Runs every registered case whose id matches the glob `filter` (all when empty).
/// Failures are results; an exception inside a case becomes a failed result.
inline std::vector<CaseResult> run_suite(const std::string& filter = "", std::uint64_t seed = 7,
                                         const std::function<void(const CaseResult&)>& on_result = {}) {
    bench::Suite suite(seed);
    std::vector<CaseResult> out;
    for (const auto& c : bench::cases()) {
        if (!filter.empty() && fnmatch(filter.c_str(), c.id.c_str(), 0) != 0) continue;
        auto t0 = bench::Clock::now();
        std::vector<CaseResult> rs;
        try {
            rs = c.run(suite);
        } catch (const std::exception& e) {
            rs = {bench::metric("exception", std::numeric_limits<double>::infinity(), 0.0, false, e.what())};
        }
        double dt = bench::seconds_since(t0);
        for (auto& r : rs) {
            r.id = c.id;
            r.criterion = c.criterion;
            r.wall_time = dt;
            if (on_result) on_result(r);
            out.push_back(std::move(r));
        }
    }
    return out;
}

inline std::string report_markdown(const std::vector<CaseResult>& rs) {
    std::ostringstream os;
    int passed = 0;
    for (const auto& r : rs) passed += r.pass;
    os << "# Acceptance report\n\n" << passed << " of " << rs.size() << " metrics pass.\n\n";
    os << "| case | criterion | metric | measured | threshold | pass | wall time (s) | note |\n";
    os << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : rs)
        os << "| " << r.id << " | " << r.criterion << " | " << r.metric << " | " << r.measured << " | "
           << (r.strict ? "< " : "<= ") << r.threshold << " | " << (r.pass ? "yes" : "NO") << " | " << r.wall_time
           << " | " << r.note << " |\n";
    return os.str();
}

inline std::string report_csv(const std::vector<CaseResult>& rs) {
    std::ostringstream os;
    os << "id,criterion,metric,measured,threshold,strict,pass,wall_time\n";
    for (const auto& r : rs)
        os << r.id << ',' << r.criterion << ',' << r.metric << ',' << fmt17(r.measured) << ',' << fmt17(r.threshold)
           << ',' << r.strict << ',' << r.pass << ',' << fmt17(r.wall_time) << "\n";
    return os.str();
}

}  // namespace tristeer
