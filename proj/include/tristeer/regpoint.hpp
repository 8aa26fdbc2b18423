#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tristeer/errors.hpp"
#include "tristeer/sysmodel.hpp"

namespace tristeer {

/**
 * Anchor point chain (t1, x*, u*, z*) at which every block Jacobian
 * d f_i / d x_{i+1} has full row rank. Block indices are zero-based:
 * x_star[i] is x_{i+1}^*, x_star[nu] is u*, z_star[nu] is z_{nu+1}^*.
 */
struct RegularChain {
    double t1 = 0.0;
    std::vector<Vec> x_star;
    std::vector<Vec> z_star;
    std::vector<std::vector<int>> column_selections;
    std::vector<double> rank_margins;

    int nu() const { return static_cast<int>(x_star.size()) - 1; }

    /// (x_1*, ..., x_p*) stacked.
    Vec y_star(int p) const { return stack(x_star, p); }
    /// (z_1*, ..., z_p*) stacked.
    Vec z_prefix(int p) const { return stack(z_star, p); }
    Vec state() const { return y_star(nu()); }
    const Vec& u_star() const { return x_star.back(); }

private:
    static Vec stack(const std::vector<Vec>& v, int p) {
        int n = 0;
        for (int i = 0; i < p; ++i) n += static_cast<int>(v[static_cast<std::size_t>(i)].size());
        Vec out(n);
        int off = 0;
        for (int i = 0; i < p; ++i) {
            const Vec& b = v[static_cast<std::size_t>(i)];
            out.segment(off, b.size()) = b;
            off += static_cast<int>(b.size());
        }
        return out;
    }
};

inline double smallest_singular_value(const Mat& M) {
    if (M.size() == 0) return 0.0;
    Eigen::JacobiSVD<Mat> svd(M);
    return svd.singularValues().minCoeff();
}

/// Column selection by QR with column pivoting; returns sorted indices and the
/// smallest singular value of the selected square submatrix.
inline std::pair<std::vector<int>, double> select_columns(const Mat& J) {
    const int rows = static_cast<int>(J.rows());
    if (!J.allFinite()) return {{}, 0.0};
    Eigen::ColPivHouseholderQR<Mat> qr(J);
    const auto& perm = qr.colsPermutation().indices();
    std::vector<int> sel(perm.data(), perm.data() + rows);
    std::sort(sel.begin(), sel.end());
    Mat sub(rows, rows);
    for (int c = 0; c < rows; ++c) sub.col(c) = J.col(sel[static_cast<std::size_t>(c)]);
    return {sel, smallest_singular_value(sub)};
}

/// Completes a chain from given x_1*..x_{nu+1}*: z*, selections and margins.
/// z_{nu+1}* is set to zero.
inline RegularChain make_chain(const TriangularSystem& sys, double t1, std::vector<Vec> x_star) {
    if (static_cast<int>(x_star.size()) != sys.nu() + 1) throw DimensionError("anchor needs nu+1 blocks");
    for (int i = 0; i <= sys.nu(); ++i)
        if (x_star[static_cast<std::size_t>(i)].size() != sys.dim(i)) throw DimensionError("anchor block has wrong size");
    RegularChain c;
    c.t1 = t1;
    c.x_star = std::move(x_star);
    for (int i = 0; i < sys.nu(); ++i) {
        Vec pre = c.y_star(i + 1);
        const Vec& nx = c.x_star[static_cast<std::size_t>(i + 1)];
        c.z_star.push_back(sys.block_value(i, t1, pre, nx));
        auto [sel, margin] = select_columns(sys.block_jac_next(i, t1, pre, nx));
        c.column_selections.push_back(std::move(sel));
        c.rank_margins.push_back(margin);
    }
    c.z_star.push_back(Vec::Zero(sys.m()));
    return c;
}

struct AnchorSearchOptions {
    int samples_per_radius = 64;
    double min_margin = 1e-6;
};

/**
 * Samples x_{i+1}^* block by block from Gaussian balls of radius 2^a, a = 0, 1, ...,
 * keeping the candidate with the largest rank margin (ties go to the smaller norm)
 * once a batch reaches `min_margin`.
 */
inline RegularChain find_regular_chain(const TriangularSystem& sys, double t1, const Vec& x1_star, std::uint64_t seed,
                                       int attempts = 24, const AnchorSearchOptions& opt = {}) {
    if (!(t1 > sys.t0() && t1 < sys.T())) throw DomainError("anchor time must lie strictly inside (t0, T)");
    if (x1_star.size() != sys.dim(0)) throw DimensionError("x1* has wrong size");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Vec> xs{x1_star};
    for (int i = 0; i < sys.nu(); ++i) {
        Vec pre(sys.prefix(i + 1));
        for (int j = 0, off = 0; j <= i; ++j) {
            pre.segment(off, sys.dim(j)) = xs[static_cast<std::size_t>(j)];
            off += sys.dim(j);
        }
        double best = -1.0, best_norm = std::numeric_limits<double>::infinity();
        Vec best_x;
        bool found = false;
        for (int a = 0; a < attempts && !found; ++a) {
            double radius = std::ldexp(1.0, a);
            for (int s = 0; s < opt.samples_per_radius; ++s) {
                Vec cand(sys.dim(i + 1));
                for (int j = 0; j < cand.size(); ++j) cand(j) = radius * gauss(rng);
                double margin = 0.0;
                try {
                    margin = select_columns(sys.block_jac_next(i, t1, pre, cand)).second;
                } catch (const Error&) {
                    margin = 0.0;
                }
                if (margin > best || (margin == best && cand.norm() < best_norm)) {
                    best = margin;
                    best_norm = cand.norm();
                    best_x = cand;
                }
            }
            found = best >= opt.min_margin;
        }
        if (!found)
            throw AnchorSearchFailed("no regular point for block " + std::to_string(i + 1) + " (best margin " +
                                         std::to_string(std::max(best, 0.0)) + ")",
                                     i + 1, std::max(best, 0.0));
        xs.push_back(best_x);
    }
    return make_chain(sys, t1, std::move(xs));
}

struct MatchOptions {
    int samples_per_radius = 64;
    int radii = 6;
    double min_margin = 0.1;   ///< candidates below this rank margin are ignored
    int newton_iters = 40;
};

/**
 * Anchor whose chain moves like a straight transfer from x0 to xT: x_1^* is the
 * midpoint of the first blocks, f_1 at the anchor equals (x_1^T - x_1^0)/(T - t0)
 * and every later block is at rest (f_i = 0). Each x_{i+1}^* comes from Gaussian
 * samples polished by Gauss-Newton; a block with no candidate above the margin
 * throws AnchorSearchFailed.
 */
inline RegularChain find_matched_chain(const TriangularSystem& sys, double t1, const Vec& x0, const Vec& xT,
                                       std::uint64_t seed, const MatchOptions& opt = {}) {
    if (!(t1 > sys.t0() && t1 < sys.T())) throw DomainError("anchor time must lie strictly inside (t0, T)");
    if (x0.size() != sys.n() || xT.size() != sys.n()) throw DimensionError("endpoint states have wrong size");
    const int d1 = sys.dim(0);
    std::vector<Vec> xs{0.5 * (x0.head(d1) + xT.head(d1))};
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < sys.nu(); ++i) {
        Vec pre(sys.prefix(i + 1));
        for (int j = 0, off = 0; j <= i; ++j) {
            pre.segment(off, sys.dim(j)) = xs[static_cast<std::size_t>(j)];
            off += sys.dim(j);
        }
        Vec want = i == 0 ? Vec((xT.head(d1) - x0.head(d1)) / (sys.T() - sys.t0())) : Vec(Vec::Zero(sys.dim(i)));
        auto miss = [&](const Vec& c) { return (sys.block_value(i, t1, pre, c) - want).norm(); };
        auto margin = [&](const Vec& c) {
            try {
                return select_columns(sys.block_jac_next(i, t1, pre, c)).second;
            } catch (const Error&) {
                return 0.0;
            }
        };
        // Gauss-Newton on f_i = want from a sample, keeping the margin.
        auto polish = [&](Vec c) {
            for (int it = 0; it < opt.newton_iters; ++it) {
                Vec r = sys.block_value(i, t1, pre, c) - want;
                if (!r.allFinite() || r.norm() < 1e-12) break;
                Mat J = sys.block_jac_next(i, t1, pre, c);
                Vec step = J.completeOrthogonalDecomposition().solve(r);
                if (!step.allFinite()) break;
                double s = 1.0;
                bool moved = false;
                for (int h = 0; h < 30; ++h, s *= 0.5) {
                    Vec trial = c - s * step;
                    if (miss(trial) < r.norm() && margin(trial) >= opt.min_margin) {
                        c = trial;
                        moved = true;
                        break;
                    }
                }
                if (!moved) break;
            }
            return c;
        };
        double best = std::numeric_limits<double>::infinity();
        Vec best_x;
        std::vector<Vec> cands{Vec::Zero(sys.dim(i + 1))};
        for (int a = 0; a < opt.radii; ++a)
            for (int k = 0; k < opt.samples_per_radius; ++k) {
                Vec c(sys.dim(i + 1));
                for (int j = 0; j < c.size(); ++j) c(j) = std::ldexp(1.0, a) * gauss(rng);
                cands.push_back(std::move(c));
            }
        // Sort by the raw miss so Gauss-Newton only runs on the closest few.
        std::vector<std::pair<double, Vec>> ranked;
        for (auto& c : cands)
            if (margin(c) >= opt.min_margin) {
                double m = miss(c);
                if (std::isfinite(m)) ranked.emplace_back(m, std::move(c));
            }
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
        if (ranked.size() > 16) ranked.resize(16);
        for (auto& [m, c] : ranked) {
            Vec q = polish(c);
            double mq = miss(q);
            if (mq < best - 1e-12 || (std::abs(mq - best) <= 1e-12 && q.norm() < best_x.norm())) {
                best = mq;
                best_x = q;
            }
        }
        if (best_x.size() == 0)
            throw AnchorSearchFailed("no regular point for block " + std::to_string(i + 1) + " above the margin floor",
                                     i + 1, 0.0);
        xs.push_back(best_x);
    }
    return make_chain(sys, t1, std::move(xs));
}

/// Local right-inverse of block p (one-based stage index): solves
/// f_p(t, y, v) = z_p for the selected coordinates of v, the rest pinned to x_{p+1}^*.
struct ImplicitSolver {
    const TriangularSystem* sys = nullptr;
    const RegularChain* anchor = nullptr;
    int p = 1;
    double newton_tol = 1e-10;
    int max_iter = 60;
    double trust_radius = 10.0;
    double min_singular = 1e-8;
};

struct PhiResult {
    Vec v;
    double residual = 0.0;
    double margin = 0.0;  ///< smallest singular value of the selected submatrix at the solution
    int iterations = 0;
};

inline PhiResult phi_solve(const ImplicitSolver& s, double t, const Vec& y, const Vec& z, const Vec& v_init) {
    if (!(s.newton_tol > 0.0)) throw DomainError("newton tolerance must be positive");
    const TriangularSystem& sys = *s.sys;
    const int blk = s.p - 1;
    const auto& sel = s.anchor->column_selections.at(static_cast<std::size_t>(blk));
    const Vec& pin = s.anchor->x_star.at(static_cast<std::size_t>(s.p));
    const int k = static_cast<int>(sel.size());
    auto lost = [&](const std::string& why) {
        return RegularityLost(why, t, std::vector<double>(y.data(), y.data() + y.size()),
                              std::vector<double>(z.data(), z.data() + z.size()));
    };
    Vec v = pin;
    for (int c : sel) v(c) = v_init(c);
    Vec r = sys.block_value(blk, t, y, v) - z;
    double rn = r.norm();
    PhiResult out;
    for (int it = 0; it <= s.max_iter; ++it) {
        Mat J = sys.block_jac_next(blk, t, y, v);
        Mat sub(J.rows(), k);
        for (int c = 0; c < k; ++c) sub.col(c) = J.col(sel[static_cast<std::size_t>(c)]);
        double margin = smallest_singular_value(sub);
        if (!(rn > s.newton_tol) && std::isfinite(rn)) {
            out.v = v;
            out.residual = rn;
            out.margin = margin;
            out.iterations = it;
            return out;
        }
        if (!(margin >= s.min_singular)) throw lost("selected Jacobian submatrix became singular");
        if (it == s.max_iter) break;
        Vec full = -sub.partialPivLu().solve(r);
        Vec step = full;
        if (step.norm() > s.trust_radius) step *= s.trust_radius / step.norm();
        double alpha = 1.0;
        bool improved = false;
        // The full step first, then the clipped step with halving.
        for (int ls = -1; ls < 30; ++ls) {
            if (ls == -1 && full.norm() <= s.trust_radius) continue;
            const Vec& dir = ls == -1 ? full : step;
            Vec cand = v;
            double a = ls == -1 ? 1.0 : alpha;
            for (int c = 0; c < k; ++c) cand(sel[static_cast<std::size_t>(c)]) += a * dir(c);
            Vec rc = sys.block_value(blk, t, y, cand) - z;
            double cn = rc.norm();
            if (std::isfinite(cn) && cn < rn) {
                v = std::move(cand);
                r = std::move(rc);
                rn = cn;
                improved = true;
                break;
            }
            if (ls >= 0) alpha *= 0.5;
        }
        if (!improved) throw lost("Newton stagnated");
    }
    throw lost("Newton did not converge");
}

/// phi(t, y, z_p) warm-started from v_init.
inline Vec phi(const ImplicitSolver& s, double t, const Vec& y, const Vec& z, const Vec& v_init) {
    return phi_solve(s, t, y, z, v_init).v;
}

}  // namespace tristeer
