#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tristeer/control.hpp"
#include "tristeer/errors.hpp"

namespace tristeer {

/// Block i of a cascade: (t, x_1..x_i stacked, x_{i+1}) -> R^{m_i}.
using BlockFn = std::function<Vec(double, const Vec&, const Vec&)>;
/// Jacobian callback with the same arguments as BlockFn.
using BlockJac = std::function<Mat(double, const Vec&, const Vec&)>;

struct Block {
    BlockFn f;
    BlockJac jac_x;     ///< m_i x (m_1+..+m_i); finite differences when empty
    BlockJac jac_next;  ///< m_i x m_{i+1}; finite differences when empty
};

/// Central-difference step used when a block has no analytic Jacobian.
inline double fd_step(double x) { return 1e-6 * std::max(1.0, std::abs(x)); }

/**
 * Cascade system  x_i' = f_i(t, x_1, ..., x_{i+1}),  i = 1..nu,  x_{nu+1} = u.
 *
 * `dims` holds m_1..m_{nu+1}. Block indices in the API are zero-based.
 * The dimension chain m_i <= m_{i+1} is not enforced here; validate_system reports it.
 */
class TriangularSystem {
public:
    TriangularSystem() = default;

    TriangularSystem(std::string name, std::vector<int> dims, std::vector<Block> blocks, double t0, double T)
        : name_(std::move(name)), dims_(std::move(dims)), blocks_(std::move(blocks)), t0_(t0), T_(T) {
        if (dims_.size() < 2) throw DimensionError("a triangular system needs at least one block and a control");
        if (blocks_.size() + 1 != dims_.size())
            throw DimensionError("expected " + std::to_string(dims_.size() - 1) + " blocks, got " +
                                 std::to_string(blocks_.size()));
        for (int m : dims_)
            if (m <= 0) throw DimensionError("block dimensions must be positive");
        if (!(t0_ < T_)) throw DimensionError("time window needs t0 < T");
        offsets_.assign(dims_.size(), 0);
        for (std::size_t i = 1; i < dims_.size(); ++i) offsets_[i] = offsets_[i - 1] + dims_[i - 1];
    }

    const std::string& name() const noexcept { return name_; }
    int nu() const noexcept { return static_cast<int>(blocks_.size()); }
    const std::vector<int>& dims() const noexcept { return dims_; }
    /// m_{i+1} in one-based terms: the dimension of block i (zero-based).
    int dim(int i) const { return dims_.at(static_cast<std::size_t>(i)); }
    /// Offset of block i in the stacked state.
    int offset(int i) const { return offsets_.at(static_cast<std::size_t>(i)); }
    /// m_1 + ... + m_p.
    int prefix(int p) const { return offsets_.at(static_cast<std::size_t>(p)); }
    int n() const { return prefix(nu()); }
    int m() const { return dims_.back(); }
    double t0() const noexcept { return t0_; }
    double T() const noexcept { return T_; }
    const Block& block(int i) const { return blocks_.at(static_cast<std::size_t>(i)); }

    /// f_i evaluated on the stacked prefix x_1..x_i and the next block.
    Vec block_value(int i, double t, const Vec& x_prefix, const Vec& next) const {
        if (x_prefix.size() != prefix(i + 1) || next.size() != dim(i + 1))
            throw DimensionError("block " + std::to_string(i + 1) + " called with wrong argument sizes");
        Vec out = blocks_[i].f(t, x_prefix, next);
        if (out.size() != dim(i))
            throw DimensionError("block " + std::to_string(i + 1) + " returned length " + std::to_string(out.size()) +
                                 ", expected " + std::to_string(dim(i)));
        return out;
    }

    Mat block_jac_next(int i, double t, const Vec& x_prefix, const Vec& next) const {
        const Block& b = blocks_.at(static_cast<std::size_t>(i));
        if (b.jac_next) return b.jac_next(t, x_prefix, next);
        Mat J(dim(i), next.size());
        Vec nx = next;
        for (int j = 0; j < next.size(); ++j) {
            double h = fd_step(next(j));
            nx(j) = next(j) + h;
            Vec fp = block_value(i, t, x_prefix, nx);
            nx(j) = next(j) - h;
            Vec fm = block_value(i, t, x_prefix, nx);
            nx(j) = next(j);
            J.col(j) = (fp - fm) / (2.0 * h);
        }
        return J;
    }

    Mat block_jac_x(int i, double t, const Vec& x_prefix, const Vec& next) const {
        const Block& b = blocks_.at(static_cast<std::size_t>(i));
        if (b.jac_x) return b.jac_x(t, x_prefix, next);
        Mat J(dim(i), x_prefix.size());
        Vec xx = x_prefix;
        for (int j = 0; j < x_prefix.size(); ++j) {
            double h = fd_step(x_prefix(j));
            xx(j) = x_prefix(j) + h;
            Vec fp = block_value(i, t, xx, next);
            xx(j) = x_prefix(j) - h;
            Vec fm = block_value(i, t, xx, next);
            xx(j) = x_prefix(j);
            J.col(j) = (fp - fm) / (2.0 * h);
        }
        return J;
    }

    /// Stacked block outputs (f_1, ..., f_nu).
    Vec rhs(double t, const Vec& x, const Vec& u) const {
        if (x.size() != n() || u.size() != m())
            throw DimensionError("state/control size mismatch: got (" + std::to_string(x.size()) + ", " +
                                 std::to_string(u.size()) + "), expected (" + std::to_string(n()) + ", " +
                                 std::to_string(m()) + ")");
        Vec out(n());
        for (int i = 0; i < nu(); ++i) {
            const int k = prefix(i + 1);
            Vec next = (i + 1 < nu()) ? Vec(x.segment(k, dim(i + 1))) : u;
            out.segment(offset(i), dim(i)) = block_value(i, t, x.head(k), next);
        }
        return out;
    }

    /// d rhs / dx (n x n), block lower-Hessenberg.
    Mat jac_state(double t, const Vec& x, const Vec& u) const {
        Mat J = Mat::Zero(n(), n());
        for (int i = 0; i < nu(); ++i) {
            const int k = prefix(i + 1);
            Vec next = (i + 1 < nu()) ? Vec(x.segment(k, dim(i + 1))) : u;
            J.block(offset(i), 0, dim(i), k) = block_jac_x(i, t, x.head(k), next);
            if (i + 1 < nu()) J.block(offset(i), k, dim(i), dim(i + 1)) = block_jac_next(i, t, x.head(k), next);
        }
        return J;
    }

    /// d rhs / du (n x m); only the last block row is non-zero.
    Mat jac_control(double t, const Vec& x, const Vec& u) const {
        Mat J = Mat::Zero(n(), m());
        const int last = nu() - 1;
        J.block(offset(last), 0, dim(last), m()) = block_jac_next(last, t, x, u);
        return J;
    }

    /// The stage subsystem formed by the first p blocks; x_{p+1} becomes its control.
    TriangularSystem truncated(int p) const {
        if (p < 1 || p > nu()) throw DimensionError("stage index out of range");
        std::vector<int> d(dims_.begin(), dims_.begin() + p + 1);
        std::vector<Block> b(blocks_.begin(), blocks_.begin() + p);
        return TriangularSystem(name_ + "[1.." + std::to_string(p) + "]", std::move(d), std::move(b), t0_, T_);
    }

    /// The system s -> -f(a + b - s, x, u) on [a, b]; trajectories of it run the
    /// original dynamics backwards in time.
    TriangularSystem time_reversed(double a, double b) const {
        std::vector<Block> rb;
        for (const Block& blk : blocks_) {
            Block r;
            BlockFn f = blk.f;
            r.f = [f, a, b](double s, const Vec& x, const Vec& nx) -> Vec { return -f(a + b - s, x, nx); };
            if (blk.jac_x) {
                BlockJac jx = blk.jac_x;
                r.jac_x = [jx, a, b](double s, const Vec& x, const Vec& nx) -> Mat { return -jx(a + b - s, x, nx); };
            }
            if (blk.jac_next) {
                BlockJac jn = blk.jac_next;
                r.jac_next = [jn, a, b](double s, const Vec& x, const Vec& nx) -> Mat { return -jn(a + b - s, x, nx); };
            }
            rb.push_back(std::move(r));
        }
        return TriangularSystem(name_ + "~reversed", dims_, std::move(rb), a, b);
    }

    /// Copy with a different time window.
    TriangularSystem with_window(double t0, double T) const {
        return TriangularSystem(name_, dims_, blocks_, t0, T);
    }

private:
    std::string name_;
    std::vector<int> dims_;
    std::vector<Block> blocks_;
    std::vector<int> offsets_;
    double t0_ = 0.0;
    double T_ = 1.0;
};

/// A state together with its block partition m_1..m_nu.
class StateVector {
public:
    StateVector(Vec data, std::vector<int> dims) : data_(std::move(data)), dims_(std::move(dims)) {
        int total = 0;
        for (int m : dims_) total += m;
        if (total != data_.size()) throw DimensionError("state length does not match partition");
    }

    static StateVector concat(const std::vector<Vec>& blocks) {
        std::vector<int> d;
        int total = 0;
        for (const auto& b : blocks) {
            d.push_back(static_cast<int>(b.size()));
            total += static_cast<int>(b.size());
        }
        Vec v(total);
        int off = 0;
        for (const auto& b : blocks) {
            v.segment(off, b.size()) = b;
            off += static_cast<int>(b.size());
        }
        return StateVector(std::move(v), std::move(d));
    }

    const Vec& data() const noexcept { return data_; }
    const std::vector<int>& dims() const noexcept { return dims_; }
    int block_count() const noexcept { return static_cast<int>(dims_.size()); }

    Vec block(int i) const {
        int off = 0;
        for (int j = 0; j < i; ++j) off += dims_.at(static_cast<std::size_t>(j));
        return data_.segment(off, dims_.at(static_cast<std::size_t>(i)));
    }

    std::vector<Vec> split() const {
        std::vector<Vec> out;
        for (int i = 0; i < block_count(); ++i) out.push_back(block(i));
        return out;
    }

private:
    Vec data_;
    std::vector<int> dims_;
};

/// Dense state path with cubic Hermite interpolation between samples. Rates are
/// stored per interval (left and right end) so jumps of a piecewise-constant control
/// at a sample do not leak into the neighbouring interval.
struct Trajectory {
    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<Vec> rate_lo;  ///< x' at the left end of interval i
    std::vector<Vec> rate_hi;  ///< x' at the right end of interval i
    bool blown_up = false;
    std::optional<double> blow_up_time;

    double start() const { return times.front(); }
    double end() const { return times.back(); }
    const Vec& front() const { return states.front(); }
    const Vec& back() const { return states.back(); }
    std::size_t size() const { return times.size(); }

    Vec at(double t) const {
        if (times.size() == 1) return states.front();
        double tol = 1e-12 * (1.0 + std::abs(times.front()) + std::abs(times.back()));
        if (t < times.front() - tol || t > times.back() + tol) throw DomainError("trajectory queried outside its span");
        auto it = std::upper_bound(times.begin(), times.end(), t);
        std::size_t i = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>((it - times.begin()) - 1, 0,
                                                                            static_cast<std::ptrdiff_t>(times.size()) - 2));
        double h = times[i + 1] - times[i];
        double s = std::clamp((t - times[i]) / h, 0.0, 1.0);
        if (s == 0.0) return states[i];
        if (s == 1.0) return states[i + 1];
        double a = 1.0 - s;
        double h00 = (1.0 + 2.0 * s) * a * a, h10 = s * a * a, h01 = s * s * (3.0 - 2.0 * s), h11 = s * s * (s - 1.0);
        return h00 * states[i] + (h10 * h) * rate_lo[i] + h01 * states[i + 1] + (h11 * h) * rate_hi[i];
    }

    double sup_norm() const {
        double b = 0.0;
        for (const auto& s : states) b = std::max(b, s.norm());
        return b;
    }

    /// Reverses sample order in place (used after backward integration).
    void reverse() {
        std::reverse(times.begin(), times.end());
        std::reverse(states.begin(), states.end());
        std::reverse(rate_lo.begin(), rate_lo.end());
        std::reverse(rate_hi.begin(), rate_hi.end());
        std::swap(rate_lo, rate_hi);
    }
};

/// Stacked block outputs; throws DimensionError on size mismatch.
inline Vec eval_rhs(const TriangularSystem& sys, double t, const StateVector& x, const Vec& u) {
    return sys.rhs(t, x.data(), u);
}

struct ValidationOptions {
    int probes = 64;
    double probe_radius = 3.0;
    std::uint64_t seed = 7;
};

/// Diagnostics for the checkable structural conditions. The last entry is always
/// the note on the surjectivity/smoothness assumption, which cannot be decided from
/// point evaluations; `violations` excludes it.
struct ValidationReport {
    std::vector<std::string> violations;
    std::vector<std::string> notes;
    bool ok() const { return violations.empty(); }
};

inline ValidationReport validate_system(const TriangularSystem& sys, const ValidationOptions& opt = {}) {
    ValidationReport rep;
    const auto& d = sys.dims();
    for (std::size_t i = 0; i + 1 < d.size(); ++i)
        if (d[i] > d[i + 1])
            rep.violations.push_back("m_" + std::to_string(i + 1) + " > m_" + std::to_string(i + 2) + " (" +
                                     std::to_string(d[i]) + " > " + std::to_string(d[i + 1]) + ")");
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> tdist(sys.t0(), sys.T());
    for (int i = 0; i < sys.nu(); ++i) {
        bool reported = false;
        for (int q = 0; q < opt.probes && !reported; ++q) {
            double t = tdist(rng);
            Vec x(sys.prefix(i + 1)), nx(sys.dim(i + 1));
            for (int j = 0; j < x.size(); ++j) x(j) = opt.probe_radius * unit(rng);
            for (int j = 0; j < nx.size(); ++j) nx(j) = opt.probe_radius * unit(rng);
            std::ostringstream where;
            where << "t=" << t << " x=[" << x.transpose() << "] next=[" << nx.transpose() << "]";
            try {
                Vec out = sys.block(i).f(t, x, nx);
                if (out.size() != sys.dim(i)) {
                    rep.violations.push_back("block " + std::to_string(i + 1) + " returned length " +
                                             std::to_string(out.size()) + " at " + where.str());
                    reported = true;
                } else if (!out.allFinite()) {
                    rep.violations.push_back("block " + std::to_string(i + 1) + " is not finite at " + where.str());
                    reported = true;
                }
            } catch (const std::exception& e) {
                rep.violations.push_back("block " + std::to_string(i + 1) + " threw at " + where.str() + ": " + e.what());
                reported = true;
            }
        }
    }
    rep.notes.push_back(
        "unchecked assumption: surjectivity of each f_i in x_{i+1} and the smoothness class are user-asserted");
    return rep;
}

}  // namespace tristeer
