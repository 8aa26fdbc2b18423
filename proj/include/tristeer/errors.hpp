#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tristeer {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Vector or matrix sizes do not agree with the system partition.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A control was queried outside its domain, or a schedule is malformed.
class DomainError : public Error {
public:
    using Error::Error;
};

/// The implicit inverse left its regular neighbourhood (Newton stagnated or the
/// selected Jacobian submatrix became numerically singular).
class RegularityLost : public Error {
public:
    RegularityLost(std::string what, double t, std::vector<double> y, std::vector<double> z)
        : Error(std::move(what)), t_(t), y_(std::move(y)), z_(std::move(z)) {}
    double t() const noexcept { return t_; }
    const std::vector<double>& y() const noexcept { return y_; }
    const std::vector<double>& z() const noexcept { return z_; }

private:
    double t_;
    std::vector<double> y_;
    std::vector<double> z_;
};

/// Weighted controllability Gramian below the inversion threshold.
class GramianSingular : public Error {
public:
    GramianSingular(std::string what, double min_eig) : Error(std::move(what)), min_eig_(min_eig) {}
    double min_eigenvalue() const noexcept { return min_eig_; }

private:
    double min_eig_;
};

/// No control value could be found that meets the tracking defect bound.
class DefectUnsatisfiable : public Error {
public:
    using Error::Error;
};

/// The lambda-correction solve diverged or left its admissible ball.
class ShootingFailed : public Error {
public:
    ShootingFailed(std::string what, std::vector<double> residual_trace)
        : Error(std::move(what)), trace_(std::move(residual_trace)) {}
    const std::vector<double>& trace() const noexcept { return trace_; }

private:
    std::vector<double> trace_;
};

/// No steering window length works around the anchor.
class AnchorUnusable : public Error {
public:
    using Error::Error;
};

/// Regular-chain sampling exhausted its attempts.
class AnchorSearchFailed : public Error {
public:
    AnchorSearchFailed(std::string what, int block, double best_margin)
        : Error(std::move(what)), block_(block), best_margin_(best_margin) {}
    int block() const noexcept { return block_; }
    double best_margin() const noexcept { return best_margin_; }

private:
    int block_;
    double best_margin_;
};

/// Expression parse or evaluation failure; `offset` is a byte offset into the source.
class ExprError : public Error {
public:
    ExprError(std::string what, std::size_t offset) : Error(std::move(what)), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Planner failure carrying the chain of stage contexts it passed through.
class PlanError : public Error {
public:
    PlanError(std::vector<std::string> chain)
        : Error(join(chain)), chain_(std::move(chain)) {}
    const std::vector<std::string>& chain() const noexcept { return chain_; }

private:
    static std::string join(const std::vector<std::string>& c) {
        std::string out;
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (i) out += ": ";
            out += c[i];
        }
        return out;
    }
    std::vector<std::string> chain_;
};

}  // namespace tristeer
