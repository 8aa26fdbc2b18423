#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tristeer/errors.hpp"
#include "tristeer/sysmodel.hpp"

namespace tristeer {

namespace systems {

/// 0 for y <= 2, (y-2)^2 sin(y-2) above.
inline double g_flat(double y) {
    if (y <= 2.0) return 0.0;
    double r = y - 2.0;
    return r * r * std::sin(r);
}

inline double dg_flat(double y) {
    if (y <= 2.0) return 0.0;
    double r = y - 2.0;
    return 2.0 * r * std::sin(r) + r * r * std::cos(r);
}

/// 0 for y <= 2, ln^2(y-1) sin(ln(y-1)) above.
inline double g_log(double y) {
    if (y <= 2.0) return 0.0;
    double l = std::log(y - 1.0);
    return l * l * std::sin(l);
}

inline double dg_log(double y) {
    if (y <= 2.0) return 0.0;
    double l = std::log(y - 1.0);
    return (2.0 * l * std::sin(l) + l * l * std::cos(l)) / (y - 1.0);
}

inline Mat scalar(double v) { return Mat::Constant(1, 1, v); }

inline TriangularSystem scalar_g(const std::string& name, double (*g)(double), double (*dg)(double), double t0,
                                 double T) {
    Block b1;
    b1.f = [g](double, const Vec&, const Vec& nx) { return Vec::Constant(1, g(nx(0))); };
    b1.jac_x = [](double, const Vec&, const Vec&) { return Mat::Zero(1, 1); };
    b1.jac_next = [dg](double, const Vec&, const Vec& nx) { return scalar(dg(nx(0))); };
    Block b2;
    b2.f = [](double, const Vec&, const Vec& nx) { return Vec(nx); };
    b2.jac_x = [](double, const Vec&, const Vec&) { return Mat::Zero(1, 2); };
    b2.jac_next = [](double, const Vec&, const Vec&) { return scalar(1.0); };
    return TriangularSystem(name, {1, 1, 1}, {b1, b2}, t0, T);
}

inline TriangularSystem example11(double t0 = 0.0, double T = 1.0) {
    return scalar_g("example11", g_flat, dg_flat, t0, T);
}

inline TriangularSystem example11_log(double t0 = 0.0, double T = 1.0) {
    return scalar_g("example11-log", g_log, dg_log, t0, T);
}

inline TriangularSystem dblint(double t0 = 0.0, double T = 1.0) {
    Block b1;
    b1.f = [](double, const Vec&, const Vec& nx) { return Vec(nx); };
    b1.jac_x = [](double, const Vec&, const Vec&) { return Mat::Zero(1, 1); };
    b1.jac_next = [](double, const Vec&, const Vec&) { return scalar(1.0); };
    Block b2;
    b2.f = [](double, const Vec&, const Vec& nx) { return Vec(nx); };
    b2.jac_x = [](double, const Vec&, const Vec&) { return Mat::Zero(1, 2); };
    b2.jac_next = [](double, const Vec&, const Vec&) { return scalar(1.0); };
    return TriangularSystem("dblint", {1, 1, 1}, {b1, b2}, t0, T);
}

/// x1' = x2 + sin(x1)/4, x2' = u1 + u2^3 + sin(x1 - x2)/5.
inline TriangularSystem chain3(double t0 = 0.0, double T = 1.0) {
    Block b1;
    b1.f = [](double, const Vec& x, const Vec& nx) { return Vec::Constant(1, nx(0) + 0.25 * std::sin(x(0))); };
    b1.jac_x = [](double, const Vec& x, const Vec&) { return scalar(0.25 * std::cos(x(0))); };
    b1.jac_next = [](double, const Vec&, const Vec&) { return scalar(1.0); };
    Block b2;
    b2.f = [](double, const Vec& x, const Vec& u) {
        return Vec::Constant(1, u(0) + u(1) * u(1) * u(1) + 0.2 * std::sin(x(0) - x(1)));
    };
    b2.jac_x = [](double, const Vec& x, const Vec&) {
        double c = 0.2 * std::cos(x(0) - x(1));
        Mat J(1, 2);
        J << c, -c;
        return J;
    };
    b2.jac_next = [](double, const Vec&, const Vec& u) {
        Mat J(1, 2);
        J << 1.0, 3.0 * u(1) * u(1);
        return J;
    };
    return TriangularSystem("chain3", {1, 1, 2}, {b1, b2}, t0, T);
}

}  // namespace systems

inline std::vector<std::string> builtin_systems() { return {"example11", "example11-log", "dblint", "chain3"}; }

inline bool is_builtin_system(const std::string& name) {
    for (const auto& n : builtin_systems())
        if (n == name) return true;
    return false;
}

inline TriangularSystem builtin_system(const std::string& name, double t0 = 0.0, double T = 1.0) {
    if (name == "example11") return systems::example11(t0, T);
    if (name == "example11-log") return systems::example11_log(t0, T);
    if (name == "dblint") return systems::dblint(t0, T);
    if (name == "chain3") return systems::chain3(t0, T);
    throw DomainError("unknown system '" + name + "'");
}

}  // namespace tristeer
