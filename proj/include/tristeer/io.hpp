#pragma once

#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tristeer/control.hpp"
#include "tristeer/errors.hpp"
#include "tristeer/regpoint.hpp"
#include "tristeer/shooting.hpp"
#include "tristeer/sysmodel.hpp"

namespace tristeer {

using json = nlohmann::json;

inline std::vector<double> to_std(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vec to_vec(const std::vector<double>& v) {
    Vec out(static_cast<int>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<int>(i)) = v[i];
    return out;
}

inline json vec_list(const std::vector<Vec>& vs) {
    json a = json::array();
    for (const Vec& v : vs) a.push_back(to_std(v));
    return a;
}

inline std::vector<Vec> vec_list(const json& j) {
    std::vector<Vec> out;
    for (const auto& e : j) out.push_back(to_vec(e.get<std::vector<double>>()));
    return out;
}

inline json anchor_to_json(const std::string& system, const RegularChain& a) {
    return {{"system", system},
            {"t1", a.t1},
            {"x_star", vec_list(a.x_star)},
            {"z_star", vec_list(a.z_star)},
            {"rank_margins", a.rank_margins}};
}

/// Rebuilds the chain from t1 and x*; z* and the column selections are recomputed.
inline RegularChain anchor_from_json(const TriangularSystem& sys, const json& j) {
    try {
        return make_chain(sys, j.at("t1").get<double>(), vec_list(j.at("x_star")));
    } catch (const json::exception& e) {
        throw DomainError(std::string("anchor file: ") + e.what());
    }
}

/// Cubic controls store Hermite data, one value and one derivative per breakpoint.
inline json control_to_json(const Control& u) {
    json c = {{"kind", to_string(u.kind())}, {"breakpoints", u.breakpoints()}};
    if (u.kind() == ControlKind::PiecewiseConstant)
        c["coefficients"] = {{"values", vec_list(u.values())}};
    else
        c["coefficients"] = {{"values", vec_list(u.values())}, {"derivatives", vec_list(u.derivatives())}};
    return c;
}

inline Control control_from_json(const json& c) {
    try {
        auto k = c.at("breakpoints").get<std::vector<double>>();
        const json& co = c.at("coefficients");
        if (c.at("kind").get<std::string>() == "piecewise-constant")
            return Control::piecewise_constant(std::move(k), vec_list(co.at("values")));
        return Control::hermite(std::move(k), vec_list(co.at("values")), vec_list(co.at("derivatives")));
    } catch (const json::exception& e) {
        throw DomainError(std::string("control: ") + e.what());
    }
}

inline json stages_to_json(const HalfPlan& h, const char* half) {
    json a = json::array();
    for (const auto& s : h.stages)
        a.push_back({{"half", half},
                     {"p", s->p},
                     {"sigma", s->tol.sigma},
                     {"lambda_star", to_std(s->shot.lambda_star)},
                     {"switch_times", s->tracker.schedule.switch_times},
                     {"jacobian_dist_to_identity", s->shot.jacobian_dist_to_identity},
                     {"tolerances", to_json(s->tol)}});
    return a;
}

inline json plan_to_json(const std::string& system, const PlanResult& r, const Vec& x0, const Vec& xT) {
    json stages = stages_to_json(r.backward, "backward");
    for (auto& s : stages_to_json(r.forward, "forward")) stages.push_back(s);
    return {{"system", system},
            {"x0", to_std(x0)},
            {"xT", to_std(xT)},
            {"anchor", anchor_to_json(system, r.anchor)},
            {"stages", stages},
            {"control", control_to_json(r.control)},
            {"endpoint", to_std(r.trajectory.back())},
            {"endpoint_error", r.endpoint_error}};
}

inline json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot read '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DomainError(path + ": " + e.what());
    }
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DomainError("cannot write '" + path + "'");
    out << text;
}

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Columns t, x_1..x_n, u_1..u_m at every trajectory sample.
inline void write_csv(std::ostream& os, const Trajectory& tr, const Control& u) {
    const int n = static_cast<int>(tr.states.front().size());
    os << "t";
    for (int i = 1; i <= n; ++i) os << ",x_" << i;
    for (int i = 1; i <= u.dim(); ++i) os << ",u_" << i;
    os << "\n";
    for (std::size_t k = 0; k < tr.size(); ++k) {
        os << fmt17(tr.times[k]);
        for (int i = 0; i < n; ++i) os << ',' << fmt17(tr.states[k](i));
        Vec v = u.value(tr.times[k]);
        for (int i = 0; i < v.size(); ++i) os << ',' << fmt17(v(i));
        os << "\n";
    }
}

}  // namespace tristeer
