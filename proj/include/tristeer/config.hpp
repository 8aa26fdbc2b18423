#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tristeer/errors.hpp"
#include "tristeer/expr.hpp"
#include "tristeer/registry.hpp"
#include "tristeer/sysmodel.hpp"

namespace tristeer {

/// Raised for malformed system configs (the CLI maps it to exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/**
 * A cascade written as expressions. `rhs` holds one expression per state
 * coordinate, x1' first, over t, x1..xn and u1..um. Block i may use x up to the
 * block after it; only the last block may use u.
 */
struct SystemConfig {
    std::string name = "custom";
    std::vector<int> dims;
    std::vector<std::string> rhs;
    double t0 = 0.0;
    double T = 1.0;
};

inline SystemConfig config_from_json(const nlohmann::json& j) {
    SystemConfig c;
    try {
        c.name = j.value("name", c.name);
        c.dims = j.at("dims").get<std::vector<int>>();
        c.rhs = j.at("rhs").get<std::vector<std::string>>();
        c.t0 = j.value("t0", c.t0);
        c.T = j.value("T", c.T);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("system config: ") + e.what());
    }
    return c;
}

inline TriangularSystem build_system(const SystemConfig& c) {
    if (c.dims.size() < 2) throw ConfigError("dims needs m_1..m_{nu+1}, at least two entries");
    for (int m : c.dims)
        if (m <= 0) throw ConfigError("dims must be positive");
    const int nu = static_cast<int>(c.dims.size()) - 1;
    int n = 0;
    for (int i = 0; i < nu; ++i) n += c.dims[static_cast<std::size_t>(i)];
    if (static_cast<int>(c.rhs.size()) != n)
        throw ConfigError("expected " + std::to_string(n) + " rhs expressions, got " + std::to_string(c.rhs.size()));
    if (!(c.t0 < c.T)) throw ConfigError("need t0 < T");

    std::vector<Block> blocks;
    int row = 0, prefix = 0;
    for (int i = 0; i < nu; ++i) {
        const int mi = c.dims[static_cast<std::size_t>(i)];
        const int mnext = c.dims[static_cast<std::size_t>(i) + 1];
        const bool last = i + 1 == nu;
        const int x_limit = last ? n : prefix + mi + mnext;
        std::vector<Expr> ex;
        for (int r = 0; r < mi; ++r, ++row) {
            Expr e;
            try {
                e = parse_expr(c.rhs[static_cast<std::size_t>(row)]);
            } catch (const ExprError& err) {
                throw ConfigError("rhs[" + std::to_string(row) + "]: " + err.what());
            }
            int nx = 0, nuse = 0;
            max_indices(e, nx, nuse);
            if (nx > x_limit)
                throw ConfigError("rhs[" + std::to_string(row) + "] uses x" + std::to_string(nx) +
                                  ", block " + std::to_string(i + 1) + " may use up to x" + std::to_string(x_limit));
            if (nuse > 0 && !last)
                throw ConfigError("rhs[" + std::to_string(row) + "] uses u in block " + std::to_string(i + 1));
            if (nuse > mnext && last)
                throw ConfigError("rhs[" + std::to_string(row) + "] uses u" + std::to_string(nuse) + ", m = " +
                                  std::to_string(mnext));
            ex.push_back(e);
        }
        Block b;
        b.f = [ex, last](double t, const Vec& x, const Vec& nx) {
            Vec out(static_cast<int>(ex.size()));
            ExprEnv env;
            env.t = t;
            Vec joined;
            if (last) {
                env.x = &x;
                env.u = &nx;
            } else {
                joined.resize(x.size() + nx.size());
                joined << x, nx;
                env.x = &joined;
            }
            for (std::size_t r = 0; r < ex.size(); ++r) out(static_cast<int>(r)) = eval(ex[r], env);
            return out;
        };
        blocks.push_back(std::move(b));
        prefix += mi;
    }
    return TriangularSystem(c.name, c.dims, std::move(blocks), c.t0, c.T);
}

/// Built-in name, or a path to a JSON system config.
inline TriangularSystem load_system(const std::string& name_or_file) {
    if (is_builtin_system(name_or_file)) return builtin_system(name_or_file);
    std::ifstream in(name_or_file);
    if (!in) throw ConfigError("'" + name_or_file + "' is neither a built-in system nor a readable file");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(name_or_file + ": " + e.what());
    }
    return build_system(config_from_json(j));
}

}  // namespace tristeer
