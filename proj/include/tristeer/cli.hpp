#pragma once

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tristeer/bench.hpp"
#include "tristeer/config.hpp"
#include "tristeer/io.hpp"
#include "tristeer/perturb.hpp"
#include "tristeer/regpoint.hpp"
#include "tristeer/shooting.hpp"

namespace tristeer {

namespace cli {

/// "a,b,c" -> vector; throws ConfigError on junk or a wrong length.
inline Vec parse_state(const std::string& s, int n, const char* what) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        char* end = nullptr;
        double d = std::strtod(item.c_str(), &end);
        if (item.empty() || *end != '\0') throw ConfigError(std::string(what) + ": cannot parse '" + s + "'");
        v.push_back(d);
    }
    if (static_cast<int>(v.size()) != n)
        throw ConfigError(std::string(what) + " needs " + std::to_string(n) + " components, got " +
                          std::to_string(v.size()));
    return to_vec(v);
}

inline std::uint64_t effective_seed(std::uint64_t seed) {
    if (const char* env = std::getenv("TRISTEER_SEED")) {
        char* end = nullptr;
        unsigned long long s = std::strtoull(env, &end, 10);
        if (*env == '\0' || *end != '\0') throw ConfigError("TRISTEER_SEED must be an unsigned integer");
        return s;
    }
    return seed;
}

inline void write_csv_file(const std::string& path, const Trajectory& tr, const Control& u) {
    std::ostringstream os;
    write_csv(os, tr, u);
    write_text(path, os.str());
}

inline RegularChain load_or_find_anchor(const TriangularSystem& sys, const std::optional<std::string>& anchor_in,
                                        std::optional<double> t1, const Vec& x0, const Vec& xT, std::uint64_t seed) {
    if (anchor_in) return anchor_from_json(sys, read_json(*anchor_in));
    return find_matched_chain(sys, t1.value_or(0.5 * (sys.t0() + sys.T())), x0, xT, seed);
}

}  // namespace cli

/// Command-line entry point. Returns 0 on success, 1 on planner errors, 2 on config errors.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Steering controls for triangular systems"};
    app.require_subcommand(1);

    std::string system, x0s, xTs, out_path, csv_path, anchor_out, control_path, filter;
    std::optional<std::string> anchor_in, perturb;
    std::optional<double> t1, t_from, t_to;
    std::uint64_t seed = 7;
    int levels = 4;
    double scale = 1e-3;

    auto* plan_cmd = app.add_subcommand("plan", "plan a control from x0 to xT");
    plan_cmd->add_option("--system", system, "built-in name or JSON system file")->required();
    plan_cmd->add_option("--x0", x0s)->required();
    plan_cmd->add_option("--xT", xTs)->required();
    plan_cmd->add_option("--t1", t1, "anchor time (default: middle of the window)");
    plan_cmd->add_option("--anchor-in", anchor_in);
    plan_cmd->add_option("--anchor-out", anchor_out);
    plan_cmd->add_option("--perturb", perturb, "registered perturbation to correct for");
    plan_cmd->add_option("--out", out_path, "plan JSON");
    plan_cmd->add_option("--csv", csv_path, "trajectory CSV");
    plan_cmd->add_option("--seed", seed);

    auto* sim_cmd = app.add_subcommand("simulate", "simulate a planned control");
    sim_cmd->add_option("--system", system)->required();
    sim_cmd->add_option("--control", control_path, "plan JSON or bare control JSON")->required();
    sim_cmd->add_option("--x0", x0s)->required();
    sim_cmd->add_option("--from", t_from, "start time (default t0)");
    sim_cmd->add_option("--to", t_to, "end time (default T)");
    sim_cmd->add_option("--perturb", perturb);
    sim_cmd->add_option("--csv", csv_path);

    auto* sweep_cmd = app.add_subcommand("sweep-continuity", "control distance as the target approaches xT");
    sweep_cmd->add_option("--system", system)->required();
    sweep_cmd->add_option("--x0", x0s)->required();
    sweep_cmd->add_option("--xT", xTs)->required();
    sweep_cmd->add_option("--levels", levels)->check(CLI::Range(1, 30));
    sweep_cmd->add_option("--scale", scale, "length of the offset at level 0");
    sweep_cmd->add_option("--t1", t1);
    sweep_cmd->add_option("--seed", seed);
    sweep_cmd->add_option("--out", out_path);

    auto* anchor_cmd = app.add_subcommand("anchor", "search a regular chain");
    anchor_cmd->add_option("--system", system)->required();
    anchor_cmd->add_option("--t1", t1);
    anchor_cmd->add_option("--x0", x0s, "with --xT, match the chain to this pair");
    anchor_cmd->add_option("--xT", xTs);
    anchor_cmd->add_option("--seed", seed);
    anchor_cmd->add_option("--out", out_path);

    auto* bench_cmd = app.add_subcommand("bench", "acceptance benchmarks");
    bench_cmd->require_subcommand(1);
    auto* bench_run = bench_cmd->add_subcommand("run", "run the suite");
    bench_run->add_option("--filter", filter, "glob over case ids");
    bench_run->add_option("--out", out_path, "markdown report");
    bench_run->add_option("--csv", csv_path, "CSV report");
    bench_run->add_option("--seed", seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 2;
    }

    auto emit = [&](const std::string& path, const std::string& text) {
        if (path.empty() || path == "-")
            out << text;
        else
            write_text(path, text);
    };

    try {
        seed = cli::effective_seed(seed);
        if (*bench_run) {
            auto rs = run_suite(filter, seed);
            emit(out_path, report_markdown(rs));
            if (!csv_path.empty()) write_text(csv_path, report_csv(rs));
            for (const auto& r : rs)
                if (!r.pass) return 1;
            return 0;
        }

        const TriangularSystem sys = load_system(system);
        const Vec x0 = x0s.empty() && *anchor_cmd ? Vec() : cli::parse_state(x0s, sys.n(), "--x0");

        if (*plan_cmd) {
            const Vec xT = cli::parse_state(xTs, sys.n(), "--xT");
            std::optional<Perturbation> pert;
            if (perturb) {
                try {
                    pert = builtin_perturbation(*perturb, sys);
                } catch (const DomainError& e) {
                    throw ConfigError(e.what());
                }
            }
            RegularChain anchor = cli::load_or_find_anchor(sys, anchor_in, t1, x0, xT, seed);
            if (!anchor_out.empty()) write_text(anchor_out, anchor_to_json(system, anchor).dump(2) + "\n");
            json j;
            Trajectory traj;
            Control u;
            if (pert) {
                PerturbedPlan pp = plan_perturbed(sys, anchor, *pert, x0, xT);
                j = plan_to_json(system, pp.plan, x0, xT);
                traj = simulate_perturbed(sys, *pert, x0, pp.plan.control, plan_config(sys));
                j["perturbation"] = {{"name", pert->name},
                                     {"nominal_target", to_std(pp.target)},
                                     {"rounds", pp.rounds},
                                     {"residual", pp.residual},
                                     {"residual_history", pp.history},
                                     {"converged", pp.converged},
                                     {"endpoint", to_std(traj.back())}};
                u = pp.plan.control;
            } else {
                PlanResult r = plan(sys, anchor, x0, xT);
                j = plan_to_json(system, r, x0, xT);
                traj = r.trajectory;
                u = r.control;
            }
            emit(out_path, j.dump(2) + "\n");
            if (!csv_path.empty()) cli::write_csv_file(csv_path, traj, u);
            return 0;
        }

        if (*sim_cmd) {
            json j = read_json(control_path);
            Control u = control_from_json(j.contains("control") ? j.at("control") : j);
            if (u.dim() != sys.m())
                throw ConfigError("control has " + std::to_string(u.dim()) + " inputs, system needs " +
                                  std::to_string(sys.m()));
            const double a = t_from.value_or(sys.t0()), b = t_to.value_or(sys.T());
            if (!(a <= b)) throw ConfigError("--from must not exceed --to");
            Perturbation pert;
            if (perturb) {
                try {
                    pert = builtin_perturbation(*perturb, sys);
                } catch (const DomainError& e) {
                    throw ConfigError(e.what());
                }
            }
            const IntegratorConfig cfg = plan_config(sys);
            Trajectory tr = pert.is_zero()
                                ? simulate(sys, a, b, x0, u, cfg)
                                : simulate_rhs([&](double t, const Vec& x, const Vec& v) {
                                      return Vec(sys.rhs(t, x, v) + pert.h(t, x, v));
                                  }, a, b, x0, u, cfg);
            std::ostringstream os;
            write_csv(os, tr, u);
            emit(csv_path, os.str());
            return 0;
        }

        if (*sweep_cmd) {
            const Vec xT = cli::parse_state(xTs, sys.n(), "--xT");
            RegularChain anchor = cli::load_or_find_anchor(sys, std::nullopt, t1, x0, xT, seed);
            PlanResult base = plan(sys, anchor, x0, xT);
            Vec dir = Vec::Ones(sys.n()).normalized() * scale;
            std::ostringstream os;
            os << "level";
            for (int i = 1; i <= sys.n(); ++i) os << ",target_" << i;
            os << ",sup_distance,l1_distance,endpoint_error\n";
            for (int a = 1; a <= levels; ++a) {
                Vec target = xT + std::ldexp(1.0, -a) * dir;
                PlanResult r = plan(sys, anchor, x0, target);
                os << a;
                for (int i = 0; i < target.size(); ++i) os << ',' << fmt17(target(i));
                os << ',' << fmt17(sup_distance(r.control, base.control)) << ','
                   << fmt17(l1_distance(r.control, base.control)) << ',' << fmt17(r.endpoint_error) << "\n";
            }
            emit(out_path, os.str());
            return 0;
        }

        if (*anchor_cmd) {
            const double t = t1.value_or(0.5 * (sys.t0() + sys.T()));
            RegularChain chain;
            if (!xTs.empty()) {
                if (x0s.empty()) throw ConfigError("--xT needs --x0");
                const Vec xT = cli::parse_state(xTs, sys.n(), "--xT");
                chain = find_matched_chain(sys, t, x0, xT, seed);
            } else {
                chain = find_regular_chain(sys, t, Vec::Zero(sys.dim(0)), seed);
            }
            emit(out_path, anchor_to_json(system, chain).dump(2) + "\n");
            return 0;
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ExprError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DimensionError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const PlanError& e) {
        err << "planner error:\n";
        for (const auto& link : e.chain()) err << "  " << link << "\n";
        return 1;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace tristeer
