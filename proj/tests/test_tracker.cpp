#include <catch_amalgamated.hpp>

#include <cmath>

#include "tristeer/registry.hpp"
#include "tristeer/shooting.hpp"
#include "tristeer/tracker.hpp"

using namespace tristeer;

static Vec s(double v) { return Vec::Constant(1, v); }

namespace {
struct Setup {
    TriangularSystem sys = builtin_system("example11");
    RegularChain anchor = make_chain(sys, 0.5, {s(0.0), s(3.0), s(0.0)});
    StageContext ctx{sys, anchor, 1};
    StageFamily fam = base_family(anchor, 1.0, s(0.6));
};
}  // namespace

TEST_CASE("lattice tracker keeps the defect and the bound") {
    Setup st;
    const double delta = 0.05;
    TrackerResult r = build_reference(st.ctx.solver(), st.fam, 0.5, 1.0, delta);
    CHECK(r.lattice >= 64);
    CHECK(r.max_defect < delta);
    CHECK(r.max_phi_residual <= 1e-8);
    CHECK(r.v.sup_norm() <= r.M);
    CHECK(r.M == std::ldexp(1.0, r.a_max) + 1.0);
    // the tracked state stays close to the family
    CHECK(std::abs(r.z.back()(0) - 0.6) < 0.05);
}

TEST_CASE("event-driven tracker keeps the defect") {
    Setup st;
    TrackerOptions opt;
    opt.lattice = 0;
    TrackerResult r = build_reference(st.ctx.solver(), st.fam, 0.5, 1.0, 0.05, opt);
    CHECK(r.lattice == 0);
    CHECK(r.max_defect < 0.05);
    CHECK(r.v.sup_norm() <= r.M);
    // built backwards from T: T = tau_1 > tau_2 > ... > t_left
    const auto& tau = r.schedule.switch_times;
    CHECK(tau.front() == 1.0);
    CHECK(tau.back() == 0.5);
    for (std::size_t i = 1; i < tau.size(); ++i) CHECK(tau[i] < tau[i - 1]);
}

TEST_CASE("halving delta tightens the deviation") {
    Setup st;
    TrackerResult a = build_reference(st.ctx.solver(), st.fam, 0.5, 1.0, 0.1);
    TrackerResult b = build_reference(st.ctx.solver(), st.fam, 0.5, 1.0, 0.025);
    CHECK(b.max_deviation <= a.max_deviation + 1e-12);
}

TEST_CASE("tracker input checks") {
    Setup st;
    CHECK_THROWS_AS(build_reference(st.ctx.solver(), st.fam, 0.5, 1.0, 0.0), DomainError);
    CHECK_THROWS_AS(build_reference(st.ctx.solver(), st.fam, 1.0, 1.0, 0.1), DomainError);
}

TEST_CASE("selection hits the target rate") {
    Setup st;
    Selection sel = select_control_value(st.ctx.solver(), 0.5, s(0.0), s(0.5), s(3.0), 0.03);
    CHECK(sel.rule == SelectionRule::Phi);
    CHECK(std::abs(systems::g_flat(sel.v(0)) - 0.5) < 0.01);
    // a warm start in the flat region still finds a regular value by search
    Selection far = select_control_value(st.ctx.solver(), 0.5, s(0.0), s(2.0), s(-5.0), 0.03);
    CHECK(std::abs(systems::g_flat(far.v(0)) - 2.0) < 0.01);
}
