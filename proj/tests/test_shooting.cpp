#include <catch_amalgamated.hpp>

#include "tristeer/registry.hpp"
#include "tristeer/shooting.hpp"

using namespace tristeer;

static Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

TEST_CASE("example11 plan lands on the target and passes x2 > 2") {
    TriangularSystem sys = builtin_system("example11");
    Vec x0 = v2(0.0, 0.0), xT = v2(1.0, 2.5);
    RegularChain anchor = find_matched_chain(sys, 0.5, x0, xT, 7);
    PlanResult r = plan(sys, anchor, x0, xT);
    CHECK(r.endpoint_error <= 1e-4);
    CHECK((r.trajectory.back() - xT).norm() == r.endpoint_error);
    double top = -1e9;
    for (const Vec& x : r.trajectory.states) top = std::max(top, x(1));
    CHECK(top > 2.0);
    // both halves meet u* at the anchor time
    CHECK(r.control.value(anchor.t1) == anchor.u_star());
    for (const auto* half : {&r.forward, &r.backward})
        for (const auto& st : half->stages) {
            CHECK(st->shot.jacobian_dist_to_identity < 0.8);
            CHECK(st->tracker.max_defect < st->tracker.delta);
            CHECK(st->tol.eps2 <= st->tol.eps1);
        }
}

TEST_CASE("planning is deterministic") {
    TriangularSystem sys = builtin_system("chain3");
    Vec x0 = v2(-1.0, 0.0), xT = v2(1.0, 1.0);
    RegularChain anchor = find_matched_chain(sys, 0.5, x0, xT, 3);
    PlanResult a = plan(sys, anchor, x0, xT), b = plan(sys, anchor, x0, xT);
    CHECK(a.control.breakpoints() == b.control.breakpoints());
    CHECK(a.control.values() == b.control.values());
    CHECK(a.endpoint_error <= 1e-4);
}

TEST_CASE("stage control pins and endpoint on the double integrator") {
    TriangularSystem sys = builtin_system("dblint");
    RegularChain anchor = make_chain(sys, 0.5, {Vec::Zero(1), Vec::Zero(1), Vec::Zero(1)});
    StagePlan st = extend_stage(base_stage(sys, anchor), sys);
    Vec xi = v2(0.4, -0.3), beta = Vec::Constant(1, 0.8);
    auto r = st.control(xi, beta);
    CHECK(r->p == 2);
    CHECK(r->control.value(1.0) == beta);
    CHECK(r->control.value(0.5) == anchor.x_star[2]);
    CHECK(r->control.derivative(0.5) == anchor.z_star[2]);
    CHECK(r->endpoint_error <= 1e-6);
    REQUIRE(r->parent);
    CHECK(r->parent->p == 1);
}

TEST_CASE("shot solves to a target inside the eps2 ball") {
    TriangularSystem sys = builtin_system("example11");
    Vec x0 = v2(0.0, 0.0), xT = v2(1.0, 2.5);
    RegularChain anchor = find_matched_chain(sys, 0.5, x0, xT, 7);
    PlanResult pr = plan(sys, anchor, x0, xT);
    const auto& r = pr.forward.stages.back();
    StageContext ctx(sys, anchor, r->p);
    Shooter sh(ctx, family_from_result(r->parent), r->tol.sigma, r->tol.delta1, StageOptions{});
    Vec target = sh.phi0() + 0.5 * r->tol.eps2 * v2(0.6, 0.8);
    ShotReport shot = solve_lambda(sh, target, r->tol.eps1);
    CHECK((sh.phi_hat(shot.lambda_star) - target).norm() <= 1e-7);
    CHECK(shot.lambda_star.norm() < r->tol.eps1);
}

TEST_CASE("singular anchor gives a planner error with a chain") {
    TriangularSystem sys = builtin_system("example11");
    RegularChain bad = make_chain(sys, 0.5, {Vec::Zero(1), Vec::Constant(1, 1.0), Vec::Zero(1)});
    try {
        plan(sys, bad, v2(0, 0), v2(1, 2.5));
        FAIL("no throw");
    } catch (const PlanError& e) {
        CHECK(e.chain().size() >= 2);
        CHECK(e.chain().front() == "forward half");
    }
}
