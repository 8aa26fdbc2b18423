#include <catch_amalgamated.hpp>

#include "tristeer/perturb.hpp"
#include "tristeer/registry.hpp"

using namespace tristeer;

static Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

TEST_CASE("zero perturbation reproduces the nominal plan bit for bit") {
    TriangularSystem sys = builtin_system("example11");
    Vec x0 = v2(0, 0), xT = v2(1, 2.5);
    RegularChain anchor = find_matched_chain(sys, 0.5, x0, xT, 7);
    PlanResult nominal = plan(sys, anchor, x0, xT);
    PerturbedPlan pp = plan_perturbed(sys, anchor, builtin_perturbation("zero", sys), x0, xT);
    CHECK(pp.rounds == 0);
    CHECK(pp.plan.control.breakpoints() == nominal.control.breakpoints());
    CHECK(pp.plan.control.values() == nominal.control.values());
    CHECK(pp.plan.control.derivatives() == nominal.control.derivatives());
    CHECK(pp.residual == nominal.endpoint_error);
}

TEST_CASE("sin perturbation is corrected") {
    TriangularSystem sys = builtin_system("example11");
    Vec x0 = v2(0, 0), xT = v2(1, 2.5);
    RegularChain anchor = find_matched_chain(sys, 0.5, x0, xT, 7);
    PerturbedPlan pp = plan_perturbed(sys, anchor, builtin_perturbation("sin01", sys), x0, xT);
    CHECK(pp.converged);
    CHECK(pp.residual <= 1e-3);
    CHECK(pp.rounds <= 25);
    CHECK(pp.history.front() > pp.residual);
    Trajectory tr = simulate_perturbed(sys, builtin_perturbation("sin01", sys), x0, pp.plan.control, plan_config(sys));
    CHECK((tr.back() - xT).norm() == pp.residual);
}

TEST_CASE("perturbation registry") {
    TriangularSystem sys = builtin_system("dblint");
    for (const auto& n : builtin_perturbations()) CHECK(builtin_perturbation(n, sys).name == n);
    Perturbation p = builtin_perturbation("shift02", sys);
    CHECK(p.h(0.0, Vec::Zero(2), Vec::Zero(1)) == v2(0.0, 0.2));
    CHECK_THROWS_AS(builtin_perturbation("nope", sys), DomainError);
}
