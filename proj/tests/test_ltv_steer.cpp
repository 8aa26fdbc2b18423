#include <catch_amalgamated.hpp>

#include <random>

#include "tristeer/bench.hpp"
#include "tristeer/ltv_steer.hpp"

using namespace tristeer;
using Catch::Matchers::WithinAbs;

static LtvSystem double_integrator(double T, int intervals = 64) {
    LtvSystem l;
    l.times = uniform_grid(0.0, T, intervals);
    Mat A(2, 2), B(2, 1);
    A << 0, 1, 0, 0;
    B << 0, 1;
    l.A.assign(l.times.size(), A);
    l.B.assign(l.times.size(), B);
    return l;
}

TEST_CASE("double integrator Gramian") {
    Mat W = gramian(double_integrator(1.0), unit_weight());
    CHECK_THAT(W(0, 0), WithinAbs(1.0 / 3.0, 1e-12));
    CHECK_THAT(W(0, 1), WithinAbs(0.5, 1e-12));
    CHECK_THAT(W(1, 1), WithinAbs(1.0, 1e-12));
}

TEST_CASE("unit-weight basis is the explicit minimum-energy pair") {
    for (double T : {0.5, 1.0, 2.0}) {
        SteeringBasis b = basis(double_integrator(T, 32), unit_weight());
        for (double t : {0.0, 0.3 * T, T}) {
            CHECK_THAT(b.controls[0].value(t)(0), WithinAbs(6 / (T * T) - 12 * t / (T * T * T), 1e-6));
            CHECK_THAT(b.controls[1].value(t)(0), WithinAbs(-2 / T + 6 * t / (T * T), 1e-6));
        }
        for (double e : b.endpoint_errors) CHECK(e <= 1e-9);
    }
}

TEST_CASE("bump-weighted basis is flat at the window ends") {
    LtvSystem l = double_integrator(1.0);
    SteeringBasis b = basis(l, bump_weight(0.0, 1.0));
    for (const Control& w : b.controls) {
        CHECK(w.value(0.0).norm() == 0.0);
        CHECK(w.derivative(0.0).norm() == 0.0);
        CHECK(w.value(1.0).norm() == 0.0);
        CHECK(w.derivative(1.0).norm() == 0.0);
    }
    Vec target(2);
    target << 0.3, -0.7;
    Control u = steer(l, target, bump_weight(0.0, 1.0));
    CHECK((simulate_ltv(l, u, Vec::Zero(2)) - target).norm() <= 1e-10);
}

TEST_CASE("uncontrollable pair is rejected") {
    LtvSystem l = double_integrator(1.0);
    for (auto& B : l.B) B << 0, 0;
    CHECK_THROWS_AS(basis(l, unit_weight()), GramianSingular);
}

TEST_CASE("random cascade LTV systems") {
    std::mt19937_64 rng(5);
    for (int n = 0; n < 20; ++n) {
        LtvSystem l = bench::random_ltv(rng);
        SteeringBasis b = basis(l, bump_weight(0.0, 1.0), 1e-8);
        for (double e : b.endpoint_errors) CHECK(e <= 1e-9);
    }
}
