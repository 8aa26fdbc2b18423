#include <catch_amalgamated.hpp>

#include <cmath>

#include "tristeer/ode.hpp"
#include "tristeer/registry.hpp"

using namespace tristeer;
using Catch::Matchers::WithinAbs;

TEST_CASE("zero-length interval returns x0 exactly") {
    TriangularSystem s = builtin_system("example11");
    Vec x0(2);
    x0 << 0.123, 2.7;
    Trajectory tr = simulate(s, 0.4, 0.4, x0, Control::constant(0.0, 1.0, Vec::Constant(1, 5.0)));
    REQUIRE(tr.size() == 1);
    CHECK(tr.back() == x0);
}

TEST_CASE("double integrator under constant input") {
    TriangularSystem s = builtin_system("dblint");
    IntegratorConfig cfg;
    cfg.abs_tol = cfg.rel_tol = 1e-12;
    Trajectory tr = simulate(s, 0.0, 1.0, Vec::Zero(2), Control::constant(0.0, 1.0, Vec::Constant(1, 1.0)), cfg);
    CHECK_THAT(tr.back()(0), WithinAbs(0.5, 1e-12));
    CHECK_THAT(tr.back()(1), WithinAbs(1.0, 1e-12));
}

TEST_CASE("semigroup property") {
    TriangularSystem s = builtin_system("example11");
    IntegratorConfig cfg;
    Control u = Control::hermite({0.0, 0.5, 1.0}, {Vec::Constant(1, 4.0), Vec::Constant(1, -3.0), Vec::Constant(1, 2.0)},
                                 {Vec::Constant(1, 0.0), Vec::Constant(1, 1.0), Vec::Constant(1, 0.0)});
    Vec x0(2);
    x0 << 0.0, 1.5;
    for (auto [t1, t2, t3] : std::vector<std::array<double, 3>>{{0.0, 0.3, 1.0}, {0.1, 0.5, 0.9}, {0.2, 0.7, 0.71}}) {
        Vec a = simulate(s, t1, t3, x0, u, cfg).back();
        Vec mid = simulate(s, t1, t2, x0, u, cfg).back();
        Vec b = simulate(s, t2, t3, mid, u, cfg).back();
        CHECK((a - b).norm() <= 10 * cfg.abs_tol);
    }
}

TEST_CASE("fixed-step RK4 converges at fourth order") {
    // x' = -x + u, u = 1 on [0,1]: x(1) = 1 - (1 - x0) e^{-1}
    auto f = [](double, const Vec& x, const Vec& u) { return Vec(-x + u); };
    Control u = Control::constant(0.0, 1.0, Vec::Constant(1, 1.0));
    double exact = 1.0 - 0.5 * std::exp(-1.0);
    double err[2];
    for (int i = 0; i < 2; ++i) {
        IntegratorConfig cfg;
        cfg.method = Method::RK4;
        cfg.step = i == 0 ? 0.1 : 0.05;
        cfg.piece_steps = 1;
        err[i] = std::abs(simulate_rhs(f, 0.0, 1.0, Vec::Constant(1, 0.5), u, cfg).back()(0) - exact);
    }
    double order = std::log2(err[0] / err[1]);
    CHECK(order > 3.8);
    CHECK(order < 4.2);
}

TEST_CASE("blow-up is reported") {
    auto f = [](double, const Vec& x, const Vec&) { return Vec(x.cwiseProduct(x)); };
    Trajectory tr = simulate_rhs(f, 0.0, 2.0, Vec::Constant(1, 1.0), Control::constant(0.0, 2.0, Vec::Zero(1)));
    CHECK(tr.blown_up);
}

TEST_CASE("LTV interpolation") {
    LtvSystem l;
    l.times = {0.0, 1.0};
    l.A = {Mat::Zero(1, 1), Mat::Constant(1, 1, 2.0)};
    l.B = {Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 3.0)};
    auto [A, B] = l.at(0.25);
    CHECK(A(0, 0) == 0.5);
    CHECK(B(0, 0) == 1.5);
}
