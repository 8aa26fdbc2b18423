#include <catch_amalgamated.hpp>

#include <cmath>

#include "tristeer/registry.hpp"
#include "tristeer/regpoint.hpp"

using namespace tristeer;
using Catch::Matchers::WithinAbs;

static Vec s(double v) { return Vec::Constant(1, v); }

TEST_CASE("chain at a regular point of the flat example") {
    TriangularSystem sys = builtin_system("example11");
    RegularChain c = make_chain(sys, 0.5, {s(0.0), s(3.0), s(0.0)});
    CHECK_THAT(c.z_star[0](0), WithinAbs(0.8414709848078965, 1e-15));
    CHECK_THAT(c.rank_margins[0], WithinAbs(2.2232442754839328, 1e-9));
    CHECK(c.rank_margins[1] == 1.0);
    CHECK(c.z_star.back().norm() == 0.0);
}

TEST_CASE("chain in the flat region has zero margin") {
    TriangularSystem sys = builtin_system("example11");
    RegularChain c = make_chain(sys, 0.5, {s(0.0), s(1.0), s(0.0)});
    CHECK(c.rank_margins[0] == 0.0);
}

TEST_CASE("phi inverts g near the anchor") {
    // g(2 + r) = r^2 sin r = 0.5 has root r = 0.8250289240152389 near r = 1
    TriangularSystem sys = builtin_system("example11");
    RegularChain c = make_chain(sys, 0.5, {s(0.0), s(3.0), s(0.0)});
    ImplicitSolver solver{&sys, &c, 1};
    PhiResult r = phi_solve(solver, 0.5, s(0.0), s(0.5), s(3.0));
    CHECK_THAT(r.v(0), WithinAbs(2.8250289240152389, 1e-9));
    CHECK(r.residual <= 1e-10);
    CHECK(r.margin > 0.0);
}

TEST_CASE("anchor search is deterministic and regular") {
    TriangularSystem sys = builtin_system("example11");
    RegularChain a = find_regular_chain(sys, 0.5, s(0.0), 42);
    RegularChain b = find_regular_chain(sys, 0.5, s(0.0), 42);
    CHECK(a.x_star[1] == b.x_star[1]);
    CHECK(a.x_star[1](0) > 2.0);
    for (double m : a.rank_margins) CHECK(m >= 1e-6);
}

TEST_CASE("matched anchors") {
    TriangularSystem sys = builtin_system("chain3");
    Vec x0(2), xT(2);
    x0 << -1.0, 0.5;
    xT << 1.0, 2.0;
    RegularChain a = find_matched_chain(sys, 0.5, x0, xT, 7);
    RegularChain b = find_matched_chain(sys, 0.5, x0, xT, 7);
    CHECK(a.state() == b.state());
    for (double m : a.rank_margins) CHECK(m >= 0.1);
    CHECK_THROWS_AS(find_matched_chain(sys, 1.0, x0, xT, 7), DomainError);
}
