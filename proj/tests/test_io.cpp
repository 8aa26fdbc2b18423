#include <catch_amalgamated.hpp>

#include <sstream>

#include "tristeer/io.hpp"
#include "tristeer/registry.hpp"

using namespace tristeer;

static Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

TEST_CASE("control JSON round trip is exact") {
    Control c = Control::hermite({0.0, 0.1, 1.0 / 3.0}, {v2(1e-17, 2), v2(3, 4), v2(5, 6.123456789012345)},
                                 {v2(0.1, 0.2), v2(0.3, 0.4), v2(0.5, 0.6)});
    Control back = control_from_json(json::parse(control_to_json(c).dump()));
    CHECK(back.breakpoints() == c.breakpoints());
    CHECK(back.values() == c.values());
    CHECK(back.derivatives() == c.derivatives());
    Control pc = Control::piecewise_constant({0.0, 0.5, 1.0}, {v2(1, 2), v2(3, 4)});
    Control pback = control_from_json(json::parse(control_to_json(pc).dump()));
    CHECK(pback.kind() == ControlKind::PiecewiseConstant);
    CHECK(pback.values() == pc.values());
}

TEST_CASE("anchor JSON round trip") {
    TriangularSystem sys = builtin_system("chain3");
    RegularChain a = find_regular_chain(sys, 0.4, Vec::Zero(1), 5);
    RegularChain b = anchor_from_json(sys, json::parse(anchor_to_json("chain3", a).dump()));
    CHECK(b.t1 == a.t1);
    CHECK(b.x_star == a.x_star);
    CHECK(b.z_star == a.z_star);
    CHECK(b.rank_margins == a.rank_margins);
    CHECK_THROWS_AS(anchor_from_json(sys, json::parse("{}")), DomainError);
}

TEST_CASE("CSV layout") {
    Trajectory tr;
    tr.times = {0.0, 0.5};
    tr.states = {v2(1, 2), v2(3, 4)};
    std::ostringstream os;
    write_csv(os, tr, Control::constant(0.0, 1.0, Vec::Constant(1, 0.1)));
    CHECK(os.str() == "t,x_1,x_2,u_1\n0,1,2,0.10000000000000001\n0.5,3,4,0.10000000000000001\n");
}
