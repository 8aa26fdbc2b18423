#include <catch_amalgamated.hpp>

#include "tristeer/registry.hpp"
#include "tristeer/sysmodel.hpp"

using namespace tristeer;
using Catch::Matchers::WithinAbs;

TEST_CASE("flat g values") {
    CHECK(systems::g_flat(2.0) == 0.0);
    CHECK(systems::g_flat(-1.0) == 0.0);
    CHECK_THAT(systems::g_flat(3.0), WithinAbs(0.8414709848078965, 1e-15));
    // 2 sin 1 + cos 1
    CHECK_THAT(systems::dg_flat(3.0), WithinAbs(2.2232442754839328, 1e-15));
    CHECK(systems::dg_flat(1.0) == 0.0);
}

TEST_CASE("builtin registry") {
    for (const auto& n : builtin_systems()) {
        TriangularSystem s = builtin_system(n);
        CHECK(s.name() == n);
        CHECK(validate_system(s).ok());
        CHECK_FALSE(validate_system(s).notes.empty());
    }
    CHECK(builtin_system("chain3").dims() == std::vector<int>{1, 1, 2});
    CHECK_THROWS_AS(builtin_system("nope"), DomainError);
}

TEST_CASE("rhs and finite-difference Jacobians") {
    TriangularSystem s = builtin_system("chain3");
    Vec x(2), u(2);
    x << 0.3, -0.4;
    u << 0.5, 0.7;
    Vec f = s.rhs(0.0, x, u);
    CHECK_THAT(f(0), WithinAbs(-0.4 + 0.25 * std::sin(0.3), 1e-15));
    CHECK_THAT(f(1), WithinAbs(0.5 + 0.343 + 0.2 * std::sin(0.7), 1e-15));
    Mat Ju = s.jac_control(0.0, x, u);
    CHECK_THAT(Ju(1, 1), WithinAbs(3 * 0.49, 1e-12));
}

TEST_CASE("dims must be nondecreasing") {
    Block b;
    b.f = [](double, const Vec&, const Vec& nx) { return Vec(nx.head(1)); };
    Block b2;
    b2.f = [](double, const Vec&, const Vec& u) { return Vec(u); };
    TriangularSystem s("bad", {2, 1, 1}, {b, b2}, 0.0, 1.0);
    CHECK_FALSE(validate_system(s).ok());
}

TEST_CASE("state vector blocks") {
    StateVector v = StateVector::concat({Vec::Constant(1, 1.0), Vec::Constant(2, 2.0)});
    CHECK(v.block_count() == 2);
    CHECK(v.block(1).size() == 2);
    CHECK(v.data().size() == 3);
}
