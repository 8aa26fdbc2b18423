#include <catch_amalgamated.hpp>

#include <random>

#include "tristeer/config.hpp"

using namespace tristeer;

TEST_CASE("DSL system agrees with the hand-coded example") {
    SystemConfig c;
    c.name = "example11-dsl";
    c.dims = {1, 1, 1};
    c.rhs = {"piecewise(x2 <= 2, 0, pow(x2-2,2)*sin(x2-2))", "u1"};
    TriangularSystem dsl = build_system(c);
    TriangularSystem ref = builtin_system("example11");
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> d(-5.0, 5.0), t(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        Vec x(2), u(1);
        x << d(rng), d(rng);
        u << d(rng);
        double tt = t(rng);
        worst = std::max(worst, (eval_rhs(dsl, tt, StateVector::concat({x.head(1), x.tail(1)}), u) -
                                 ref.rhs(tt, x, u)).norm());
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("DSL chain3 agrees at random points") {
    SystemConfig c;
    c.dims = {1, 1, 2};
    c.rhs = {"x2 + sin(x1)/4", "u1 + u2^3 + sin(x1 - x2)/5"};
    TriangularSystem dsl = build_system(c);
    TriangularSystem ref = builtin_system("chain3");
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(-3.0, 3.0);
    for (int i = 0; i < 1000; ++i) {
        Vec x(2), u(2);
        x << d(rng), d(rng);
        u << d(rng), d(rng);
        CHECK((dsl.rhs(0.3, x, u) - ref.rhs(0.3, x, u)).norm() <= 1e-12);
    }
}

TEST_CASE("config errors") {
    SystemConfig c;
    c.dims = {1, 1, 1};
    c.rhs = {"u1", "u1"};
    CHECK_THROWS_AS(build_system(c), ConfigError);  // u in a non-last block
    c.rhs = {"x2", "u2"};
    CHECK_THROWS_AS(build_system(c), ConfigError);
    c.rhs = {"x2 +", "u1"};
    CHECK_THROWS_AS(build_system(c), ConfigError);
    c.rhs = {"x2"};
    CHECK_THROWS_AS(build_system(c), ConfigError);
    c.dims = {1};
    CHECK_THROWS_AS(build_system(c), ConfigError);
    CHECK_THROWS_AS(load_system("/nonexistent/system.json"), ConfigError);
}

TEST_CASE("config from json") {
    auto j = nlohmann::json::parse(R"({"name":"di","dims":[1,1,1],"rhs":["x2","u1"],"t0":0,"T":2})");
    TriangularSystem s = build_system(config_from_json(j));
    CHECK(s.name() == "di");
    CHECK(s.T() == 2.0);
    Vec x(2), u(1);
    x << 1.0, 2.0;
    u << 3.0;
    CHECK(s.rhs(0.0, x, u) == Vec((Vec(2) << 2.0, 3.0).finished()));
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"rhs":["x2"]})")), ConfigError);
}
