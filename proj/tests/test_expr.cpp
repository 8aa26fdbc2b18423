#include <catch_amalgamated.hpp>

#include <cmath>

#include "tristeer/expr.hpp"

using namespace tristeer;
using Catch::Matchers::WithinAbs;

static double ev(const std::string& s, double x1 = 0.0, double x2 = 0.0, double u1 = 0.0) {
    Eigen::VectorXd x(2), u(1);
    x << x1, x2;
    u << u1;
    return eval(parse_expr(s), ExprEnv{0.0, &x, &u});
}

TEST_CASE("precedence and associativity") {
    CHECK(ev("1+2*3") == 7.0);
    CHECK(ev("2^3^2") == 512.0);
    CHECK(ev("-2^2") == -4.0);
    CHECK(ev("(1-2)-3") == -4.0);
    CHECK(ev("1-2-3") == -4.0);
    CHECK(ev("8/4/2") == 1.0);
    CHECK(ev("2*-3") == -6.0);
}

TEST_CASE("functions and variables") {
    CHECK_THAT(ev("sin(x1)+cos(x2)", 0.3, 0.7), WithinAbs(std::sin(0.3) + std::cos(0.7), 1e-15));
    CHECK_THAT(ev("exp(ln(x2))", 0.0, 2.5), WithinAbs(2.5, 1e-15));
    CHECK(ev("abs(u1)", 0, 0, -3.0) == 3.0);
    CHECK(ev("pow(x1, 3)", 2.0) == 8.0);
}

TEST_CASE("piecewise g of the flat example") {
    const std::string g = "piecewise(x2 <= 2, 0, pow(x2-2,2)*sin(x2-2))";
    CHECK(ev(g, 0.0, 1.0) == 0.0);
    CHECK(ev(g, 0.0, 2.0) == 0.0);
    // sin(1) at y = 3
    CHECK_THAT(ev(g, 0.0, 3.0), WithinAbs(0.8414709848078965, 1e-15));
}

TEST_CASE("untaken piecewise branch is not evaluated") {
    CHECK(ev("piecewise(x1 > 0, ln(x1), 1)", -1.0) == 1.0);
    CHECK_THROWS_AS(ev("ln(x1)", -1.0), ExprError);
    CHECK_THROWS_AS(ev("1/x1", 0.0), ExprError);
}

TEST_CASE("errors carry byte offsets") {
    try {
        parse_expr("1 + * 2");
        FAIL("no throw");
    } catch (const ExprError& e) {
        CHECK(e.offset() == 4);
    }
    CHECK_THROWS_AS(parse_expr("foo(1)"), ExprError);
    CHECK_THROWS_AS(parse_expr("y1 + 1"), ExprError);
    CHECK_THROWS_AS(parse_expr("sin(1"), ExprError);
    CHECK_THROWS_AS(parse_expr("pow(1)"), ExprError);
}

TEST_CASE("print then parse is structurally the identity") {
    for (const char* s : {"1+2*3", "2^3^2", "(2^3)^2", "-x1^2", "(-x1)^2", "x1-(x2-u1)", "x1/(x2*u1)",
                          "piecewise(x2 <= 2, 0, pow(x2-2,2)*sin(x2-2))", "piecewise(t > 0.5, -t, abs(x1))",
                          "exp(-t)*cos(2.5e-3*x2)", "1-2-3", "1-(2-3)"}) {
        Expr e = parse_expr(s);
        Expr back = parse_expr(to_string(e));
        INFO(s << " -> " << to_string(e));
        CHECK(same(e, back));
    }
}

TEST_CASE("max indices") {
    int nx = 0, nu = 0;
    max_indices(parse_expr("x3 + u2*x1"), nx, nu);
    CHECK(nx == 3);
    CHECK(nu == 2);
}
