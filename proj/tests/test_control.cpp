#include <catch_amalgamated.hpp>

#include "tristeer/control.hpp"

using namespace tristeer;
using Catch::Matchers::WithinAbs;

static Vec s(double v) { return Vec::Constant(1, v); }

TEST_CASE("Hermite pieces interpolate values and slopes") {
    Control c = Control::hermite({0.0, 1.0, 3.0}, {s(1.0), s(-2.0), s(0.5)}, {s(0.0), s(4.0), s(-1.0)});
    CHECK(c.value(0.0) == s(1.0));
    CHECK(c.value(1.0) == s(-2.0));
    CHECK(c.value(3.0) == s(0.5));
    CHECK(c.derivative(1.0) == s(4.0));
    CHECK(c.derivative(3.0) == s(-1.0));
    // cubic through (0,0) slope 0 and (1,1) slope 0 is 3t^2 - 2t^3
    Control d = Control::hermite({0.0, 1.0}, {s(0.0), s(1.0)}, {s(0.0), s(0.0)});
    CHECK_THAT(d.value(0.25)(0), WithinAbs(3 * 0.0625 - 2 * 0.015625, 1e-15));
}

TEST_CASE("piecewise constant controls") {
    Control c = Control::piecewise_constant({0.0, 0.5, 1.0}, {s(1.0), s(3.0)});
    CHECK(c.value(0.25) == s(1.0));
    CHECK(c.value(0.75) == s(3.0));
    CHECK(c.sup_norm() == 3.0);
    CHECK_THAT(l1_distance(c, Control::constant(0.0, 1.0, s(1.0))), WithinAbs(1.0, 1e-9));
    CHECK_THAT(sup_distance(c, Control::constant(0.0, 1.0, s(1.0))), WithinAbs(2.0, 1e-12));
}

TEST_CASE("concat, restrict and reverse") {
    Control a = Control::hermite({0.0, 1.0}, {s(0.0), s(1.0)}, {s(1.0), s(1.0)});
    Control b = Control::hermite({1.0, 2.0}, {s(1.0), s(3.0)}, {s(1.0), s(2.0)});
    Control c = Control::concat(a, b);
    CHECK(c.start() == 0.0);
    CHECK(c.end() == 2.0);
    CHECK(c.value(0.5) == a.value(0.5));
    CHECK_THAT(c.value(1.5)(0), WithinAbs(b.value(1.5)(0), 1e-15));
    Control r = c.restricted(0.5, 1.5);
    CHECK_THAT(r.value(1.2)(0), WithinAbs(c.value(1.2)(0), 1e-14));
    Control rev = c.reversed(0.0, 2.0);
    CHECK_THAT(rev.value(0.3)(0), WithinAbs(c.value(1.7)(0), 1e-14));
    CHECK_THAT(rev.derivative(0.3)(0), WithinAbs(-c.derivative(1.7)(0), 1e-13));
}

TEST_CASE("sup norm of a cubic finds interior extrema") {
    // 3t^2 - 2t^3 on [0, 1.5] peaks at t = 1 with value 1; ends 0 and 0
    Control c = Control::hermite({0.0, 1.5}, {s(0.0), s(3 * 2.25 - 2 * 3.375)}, {s(0.0), s(6 * 1.5 - 6 * 2.25)});
    CHECK_THAT(c.sup_norm(), WithinAbs(1.0, 1e-12));
}
