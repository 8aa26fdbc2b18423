#include <catch_amalgamated.hpp>

#include <cmath>

#include "tristeer/smoother.hpp"

using namespace tristeer;

static Vec s(double v) { return Vec::Constant(1, v); }

TEST_CASE("smoothed staircase meets pins, budget and C1") {
    Control v = Control::piecewise_constant({0.0, 0.2, 0.5, 0.9, 1.0}, {s(1.0), s(-2.0), s(0.5), s(3.0)});
    SmoothingSpec spec;
    spec.l1_budget = 1e-3;
    spec.left = {s(0.7), s(0.0)};
    spec.right = {s(-1.0), s(2.0)};
    SmoothingReport rep;
    Control u = smooth_control(v, spec, &rep);
    CHECK(u.value(0.0) == s(0.7));
    CHECK(u.derivative(0.0) == s(0.0));
    CHECK(u.value(1.0) == s(-1.0));
    CHECK(u.derivative(1.0) == s(2.0));
    CHECK(rep.l1_distance <= 1e-3);
    CHECK(l1_distance(u, v) <= 1e-3 * 1.01);
    CHECK(u.sup_norm() < rep.sup_bound);
    // C1: value and slope limits agree at interior knots
    const auto& k = u.breakpoints();
    for (std::size_t i = 1; i + 1 < k.size(); ++i) {
        double h = 1e-13;
        CHECK(std::abs(u.value(k[i] - h)(0) - u.value(k[i] + h)(0)) < 1e-6);
        double d = std::abs(u.derivative(k[i])(0));
        CHECK(std::abs(u.derivative(k[i] - h)(0) - u.derivative(k[i] + h)(0)) < 1e-3 * (1.0 + d));
    }
}

TEST_CASE("unreachable budget is an error") {
    Control v = Control::piecewise_constant({0.0, 1.0}, {s(0.0)});
    SmoothingSpec spec;
    spec.l1_budget = 1e-14;
    spec.left = {s(5.0), s(0.0)};
    spec.right = {s(0.0), s(0.0)};
    spec.min_width = 1e-6;
    CHECK_THROWS_AS(smooth_control(v, spec), DomainError);
}

TEST_CASE("family fit with pinned left end") {
    auto f = [](double t) { return s(std::sin(3 * t)); };
    auto df = [](double t) { return s(3 * std::cos(3 * t)); };
    FitReport rep;
    Control u = smooth_family_segment(f, df, 0.0, 1.0, s(0.001), s(2.0), 0.01, &rep);
    CHECK(u.value(0.0) == s(0.001));
    CHECK(u.derivative(0.0) == s(2.0));
    CHECK(rep.sup_error < 0.01);
    for (int i = 0; i <= 200; ++i) {
        double t = i / 200.0;
        CHECK(std::abs(u.value(t)(0) - f(t)(0)) < 0.01);
    }
    CHECK_THROWS_AS(smooth_family_segment(f, df, 0.0, 1.0, s(0.5), s(0.0), 0.01), DomainError);
}
