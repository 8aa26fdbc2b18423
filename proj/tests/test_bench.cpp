#include <catch_amalgamated.hpp>

#include "tristeer/bench.hpp"

using namespace tristeer;

TEST_CASE("filter selects cases by glob") {
    auto rs = run_suite("dblint*");
    REQUIRE(!rs.empty());
    for (const auto& r : rs) CHECK(r.id.rfind("dblint", 0) == 0);
    CHECK(run_suite("no-such-case").empty());
}

TEST_CASE("explicit double integrator controls") {
    auto rs = run_suite("dblint-explicit");
    REQUIRE(rs.size() == 2);
    for (const auto& r : rs) {
        CHECK(r.criterion == 1);
        CHECK(r.pass);
    }
}

TEST_CASE("reports list every metric") {
    auto rs = run_suite("ltv-basis");
    std::string md = report_markdown(rs), csv = report_csv(rs);
    for (const auto& r : rs) {
        CHECK(md.find(r.metric) != std::string::npos);
        CHECK(csv.find(r.metric) != std::string::npos);
    }
}

TEST_CASE("metric pass rule") {
    CHECK(bench::metric("m", 1.0, 1.0).pass);
    CHECK_FALSE(bench::metric("m", 1.0, 1.0, true).pass);
    CHECK_FALSE(bench::metric("m", std::nan(""), 1.0).pass);
}
