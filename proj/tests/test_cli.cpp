#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tristeer/cli.hpp"

using namespace tristeer;
namespace fs = std::filesystem;

namespace {

int run_cli(std::vector<std::string> args, std::string* out_text = nullptr) {
    args.insert(args.begin(), "tristeer");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text) *out_text = out.str();
    return code;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<double>> read_rows(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> r;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) r.push_back(std::stod(cell));
        rows.push_back(r);
    }
    return rows;
}

fs::path scratch() {
    fs::path d = fs::temp_directory_path() / "tristeer_cli_test";
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("plan then simulate reaches the target") {
    fs::path d = scratch();
    REQUIRE(run_cli({"plan", "--system", "example11", "--x0", "0,0", "--xT", "1,2.5", "--out", (d / "plan.json").string(),
                     "--csv", (d / "traj.csv").string(), "--seed", "7"}) == 0);
    REQUIRE(run_cli({"simulate", "--system", "example11", "--control", (d / "plan.json").string(), "--x0", "0,0",
                     "--csv", (d / "sim.csv").string()}) == 0);
    auto rows = read_rows(d / "sim.csv");
    REQUIRE(!rows.empty());
    const auto& last = rows.back();
    CHECK(last[0] == 1.0);
    CHECK(std::hypot(last[1] - 1.0, last[2] - 2.5) <= 1e-4);
    // reloaded plan reproduces the planning-time endpoint
    json j = read_json((d / "plan.json").string());
    auto ep = j.at("endpoint").get<std::vector<double>>();
    CHECK(std::hypot(last[1] - ep[0], last[2] - ep[1]) <= 1e-9);
    CHECK(j.at("stages").size() == 4);
    CHECK(j.at("control").contains("coefficients"));
    auto traj = read_rows(d / "traj.csv");
    CHECK(traj.back()[1] == last[1]);
}

TEST_CASE("identical arguments give identical bytes") {
    fs::path d = scratch();
    std::vector<std::string> base{"plan", "--system", "chain3", "--x0", "0,0", "--xT", "1,-1", "--seed", "3"};
    auto a = base, b = base;
    a.insert(a.end(), {"--out", (d / "a.json").string()});
    b.insert(b.end(), {"--out", (d / "b.json").string()});
    REQUIRE(run_cli(a) == 0);
    REQUIRE(run_cli(b) == 0);
    CHECK(slurp(d / "a.json") == slurp(d / "b.json"));
}

TEST_CASE("zero-length simulation gives one row equal to x0") {
    fs::path d = scratch();
    json c = control_to_json(Control::constant(0.0, 1.0, Vec::Constant(1, 2.0)));
    write_text((d / "u.json").string(), c.dump());
    REQUIRE(run_cli({"simulate", "--system", "dblint", "--control", (d / "u.json").string(), "--x0", "0.25,-1.5",
                     "--from", "0.3", "--to", "0.3", "--csv", (d / "z.csv").string()}) == 0);
    auto rows = read_rows(d / "z.csv");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0][1] == 0.25);
    CHECK(rows[0][2] == -1.5);
}

TEST_CASE("continuity sweep decreases") {
    fs::path d = scratch();
    REQUIRE(run_cli({"sweep-continuity", "--system", "example11", "--x0", "0,0", "--xT", "1,2.5", "--levels", "4",
                     "--out", (d / "sweep.csv").string()}) == 0);
    auto rows = read_rows(d / "sweep.csv");
    REQUIRE(rows.size() == 4);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i][3] < rows[i - 1][3]);
}

TEST_CASE("anchor command and seed override") {
    fs::path d = scratch();
    REQUIRE(run_cli({"anchor", "--system", "example11", "--t1", "0.4", "--seed", "1", "--out",
                     (d / "a1.json").string()}) == 0);
    json a = read_json((d / "a1.json").string());
    CHECK(a.at("t1").get<double>() == 0.4);
    ::setenv("TRISTEER_SEED", "1", 1);
    int code = run_cli({"anchor", "--system", "example11", "--t1", "0.4", "--seed", "99", "--out",
                        (d / "a2.json").string()});
    ::unsetenv("TRISTEER_SEED");
    REQUIRE(code == 0);
    CHECK(slurp(d / "a1.json") == slurp(d / "a2.json"));
}

TEST_CASE("exit codes") {
    fs::path d = scratch();
    CHECK(run_cli({"plan", "--system", "nope", "--x0", "0,0", "--xT", "1,1"}) == 2);
    CHECK(run_cli({"plan", "--system", "example11", "--x0", "0,0,0", "--xT", "1,1"}) == 2);
    CHECK(run_cli({"plan", "--system", "example11", "--x0", "0,a", "--xT", "1,1"}) == 2);
    CHECK(run_cli({"plan", "--system", "example11", "--x0", "0,0"}) == 2);
    CHECK(run_cli({"plan", "--system", "example11", "--x0", "0,0", "--xT", "1,1", "--perturb", "nope"}) == 2);
    CHECK(run_cli({"frobnicate"}) == 2);
    // anchor in the flat region: the planner fails
    TriangularSystem sys = builtin_system("example11");
    RegularChain bad = make_chain(sys, 0.5, {Vec::Zero(1), Vec::Constant(1, 1.0), Vec::Zero(1)});
    write_text((d / "bad.json").string(), anchor_to_json("example11", bad).dump());
    CHECK(run_cli({"plan", "--system", "example11", "--x0", "0,0", "--xT", "1,2.5", "--anchor-in",
                   (d / "bad.json").string(), "--out", (d / "x.json").string()}) == 1);
}

TEST_CASE("system from a config file") {
    fs::path d = scratch();
    write_text((d / "di.json").string(), R"({"name":"di","dims":[1,1,1],"rhs":["x2","u1"]})");
    REQUIRE(run_cli({"plan", "--system", (d / "di.json").string(), "--x0", "0,0", "--xT", "0.5,-0.5", "--out",
                     (d / "di_plan.json").string()}) == 0);
    CHECK(read_json((d / "di_plan.json").string()).at("endpoint_error").get<double>() <= 1e-4);
    write_text((d / "broken.json").string(), R"({"dims":[1,1,1],"rhs":["x2 +","u1"]})");
    CHECK(run_cli({"plan", "--system", (d / "broken.json").string(), "--x0", "0,0", "--xT", "1,1"}) == 2);
}

TEST_CASE("installed binary runs") {
    fs::path d = scratch();
    std::string cmd = std::string(TRISTEER_CLI) + " anchor --system dblint --out " + (d / "bin.json").string();
    CHECK(std::system(cmd.c_str()) == 0);
    CHECK(read_json((d / "bin.json").string()).contains("x_star"));
}
