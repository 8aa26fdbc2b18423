// One line per acceptance criterion; exit status 1 when any of them fails.
#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>

#include "tristeer/bench.hpp"

int main() {
    std::uint64_t seed = 7;
    if (const char* env = std::getenv("TRISTEER_SEED")) seed = std::strtoull(env, nullptr, 10);
    auto results = tristeer::run_suite("", seed);

    std::map<int, std::string> detail;
    std::map<int, bool> pass;
    for (const auto& r : results) {
        pass.try_emplace(r.criterion, true);
        pass[r.criterion] = pass[r.criterion] && r.pass;
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s%s.%s=%.3g%s%.3g", detail[r.criterion].empty() ? "" : "; ", r.id.c_str(),
                      r.metric.c_str(), r.measured, r.strict ? "<" : "<=", r.threshold);
        detail[r.criterion] += buf;
    }
    int failed = 0;
    for (int c = 1; c <= 10; ++c) {
        bool ok = pass.count(c) && pass[c];
        failed += !ok;
        std::printf("criterion %2d: %s  %s\n", c, ok ? "PASS" : "FAIL", detail.count(c) ? detail[c].c_str() : "not run");
    }
    std::printf("%d of 10 criteria pass\n", 10 - failed);
    return failed ? 1 : 0;
}
