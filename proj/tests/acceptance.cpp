// Acceptance run: one PASS/FAIL line per criterion. Every suite runs twice
// with the same seed (the second time with a different worker count) and the
// CSV files written by both runs must match byte for byte.

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "varhom/verify.hpp"

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

struct Verdict {
    bool pass = true;
    double seconds = 0.0;
    std::string detail;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::string out = "acceptance_out";
    std::uint64_t seed = 7;
    app.add_option("--out", out, "directory for suite CSVs");
    app.add_option("--seed", seed, "suite seed");
    CLI11_PARSE(app, argc, argv);

    using namespace varhom;
    const std::filesystem::path dir(out);
    std::map<int, Verdict> crit;
    Verdict det;
    std::string mismatched;

    for (const auto& name : suite_names()) {
        set_default_jobs(1);
        const auto first = run_suite(name, seed);
        const auto a = dir / "run1" / ("verify_" + name + ".csv");
        write_file_atomic(a, first.table.str());
        for (const auto& c : first.checks) {
            if (c.criterion == 0) continue;
            auto& v = crit[c.criterion];
            v.pass = v.pass && c.pass;
            v.seconds += c.seconds;
            if (!c.detail.empty()) v.detail += (v.detail.empty() ? "" : "; ") + c.detail;
        }

        set_default_jobs(4);
        const auto second = run_suite(name, seed);
        const auto b = dir / "run2" / ("verify_" + name + ".csv");
        write_file_atomic(b, second.table.str());
        if (slurp(a) != slurp(b)) {
            det.pass = false;
            mismatched += (mismatched.empty() ? "" : ", ") + name;
        }
    }
    det.detail = mismatched.empty() ? "all suite CSVs identical across reruns (jobs 1 vs 4)"
                                    : "CSV differs for: " + mismatched;
    crit[10] = det;

    CsvTable summary({"criterion", "pass", "seconds"});
    bool all = true;
    for (int k = 1; k <= 10; ++k) {
        auto it = crit.find(k);
        const bool ok = it != crit.end() && it->second.pass;
        all = all && ok;
        const Verdict v = it != crit.end() ? it->second : Verdict{false, 0.0, "no check recorded"};
        std::printf("%s criterion %d (%.2fs)%s%s\n", ok ? "PASS" : "FAIL", k, v.seconds, v.detail.empty() ? "" : " ",
                    v.detail.c_str());
        summary.row().add(k).add(ok).add(v.seconds);
    }
    write_file_atomic(dir / "criteria.csv", summary.str());
    return all ? 0 : 1;
}
