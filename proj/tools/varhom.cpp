// Command-line experiment runner.
//
//   varhom run configs/homogenize.toml
//   varhom homogenize --config configs/homogenize.toml --out results --jobs 4
//   varhom verify vitali --seed 7
//
// Exit codes: 0 success, 1 failed verification, 2 invalid input, 3 solver failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "varhom/runner.hpp"
#include "varhom/verify.hpp"

namespace {

struct Flags {
    std::string config;
    std::string out;
    int jobs = 0;
    std::optional<std::uint64_t> seed;
};

int run_op(const std::string& op, const Flags& f) {
    using namespace varhom;
    const auto cfg = ExperimentConfig::load(f.config);
    const auto result = run_operation(cfg, op, RunOptions{f.seed});
    const std::filesystem::path dir = !f.out.empty() ? f.out : cfg.string("output.dir", ".");
    const auto [csv, json] = write_artifacts(result, dir);
    std::printf("%s: %s [%s, %s]\n", result.operation.c_str(), result.message.c_str(), csv.string().c_str(),
                json.string().c_str());
    return 0;
}

int run_verify(const std::string& suite, const Flags& f) {
    using namespace varhom;
    const auto res = run_suite(suite, f.seed.value_or(7));
    for (const auto& c : res.checks) {
        if (c.criterion == 0) continue;
        std::printf("%s criterion %d %s (%.2fs) %s\n", c.pass ? "PASS" : "FAIL", c.criterion, c.name.c_str(),
                    c.seconds, c.detail.c_str());
    }
    if (!f.out.empty()) write_file_atomic(std::filesystem::path(f.out) / ("verify_" + suite + ".csv"), res.table.str());
    return res.pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cell problems, homogenized densities and set-function envelopes"};
    app.require_subcommand(1);
    Flags f;
    std::uint64_t seed = 0;
    auto add_common = [&](CLI::App* sub, bool config) {
        if (config) sub->add_option("--config", f.config, "TOML experiment file")->required();
        sub->add_option("--out", f.out, "output directory (overrides output.dir)");
        sub->add_option("--jobs", f.jobs, "worker threads (0 = logical cores)")->check(CLI::NonNegativeNumber);
        sub->add_option("--seed", seed, "random seed (overrides the config)");
    };

    std::string op;
    for (const auto& name : varhom::operation_names()) {
        auto* sub = app.add_subcommand(name, "run the '" + name + "' operation");
        add_common(sub, true);
        sub->callback([&op, name] { op = name; });
    }
    auto* run = app.add_subcommand("run", "run the operation named in the config");
    run->add_option("config", f.config, "TOML experiment file")->required();
    add_common(run, false);

    std::string suite;
    auto* verify = app.add_subcommand("verify", "run an acceptance suite");
    verify->add_option("suite", suite, "convex, homog1d, laminate2d, doublewell, vitali or sandwich")->required();
    add_common(verify, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    for (auto* sub : app.get_subcommands())
        if (sub->count("--seed") > 0) f.seed = seed;

    try {
        varhom::set_default_jobs(f.jobs);
        if (verify->parsed()) return run_verify(suite, f);
        return run_op(run->parsed() ? std::string() : op, f);
    } catch (const varhom::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const varhom::SolverError& e) {
        std::fprintf(stderr, "solver failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
