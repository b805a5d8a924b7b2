#include "bateman/scenario.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

using namespace bateman;

namespace {

void print_result(const ScenarioResult& r, const std::string& out)
{
    for (const auto& c : r.reports) {
        std::cout << (c.pass ? "pass  " : "FAIL  ") << c.report.equation << "  max_norm " << c.report.max_norm
                  << "  tol " << c.tolerance << "  samples " << c.report.samples << "  skipped "
                  << c.report.skipped_singular << "\n";
    }
    if (r.abort) {
        std::cerr << "integration aborted (" << r.abort->kind << ") at level " << r.abort->level << ", t = "
                  << r.abort->t << "; partial dumps kept in " << out << "\n";
    }
    if (!r.error.empty() && !r.abort) std::cerr << "error: " << r.error << "\n";
}

int run_one(const std::string& file, ScenarioMode mode, const RunOptions& opt)
{
    Scenario sc;
    try {
        sc = load_scenario(file);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_invalid;
    }
    if (sc.mode != mode) {
        std::cerr << "error: " << file << " is a " << (sc.mode == ScenarioMode::verify ? "verify" : "simulate")
                  << " scenario\n";
        return exit_invalid;
    }
    const ScenarioResult r = run_scenario(sc, opt);
    print_result(r, opt.out_dir);
    return r.exit_code;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Verification driver for Bateman-type equations"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string out = "bateman-out";
    std::uint64_t seed = 0;
    int jobs = 1;
    app.add_option("--out", out, "Output directory for reports and dumps");
    auto* seed_opt = app.add_option("--seed", seed, "Override the scenario seed");
    app.add_option("--jobs", jobs, "Scenarios run in parallel (suite)")->check(CLI::PositiveNumber);

    std::string file;
    auto* verify = app.add_subcommand("verify", "Run a verify scenario");
    verify->add_option("file", file, "Scenario JSON")->required();
    auto* simulate = app.add_subcommand("simulate", "Run a simulate scenario");
    simulate->add_option("file", file, "Scenario JSON")->required();
    auto* suite = app.add_subcommand("suite", "Run every bundled scenario");
    std::string dir = default_scenario_dir();
    suite->add_option("--scenarios", dir, "Scenario directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_invalid;
    }

    RunOptions opt;
    opt.out_dir = out;
    if (*seed_opt) opt.seed = seed;

    if (*verify) return run_one(file, ScenarioMode::verify, opt);
    if (*simulate) return run_one(file, ScenarioMode::simulate, opt);

    try {
        const SuiteResult s = run_suite(dir, opt, jobs);
        std::cout << s.table;
        return s.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_invalid;
    }
}
