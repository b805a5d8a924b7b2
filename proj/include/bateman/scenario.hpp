#pragma once

#include "bateman/residuals.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bateman {

inline constexpr const char* kVersion = "0.1.0";

/// Schema or value problem in a scenario file.
class ScenarioError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class ScenarioMode { verify, simulate };

/// A parsed scenario file. `body` keeps the raw JSON; every expression and
/// tolerance in it has been checked by load.
struct Scenario {
    std::string name;
    std::string anchor;
    ScenarioMode mode = ScenarioMode::verify;
    std::uint64_t seed = 0;
    std::string expect_abort;  // "", "crossing" or "cfl"
    nlohmann::ordered_json body;
};

/// Throws ScenarioError, ParseError (expressions) or nlohmann::json errors.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);

struct CheckReport {
    ResidualReport report;
    double tolerance = 0.0;
    bool pass = false;
};

/// A check passes when it has samples, max_norm <= tolerance and at most 20%
/// of the requested samples were skipped as singular.
CheckReport judge(ResidualReport report, double tolerance);

inline constexpr double kMaxSkippedFraction = 0.2;

enum ExitCode { exit_pass = 0, exit_fail = 1, exit_invalid = 2, exit_numerical = 3, exit_abort = 4 };

struct AbortRecord {
    std::string kind;
    int level = 0;
    double t = 0.0;
};

struct ScenarioResult {
    std::string name;
    std::string anchor;
    std::uint64_t seed = 0;
    std::vector<CheckReport> reports;
    std::optional<AbortRecord> abort;
    std::string error;
    std::vector<std::string> files;  // written outputs, relative to out_dir
    int exit_code = exit_pass;

    bool pass() const noexcept { return exit_code == exit_pass; }
};

struct RunOptions {
    std::string out_dir;                  // empty: write nothing
    std::optional<std::uint64_t> seed;    // overrides the scenario seed
};

/// Runs a scenario in its own mode. Never throws for scenario content:
/// failures are folded into exit_code and error.
ScenarioResult run_scenario(const Scenario& scenario, const RunOptions& options);

/// Loads and runs; load problems give exit_invalid.
ScenarioResult run_scenario_file(const std::string& path, const RunOptions& options);

/// Deterministic report text (fixed key order, round-trip doubles).
std::string report_json(const ScenarioResult& result);

/// Directory of the bundled scenarios.
std::string default_scenario_dir();

struct SuiteResult {
    std::vector<ScenarioResult> rows;  // sorted by file name
    std::string table;
    int exit_code = exit_pass;
};

/// Every *.json scenario in `dir`, `jobs` at a time. Scenarios with
/// expect_abort pass when the expected abort occurs.
SuiteResult run_suite(const std::string& dir, const RunOptions& options, int jobs = 1);

}  // namespace bateman
