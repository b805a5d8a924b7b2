#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bateman/io.hpp"
#include "bateman/scenario.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <sys/wait.h>

using namespace bateman;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string output;
};

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("bateman_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Run cli(const std::string& args, const fs::path& dir)
{
    const fs::path log = dir / "cli.log";
    const std::string cmd = std::string(BATEMAN_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = read_text(log.string());
    return r;
}

std::string bundled(const std::string& name) { return default_scenario_dir() + "/" + name + ".json"; }

fs::path write_scenario(const fs::path& dir, const std::string& name, const std::string& body)
{
    const fs::path p = dir / (name + ".json");
    write_text(p.string(), body);
    return p;
}

nlohmann::json report(const fs::path& dir, const std::string& name)
{
    return nlohmann::json::parse(read_text((dir / (name + ".report.json")).string()));
}

const char* kNonlinear = R"({"name": "tight", "paper_anchor": "test", "seed": 1,
  "checks": [{"equation": "complex_bateman", "tolerance": 0}],
  "cases": [{"type": "implicit_fg", "F": "phi^3 + phi - x1*x2", "G": "sin(xb1) + xb2*phi^2"}]})";

}  // namespace

TEST_CASE("bundled holomorphic-sum scenario passes")
{
    const fs::path d = scratch("holo");
    const Run r = cli("verify " + bundled("holo_sum_eq1") + " --out " + d.string(), d);
    CHECK(r.code == 0);
    const auto j = report(d, "holo_sum_eq1");
    CHECK(j["version"] == "0.1.0");
    CHECK(j["seed"] == 102);
    CHECK(j["reports"].size() == 5);
    for (const auto& e : j["reports"]) {
        CHECK(e["max_norm"].get<double>() <= 1e-12);
        CHECK(e["samples"] == 200);
        CHECK(e["pass"] == true);
        for (const char* key : {"equation", "samples", "skipped", "max_norm", "rms_norm", "tolerance", "pass"}) {
            CHECK(e.contains(key));
        }
    }
}

TEST_CASE("zero tolerance fails unless the residual is exactly zero")
{
    const fs::path d = scratch("tight");
    CHECK(cli("verify " + write_scenario(d, "tight", kNonlinear).string() + " --out " + d.string(), d).code == 1);
    CHECK(report(d, "tight")["reports"][0]["pass"] == false);
    CHECK(cli("verify " + bundled("linear_exact") + " --out " + d.string(), d).code == 0);
    CHECK(report(d, "linear_exact")["reports"][0]["max_norm"] == 0.0);
}

TEST_CASE("malformed input exits with 2")
{
    const fs::path d = scratch("malformed");
    const auto bad_expr = write_scenario(d, "bad", R"({"name": "bad", "paper_anchor": "test",
      "checks": [{"equation": "complex_bateman", "tolerance": 1e-9}],
      "cases": [{"type": "holo_sum", "f": "x1 + * x2", "g": "xb1"}]})");
    const Run r = cli("verify " + bad_expr.string() + " --out " + d.string(), d);
    CHECK(r.code == 2);
    CHECK(r.output.find("position") != std::string::npos);

    CHECK(cli("verify " + write_scenario(d, "json", "{ not json").string(), d).code == 2);
    CHECK(cli("verify " + (d / "missing.json").string(), d).code == 2);
    CHECK(cli("simulate " + bundled("holo_sum_eq1"), d).code == 2);
    CHECK(cli("verify " + bundled("constant_data"), d).code == 2);
    CHECK(cli("frobnicate", d).code == 2);
    CHECK(cli("verify", d).code == 2);
    const auto neg = write_scenario(d, "neg", R"({"name": "neg", "paper_anchor": "test",
      "checks": [{"equation": "complex_bateman", "tolerance": -1}],
      "cases": [{"type": "holo_sum", "f": "x1", "g": "xb1"}]})");
    CHECK(cli("verify " + neg.string(), d).code == 2);
    const auto box = write_scenario(d, "box", R"({"name": "box", "paper_anchor": "test",
      "checks": [{"equation": "complex_bateman", "tolerance": 1e-9}],
      "cases": [{"type": "holo_sum", "f": "x1", "g": "xb1",
                 "sampling": {"count": 5, "box": [[0, 1], [1, 0], [0, 1], [0, 1]]}}]})");
    CHECK(cli("verify " + box.string(), d).code == 2);
}

TEST_CASE("numerical failures exit with 3")
{
    const fs::path d = scratch("numerical");
    const auto s = write_scenario(d, "degenerate", R"({"name": "degenerate", "paper_anchor": "test",
      "cases": [{"type": "leznov", "n": 2, "Q": ["phi - x2"], "P": ["xb1 + phi^3"],
                 "checks": [{"equation": "zero_curvature", "tolerance": 1e-8}]}]})");
    const Run r = cli("verify " + s.string() + " --out " + d.string(), d);
    CHECK(r.code == 3);
    CHECK(r.output.find("error") != std::string::npos);
    CHECK(report(d, "degenerate")["exit_code"] == 3);
}

TEST_CASE("simulate: constant data, u = v reduction, steep data")
{
    const fs::path d = scratch("simulate");
    CHECK(cli("simulate " + bundled("constant_data") + " --out " + d.string(), d).code == 0);
    for (const auto& e : report(d, "constant_data")["reports"]) CHECK(e["max_norm"] == 0.0);
    CHECK(fs::exists(d / "constant_data.case0.grid.csv"));
    CHECK(fs::exists(d / "constant_data.case0.grid.csv.json"));

    CHECK(cli("simulate " + bundled("uv_reduction") + " --out " + d.string(), d).code == 0);
    CHECK(report(d, "uv_reduction")["reports"].size() == 5);

    const Run r = cli("simulate " + bundled("steep_data") + " --out " + d.string(), d);
    CHECK(r.code == 4);
    const auto j = report(d, "steep_data");
    CHECK(j["abort"]["kind"] == "crossing");
    CHECK(j["abort"]["level"].get<int>() > 1);
    CHECK(j["abort"]["t"].get<double>() < 1.0);
    const CsvTable partial = read_csv((d / "steep_data.case0.partial.csv").string());
    CHECK(!partial.rows.empty());
}

TEST_CASE("reports are byte-identical across runs; --seed is recorded")
{
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    CHECK(cli("verify " + bundled("implicit_eq1") + " --out " + a.string(), a).code == 0);
    CHECK(cli("verify " + bundled("implicit_eq1") + " --out " + b.string(), b).code == 0);
    CHECK(read_text((a / "implicit_eq1.report.json").string()) == read_text((b / "implicit_eq1.report.json").string()));
    CHECK(cli("verify " + bundled("implicit_eq1") + " --seed 7 --out " + b.string(), b).code == 0);
    CHECK(report(b, "implicit_eq1")["seed"] == 7);
}

TEST_CASE("suite runs every bundled scenario")
{
    const fs::path d = scratch("suite");
    const Run r = cli("suite --jobs 3 --out " + d.string(), d);
    CHECK(r.code == 0);
    std::size_t count = 0;
    for (const auto& e : fs::directory_iterator(default_scenario_dir())) count += e.path().extension() == ".json";
    CHECK(r.output.find(std::to_string(count) + " scenarios, " + std::to_string(count) + " passed") !=
          std::string::npos);
    // Header plus one row per scenario plus the summary line.
    CHECK(std::count(r.output.begin(), r.output.end(), '\n') == static_cast<long>(count + 2));

    const Run serial = cli("suite --jobs 1", d);
    CHECK(serial.output == r.output);
}

TEST_CASE("suite with one tolerance tightened fails that row")
{
    const fs::path d = scratch("suite_tight");
    const fs::path dir = d / "scenarios";
    fs::create_directories(dir);
    fs::copy(bundled("holo_sum_eq1"), dir / "holo_sum_eq1.json");
    write_scenario(dir, "tight", kNonlinear);
    const Run r = cli("suite --scenarios " + dir.string(), d);
    CHECK(r.code == 1);
    CHECK(r.output.find("2 scenarios, 1 passed") != std::string::npos);
    const auto row = r.output.find("\ntight");
    REQUIRE(row != std::string::npos);
    CHECK(r.output.find("FAIL", row) != std::string::npos);
}

TEST_CASE("skipping more than a fifth of the samples fails")
{
    ResidualReport rep;
    rep.samples = 7;
    rep.skipped_singular = 3;
    CHECK_FALSE(judge(rep, 1.0).pass);
    rep.skipped_singular = 1;
    CHECK(judge(rep, 1.0).pass);
    rep.samples = 0;
    CHECK_FALSE(judge(rep, 1.0).pass);
}

TEST_CASE("scenario validation")
{
    CHECK_THROWS_AS(parse_scenario(R"({"paper_anchor": "a", "cases": []})"), ScenarioError);
    CHECK_THROWS_AS(parse_scenario(R"({"name": "x y", "paper_anchor": "a", "cases": [{}]})"), ScenarioError);
    CHECK_THROWS_AS(parse_scenario(R"({"name": "x", "paper_anchor": "a",
      "cases": [{"type": "holo_sum", "f": "x1", "g": "xb1", "checks": [{"equation": "born_infeld", "tolerance": 1}]}]})"),
                    ScenarioError);
    CHECK_THROWS_AS(parse_scenario(R"({"name": "x", "paper_anchor": "a",
      "cases": [{"type": "holo_sum", "f": "x1", "g": "xb1", "checks": [{"equation": "complex_bateman", "tolerance_h2": 1}]}]})"),
                    ScenarioError);
    CHECK_THROWS_AS(parse_scenario(R"({"name": "x", "paper_anchor": "a",
      "cases": [{"type": "hydro", "u0": "1", "v0": "1", "grid": {"nx": 8},
                 "checks": [{"equation": "drift", "tolerance": 1}]}]})"),
                    ScenarioError);
    const Scenario s = parse_scenario(R"({"name": "x", "paper_anchor": "a", "seed": 18446744073709551615,
      "cases": [{"type": "holo_sum", "f": "x1", "g": "xb1", "checks": [{"equation": "complex_bateman", "tolerance": 1}]}]})");
    CHECK(s.seed == 18446744073709551615ull);
    CHECK(s.mode == ScenarioMode::verify);
}
