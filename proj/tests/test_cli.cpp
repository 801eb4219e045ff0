#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kCli = STREAMKM_CLI_PATH;

int run_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + kCli + " " + args +
                            " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("streamkm_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

const char* kGoodConfig = R"({
  "schema_version": 1,
  "distribution": {"type": "piecewise1d", "breakpoints": [0.0, 1.0], "densities": [1.0]},
  "k": 2,
  "schedule": {"policy": "generalized_lloyd", "alpha": 0.7, "beta": 0.8},
  "n_max": 2000,
  "seed": 42,
  "stride": 100,
  "oracle": {"method": "exact"},
  "mode": "single_center"
})";

} // namespace

TEST_CASE("cli: run produces trace and summary, exit 0") {
    const auto dir = fresh_dir("run");
    write_file(dir / "config.json", kGoodConfig);
    const int rc = run_cli("run --config " + (dir / "config.json").string() +
                           " --out " + (dir / "out").string());
    CHECK(rc == 0);
    CHECK(fs::exists(dir / "out" / "trace.csv"));
    CHECK(fs::exists(dir / "out" / "summary.json"));
}

TEST_CASE("cli: inadmissible exponents exit 1 citing the region") {
    const auto dir = fresh_dir("badalpha");
    std::string cfg = kGoodConfig;
    const auto pos = cfg.find("0.7");
    cfg.replace(pos, 3, "0.5");
    write_file(dir / "config.json", cfg);
    const std::string cmd = kCli + " run --config " + (dir / "config.json").string() +
                            " --out " + (dir / "out").string() + " 2> " +
                            (dir / "err.txt").string();
    const int rc = WEXITSTATUS(std::system(cmd.c_str()));
    CHECK(rc == 1);
    const auto err = slurp(dir / "err.txt");
    CHECK(err.find("2/3 < alpha < beta < 1") != std::string::npos);
}

TEST_CASE("cli: identical config and seed give byte-identical traces") {
    const auto dir = fresh_dir("repro");
    write_file(dir / "config.json", kGoodConfig);
    REQUIRE(run_cli("run --config " + (dir / "config.json").string() + " --out " +
                    (dir / "a").string()) == 0);
    REQUIRE(run_cli("run --config " + (dir / "config.json").string() + " --out " +
                    (dir / "b").string()) == 0);
    CHECK(slurp(dir / "a" / "trace.csv") == slurp(dir / "b" / "trace.csv"));
    CHECK(slurp(dir / "a" / "summary.json") == slurp(dir / "b" / "summary.json"));
}

TEST_CASE("cli: refuses to overwrite without --force, idempotent with it") {
    const auto dir = fresh_dir("force");
    write_file(dir / "config.json", kGoodConfig);
    const std::string base = "run --config " + (dir / "config.json").string() +
                             " --out " + (dir / "out").string();
    REQUIRE(run_cli(base) == 0);
    CHECK(run_cli(base) == 1);
    const auto before = slurp(dir / "out" / "trace.csv");
    CHECK(run_cli(base + " --force") == 0);
    CHECK(slurp(dir / "out" / "trace.csv") == before);
}

TEST_CASE("cli: seed precedence is flag > env > config") {
    const auto dir = fresh_dir("seedprec");
    write_file(dir / "config.json", kGoodConfig);
    const std::string cfg = (dir / "config.json").string();
    REQUIRE(run_cli("run --config " + cfg + " --out " + (dir / "cfgseed").string()) == 0);
    REQUIRE(run_cli("run --config " + cfg + " --out " + (dir / "envseed").string(),
                    "STREAMKMEANS_SEED=7") == 0);
    REQUIRE(run_cli("run --config " + cfg + " --out " + (dir / "flagseed").string() +
                        " --seed 7",
                    "STREAMKMEANS_SEED=13") == 0);
    REQUIRE(run_cli("run --config " + cfg + " --out " + (dir / "flagseed2").string() +
                        " --seed 7") == 0);
    // env overrides config: different trace than config seed
    CHECK(slurp(dir / "cfgseed" / "trace.csv") != slurp(dir / "envseed" / "trace.csv"));
    // flag overrides env: equals a plain --seed 7 run
    CHECK(slurp(dir / "flagseed" / "trace.csv") == slurp(dir / "flagseed2" / "trace.csv"));
    CHECK(slurp(dir / "flagseed" / "trace.csv") == slurp(dir / "envseed" / "trace.csv"));
}

TEST_CASE("cli: degenerate explicit init is a config error") {
    const auto dir = fresh_dir("degen");
    std::string cfg(kGoodConfig);
    cfg.insert(cfg.rfind('}'), R"(, "init": {"mode": "explicit", "centers": [[0.3],[0.3]]})");
    write_file(dir / "config.json", cfg);
    CHECK(run_cli("run --config " + (dir / "config.json").string() + " --out " +
                  (dir / "out").string()) == 1);
}

TEST_CASE("cli: plot requires rows") {
    const auto dir = fresh_dir("plotempty");
    write_file(dir / "trace.csv", "n,I,f\n");
    CHECK(run_cli("plot --trace " + (dir / "trace.csv").string() + " --out " +
                  (dir / "out").string()) == 1);
}

TEST_CASE("cli: plot renders SVGs from a real trace") {
    const auto dir = fresh_dir("plot");
    write_file(dir / "config.json", kGoodConfig);
    REQUIRE(run_cli("run --config " + (dir / "config.json").string() + " --out " +
                    (dir / "out").string()) == 0);
    CHECK(run_cli("plot --trace " + (dir / "out" / "trace.csv").string() + " --out " +
                  (dir / "plots").string()) == 0);
    const auto svg = slurp(dir / "plots" / "trajectories.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("config_hash=") != std::string::npos);
    CHECK(fs::exists(dir / "plots" / "estimator.svg"));
}

TEST_CASE("cli: sweep aggregates in config order") {
    const auto dir = fresh_dir("sweep");
    std::string base = kGoodConfig;
    std::string sweep = std::string("{\"schema_version\": 1, \"base\": ") + base +
                        ", \"seeds\": [1, 2, 3]}";
    write_file(dir / "sweep.json", sweep);
    CHECK(run_cli("sweep --config " + (dir / "sweep.json").string() + " --out " +
                  (dir / "out").string() + " --jobs 2") == 0);
    CHECK(fs::exists(dir / "out" / "run_0" / "trace.csv"));
    CHECK(fs::exists(dir / "out" / "run_2" / "summary.json"));
    const auto rep = slurp(dir / "out" / "report.json");
    CHECK(rep.find("\"runs\"") != std::string::npos);
    // deterministic aggregation: rerun reproduces the report byte for byte
    const auto first = rep;
    REQUIRE(run_cli("sweep --config " + (dir / "sweep.json").string() + " --out " +
                    (dir / "out").string() + " --jobs 3 --force") == 0);
    CHECK(slurp(dir / "out" / "report.json") == first);
}

TEST_CASE("cli: check-gradient runs the FD suite") {
    const auto dir = fresh_dir("cg");
    CHECK(run_cli("check-gradient --out " + (dir / "out").string() +
                  " --probes 50 --seed 1") == 0);
    const auto rep = slurp(dir / "out" / "report.json");
    CHECK(rep.find("\"pass\": true") != std::string::npos);
}

TEST_CASE("cli: check-bounds reports the strict horizon finding and exits 2") {
    const auto dir = fresh_dir("cb");
    CHECK(run_cli("check-bounds --out " + (dir / "out").string() + " --seed 1") == 2);
    const auto rep = slurp(dir / "out" / "report.json");
    // harmonic and displacement tables are clean; the strict horizon lower
    // bound carries the documented violations while the corrected form is 0
    CHECK(rep.find("\"lower_violations_corrected\": 0") != std::string::npos);
    CHECK(rep.find("\"lower_violations_strict\": 9472") != std::string::npos);
    CHECK(rep.find("\"harmonic\"") != std::string::npos);
    CHECK(fs::exists(dir / "out" / "bounds_check.csv"));
}

TEST_CASE("cli: concentration experiment end to end") {
    const auto dir = fresh_dir("conc");
    CHECK(run_cli("concentration --out " + (dir / "out").string() +
                  " --runs 10 --seed 2 --jobs 2") == 0);
    const auto rep = slurp(dir / "out" / "report.json");
    CHECK(rep.find("\"first_qualifying_n\"") != std::string::npos);
    CHECK(rep.find("\"epsilon0\"") != std::string::npos);
    CHECK(rep.find("\"pass\": true") != std::string::npos);
    CHECK(fs::exists(dir / "out" / "concentration.csv"));
}
