#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const std::string kCli = GRIDVEIL_CLI_PATH;
const std::string kFixtures = GRIDVEIL_FIXTURES;

struct CliResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

CliResult run_cli(const std::string& args) {
    fs::path out_file = fs::temp_directory_path() / "gridveil_cli_out.txt";
    std::string cmd = kCli + " " + args + " > " + out_file.string() + " 2>&1";
    int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_file);
    std::ostringstream buf;
    buf << in.rdbuf();
    r.output = buf.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("validate: well-formed file passes, diagnostics name fields") {
    auto ok = run_cli("validate " + kFixtures + "/smoke.json");
    CHECK(ok.exit_code == 0);
    CHECK(ok.output.find("ok: smoke") != std::string::npos);

    auto bad = run_cli("validate " + kFixtures + "/bad_cover.json");
    CHECK(bad.exit_code == 2);
    CHECK(bad.output.find("cover_rate_per_slot") != std::string::npos);

    // cross-field check: hop count beyond the roster names the precondition
    auto hops = run_cli("validate " + kFixtures +
                        "/smoke.json --set hop_count=5 --set extra_routers=0");
    CHECK(hops.exit_code == 2);
    CHECK(hops.output.find("InsufficientRouters") != std::string::npos);

    auto missing = run_cli("validate /nonexistent/file.json");
    CHECK(missing.exit_code == 4);
}

TEST_CASE("run: smoke scenario exits zero with all artifacts present") {
    auto dir = fresh_dir("gv_cli_smoke");
    auto r = run_cli("run " + kFixtures + "/smoke.json -o " + dir.string());
    CHECK(r.exit_code == 0);
    for (const char* f : {"scenario.json", "trace.jsonl", "adversary.jsonl", "truth.jsonl",
                          "ledger.jsonl", "metrics.csv", "summary.txt", "run.json"})
        CHECK(fs::exists(dir / f));
    CHECK(r.output.find("deadline violations: 0") != std::string::npos);

    auto report = run_cli("report " + dir.string());
    CHECK(report.exit_code == 0);
    CHECK(report.output.find("scenario: smoke") != std::string::npos);
}

TEST_CASE("run: engineered delays exit 3 and list the violation") {
    auto dir = fresh_dir("gv_cli_late");
    auto r = run_cli("run " + kFixtures + "/late.json -o " + dir.string());
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("[VIOLATION]") != std::string::npos);
}

TEST_CASE("run: seed override changes the trace, not the invariant outcome") {
    auto d1 = fresh_dir("gv_cli_seed1");
    auto d2 = fresh_dir("gv_cli_seed2");
    auto r1 = run_cli("run " + kFixtures + "/smoke.json -o " + d1.string());
    auto r2 = run_cli("run " + kFixtures + "/smoke.json --set seed=99 -o " + d2.string());
    CHECK(r1.exit_code == 0);
    CHECK(r2.exit_code == 0);
    CHECK(slurp(d1 / "trace.jsonl") != slurp(d2 / "trace.jsonl"));

    // same seed reproduces the trace byte-exactly
    auto d3 = fresh_dir("gv_cli_seed3");
    auto r3 = run_cli("run " + kFixtures + "/smoke.json -o " + d3.string());
    CHECK(r3.exit_code == 0);
    CHECK(slurp(d1 / "trace.jsonl") == slurp(d3 / "trace.jsonl"));
    CHECK(slurp(d1 / "metrics.csv") == slurp(d3 / "metrics.csv"));
}

TEST_CASE("attack: rows append once and reruns are idempotent") {
    auto dir = fresh_dir("gv_cli_attack");
    REQUIRE(run_cli("run " + kFixtures + "/smoke.json -o " + dir.string()).exit_code == 0);

    auto a1 = run_cli("attack " + dir.string() + " --name timing");
    CHECK(a1.exit_code == 0);
    CHECK(a1.output.find("success_rate") != std::string::npos);
    auto csv1 = slurp(dir / "attacks.csv");
    CHECK(csv1.find("smoke,timing") != std::string::npos);

    auto a2 = run_cli("attack " + dir.string() + " --name timing");
    CHECK(a2.exit_code == 0);
    CHECK(slurp(dir / "attacks.csv") == csv1);  // no duplicate rows

    auto a3 = run_cli("attack " + dir.string() + " --name chain-reaction");
    CHECK(a3.exit_code == 0);
    CHECK(slurp(dir / "attacks.csv").find("fraction_traceable") != std::string::npos);

    auto a4 = run_cli("attack " + dir.string() + " --name zkp-cost --param workloads=1,100");
    CHECK(a4.exit_code == 0);
    CHECK(slurp(dir / "attacks.csv").find("zkp_prove_inline") != std::string::npos);
}

TEST_CASE("attack: unknown names and missing traces fail with their codes") {
    auto dir = fresh_dir("gv_cli_attack2");
    REQUIRE(run_cli("run " + kFixtures + "/smoke.json -o " + dir.string()).exit_code == 0);

    auto unknown = run_cli("attack " + dir.string() + " --name voodoo");
    CHECK(unknown.exit_code == 2);
    CHECK(unknown.output.find("UnknownAttack") != std::string::npos);

    auto missing = run_cli("attack /nonexistent-trace-dir --name timing");
    CHECK(missing.exit_code == 4);
    CHECK(missing.output.find("TraceMissing") != std::string::npos);
}
