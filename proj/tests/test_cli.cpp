// End-to-end checks of the command-line binary: exit codes, artifact layout,
// pinned CSV headers, and run-to-run determinism.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

using nlohmann::json;

namespace {

const std::string kCli = CLAB_CLI_PATH;
const std::string kSrc = CLAB_SOURCE_DIR;
const std::string kOu = kSrc + "/scenarios/ou_linear.scn";

struct RunResult {
    int code = -1;
    std::string output;
};

RunResult run(const std::string& args) {
    const std::string log = "/tmp/clab_cli_run.log";
    const std::string cmd = kCli + " " + args + " > " + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string first_line(const std::string& text) {
    return text.substr(0, text.find('\n'));
}

bool exists(const std::string& path) { return std::ifstream(path).good(); }

std::string write_temp_scenario(const std::string& name, const std::string& body) {
    const std::string path = "/tmp/" + name;
    std::ofstream out(path);
    out << body;
    return path;
}

} // namespace

TEST_CASE("usage errors exit with code 2") {
    CHECK(run("").code == 2);
    CHECK(run("constants").code == 2);                         // missing --scenario
    CHECK(run("--scenario " + kOu).code == 2);                 // missing subcommand
    CHECK(run("--scenario " + kOu + " frobnicate").code == 2); // unknown subcommand
    CHECK(run("--scenario " + kOu + " constants --bogus 1").code == 2);
    CHECK(run("--scenario /nonexistent.scn constants").code == 2);
    CHECK(run("--scenario " + kOu + " --dt -0.5 constants").code == 2);
    CHECK(run("--scenario " + kOu + " --n-paths 0 constants").code == 2);
    CHECK(run("--help").code == 0);
}

TEST_CASE("malformed scenario files name the offending key") {
    const std::string bad = write_temp_scenario(
        "clab_bad.scn",
        "[potential]\nfamily=quadratic\nwiggle=3\n"
        "[perturbation]\nfamily=zero\n[sim]\ndt=0.01\n[mode]\nassumptions=\"A1-A2\"\n");
    const auto r = run("--scenario " + bad + " constants");
    CHECK(r.code == 2);
    CHECK(r.output.find("wiggle") != std::string::npos);
}

TEST_CASE("constants subcommand writes the profile tables") {
    const std::string out = "/tmp/clab_cli_constants";
    std::system(("rm -rf " + out).c_str());
    const auto r = run("--scenario " + kOu + " --out " + out + " constants");
    CHECK(r.code == 0);
    for (const std::string f :
         {"constants_kU.json", "constants_kbar.json", "constants_kU.csv", "constants_kbar.csv"})
        CHECK(exists(out + "/" + f));
    CHECK(first_line(slurp(out + "/constants_kU.csv")) == "r,phi,Phi,g,f,fprime");

    const json kU = json::parse(slurp(out + "/constants_kU.json"));
    CHECK(kU["schema_version"] == 1);
    CHECK(kU["uniformly_convex_mode"].get<bool>());
    CHECK(kU["lambda"].get<double>() == doctest::Approx(1.0));
    const json kbar = json::parse(slurp(out + "/constants_kbar.json"));
    CHECK(kbar["C"].get<double>() == doctest::Approx(0.30326533).epsilon(1e-5));
}

TEST_CASE("bounds subcommand reports the pinned Lipschitz constant") {
    const std::string out = "/tmp/clab_cli_bounds";
    std::system(("rm -rf " + out).c_str());
    const auto r = run("--scenario " + kOu + " --out " + out + " bounds");
    CHECK(r.code == 0);
    const json b = json::parse(slurp(out + "/bounds.json"));
    CHECK(b["lip_case"] == "Thm2.3-eq2");
    CHECK(b["lipschitz"]["value"].get<double>() == doctest::Approx(38.9462).epsilon(1e-4));
    CHECK(b["comparison"]["value"].get<double>() == doctest::Approx(1808.042).epsilon(1e-4));
    CHECK(first_line(slurp(out + "/envelopes.csv")) == "t,grad_env,hess_env");
}

TEST_CASE("couple subcommand writes the contraction table") {
    const std::string out = "/tmp/clab_cli_couple";
    std::system(("rm -rf " + out).c_str());
    const auto r =
        run("--scenario " + kOu + " --out " + out + " --n-paths 400 --dt 0.002 couple");
    CHECK(r.code == 0);
    CHECK(first_line(slurp(out + "/contraction.csv")) ==
          "t,mean_f_delta,se_f_delta,envelope_f,frac_distinct,envelope_q");
}

TEST_CASE("value subcommand writes the field and residual tables") {
    const std::string out = "/tmp/clab_cli_value";
    std::system(("rm -rf " + out).c_str());
    const auto r = run("--scenario " + kOu + " --out " + out + " --n-paths 400 value");
    CHECK(r.code == 0);
    CHECK(first_line(slurp(out + "/field.csv")) == "t,x0,phi,se_phi,grad0,se_grad");
    CHECK(first_line(slurp(out + "/hjb.csv")) == "t,x0,residual,budget");
}

TEST_CASE("transport subcommand writes the flow, map, and report") {
    const std::string out = "/tmp/clab_cli_transport";
    std::system(("rm -rf " + out).c_str());
    const auto r = run("--scenario " + kOu + " --out " + out + " --n-paths 300 transport");
    CHECK(r.code == 0);
    CHECK(first_line(slurp(out + "/flow.csv")) == "t,anchor,x_S");
    CHECK(first_line(slurp(out + "/map.csv")) == "x,S(x),T(x)");
    const json t = json::parse(slurp(out + "/transport.json"));
    CHECK(t["flow_converged"].get<bool>());
    CHECK(t["lip_T_emp"].get<double>() == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("verify subcommand passes on the reference scenario at a scaled budget") {
    const std::string out = "/tmp/clab_cli_verify";
    std::system(("rm -rf " + out).c_str());
    const auto r = run("--scenario " + kOu + " --out " + out + " --n-paths 400 verify");
    CHECK(r.code == 0);
    CHECK(r.output.find("[FAIL]") == std::string::npos);
    CHECK(r.output.find("checks passed") != std::string::npos);
    CHECK(exists(out + "/summary.json"));
    const json s = json::parse(slurp(out + "/summary.json"));
    CHECK(s["all_pass"].get<bool>());
}

TEST_CASE("verify subcommand fails fast on a scenario with false declarations") {
    // quartic well cannot satisfy a positive curvature floor; the zero
    // perturbation keeps every Monte Carlo stage trivial so the run is cheap
    const std::string bogus = write_temp_scenario(
        "clab_bogus.scn",
        "[potential]\nfamily=double_well\na4=1.0\na2=1.0\nalpha=0.5\nC2U=107\nC3U=36\n"
        "[perturbation]\nfamily=zero\n"
        "[sim]\ndt=0.01\nT=1.0\nn_paths=50\nseed=3\nd=1\n"
        "[mode]\nassumptions=\"A1-A2prime\"\n");
    const std::string out = "/tmp/clab_cli_verify_fail";
    std::system(("rm -rf " + out).c_str());
    const auto r = run("--scenario " + bogus + " --out " + out + " --n-paths 50 verify");
    CHECK(r.code == 5);
    CHECK(r.output.find("[FAIL] assumption-validation") != std::string::npos);
}

TEST_CASE("identical invocations produce byte-identical artifacts") {
    const std::string a = "/tmp/clab_cli_det_a", b = "/tmp/clab_cli_det_b";
    std::system(("rm -rf " + a + " " + b).c_str());
    CHECK(run("--scenario " + kOu + " --out " + a + " bounds").code == 0);
    CHECK(run("--scenario " + kOu + " --out " + b + " bounds").code == 0);
    for (const std::string f : {"bounds.json", "envelopes.csv"})
        CHECK(slurp(a + "/" + f) == slurp(b + "/" + f));
    CHECK(!slurp(a + "/bounds.json").empty());
}
