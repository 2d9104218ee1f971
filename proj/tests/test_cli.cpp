#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

// End-to-end checks of the experiment runner binary: exit-code contract,
// report shape, file outputs, reproducibility.

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli_path() { return IBP_CLI_PATH; }

int run_cli(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " > /dev/null 2> /dev/null";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

fs::path sandbox() {
  const fs::path p = fs::temp_directory_path() / "ibp_cli_test";
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string base_config(const std::string& extra = "") {
  return std::string(R"({
  "model": {"name": "additive_gauss", "params": {"sigma0": 1.0, "d": 1}},
  "T": 1.0, "n_steps": 100, "n_paths": 2000,
  "x0": [0.0], "v": [1.0], "f_name": "linear_x1",
  "seed": 7, "threads": 1)") +
         extra + "\n}";
}

json load_report(const fs::path& dir) {
  std::ifstream in(dir / "report.json");
  REQUIRE(in.good());
  json j;
  in >> j;
  return j;
}

}  // namespace

TEST_CASE("verify-ibp on the additive model exits 0 with |z| <= 4") {
  const fs::path dir = sandbox() / "ok";
  write_file(sandbox() / "ok.json", base_config());
  const int rc = run_cli("verify-ibp --config " + (sandbox() / "ok.json").string() + " --out " +
                         dir.string());
  CHECK(rc == 0);
  const json rep = load_report(dir);
  CHECK(rep["subcommand"] == "verify-ibp");
  CHECK(std::abs(rep["results"]["z"].get<double>()) <= 4.0);
  CHECK(rep["results"]["lhs"].contains("mean"));
  CHECK(rep["results"]["lhs"].contains("std_error"));
  CHECK(rep["results"]["rhs"].contains("seed"));
  CHECK(rep["results"]["theta_means"].contains("theta1"));
  CHECK(rep["results"]["pass_flags"]["z_within_threshold"] == true);
  CHECK(rep["config"]["seed"] == 7);
  CHECK(rep["meta"].contains("version"));
}

TEST_CASE("mismatched v dimension exits 2") {
  write_file(sandbox() / "bad_v.json",
             R"({"model": {"name": "additive_gauss", "params": {"d": 1}}, "v": [1.0, 2.0]})");
  CHECK(run_cli("verify-ibp --config " + (sandbox() / "bad_v.json").string()) == 2);
}

TEST_CASE("p_list below 2 exits 2") {
  write_file(sandbox() / "bad_p.json", base_config(R"(, "p_list": [1])"));
  CHECK(run_cli("moments --config " + (sandbox() / "bad_p.json").string() + " --out " +
                (sandbox() / "pout").string()) == 2);
}

TEST_CASE("unknown model, missing config and bad flags exit 2") {
  write_file(sandbox() / "bad_model.json", R"({"model": {"name": "what"}})");
  CHECK(run_cli("verify-ibp --config " + (sandbox() / "bad_model.json").string()) == 2);
  CHECK(run_cli("verify-ibp --config /does/not/exist.json") == 2);
  CHECK(run_cli("not-a-subcommand --config x.json") == 2);
  CHECK(run_cli("verify-ibp") == 2);
}

TEST_CASE("flag overrides take precedence over config keys") {
  const fs::path dir = sandbox() / "flags";
  write_file(sandbox() / "fl.json", base_config());
  CHECK(run_cli("verify-ibp --config " + (sandbox() / "fl.json").string() +
                " --paths 500 --steps 50 --seed 99 --threads 2 --out " + dir.string()) == 0);
  const json rep = load_report(dir);
  CHECK(rep["config"]["n_paths"] == 500);
  CHECK(rep["config"]["n_steps"] == 50);
  CHECK(rep["config"]["seed"] == 99);
  CHECK(rep["config"]["threads"] == 2);
}

TEST_CASE("thread count does not change the report payload") {
  write_file(sandbox() / "det.json", base_config());
  const fs::path d1 = sandbox() / "det1", d2 = sandbox() / "det2", d3 = sandbox() / "det3";
  CHECK(run_cli("verify-ibp --config " + (sandbox() / "det.json").string() + " --threads 1 --out " +
                d1.string()) == 0);
  CHECK(run_cli("verify-ibp --config " + (sandbox() / "det.json").string() + " --threads 8 --out " +
                d2.string()) == 0);
  CHECK(run_cli("verify-ibp --config " + (sandbox() / "det.json").string() + " --threads 1 --out " +
                d3.string()) == 0);

  json a = load_report(d1), b = load_report(d2), c = load_report(d3);
  for (json* j : {&a, &b, &c}) {
    j->erase("meta");
    (*j)["config"].erase("threads");     // the knob under test
    (*j)["config"].erase("output_dir");  // varied per run by the test itself
  }
  CHECK(a.dump() == b.dump());
  CHECK(a.dump() == c.dump());
}

TEST_CASE("every subcommand runs and writes a report") {
  write_file(sandbox() / "all.json",
             base_config(R"(, "n_paths": 1500, "q": 2, "p_list": [2],
    "eval_points": [[-1.0], [0.0], [1.0]], "eps_list": [0.01, 0.005],
    "n_systems": 4, "sample_count": 200, "region_radius": 2.0)"));
  for (const std::string sub :
       {"moments", "weight-moments", "density", "perturb-check", "lemma31-check",
        "validate-model"}) {
    const fs::path dir = sandbox() / ("sub_" + sub);
    CAPTURE(sub);
    CHECK(run_cli(sub + " --config " + (sandbox() / "all.json").string() + " --out " +
                  dir.string()) == 0);
    const json rep = load_report(dir);
    CHECK(rep["pass"] == true);
    CHECK(rep["results"].contains("pass_flags"));
  }
}

TEST_CASE("trajectory and weight dumps follow the documented schemas") {
  const fs::path dir = sandbox() / "dumps";
  write_file(sandbox() / "dump.json",
             base_config(R"(, "dump_trajectory": true, "dump_weights": true, "n_paths": 64,
    "n_steps": 8, "model_note": 0)"));
  CHECK(run_cli("verify-ibp --config " + (sandbox() / "dump.json").string() + " --out " +
                dir.string()) == 0);

  std::ifstream tr(dir / "trajectories.csv");
  REQUIRE(tr.good());
  std::string header;
  std::getline(tr, header);
  CHECK(header == "t,X_1,J_11,Jinv_11");
  int rows = 0;
  for (std::string line; std::getline(tr, line);)
    if (!line.empty()) ++rows;
  CHECK(rows == 9);  // n_steps + 1 nodes

  std::ifstream ws(dir / "weights.csv");
  REQUIRE(ws.good());
  std::getline(ws, header);
  CHECK(header == "path_index,theta1,theta2,theta3,theta4,theta5,total");
  rows = 0;
  for (std::string line; std::getline(ws, line);)
    if (!line.empty()) ++rows;
  CHECK(rows == 64);
}

TEST_CASE("sweep writes one csv row per value") {
  const fs::path dir = sandbox() / "sweep";
  write_file(sandbox() / "sw.json", base_config(R"(, "output_dir": ")" + dir.string() + R"(")"));
  CHECK(run_cli("sweep perturb-check --config " + (sandbox() / "sw.json").string() +
                " --param epsilon --values 0.01,0.005") == 0);
  std::ifstream csv(dir / "sweep.csv");
  REQUIRE(csv.good());
  std::string line;
  std::getline(csv, line);
  CHECK(line == "param,value,eps,defect,pass");
  int rows = 0;
  for (; std::getline(csv, line);)
    if (!line.empty()) ++rows;
  CHECK(rows == 2);

  CHECK(run_cli("sweep verify-ibp --config " + (sandbox() / "sw.json").string() +
                " --param nonsense --values 1") == 2);
}

TEST_CASE("error reports are machine-readable JSON on stderr") {
  write_file(sandbox() / "err.json", R"({"model": {"name": "what"}})");
  const fs::path errfile = sandbox() / "stderr.txt";
  const std::string cmd = cli_path() + " verify-ibp --config " + (sandbox() / "err.json").string() +
                          " 2> " + errfile.string() + " > /dev/null";
  const int rc = WEXITSTATUS(std::system(cmd.c_str()));
  CHECK(rc == 2);
  std::ifstream in(errfile);
  json err;
  in >> err;
  CHECK(err["error"]["type"] == "config");
  CHECK(err["error"].contains("message"));
}
