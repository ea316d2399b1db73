#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "slowfast/config.hpp"
#include "slowfast/errors.hpp"

using namespace slowfast;
namespace fs = std::filesystem;

namespace {
std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const char* kSimulateConfig = R"(# simulate the example system
[experiment]
kind = simulate
master_seed = 42
out_dir = {OUT}

[system]
builtin = toy
sigma = 0.1
eps = 0.01

[simulate]
x0 = [0.05]
y0 = [0.0]
T = 0.2
dt_slow = 0.001
)";

std::string with_out(const char* text, const std::string& out) {
  std::string s(text);
  const auto pos = s.find("{OUT}");
  s.replace(pos, 5, out);
  return s;
}
}  // namespace

TEST_CASE("well-formed config parses") {
  const ExperimentConfig cfg =
      ExperimentConfig::parse_text(with_out(kSimulateConfig, "/tmp/sf_out"));
  CHECK(cfg.kind() == "simulate");
  CHECK(cfg.master_seed() == 42);
  CHECK(cfg.get_double("simulate", "T") == doctest::Approx(0.2));
  CHECK(cfg.get_vector("simulate", "x0").size() == 1);
}

TEST_CASE("unknown keys are rejected with a line number") {
  std::string text = with_out(kSimulateConfig, "/tmp/sf_out");
  text += "typo_key = 3\n";
  try {
    ExperimentConfig::parse_text(text);
    FAIL("expected ConfigParse");
  } catch (const ConfigParse& e) {
    const std::string what = e.what();
    CHECK(what.find("line") != std::string::npos);
    CHECK(what.find("typo_key") != std::string::npos);
  }
}

TEST_CASE("unknown section and duplicate key are rejected") {
  std::string text = with_out(kSimulateConfig, "/tmp/sf_out");
  CHECK_THROWS_AS(ExperimentConfig::parse_text(text + "[mystery]\nx = 1\n"),
                  ConfigParse);
  std::string dup = text + "[simulate]\nT = 0.3\n";  // T defined twice
  CHECK_THROWS_AS(ExperimentConfig::parse_text(dup), ConfigParse);
}

TEST_CASE("missing required keys are rejected") {
  const char* text = R"(
[experiment]
kind = simulate
master_seed = 1
out_dir = /tmp/x
[simulate]
x0 = [0.0]
y0 = [0.0]
T = 1.0
)";  // dt_slow missing
  CHECK_THROWS_AS(ExperimentConfig::parse_text(text), ConfigParse);
}

TEST_CASE("eps_list must be strictly decreasing") {
  const char* text = R"(
[experiment]
kind = manifold_gap
master_seed = 1
out_dir = /tmp/x
[manifold_gap]
x = 0.05
eps_list = [0.01, 0.1]
n_realizations = 8
)";
  CHECK_THROWS_AS(ExperimentConfig::parse_text(text), ConfigParse);
}

TEST_CASE("matrices parse as row-major lists of lists") {
  const char* text = R"(
[experiment]
kind = simulate
master_seed = 3
out_dir = /tmp/x
[system]
n = 2
m = 1
A = [[0, 1], [-1, 0]]
B = [[-1]]
f = linear_test
g = linear_test
[simulate]
x0 = [1.0, 0.0]
y0 = [0.0]
T = 0.1
dt_slow = 0.001
)";
  const ExperimentConfig cfg = ExperimentConfig::parse_text(text);
  const auto A = cfg.get_matrix("system", "A");
  CHECK(A.size() == 2);
  CHECK(A[0][1] == 1.0);
}

TEST_CASE("run twice with the same seed: byte-identical outputs") {
  const fs::path out1 = "/tmp/sf_det_run1", out2 = "/tmp/sf_det_run2";
  fs::remove_all(out1);
  fs::remove_all(out2);
  const ExperimentConfig c1 =
      ExperimentConfig::parse_text(with_out(kSimulateConfig, out1.string()));
  const ExperimentConfig c2 =
      ExperimentConfig::parse_text(with_out(kSimulateConfig, out2.string()));
  CHECK(run_experiment(c1) == 0);
  CHECK(run_experiment(c2) == 0);
  // compare every produced file except the manifest (whose config echo embeds
  // the differing out_dir)
  int compared = 0;
  for (const auto& entry : fs::directory_iterator(out1)) {
    const auto name = entry.path().filename();
    if (name == "manifest.json") continue;
    CHECK(read_file(entry.path()) == read_file(out2 / name));
    ++compared;
  }
  CHECK(compared >= 1);
  fs::remove_all(out1);
  fs::remove_all(out2);
}

TEST_CASE("run_experiment_file propagates errors as exit code 1") {
  CHECK(run_experiment_file("/nonexistent/config.ini") == 1);
  const fs::path bad = "/tmp/sf_bad_config.ini";
  {
    std::ofstream os(bad);
    os << "[experiment]\nkind = simulate\nmaster_seed = 1\nout_dir = /tmp/x\n"
          "[simulate]\nx0 = [0.0]\ny0 = [0.0]\nT = 1.0\nbogus = 1\ndt_slow = 0.01\n";
  }
  CHECK(run_experiment_file(bad.string()) == 1);
  fs::remove(bad);
}

TEST_CASE("validate_toy dry run produces a report and exit code 0") {
  const fs::path out = "/tmp/sf_validate_zero";
  fs::remove_all(out);
  const std::string text = "[experiment]\nkind = validate_toy\nmaster_seed = 5\n"
                           "out_dir = " + out.string() +
                           "\n[validate_toy]\nbudget = zero\n";
  CHECK(run_experiment(ExperimentConfig::parse_text(text)) == 0);
  CHECK(fs::exists(out / "validation_report.json"));
  CHECK(fs::exists(out / "manifest.json"));
  fs::remove_all(out);
}
