#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace slowfast {

// Budget knobs for the toy-model validation checklist. The default budget is
// sized so every tolerance matches the acceptance thresholds; small is for
// smoke runs; zero skips every item (dry run).
struct ValidationBudget {
  std::string name = "default";
  // full-system sweep pairs per eps cell (antithetic pairs; replicas = 2x)
  std::vector<int> avg_pairs = {5000, 5000, 5000, 5000};
  std::vector<int> weak_pairs = {5000, 12000, 40000, 125000};
  int gap_realizations = 400;
  int martingale_replicas = 2000;
  int qv_replicas = 1000;
  int hbar_inner = 2000;
  double sigma_T_total = 2.0e5;
  int fbar_ensemble_replicas = 20000;
  double fbar_T_avg = 0.0;  // 0 = auto from the budget scale
  long ou_steps = 1000000;
  int attraction_realizations = 200;
  bool skip_all = false;

  static ValidationBudget zero();
  static ValidationBudget small();
  static ValidationBudget default_();
  static ValidationBudget large();
};

struct ValidationItem {
  std::string name;
  double estimate = 0.0;
  double target = 0.0;
  double tolerance = 0.0;
  double margin = 0.0;  // |estimate - target| / tolerance, pass iff <= 1
  bool pass = false;
  bool skipped = false;
  long work_units = 0;  // deterministic effort counter (steps x replicas)
  std::string note;
};

struct ValidationReport {
  std::vector<ValidationItem> items;
  std::uint64_t seed = 0;
  std::string budget_name;
  bool all_pass() const;
  void write_json(const std::string& path) const;
};

// Runs the full toy-model checklist: stationary fast mean, fbar estimators,
// Sigma estimate, manifold-gap slope, averaging and intermediate sweeps,
// martingale residuals, OU exactness, attraction rates, determinism probe.
// Child failures are collected, not rethrown.
ValidationReport validate_toy(const ValidationBudget& budget, std::uint64_t seed);

}  // namespace slowfast
