#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace slowfast {

struct RateRow {
  double eps = 0.0;
  double error = 0.0;
  double stderr_ = 0.0;
};

struct RateFit {
  double slope = 0.0;
  double intercept_log10 = 0.0;  // fitted line: 10^(intercept + slope*log10 eps)
  double slope_ci_lo = 0.0;      // 95% interval
  double slope_ci_hi = 0.0;
};

// (eps, error, CI) records plus the fitted log-log rate exponent.
struct ConvergenceReport {
  std::vector<RateRow> rows;  // kept sorted by eps descending
  std::optional<RateFit> fit;
  bool exact_zero = false;  // all errors identically zero (fit undefined)
  std::uint64_t seed = 0;
  long n_replicas = 0;
  std::string label;

  void sort_rows();
  void fit_if_possible();
};

// Weighted least squares of log10(error) on log10(eps), weights from the
// delta-method log-errors (stderr/error). Throws DegenerateFit if all eps
// coincide; InvalidArgument for < 3 rows or nonpositive errors.
RateFit fit_rate(std::span<const RateRow> rows);

// CSV: "eps,error,stderr" (+ header), 17 significant digits.
void write_report_csv(const ConvergenceReport& report, const std::string& path);
ConvergenceReport read_report_csv(const std::string& path);

// JSON summary: slope, slope_ci, n_replicas, seed, rows.
void write_report_json(const ConvergenceReport& report, const std::string& path);

// gnuplot-ready whitespace table with a comment header and the fitted line
// evaluated on the eps grid.
void emit_plotdata(const ConvergenceReport& report, const std::string& path);

}  // namespace slowfast
