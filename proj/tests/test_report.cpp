#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "slowfast/errors.hpp"
#include "slowfast/report.hpp"
#include "slowfast/rng.hpp"

using namespace slowfast;

TEST_CASE("exact power-law data recovers the exponent") {
  std::vector<RateRow> rows;
  for (double eps : {0.1, 0.05, 0.01, 0.005})
    rows.push_back({eps, 3.0 * eps, 0.0});
  const RateFit fit = fit_rate(rows);
  CHECK(std::fabs(fit.slope - 1.0) < 1e-9);

  rows.clear();
  for (double eps : {0.1, 0.05, 0.01})
    rows.push_back({eps, 0.7 * std::sqrt(eps), 0.0});
  CHECK(std::fabs(fit_rate(rows).slope - 0.5) < 1e-9);
}

TEST_CASE("degenerate fits are rejected") {
  std::vector<RateRow> same = {{0.1, 1.0, 0.1}, {0.1, 2.0, 0.1}, {0.1, 3.0, 0.1}};
  CHECK_THROWS_AS(fit_rate(same), DegenerateFit);
  std::vector<RateRow> few = {{0.1, 1.0, 0.1}, {0.05, 2.0, 0.1}};
  CHECK_THROWS_AS(fit_rate(few), InvalidArgument);
  std::vector<RateRow> nonpos = {{0.1, 1.0, 0.1}, {0.05, 0.0, 0.1}, {0.01, 1.0, 0.1}};
  CHECK_THROWS_AS(fit_rate(nonpos), InvalidArgument);
}

TEST_CASE("bootstrap coverage of the 95% CI is at least 90%") {
  const double slope_true = 0.5, c = std::log10(2.0);
  const std::vector<double> eps = {0.1, 0.0316227766016838, 0.01,
                                   0.00316227766016838};
  int covered = 0;
  const int trials = 1000;
  std::uint64_t key = rng::derive_key(9090, 0, 0);
  for (int t = 0; t < trials; ++t) {
    std::vector<RateRow> rows;
    for (std::size_t i = 0; i < eps.size(); ++i) {
      const double mean = std::pow(10.0, c + slope_true * std::log10(eps[i]));
      const double se = 0.05 * mean;
      const double noisy =
          mean + se * rng::normal_at(key, 1000 * t + static_cast<int>(i));
      rows.push_back({eps[i], noisy, se});
    }
    try {
      const RateFit fit = fit_rate(rows);
      if (fit.slope_ci_lo <= slope_true && slope_true <= fit.slope_ci_hi) ++covered;
    } catch (const InvalidArgument&) {
      // a negative draw invalidates the row; count as non-covered
    }
  }
  CHECK(covered >= 900);
}

TEST_CASE("CSV round trip preserves rows") {
  ConvergenceReport rep;
  rep.rows = {{0.1, 1.234567890123456e-3, 1e-5},
              {0.01, 4.44e-4, 2e-6},
              {0.001, 1.3e-4, 9e-7}};
  rep.fit_if_possible();
  const std::string path = "/tmp/slowfast_report.csv";
  write_report_csv(rep, path);
  const ConvergenceReport back = read_report_csv(path);
  REQUIRE(back.rows.size() == rep.rows.size());
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    CHECK(back.rows[i].eps == rep.rows[i].eps);
    CHECK(back.rows[i].error == rep.rows[i].error);
    CHECK(back.rows[i].stderr_ == rep.rows[i].stderr_);
  }
  std::remove(path.c_str());
}

TEST_CASE("plot data: header-only when empty, fitted column exact") {
  ConvergenceReport empty;
  const std::string path = "/tmp/slowfast_plot.dat";
  emit_plotdata(empty, path);
  {
    std::ifstream is(path);
    std::string line;
    int data_rows = 0;
    while (std::getline(is, line))
      if (!line.empty() && line[0] != '#') ++data_rows;
    CHECK(data_rows == 0);
  }

  ConvergenceReport rep;
  rep.rows = {{0.1, 2e-2, 1e-4}, {0.01, 6.3e-3, 4e-5}, {0.001, 2e-3, 2e-5}};
  rep.fit_if_possible();
  emit_plotdata(rep, path);
  std::ifstream is(path);
  std::string line;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double eps, err, se, fitted;
    REQUIRE((ss >> eps >> err >> se >> fitted));
    CHECK(eps == rep.rows[row].eps);
    CHECK(err == rep.rows[row].error);
    const double expect = std::pow(
        10.0, rep.fit->intercept_log10 + rep.fit->slope * std::log10(eps));
    CHECK(std::fabs(fitted - expect) <= 1e-12 * std::max(1.0, std::fabs(expect)));
    ++row;
  }
  CHECK(row == rep.rows.size());
  std::remove(path.c_str());
}

TEST_CASE("report JSON carries the fit summary") {
  ConvergenceReport rep;
  rep.label = "demo";
  rep.seed = 7;
  rep.n_replicas = 1000;
  rep.rows = {{0.1, 1e-2, 1e-4}, {0.01, 1e-3, 1e-5}, {0.001, 1e-4, 1e-6}};
  rep.fit_if_possible();
  const std::string path = "/tmp/slowfast_report.json";
  write_report_json(rep, path);
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string text = ss.str();
  CHECK(text.find("\"slope\"") != std::string::npos);
  CHECK(text.find("\"slope_ci\"") != std::string::npos);
  CHECK(text.find("\"n_replicas\": 1000") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("sorting and the exact-zero flag") {
  ConvergenceReport rep;
  rep.rows = {{0.01, 0.0, 0.0}, {0.1, 0.0, 0.0}, {0.001, 0.0, 0.0}};
  rep.fit_if_possible();
  CHECK(rep.exact_zero);
  CHECK_FALSE(rep.fit.has_value());
  CHECK(rep.rows.front().eps == 0.1);  // sorted descending
}
