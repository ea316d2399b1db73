#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "slowfast/averaging.hpp"
#include "slowfast/errors.hpp"
#include "slowfast/integrate.hpp"
#include "slowfast/parallel.hpp"
#include "slowfast/stationary1d.hpp"
#include "slowfast/stats.hpp"
#include "slowfast/toy.hpp"

using namespace slowfast;

namespace {
SlowDrift closed_form_drift(double sigma) {
  return SlowDrift::analytic(1, [sigma](std::span<const double> x,
                                        std::span<double> out) {
    out[0] = -x[0] * x[0] * x[0] + sigma * sigma * x[0];
  });
}
}  // namespace

TEST_CASE("EmpiricalFunction interpolation, errors, hull") {
  EmpiricalFunction f({0.0, 1.0, 2.0}, {0.0, 2.0, 2.0}, {0.1, 0.2, 0.05});
  const double x = 0.5;
  CHECK(f.eval({&x, 1}) == doctest::Approx(1.0));
  CHECK(f.stderr_at({&x, 1}) == doctest::Approx(0.2));  // conservative max
  CHECK(f.max_stderr() == doctest::Approx(0.2));
  CHECK(f.discrete_lipschitz() == doctest::Approx(2.0));
  const double outside = 2.5;
  CHECK_THROWS_AS(f.eval({&outside, 1}), TableRangeExceeded);

  // single-node table
  EmpiricalFunction g({1.0}, {3.0}, {0.0});
  const double on = 1.0;
  CHECK(g.eval({&on, 1}) == doctest::Approx(3.0));

  // bilinear 2-D
  EmpiricalFunction h({0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0, 2.0, 3.0},
                      {0.0, 0.0, 0.0, 0.0});
  const double q[2] = {0.5, 0.5};
  CHECK(h.eval(q) == doctest::Approx(1.5));
}

TEST_CASE("time average of a centered OU observable vanishes") {
  const SlowFastSystem sys = make_builtin_system("linear_y", 0.5, 0.01);
  NoiseStream s(80, 0, 1, 0.02);
  const double x = 0.0;
  const auto vs = fbar_time_average(sys, {&x, 1}, 2000.0 * sys.eps, s);
  CHECK(std::fabs(vs.value) <= 3.0 * vs.stderr_);
}

TEST_CASE("toy fbar estimators agree with the closed form and each other") {
  const SlowFastSystem sys = toy::toy_system(0.1, 0.01);
  const double x = 0.05;
  NoiseStream s(81, 0, 1, 0.02);
  const auto ta = fbar_time_average(sys, {&x, 1}, 800.0 * sys.eps, s);
  CHECK(std::fabs(ta.value - 3.75e-4) <= 3.0 * ta.stderr_ + 1e-4);

  const auto en = fbar_ensemble(sys, {&x, 1}, 3000, 82);
  CHECK(std::fabs(en.value - 3.75e-4) <= 3.0 * en.stderr_ + 1e-4);

  const double comb = std::sqrt(ta.stderr_ * ta.stderr_ + en.stderr_ * en.stderr_);
  CHECK(std::fabs(ta.value - en.value) <= 3.0 * comb);
}

TEST_CASE("fbar at x = 0 is exactly zero for the toy") {
  const SlowFastSystem sys = toy::toy_system(0.1, 0.01);
  const double x = 0.0;
  const auto en = fbar_ensemble(sys, {&x, 1}, 200, 83);
  CHECK(en.value == 0.0);  // f(0, y) = 0 identically
  CHECK(en.stderr_ == 0.0);
}

TEST_CASE("fbar estimates are eps-independent") {
  const double x = 0.05;
  const auto a = fbar_ensemble(toy::toy_system(0.1, 1e-2), {&x, 1}, 2000, 84);
  const auto b = fbar_ensemble(toy::toy_system(0.1, 1e-3), {&x, 1}, 2000, 84);
  const double comb = std::sqrt(a.stderr_ * a.stderr_ + b.stderr_ * b.stderr_);
  CHECK(std::fabs(a.value - b.value) <= 3.0 * comb);
}

TEST_CASE("single-node tabulation reproduces the point estimator") {
  const SlowFastSystem sys = toy::toy_system(0.1, 0.01);
  TabulateBudget budget;
  budget.n_replicas = 400;
  budget.master_seed = 85;
  const double node = 0.05;
  const EmpiricalFunction table =
      tabulate_fbar(sys, {&node, 1}, FbarEstimator::ensemble, budget);
  const auto direct = fbar_ensemble(sys, {&node, 1}, 400, rng::mix64(85));
  CHECK(table.values()[0] == direct.value);
  CHECK(table.stderrs()[0] == direct.stderr_);
}

TEST_CASE("31-node toy table matches the closed form within the stated band") {
  const SlowFastSystem sys = toy::toy_system(0.1, 0.01);
  std::vector<double> grid(31);
  for (int i = 0; i < 31; ++i) grid[i] = -0.15 + 0.3 * i / 30.0;
  TabulateBudget budget;
  budget.n_replicas = 1200;
  budget.master_seed = 86;
  const EmpiricalFunction table =
      tabulate_fbar(sys, grid, FbarEstimator::ensemble, budget);
  double max_dev = 0.0;
  for (int i = 0; i < 31; ++i) {
    const double cf = -grid[i] * grid[i] * grid[i] + 0.01 * grid[i];
    max_dev = std::max(max_dev, std::fabs(table.values()[i] - cf));
  }
  CHECK(max_dev <= 3.0 * table.max_stderr() + 1e-4);
}

TEST_CASE("grid refinement keeps interpolated values consistent") {
  const SlowFastSystem sys = toy::toy_system(0.1, 0.01);
  std::vector<double> coarse(16), fine(31);
  for (int i = 0; i < 16; ++i) coarse[i] = -0.15 + 0.3 * i / 15.0;
  for (int i = 0; i < 31; ++i) fine[i] = -0.15 + 0.3 * i / 30.0;
  TabulateBudget budget;
  budget.n_replicas = 1500;
  budget.master_seed = 87;
  const EmpiricalFunction a = tabulate_fbar(sys, coarse, FbarEstimator::ensemble, budget);
  budget.master_seed = 88;
  const EmpiricalFunction b = tabulate_fbar(sys, fine, FbarEstimator::ensemble, budget);
  for (int i = 0; i < 31; i += 2) {
    const double x = fine[i];
    const double comb = std::sqrt(std::pow(a.stderr_at({&x, 1}), 2) +
                                  std::pow(b.stderr_at({&x, 1}), 2));
    CHECK(std::fabs(a.eval({&x, 1}) - b.eval({&x, 1})) <=
          3.0 * comb + 0.5e-4 /* interpolation bias on the coarse grid */);
  }
  // discrete Lipschitz stays bounded under refinement
  CHECK(b.discrete_lipschitz() <= 3.0 * std::max(a.discrete_lipschitz(), 0.02));
}

TEST_CASE("quadrature tabulation (m = 1) has zero stderr") {
  const SlowFastSystem sys = toy::toy_system(0.1, 0.01);
  std::vector<double> grid = {-0.1, 0.0, 0.1};
  const EmpiricalFunction t =
      tabulate_fbar(sys, grid, FbarEstimator::quadrature, TabulateBudget{});
  CHECK(t.max_stderr() == 0.0);
  CHECK(t.values()[1] == doctest::Approx(0.0));
}

TEST_CASE("integrate_averaged: constants, equilibria, Richardson order") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(1, 1);

  // fbar == 0, A = 0: constant path
  SlowDrift zero = SlowDrift::analytic(1, [](std::span<const double>,
                                             std::span<double> out) { out[0] = 0.0; });
  const double x0 = 0.3;
  const SamplePath c = integrate_averaged(A, zero, {&x0, 1}, 1.0, 0.01);
  CHECK(c.slow.front() == c.slow.back());

  // toy closed-form drift: trajectory approaches the stable equilibrium x* = sigma
  SlowDrift cf = closed_form_drift(0.1);
  const double x1 = 0.05;
  const SamplePath p = integrate_averaged(A, cf, {&x1, 1}, 400.0, 0.01);
  CHECK(p.slow.back() == doctest::Approx(0.1).epsilon(1e-3));
  for (std::size_t i = 1; i < p.n_steps(); ++i)
    CHECK(p.slow[i] >= p.slow[i - 1] - 1e-12);  // monotone on (0, sigma)

  // RK4 Richardson order on a smooth drift with O(1) dynamics (the toy-scale
  // drift is so weak that dt^4 errors underflow double precision)
  SlowDrift strong = closed_form_drift(1.0);
  const double xr = 0.5;
  double ends[3];
  int k = 0;
  for (double dt : {0.2, 0.1, 0.05})
    ends[k++] = integrate_averaged(A, strong, {&xr, 1}, 2.0, dt).slow.back();
  const double order = std::log2(std::fabs(ends[0] - ends[1]) /
                                 std::fabs(ends[1] - ends[2]));
  CHECK(order >= 3.5);
}

TEST_CASE("table-backed drift reports the exit time") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(1, 1);
  EmpiricalFunction tiny({-0.01, 0.01}, {0.05, 0.05}, {0.0, 0.0});
  const SlowDrift drift = SlowDrift::from_table(tiny);
  const double x0 = 0.0;
  try {
    integrate_averaged(A, drift, {&x0, 1}, 10.0, 0.01);
    FAIL("expected TableRangeExceeded");
  } catch (const TableRangeExceeded& e) {
    CHECK(std::string(e.what()).find("t = ") != std::string::npos);
  }
}

TEST_CASE("mixing bound on the linear system") {
  // coupled copies of the pure fast OU from displaced initial conditions decay
  // at rate 2|beta|/eps in mean square, comfortably above |beta|/(2 eps)
  const SlowFastSystem sys = make_builtin_system("linear_test", 0.3, 0.05);
  const int R = 200;
  const double T = 0.25, dt_slow = sys.eps / 10.0;
  std::vector<std::vector<double>> sq(R);
  parallel_for(R, [&](std::size_t r) {
    NoiseStream stream(90, static_cast<std::uint32_t>(r), 1, dt_slow / 2.0);
    const double x0 = 0.0, ya = 0.5, yb = 0.0;
    const SamplePath a = integrate_slowfast(sys, {&x0, 1}, {&ya, 1}, T, dt_slow, stream);
    const SamplePath b = integrate_slowfast(sys, {&x0, 1}, {&yb, 1}, T, dt_slow, stream);
    std::vector<double> row(a.n_steps());
    for (std::size_t j = 0; j < a.n_steps(); ++j) {
      const double d = a.fast[j] - b.fast[j];
      row[j] = d * d;
    }
    sq[r] = row;
  });
  // log-slope fit of E|y - ybar|^2 over the first half of the window
  const std::size_t nfit = sq[0].size() / 2;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t j = 1; j < nfit; ++j) {
    double mean = 0.0;
    for (int r = 0; r < R; ++r) mean += sq[r][j];
    mean /= R;
    const double t = dt_slow * static_cast<double>(j);
    const double ly = std::log(mean);
    sx += t;
    sy += ly;
    sxx += t * t;
    sxy += t * ly;
  }
  const double n = static_cast<double>(nfit - 1);
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(-slope >= 1.0 / (2.0 * sys.eps));  // |beta|/(2 eps) with beta = -1
}

TEST_CASE("averaging sweep recovers the 1/2 rate (small budget)") {
  const SlowFastSystem sys = toy::toy_system(0.1, 0.01);
  const std::vector<double> eps_list = {1e-1, 3.1622776601683794e-2, 1e-2,
                                        3.1622776601683794e-3};
  const std::vector<int> reps = {3000, 3000, 3000, 3000};
  SweepOptions opts;
  opts.master_seed = 91;
  const ConvergenceReport rep = averaging_error_sweep(sys, 0.05, 1.0, eps_list, reps, opts);
  REQUIRE(rep.fit.has_value());
  CHECK(rep.fit->slope >= 0.35);
  CHECK(rep.fit->slope <= 0.65);
  // errors decrease monotonically along the sweep
  for (std::size_t i = 1; i < rep.rows.size(); ++i)
    CHECK(rep.rows[i].error < rep.rows[i - 1].error);
}

TEST_CASE("exact averaging: no fast dependence collapses the error") {
  // f = 0, g = 0: slow part is x' = 0; the averaged model is exact for all eps
  const SlowFastSystem sys = make_builtin_system("linear_test", 0.1, 0.01);
  const std::vector<double> eps_list = {1e-1, 3.1622776601683794e-2, 1e-2,
                                        3.1622776601683794e-3};
  const std::vector<int> reps = {50, 50, 50, 50};
  SweepOptions opts;
  opts.master_seed = 92;
  opts.fbar = SlowDrift::analytic(1, [](std::span<const double>, std::span<double> o) {
    o[0] = 0.0;
  });
  const ConvergenceReport rep = averaging_error_sweep(sys, 0.05, 1.0, eps_list, reps, opts);
  for (const auto& row : rep.rows) CHECK(row.error <= 1e-12);
  CHECK(rep.exact_zero);
}
