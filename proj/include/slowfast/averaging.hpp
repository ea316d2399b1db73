#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "slowfast/noise.hpp"
#include "slowfast/report.hpp"
#include "slowfast/system.hpp"

namespace slowfast {

// Grid-tabulated estimate of a function R^n -> R^d with per-node standard
// errors. Interpolation: piecewise-linear for n = 1, bilinear tensor grid for
// n = 2, nearest node (flagged) for n > 2. Between nodes the standard error is
// the max of the bracketing nodes'.
class EmpiricalFunction {
 public:
  // 1-D constructor.
  EmpiricalFunction(std::vector<double> grid, std::vector<double> values,
                    std::vector<double> stderrs);
  // 2-D tensor constructor: values indexed [ix * grid_y.size() + iy].
  EmpiricalFunction(std::vector<double> grid_x, std::vector<double> grid_y,
                    std::vector<double> values, std::vector<double> stderrs);
  // Scattered nodes for n > 2 (nearest-node evaluation, flagged).
  EmpiricalFunction(int dim, std::vector<Eigen::VectorXd> nodes,
                    std::vector<double> values, std::vector<double> stderrs);

  int dim() const { return dim_; }
  double eval(std::span<const double> x) const;
  double stderr_at(std::span<const double> x) const;
  double max_stderr() const;
  bool nearest_mode_used() const { return nearest_used_; }

  // Hull bounds; eval outside throws TableRangeExceeded.
  const std::vector<double>& lo() const { return lo_; }
  const std::vector<double>& hi() const { return hi_; }

  const std::vector<double>& grid1d() const { return grid_x_; }
  const std::vector<double>& values() const { return values_; }
  const std::vector<double>& stderrs() const { return stderrs_; }

  // Discrete Lipschitz constant of the tabulated values (1-D).
  double discrete_lipschitz() const;

 private:
  int dim_ = 1;
  std::vector<double> grid_x_, grid_y_;
  std::vector<Eigen::VectorXd> nodes_;
  std::vector<double> values_, stderrs_;
  std::vector<double> lo_, hi_;
  mutable bool nearest_used_ = false;
};

// Slow drift fbar(x) used by the reduced integrators: either an analytic
// callable (no hull) or an EmpiricalFunction-backed table (hull enforced).
struct SlowDrift {
  using Fn = std::function<void(std::span<const double> x, std::span<double> out)>;
  Fn fn;
  int dim = 1;
  std::optional<EmpiricalFunction> table;  // set when table-backed

  static SlowDrift analytic(int dim, Fn fn);
  static SlowDrift from_table(EmpiricalFunction table);
  void eval(std::span<const double> x, std::span<double> out) const;
};

// Time average of f(x, y(t)) along the frozen-x fast dynamics past burn-in,
// with batch-means standard error (>= 20 batches). T_avg is in original time
// units (the fast clock runs T_avg / eps). Throws MixingTooSlow when the
// first/second halves of the batch means disagree by > 5 pooled SE.
struct ValueStderr {
  double value = 0.0;
  double stderr_ = 0.0;
};
ValueStderr fbar_time_average(const SlowFastSystem& system,
                              std::span<const double> x, double T_avg,
                              const NoiseStream& stream);

// Ensemble average of f(x, ybar) over independent stationary samples
// ybar = h0(x, omega) + eta(omega) obtained by pullback.
ValueStderr fbar_ensemble(const SlowFastSystem& system, std::span<const double> x,
                          int n_replicas, std::uint64_t master_seed);

// One stationary fast sample ybar = h0 + eta by pullback (burn_in <= 0 picks
// the default from the mixing-time rule).
Eigen::VectorXd stationary_fast_sample(const SlowFastSystem& system,
                                       std::span<const double> x,
                                       const NoiseStream& stream,
                                       double burn_in = 0.0);

enum class FbarEstimator { time_average, ensemble, quadrature };

struct TabulateBudget {
  double T_avg = 0.0;        // per node, time_average estimator (0 = auto)
  int n_replicas = 2000;     // per node, ensemble estimator
  std::uint64_t master_seed = 99;
};

// Fill an EmpiricalFunction over the grid with the chosen estimator.
// quadrature (m = 1 only) uses the exact stationary density and zero SE.
EmpiricalFunction tabulate_fbar(const SlowFastSystem& system,
                                std::span<const double> x_grid,
                                FbarEstimator estimator,
                                const TabulateBudget& budget);

// Classical RK4 on dx/dt = A x + fbar(x); deterministic. Throws
// TableRangeExceeded (with the exit time in the message) if the trajectory
// leaves a table-backed drift's hull.
SamplePath integrate_averaged(const Eigen::MatrixXd& A, const SlowDrift& fbar,
                              std::span<const double> x0, double T, double dt);

struct SweepOptions {
  double dt_slow_in_eps = 0.1;   // dt_slow = eps * this
  double T_sample = 0.01;        // spacing of the error-sup grid
  bool antithetic = true;
  std::uint64_t master_seed = 12001;
  std::optional<SlowDrift> fbar;  // default: quadrature (m = 1)
};

// sup_t E|x_eps(t) - xbar(t)| per eps and its log-log rate (target 1/2).
// The L2 flavor sup_t sqrt(E|x - xbar|^2) is reported alongside when
// l2_report is supplied; the acceptance metric is E|.|.
ConvergenceReport averaging_error_sweep(const SlowFastSystem& system, double x0,
                                        double T, std::span<const double> eps_list,
                                        std::span<const int> n_replicas_per_eps,
                                        const SweepOptions& opts = SweepOptions(),
                                        ConvergenceReport* l2_report = nullptr);

}  // namespace slowfast
