#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "slowfast/assumptions.hpp"
#include "slowfast/noise.hpp"
#include "slowfast/report.hpp"
#include "slowfast/system.hpp"

namespace slowfast {

// Configuration of the truncated Lyapunov-Perron iteration.
struct LPConfig {
  double lambda = 0.0;   // history-norm weight, beta < eps*lambda < alpha
  double t_trunc = 0.0;  // truncation horizon T0 > 0 (original clock)
  int n_grid = 512;      // cap on history nodes
  double tol = 1e-8;     // fixed-point tolerance in the weighted sup norm
  int max_iter = 200;

  // lambda from the H2 scan minimizer, T0 from the truncation invariant
  // e^{(beta+L_g) T0/eps} < tol/10.
  static LPConfig auto_for(const SlowFastSystem& system,
                           const AssumptionReport& report, double tol = 1e-8);

  // Enforces both invariants: truncation below tol/10, contraction factor
  // kappa = L_f/(alpha-lambda) + L_g/(eps*lambda-beta) < 1.
  void validate(const AssumptionReport& report, double eps) const;

  double contraction_factor(const AssumptionReport& report, double eps) const;
};

// History grid on [-T0, 0]: node times are multiples of the stream dt,
// uniform with spacing <= eps/10 near 0, cell widths doubling toward -T0.
struct HistoryGrid {
  std::vector<double> s;          // node times, s.front() ~ -T0, s.back() = 0
  std::vector<std::int64_t> idx;  // stream index of each node (s = idx * dt)
  double dt_stream = 0.0;

  static HistoryGrid build(double t_trunc, double eps, double dt_stream, int n_grid);
  std::size_t n_cells() const { return s.size() - 1; }
};

// Discretized fixed point (X, Y) of the LP operator plus the driving OU
// realization along the grid.
struct HistoryPath {
  HistoryGrid grid;
  Eigen::MatrixXd X;    // n x (K+1)
  Eigen::MatrixXd Y;    // m x (K+1)
  Eigen::MatrixXd eta;  // m x (K+1)

  double weighted_norm(double lambda) const;
};

enum class ManifoldMode { full_eps, frozen_limit };

struct LpResult {
  HistoryPath history;
  Eigen::VectorXd h_value;  // Y(0) = h(X0, omega)
  Eigen::VectorXd eta0;     // eta at time 0, same realization
  int iterations = 0;
  double final_residual = 0.0;
  double observed_contraction = 0.0;  // median successive-residual ratio
};

// Picard iteration of the discretized LP operator. mode frozen_limit holds the
// slow history at X0 (the frozen-fast limit h0 on the same grid and noise).
LpResult lp_iterate(const SlowFastSystem& system, const Eigen::VectorXd& X0,
                    const NoiseStream& stream, const LPConfig& config,
                    ManifoldMode mode = ManifoldMode::full_eps,
                    const WienerPathCache* cache = nullptr);

// Pullback sample of h0(X, omega): frozen-X exponential-Euler integration of
// the fast random ODE from -burn_in (Y = 0) to 0.
Eigen::VectorXd h0_eval(const SlowFastSystem& system, const Eigen::VectorXd& X,
                        const NoiseStream& stream, double burn_in);

// Manifold evaluator with the closed-form Lipschitz bound when it is defined:
//   L_h = L_g / ((alpha-lambda) (1 - L_g [1/(alpha-lambda) + 1/(eps lambda-beta)]))
struct ManifoldMap {
  const SlowFastSystem* system = nullptr;
  LPConfig config;
  ManifoldMode mode = ManifoldMode::full_eps;
  std::optional<double> lipschitz_bound;

  static ManifoldMap make(const SlowFastSystem& system,
                          const AssumptionReport& report, const LPConfig& config,
                          ManifoldMode mode = ManifoldMode::full_eps);

  Eigen::VectorXd operator()(const Eigen::VectorXd& X,
                             const NoiseStream& stream) const;
};

// E|h_eps - h0| over shared noise realizations per eps, with the log-log fit.
struct ManifoldGapOptions {
  double tol = 1e-8;
  int n_grid = 512;
  std::uint64_t master_seed = 2026;
};
struct ManifoldGapReport {
  ConvergenceReport report;
  // fraction of realizations whose gap at eps_i is smaller than at eps_{i-1}
  std::vector<double> pathwise_monotone_frac;
  // fraction of realizations whose gap at eps_i is smaller than at eps_0
  std::vector<double> pathwise_frac_vs_first;
};
ManifoldGapReport manifold_gap(const SlowFastSystem& system, double X_scalar,
                               std::span<const double> eps_list, int n_realizations,
                               const ManifoldGapOptions& opts = ManifoldGapOptions());

// Exponential-attraction measurement. z_on places the fast coordinate on the
// manifold (h_eps(x0, omega) + eta(omega), the projected same-slow-coordinate
// stand-in); z_off perturbs the fast coordinate by `perturbation`.
struct AttractionOptions {
  double perturbation = 0.05;
  double t_span_in_eps = 5.0;   // fit window [0, t_span_in_eps * eps]
  double dt_slow_in_eps = 0.2;  // sampling grid for the distance
  std::uint64_t master_seed = 77;
};
struct AttractionReport {
  double eps = 0.0;
  double rate_median = 0.0;
  double rate_mean = 0.0;
  int n_realizations = 0;
  bool any_underflow = false;  // fit windows auto-shortened
  std::string initial_condition = "manifold-projected (same slow coordinate)";
};
AttractionReport attraction_test(const SlowFastSystem& system, double x0,
                                 int n_realizations,
                                 const AttractionOptions& opts = AttractionOptions());

// Decay fit for one explicit pair of initial states on shared noise.
struct DecayFit {
  double rate = 0.0;
  bool underflow_flagged = false;
  double t_fit_end = 0.0;
};
DecayFit attraction_pair(const SlowFastSystem& system, const Eigen::VectorXd& x_on,
                         const Eigen::VectorXd& y_on, const Eigen::VectorXd& x_off,
                         const Eigen::VectorXd& y_off, double T, double dt_slow,
                         const NoiseStream& stream);

// Slow-manifold-reduced vector field Ax + f(x, h0(x, theta_t) + eta(theta_t))
// along one noise realization; integrates the reduced nonautonomous random ODE.
class ReducedPathIntegrator {
 public:
  ReducedPathIntegrator(const SlowFastSystem& system, const NoiseStream& stream,
                        double burn_in);

  // rhs at time t (t a multiple of the stream dt): Ax + f(x, h0 + eta).
  Eigen::VectorXd rhs(double t, const Eigen::VectorXd& x) const;

  SamplePath integrate(const Eigen::VectorXd& x0, double T, double dt);

 private:
  const SlowFastSystem* system_;
  NoiseStream stream_;
  double burn_in_;
};

// CSV export of a manifold slice: X grid, mean h, std h, n_realizations.
void export_manifold_slice(const SlowFastSystem& system, const LPConfig& config,
                           std::span<const double> x_grid, int n_realizations,
                           std::uint64_t master_seed, const std::string& path);

}  // namespace slowfast
