#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slowfast/averaging.hpp"
#include "slowfast/noise.hpp"
#include "slowfast/report.hpp"
#include "slowfast/system.hpp"

namespace slowfast {

// Centered slow drift H(x, y) = f(x, y) - fbar(x).
struct FluctuationKernel {
  const SlowFastSystem* system = nullptr;
  SlowDrift fbar;

  // scalar slow component (n = 1)
  double eval(double x, double y) const;
};

// Green-Kubo estimate of Sigma(x) = 2 \int_0^inf E[H(x,s) H*(x,0)] ds on the
// fast clock: long frozen-x trajectory, lag-sum autocovariance, trapezoid
// running integral, plateau window selection, batch-means standard errors.
struct SigmaEstimate {
  Eigen::MatrixXd Sigma;     // symmetrized
  Eigen::MatrixXd stderr_;   // batch-means SE per entry
  double window = 0.0;       // integration horizon S actually used
  bool plateau_found = false;
  std::vector<double> lags;              // diagnostic: lag times
  std::vector<double> running_integral;  // diagnostic: I(s) for entry (0,0)
};

struct SigmaOptions {
  double dt_fast = 0.02;  // fast-clock substep
  int lag_stride = 5;     // H sampling stride for the lag sums
  int n_batches = 20;
};

// T_corr and T_total are fast-clock horizons; pre: T_total >= 50 T_corr and
// T_corr >= 20x the fast mixing time. Throws NoPlateau / NegativeDiagonal.
SigmaEstimate sigma_estimate(const SlowFastSystem& system, double x,
                             const SlowDrift& fbar, double T_corr, double T_total,
                             const NoiseStream& stream,
                             const SigmaOptions& opts = SigmaOptions());

// Symmetric PSD square root with clip_tol = 1e-8 * trace; eigenvalues below
// -clip_tol signal a bad estimate upstream (NotNearlyPSD).
Eigen::MatrixXd sigma_sqrt(const Eigen::MatrixXd& Sigma);

// Nested Monte Carlo estimate of Hbar(x, y_fast) = \int_0^inf E[H | y_0] ds
// (fast clock): n_inner trajectories from y_fast integrated to T_inner.
ValueStderr hbar_estimate(const SlowFastSystem& system, double x, double y_fast,
                          const SlowDrift& fbar, int n_inner, double T_inner,
                          std::uint64_t master_seed, double dt_fast = 0.02);

// Hbar tabulated on an (x, y) grid by nested MC, bilinear between nodes.
class HbarCache {
 public:
  HbarCache(const SlowFastSystem& system, const SlowDrift& fbar,
            std::span<const double> x_grid, std::span<const double> y_grid,
            int n_inner, double T_inner, std::uint64_t master_seed,
            double dt_fast = 0.02);

  double eval(double x, double y) const;
  double stderr_at(double x, double y) const;
  // Central difference in x with step hx = max(1e-3, 1e-2 |x|).
  double dx_eval(double x, double y) const;
  // Median over interior nodes of SE(d_x Hbar)/|d_x Hbar|; throws
  // CacheResolutionTooCoarse above 0.5.
  double fd_noise_ratio() const;
  const EmpiricalFunction& table() const { return table_; }

 private:
  EmpiricalFunction table_;
  std::vector<double> x_grid_, y_grid_;
  double x_margin_ = 0.0;
};

// Martingale residual diagnostics for M_t^eps assembled along full-system
// replicas (substep-resolved integrals):
//   M_t = sqrt(eps) [Hbar(t) - Hbar(0)] + eps^{-1/2} \int_0^t H ds
//         - sqrt(eps) \int_0^t Hbar_x (a x + H + fbar) ds.
using PathFunctional = std::function<double(const SamplePath& path, double s)>;

struct MartingaleOptions {
  double dt_slow_in_eps = 0.1;
  std::uint64_t master_seed = 31001;
  std::vector<double> s_fractions = {0.25, 0.5, 0.75};  // of T
  std::vector<double> t_fractions = {0.5, 0.75, 1.0};
  std::optional<std::function<double(double)>> Sigma_of_x;  // for the QV ratio
};

struct ResidualCell {
  double s = 0.0, t = 0.0;
  int fn_index = 0;
  double residual = 0.0;
  double stderr_ = 0.0;
};

struct MartingaleReport {
  std::vector<ResidualCell> cells;
  double max_abs_z = 0.0;       // max |residual| / SE
  double qv_ratio = 0.0;        // E[sum (dM)^2] / E[int Sigma(x) ds]
  double qv_ratio_stderr = 0.0;
  int n_replicas = 0;
};

MartingaleReport martingale_residual(const SlowFastSystem& system, double x0,
                                     double T, int n_replicas,
                                     std::span<const PathFunctional> test_fns,
                                     const SlowDrift& fbar, const HbarCache& hbar,
                                     const MartingaleOptions& opts = MartingaleOptions());

// Euler-Maruyama on dx = [A x + fbar(x)] dt + sqrt(eps) sigma_bar(x) dW~ with
// the auxiliary W~ branch of the stream (stream dt must equal dt).
SamplePath integrate_intermediate(const Eigen::MatrixXd& A, const SlowDrift& fbar,
                                  const std::function<double(double)>& sigma_bar,
                                  double eps, double x0, double T, double dt,
                                  const NoiseStream& stream);

// Diffusion table over x nodes: Sigma estimates, SEs, factors, windows.
struct DiffusionTable {
  std::vector<double> x_nodes;
  std::vector<Eigen::MatrixXd> Sigma;
  std::vector<Eigen::MatrixXd> Sigma_stderr;
  std::vector<Eigen::MatrixXd> sigma_bar;
  std::vector<double> window;
  std::vector<char> plateau_ok;
  std::uint64_t seed = 0;

  double sigma_bar_scalar(double x) const;  // n = 1 linear interp
  void write_csv(const std::string& path) const;
  void write_json_meta(const std::string& path) const;
};

DiffusionTable tabulate_sigma(const SlowFastSystem& system,
                              std::span<const double> x_grid, const SlowDrift& fbar,
                              double T_corr, double T_total,
                              std::uint64_t master_seed,
                              const SigmaOptions& opts = SigmaOptions());

// Weak-error sweep of the intermediate model against the full system, with the
// averaged model measured on the same replicas. Weak error per eps:
//   d = max over {E x(T), E x(T)^2, E tanh(20 x(T))} of |full - intermediate|.
struct IntermediateSweepOptions {
  double dt_slow_in_eps = 0.05;  // full-system slow step (substep = half)
  double dt_intermediate = 1e-3;
  bool antithetic = true;
  std::uint64_t master_seed = 47001;
  int intermediate_pair_factor = 4;  // intermediate pairs = full pairs / factor
};

struct WeakStatRow {
  double eps = 0.0;
  double d_mean = 0.0, se_mean = 0.0;
  double d_second = 0.0, se_second = 0.0;
  double d_smooth = 0.0, se_smooth = 0.0;
};

struct IntermediateSweepReport {
  ConvergenceReport weak;      // max-statistic weak error, target slope ~ 1
  ConvergenceReport averaged;  // sup_t E|x - xbar| on the same data, slope ~ 1/2
  std::vector<WeakStatRow> stats;
  bool intermediate_below_averaged = false;  // at every eps
};

IntermediateSweepReport intermediate_error_sweep(
    const SlowFastSystem& system, double x0, double T,
    std::span<const double> eps_list, std::span<const int> n_pairs_per_eps,
    const IntermediateSweepOptions& opts = IntermediateSweepOptions());

}  // namespace slowfast
