#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>

#include "slowfast/system.hpp"

namespace slowfast {

// Numerical certification of the structural assumptions on (A, B, f, g).
struct AssumptionReport {
  double alpha = 0.0;  // growth bound of e^{tA} for t <= 0 (>= 0)
  double beta = 0.0;   // decay bound of e^{tB} for t >= 0 (< 0)
  double lip_f = 0.0;
  double lip_g = 0.0;
  bool lip_estimated = false;  // true when from sampling (a lower bound)

  bool h2_holds = false;
  std::optional<std::pair<double, double>> lambda_interval;  // feasible lambda range
  std::optional<double> lambda_best;                         // minimizer of the H2 LHS

  bool gap_holds = false;
  std::optional<double> delta;  // minimizing delta* when gap_holds
  std::optional<double> gamma;  // attraction rate -beta - L_g - L_g/delta*
};

// Tightest (alpha, beta) from logarithmic norms of the symmetric parts:
// alpha = max(0, -mu(-A)), beta = mu(B) with mu(M) = lambda_max((M+M^T)/2).
// Throws FastNotDissipative if mu(B) >= 0.
std::pair<double, double> check_h1(const SlowFastSystem& system);

// Spectral-gap scan: is there lambda with beta < eps*lambda < alpha and
// L_f/(alpha-lambda) + L_g/(eps*lambda-beta) < 1?  1024-point log grid over
// (beta/eps, alpha) plus golden-section refinement. Fills h2_holds,
// lambda_interval, lambda_best on the report.
void check_h2(AssumptionReport& report, double eps);

// Closed-form minimization of eps*alpha + eps*L_f + eps*delta*L_f + beta +
// L_g + L_g/delta over delta > 0 (delta* = sqrt(L_g/(eps*L_f))); fills
// gap_holds, delta, gamma.
void check_completeness_gap(AssumptionReport& report, double eps);

// H2 left-hand side at a given lambda (for reuse by LP configuration).
double h2_lhs(const AssumptionReport& report, double eps, double lambda);

// Sampled lower bound on a Lipschitz constant: quasi-random point pairs in the
// box [lo, hi], max |fn(p)-fn(q)| / |p-q|. Deterministic given seed; the value
// is monotone nondecreasing in n_samples for a fixed seed.
using BoxFn = std::function<void(std::span<const double> in, std::span<double> out)>;
double estimate_lipschitz(const BoxFn& fn, int dim_in, int dim_out,
                          std::span<const double> lo, std::span<const double> hi,
                          int n_samples, std::uint64_t seed);

// Convenience: report for a system using declared Lipschitz constants when
// present, otherwise sampled estimates over the system box (or a default box).
AssumptionReport make_assumption_report(const SlowFastSystem& system,
                                        int lip_samples = 4096,
                                        std::uint64_t seed = 0x5157);

}  // namespace slowfast
