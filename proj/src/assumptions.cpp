#include "slowfast/assumptions.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "slowfast/errors.hpp"
#include "slowfast/linalg.hpp"
#include "slowfast/rng.hpp"

namespace slowfast {

std::pair<double, double> check_h1(const SlowFastSystem& system) {
  const double beta = log_norm(system.B);
  if (beta >= 0.0)
    throw FastNotDissipative("mu(B) = " + std::to_string(beta) + " >= 0");
  const double alpha = std::max(0.0, -log_norm(-system.A));
  return {alpha, beta};
}

double h2_lhs(const AssumptionReport& r, double eps, double lambda) {
  const double d1 = r.alpha - lambda;
  const double d2 = eps * lambda - r.beta;
  if (d1 <= 0.0 || d2 <= 0.0) return std::numeric_limits<double>::infinity();
  return r.lip_f / d1 + r.lip_g / d2;
}

namespace {

// Golden-section minimization on [a, b].
double golden_min(const std::function<double(double)>& fn, double a, double b,
                  int iters = 80) {
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - gr * (b - a);
  double d = a + gr * (b - a);
  double fc = fn(c), fd = fn(d);
  for (int i = 0; i < iters; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = fn(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = fn(d);
    }
  }
  return fc < fd ? c : d;
}

}  // namespace

void check_h2(AssumptionReport& report, double eps) {
  const double lo = report.beta / eps;
  const double hi = report.alpha;
  if (!(lo < hi)) throw DegenerateInterval("empty lambda range");

  // 1024 grid points, log-spaced in the distance from each endpoint (the H2
  // expression blows up at both ends).
  const double span = hi - lo;
  const double d_min = span * 1e-9, d_max = span * 0.5;
  std::vector<double> grid;
  grid.reserve(1024);
  for (int i = 0; i < 512; ++i) {
    const double d = d_min * std::pow(d_max / d_min, i / 511.0);
    grid.push_back(lo + d);
    grid.push_back(hi - d);
  }

  auto fn = [&](double lam) { return h2_lhs(report, eps, lam); };
  double best_lam = grid[0], best_val = fn(grid[0]);
  for (double lam : grid) {
    const double v = fn(lam);
    if (v < best_val) {
      best_val = v;
      best_lam = lam;
    }
  }
  // Golden-section refinement around the grid minimum.
  const double bracket = span * 0.25;
  const double a = std::max(lo + d_min, best_lam - bracket);
  const double b = std::min(hi - d_min, best_lam + bracket);
  if (a < b) {
    const double lam = golden_min(fn, a, b);
    if (fn(lam) < best_val) {
      best_val = fn(lam);
      best_lam = lam;
    }
  }

  report.lambda_best = best_lam;
  report.h2_holds = best_val < 1.0;
  if (!report.h2_holds) {
    report.lambda_interval.reset();
    return;
  }
  // Feasible subinterval by bisection from the minimizer toward each endpoint.
  auto bisect_edge = [&](double inside, double outside) {
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (inside + outside);
      if (fn(mid) < 1.0)
        inside = mid;
      else
        outside = mid;
    }
    return inside;
  };
  const double left = fn(lo + d_min) < 1.0 ? lo + d_min : bisect_edge(best_lam, lo + d_min);
  const double right = fn(hi - d_min) < 1.0 ? hi - d_min : bisect_edge(best_lam, hi - d_min);
  report.lambda_interval = std::make_pair(left, right);
}

void check_completeness_gap(AssumptionReport& report, double eps) {
  const double Lf = report.lip_f, Lg = report.lip_g;
  double delta, value;
  if (Lf > 0.0 && Lg > 0.0) {
    delta = std::sqrt(Lg / (eps * Lf));
    value = eps * report.alpha + eps * Lf + eps * delta * Lf + report.beta + Lg +
            Lg / delta;
  } else {
    // L_f = 0 (or L_g = 0): the delta-dependent terms vanish in the limit.
    delta = std::numeric_limits<double>::infinity();
    value = eps * report.alpha + eps * Lf + report.beta + Lg;
    if (Lg == 0.0) delta = std::numeric_limits<double>::infinity();
  }
  report.gap_holds = value < 0.0;
  if (report.gap_holds) {
    report.delta = delta;
    const double lg_over_delta = std::isinf(delta) ? 0.0 : Lg / delta;
    report.gamma = -report.beta - Lg - lg_over_delta;
  } else {
    report.delta.reset();
    report.gamma.reset();
  }
}

double estimate_lipschitz(const BoxFn& fn, int dim_in, int dim_out,
                          std::span<const double> lo, std::span<const double> hi,
                          int n_samples, std::uint64_t seed) {
  if (n_samples < 2) throw InvalidArgument("n_samples must be >= 2");
  if (static_cast<int>(lo.size()) != dim_in || static_cast<int>(hi.size()) != dim_in)
    throw InvalidArgument("box dims mismatch");
  double diam2 = 0.0;
  for (int d = 0; d < dim_in; ++d) {
    if (!(hi[d] > lo[d])) throw EmptyDomain("box has zero volume");
    diam2 += (hi[d] - lo[d]) * (hi[d] - lo[d]);
  }
  const double diam = std::sqrt(diam2);

  // Weyl additive-recurrence sequence with seed-derived offsets: deterministic
  // and prefix-stable, so the estimate is monotone in n_samples.
  std::vector<double> alphas(2 * dim_in), offsets(2 * dim_in);
  for (int d = 0; d < 2 * dim_in; ++d) {
    alphas[d] = std::fmod(std::sqrt(static_cast<double>(100 + d * d + 3 * d + 1)), 1.0);
    offsets[d] = rng::uniform01(rng::hash_at(rng::mix64(seed), d));
  }
  auto qr_point = [&](std::int64_t i, int block, std::span<double> p) {
    for (int d = 0; d < dim_in; ++d) {
      const int lane = block * dim_in + d;
      const double u = std::fmod(offsets[lane] + alphas[lane] * static_cast<double>(i + 1), 1.0);
      p[d] = lo[d] + (hi[d] - lo[d]) * u;
    }
  };

  std::vector<double> p(dim_in), q(dim_in), fp(dim_out), fq(dim_out);
  double best = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    qr_point(i, 0, p);
    if (i % 2 == 0) {
      qr_point(i, 1, q);
    } else {
      // Near pair: small offset along a quasi-random direction, to pick up
      // local gradients that far pairs average away.
      qr_point(i, 1, q);
      double norm = 0.0;
      for (int d = 0; d < dim_in; ++d) {
        q[d] -= p[d];
        norm += q[d] * q[d];
      }
      norm = std::sqrt(norm);
      const double scale = 1e-4 * diam / (norm > 0 ? norm : 1.0);
      for (int d = 0; d < dim_in; ++d) {
        q[d] = p[d] + q[d] * scale;
        q[d] = std::min(std::max(q[d], lo[d]), hi[d]);
      }
    }
    double dist2 = 0.0;
    for (int d = 0; d < dim_in; ++d) dist2 += (p[d] - q[d]) * (p[d] - q[d]);
    if (dist2 == 0.0) continue;
    fn(p, fp);
    fn(q, fq);
    double diff2 = 0.0;
    for (int d = 0; d < dim_out; ++d) diff2 += (fp[d] - fq[d]) * (fp[d] - fq[d]);
    best = std::max(best, std::sqrt(diff2 / dist2));
  }
  return best;
}

AssumptionReport make_assumption_report(const SlowFastSystem& system, int lip_samples,
                                        std::uint64_t seed) {
  AssumptionReport r;
  const auto [alpha, beta] = check_h1(system);
  r.alpha = alpha;
  r.beta = beta;
  if (system.lip_f && system.lip_g) {
    r.lip_f = *system.lip_f;
    r.lip_g = *system.lip_g;
    r.lip_estimated = false;
  } else {
    // Fallback: sampled lower bounds over the declared box (or a unit box).
    const int n = system.n, m = system.m;
    Eigen::VectorXd lo(n + m), hi(n + m);
    if (system.box) {
      lo = system.box->lo;
      hi = system.box->hi;
    } else {
      lo.setConstant(-1.0);
      hi.setConstant(1.0);
    }
    auto wrap = [&](const NonlinearFn& fn, int dim_out) {
      return [&, dim_out](std::span<const double> in, std::span<double> out) {
        fn(in.first(n), in.subspan(n), out.first(dim_out));
      };
    };
    r.lip_f = estimate_lipschitz(wrap(system.f, n), n + m, n,
                                 {lo.data(), lo.size() > 0 ? static_cast<std::size_t>(lo.size()) : 0},
                                 {hi.data(), static_cast<std::size_t>(hi.size())},
                                 lip_samples, seed);
    r.lip_g = estimate_lipschitz(wrap(system.g, m), n + m, m,
                                 {lo.data(), static_cast<std::size_t>(lo.size())},
                                 {hi.data(), static_cast<std::size_t>(hi.size())},
                                 lip_samples, seed + 1);
    r.lip_estimated = true;
  }
  check_h2(r, system.eps);
  check_completeness_gap(r, system.eps);
  return r;
}

}  // namespace slowfast
