#include "slowfast/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "slowfast/errors.hpp"
#include "slowfast/integrate.hpp"
#include "slowfast/linalg.hpp"
#include "slowfast/ou.hpp"
#include "slowfast/parallel.hpp"
#include "slowfast/stats.hpp"

namespace slowfast {

LPConfig LPConfig::auto_for(const SlowFastSystem& system,
                            const AssumptionReport& report, double tol) {
  if (!report.h2_holds)
    throw InvalidArgument("LPConfig::auto_for: H2 does not hold for this report");
  LPConfig cfg;
  cfg.tol = tol;
  cfg.lambda = report.lambda_best.value();
  const double decay = -(report.beta + report.lip_g);
  if (!(decay > 0.0))
    throw InvalidArgument("LPConfig::auto_for: beta + L_g must be negative");
  cfg.t_trunc = system.eps * std::log(10.0 / tol) / decay * 1.0000001;
  return cfg;
}

double LPConfig::contraction_factor(const AssumptionReport& report,
                                    double eps) const {
  return h2_lhs(report, eps, lambda);
}

void LPConfig::validate(const AssumptionReport& report, double eps) const {
  const double decay = report.beta + report.lip_g;
  if (!(std::exp(decay * t_trunc / eps) < tol / 10.0))
    throw InvalidArgument("LPConfig: truncation horizon too short for tol");
  const double kappa = contraction_factor(report, eps);
  if (!(kappa < 1.0))
    throw InvalidArgument("LPConfig: contraction factor " + std::to_string(kappa) +
                          " >= 1 at lambda");
}

HistoryGrid HistoryGrid::build(double t_trunc, double eps, double dt_stream,
                               int n_grid) {
  if (!(t_trunc > 0.0)) throw InvalidArgument("HistoryGrid: t_trunc must be > 0");
  HistoryGrid g;
  g.dt_stream = dt_stream;
  // Uniform spacing near 0: the largest stream multiple <= eps/10.
  auto ju = static_cast<std::int64_t>(std::floor(eps / 10.0 / dt_stream + 1e-9));
  if (ju < 1) ju = 1;
  const double t_uniform = std::min(t_trunc, 5.0 * eps);

  std::vector<std::int64_t> rev;  // node indices from 0 going backward
  rev.push_back(0);
  std::int64_t pos = 0;
  while (static_cast<double>(-pos) * dt_stream < t_uniform - 1e-12) {
    pos -= ju;
    rev.push_back(pos);
  }
  // Geometric coarsening: cell width doubles until -T0 is covered, capped at
  // eps/2 so the discrete recursion still resolves transits of regions where
  // the local fast slope exceeds the linear decay (kernel weight at the
  // implicit node stays below ~0.21 there).
  auto cap = static_cast<std::int64_t>(std::floor(0.5 * eps / dt_stream + 1e-9));
  if (cap < ju) cap = ju;
  std::int64_t w = std::min(2 * ju, cap);
  while (static_cast<double>(-pos) * dt_stream < t_trunc - 1e-12) {
    pos -= w;
    rev.push_back(pos);
    w = std::min(2 * w, cap);
    if (static_cast<int>(rev.size()) > n_grid)
      throw InvalidArgument("HistoryGrid: node cap exceeded");
  }
  if (static_cast<int>(rev.size()) > n_grid)
    throw InvalidArgument("HistoryGrid: node cap exceeded");

  g.idx.assign(rev.rbegin(), rev.rend());
  g.s.resize(g.idx.size());
  for (std::size_t i = 0; i < g.idx.size(); ++i)
    g.s[i] = static_cast<double>(g.idx[i]) * dt_stream;
  return g;
}

double HistoryPath::weighted_norm(double lambda) const {
  double best = 0.0;
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    const double w = std::exp(-lambda * grid.s[i]);
    const double nrm = std::sqrt(X.col(i).squaredNorm() + Y.col(i).squaredNorm());
    best = std::max(best, w * nrm);
  }
  return best;
}

namespace {

// Per-cell-width operators for the LP sweeps.
struct CellOps {
  Eigen::MatrixXd Ef;       // e^{B h/eps}
  Eigen::MatrixXd Lq;       // noise factor of Q(h)
  Eigen::MatrixXd Wa, Wb;   // fast kernel weights: older node, newer node
  Eigen::MatrixXd Es;       // e^{-h A}
  Eigen::MatrixXd Va, Vb;   // slow kernel weights: newer node (s_i), older.. see below
  double h = 0.0;
};

CellOps make_cell_ops(const SlowFastSystem& sys, double h) {
  CellOps ops;
  ops.h = h;
  const OuTransition tr(sys.B, sys.sigma, sys.eps, h);
  ops.Ef = tr.propagator();
  ops.Lq = tr.noise_factor();
  const Eigen::MatrixXd Z = (h / sys.eps) * sys.B;
  const Eigen::MatrixXd p1 = phi1(Z), p2 = phi2(Z);
  ops.Wa = (h / sys.eps) * (p1 - p2);
  ops.Wb = (h / sys.eps) * p2;
  const Eigen::MatrixXd ZA = -h * sys.A;
  const Eigen::MatrixXd q1 = phi1(ZA), q2 = phi2(ZA);
  ops.Es = matrix_exp(ZA);
  ops.Va = h * q2;        // weight of F at the cell's left node s_i
  ops.Vb = h * (q1 - q2); // weight of F at the cell's right node s_{i+1}
  return ops;
}

struct GridOps {
  std::vector<const CellOps*> cell;  // per cell, borrowed from the width map
  std::map<std::int64_t, CellOps> by_width;
};

GridOps make_grid_ops(const SlowFastSystem& sys, const HistoryGrid& grid) {
  GridOps ops;
  for (std::size_t c = 0; c < grid.n_cells(); ++c) {
    const std::int64_t w = grid.idx[c + 1] - grid.idx[c];
    if (ops.by_width.find(w) == ops.by_width.end())
      ops.by_width.emplace(w, make_cell_ops(sys, static_cast<double>(w) * grid.dt_stream));
  }
  for (std::size_t c = 0; c < grid.n_cells(); ++c)
    ops.cell.push_back(&ops.by_width.at(grid.idx[c + 1] - grid.idx[c]));
  return ops;
}

// The OU realization along the grid from a stationary draw at -T0.
Eigen::MatrixXd eta_realization(const SlowFastSystem& sys, const HistoryGrid& grid,
                                const GridOps& ops, const NoiseStream& stream,
                                const WienerPathCache* cache) {
  const int m = sys.m;
  const std::size_t K = grid.n_cells();
  Eigen::MatrixXd eta(m, K + 1);
  Eigen::VectorXd cur(m), dW(m);
  sample_stationary_ou(sys.B, sys.sigma, stream,
                       {cur.data(), static_cast<std::size_t>(m)});
  eta.col(0) = cur;
  for (std::size_t c = 0; c < K; ++c) {
    if (cache)
      cache->increment_sum(grid.idx[c], grid.idx[c + 1],
                           {dW.data(), static_cast<std::size_t>(m)});
    else
      stream.increment_sum(grid.idx[c], grid.idx[c + 1],
                           {dW.data(), static_cast<std::size_t>(m)});
    const CellOps& co = *ops.cell[c];
    cur = co.Ef * cur + co.Lq * (dW / std::sqrt(co.h));
    eta.col(c + 1) = cur;
  }
  return eta;
}

}  // namespace

LpResult lp_iterate(const SlowFastSystem& system, const Eigen::VectorXd& X0,
                    const NoiseStream& stream, const LPConfig& config,
                    ManifoldMode mode, const WienerPathCache* cache) {
  const int n = system.n, m = system.m;
  const HistoryGrid grid =
      HistoryGrid::build(config.t_trunc, system.eps, stream.dt(), config.n_grid);
  const GridOps ops = make_grid_ops(system, grid);
  const std::size_t K = grid.n_cells();

  LpResult res;
  res.history.grid = grid;
  res.history.eta = eta_realization(system, grid, ops, stream, cache);
  const Eigen::MatrixXd& eta = res.history.eta;

  // Initial slow history: e^{s A} X0 (the exact fixed point when f = 0), or
  // the frozen slow coordinate.
  Eigen::MatrixXd X(n, K + 1), Y = Eigen::MatrixXd::Zero(m, K + 1);
  X.col(K) = X0;
  for (std::size_t c = K; c-- > 0;) {
    if (mode == ManifoldMode::frozen_limit)
      X.col(c) = X0;
    else
      X.col(c) = ops.cell[c]->Es * X.col(c + 1);  // e^{(s_c - s_{c+1})A} backward
  }
  const Eigen::MatrixXd X_linear = X;  // e^{s A} X0 profile reused every sweep

  Eigen::MatrixXd Xn(n, K + 1), Yn(m, K + 1);
  Eigen::VectorXd yarg(m), fo(n), go(m), go_new(m), fo_new(n);
  Eigen::VectorXd S(n);

  auto eval_g_at = [&](const Eigen::VectorXd& x_at, const Eigen::VectorXd& y_at,
                       const Eigen::VectorXd& eta_at, Eigen::VectorXd& out) {
    yarg = y_at + eta_at;
    system.eval_g({x_at.data(), static_cast<std::size_t>(n)},
                  {yarg.data(), static_cast<std::size_t>(m)},
                  {out.data(), static_cast<std::size_t>(m)});
  };

  double prev_resid = -1.0;
  int consecutive_expansions = 0;
  res.observed_contraction = 0.0;
  std::vector<double> ratios;

  Eigen::VectorXd fv(n);
  for (int iter = 1; iter <= config.max_iter; ++iter) {
    // Gauss-Seidel sweeps of the discretized LP operator. The forward fast
    // sweep follows the stable pullback direction (already-updated values feed
    // the propagator term); only the right-node kernel weight Wb, whose mass
    // is O(h/2eps), reads the previous iterate. Same fixed point as plain
    // Picard, convergent also when eta excursions cross the cutoff annulus
    // where the quasi-static map is locally expansive.
    Yn.col(0).setZero();
    for (std::size_t c = 0; c < K; ++c) {
      const CellOps& co = *ops.cell[c];
      eval_g_at(X.col(c), Yn.col(c), eta.col(c), go_new);
      eval_g_at(X.col(c + 1), Y.col(c + 1), eta.col(c + 1), go);
      Yn.col(c + 1) = co.Ef * Yn.col(c) + co.Wa * go_new + co.Wb * go;
    }

    // Backward slow sweep: X_i = e^{s_i A} X0 - S_i with
    // S_i = \int_{s_i}^0 e^{(s_i-s)A} F ds; F uses the fresh fast values.
    if (mode == ManifoldMode::full_eps) {
      S.setZero();
      Xn.col(K) = X0;
      yarg = Yn.col(K) + eta.col(K);
      system.eval_f({Xn.col(K).data(), static_cast<std::size_t>(n)},
                    {yarg.data(), static_cast<std::size_t>(m)},
                    {fo_new.data(), static_cast<std::size_t>(n)});
      for (std::size_t c = K; c-- > 0;) {
        const CellOps& co = *ops.cell[c];
        // F at the right node from the newest X, at the left from the old X.
        yarg = Yn.col(c) + eta.col(c);
        system.eval_f({X.col(c).data(), static_cast<std::size_t>(n)},
                      {yarg.data(), static_cast<std::size_t>(m)},
                      {fv.data(), static_cast<std::size_t>(n)});
        S = co.Va * fv + co.Vb * fo_new + co.Es * S;
        Xn.col(c) = X_linear.col(c) - S;
        yarg = Yn.col(c) + eta.col(c);
        system.eval_f({Xn.col(c).data(), static_cast<std::size_t>(n)},
                      {yarg.data(), static_cast<std::size_t>(m)},
                      {fo_new.data(), static_cast<std::size_t>(n)});
      }
    } else {
      Xn = X;
    }

    // Weighted sup-norm residual.
    double resid = 0.0;
    for (std::size_t i = 0; i <= K; ++i) {
      const double w = std::exp(-config.lambda * grid.s[i]);
      const double d2 =
          (Xn.col(i) - X.col(i)).squaredNorm() + (Yn.col(i) - Y.col(i)).squaredNorm();
      resid = std::max(resid, w * std::sqrt(d2));
    }
    X.swap(Xn);
    Y.swap(Yn);
    res.iterations = iter;
    res.final_residual = resid;

    if (prev_resid > 0.0 && resid > 0.0) {
      const double ratio = resid / prev_resid;
      ratios.push_back(ratio);
      consecutive_expansions = ratio > 1.0 ? consecutive_expansions + 1 : 0;
      if (consecutive_expansions >= 3)
        throw NoContraction("residual ratio > 1 for 3 iterations");
    }
    prev_resid = resid;
    if (resid < config.tol) break;
  }
  if (!ratios.empty()) {
    std::vector<double> sorted_ratios = ratios;
    std::sort(sorted_ratios.begin(), sorted_ratios.end());
    res.observed_contraction = sorted_ratios[sorted_ratios.size() / 2];
  }
  if (res.final_residual >= config.tol)
    throw NoContraction("no convergence within max_iter (residual " +
                        std::to_string(res.final_residual) + ")");

  // Deepest-cell contribution propagated to 0 must sit below tol.
  {
    const CellOps& co = *ops.cell[0];
    Eigen::VectorXd g0(m), g1(m);
    eval_g_at(X.col(0), Y.col(0), eta.col(0), g0);
    eval_g_at(X.col(1), Y.col(1), eta.col(1), g1);
    const double contrib = (co.Wa * g0 + co.Wb * g1).norm();
    const double damp = std::exp(log_norm(system.B) * (-grid.s[1]) / system.eps);
    if (contrib * damp > config.tol)
      throw TruncationTooShort("deepest cell contributes " +
                               std::to_string(contrib * damp));
  }

  res.history.X = X;
  res.history.Y = Y;
  res.h_value = Y.col(K);
  res.eta0 = eta.col(K);
  return res;
}

Eigen::VectorXd h0_eval(const SlowFastSystem& system, const Eigen::VectorXd& X,
                        const NoiseStream& stream, double burn_in) {
  const int m = system.m;
  // Uniform substep <= eps/10, a multiple of the stream dt.
  auto ju = static_cast<std::int64_t>(
      std::floor(system.eps / 10.0 / stream.dt() + 1e-9));
  if (ju < 1) ju = 1;
  const double h = static_cast<double>(ju) * stream.dt();
  const auto n_steps = static_cast<std::int64_t>(std::ceil(burn_in / h - 1e-12));
  if (n_steps < 1) throw InvalidArgument("h0_eval: burn_in too small");

  const OuTransition tr(system.B, system.sigma, system.eps, h);
  Eigen::VectorXd eta(m), Y = Eigen::VectorXd::Zero(m), dW(m), yarg(m), go(m);
  sample_stationary_ou(system.B, system.sigma, stream,
                       {eta.data(), static_cast<std::size_t>(m)});
  for (std::int64_t k = -n_steps; k < 0; ++k) {
    yarg = Y + eta;
    system.eval_g({X.data(), static_cast<std::size_t>(system.n)},
                  {yarg.data(), static_cast<std::size_t>(m)},
                  {go.data(), static_cast<std::size_t>(m)});
    // Y' = e^{Bh/eps} Y + B^{-1}(e^{Bh/eps}-I) g  (frozen g over the substep)
    tr.step_forced({Y.data(), static_cast<std::size_t>(m)},
                   {go.data(), static_cast<std::size_t>(m)},
                   {Y.data(), static_cast<std::size_t>(m)});
    stream.increment_sum(k * ju, (k + 1) * ju, {dW.data(), static_cast<std::size_t>(m)});
    tr.step({eta.data(), static_cast<std::size_t>(m)},
            {dW.data(), static_cast<std::size_t>(m)},
            {eta.data(), static_cast<std::size_t>(m)});
    if (Y.norm() > 1e12) throw BlowUp("h0_eval pullback diverged");
  }
  return Y;
}

ManifoldMap ManifoldMap::make(const SlowFastSystem& system,
                              const AssumptionReport& report, const LPConfig& config,
                              ManifoldMode mode) {
  ManifoldMap map;
  map.system = &system;
  map.config = config;
  map.mode = mode;
  const double d1 = report.alpha - config.lambda;
  const double d2 = system.eps * config.lambda - report.beta;
  if (d1 > 0.0 && d2 > 0.0) {
    const double denom = 1.0 - report.lip_g * (1.0 / d1 + 1.0 / d2);
    if (denom > 0.0) map.lipschitz_bound = report.lip_g / (d1 * denom);
  }
  return map;
}

Eigen::VectorXd ManifoldMap::operator()(const Eigen::VectorXd& X,
                                        const NoiseStream& stream) const {
  return lp_iterate(*system, X, stream, config, mode).h_value;
}

ManifoldGapReport manifold_gap(const SlowFastSystem& system, double X_scalar,
                               std::span<const double> eps_list, int n_realizations,
                               const ManifoldGapOptions& opts) {
  if (eps_list.size() < 2) throw InvalidArgument("manifold_gap: need >= 2 eps");
  for (std::size_t i = 1; i < eps_list.size(); ++i)
    if (!(eps_list[i] < eps_list[i - 1]))
      throw InvalidArgument("manifold_gap: eps_list must be strictly decreasing");

  const double eps_min = eps_list.back();
  const double dt_stream = eps_min / 10.0;

  // Per-eps configs; the largest horizon fixes the cached index range.
  std::vector<LPConfig> cfgs;
  double t_max = 0.0;
  for (double eps : eps_list) {
    const SlowFastSystem sys_eps = system.with_eps(eps);
    AssumptionReport rep = make_assumption_report(sys_eps);
    LPConfig cfg = LPConfig::auto_for(sys_eps, rep, opts.tol);
    cfg.n_grid = opts.n_grid;
    cfg.validate(rep, eps);
    cfgs.push_back(cfg);
    t_max = std::max(t_max, cfg.t_trunc);
  }
  // Margin: grid construction may overshoot -T0 by up to one capped cell.
  const double eps_max = eps_list.front();
  const auto k_lo =
      -static_cast<std::int64_t>(std::ceil((t_max + eps_max) / dt_stream)) - 16;

  const std::size_t ne = eps_list.size();
  std::vector<std::vector<double>> gaps(ne, std::vector<double>(n_realizations));
  parallel_for(static_cast<std::size_t>(n_realizations), [&](std::size_t r) {
    NoiseStream stream(opts.master_seed, static_cast<std::uint32_t>(r), system.m,
                       dt_stream);
    WienerPathCache cache(stream, k_lo, 0);
    Eigen::VectorXd X0(1);
    X0(0) = X_scalar;
    for (std::size_t e = 0; e < ne; ++e) {
      const SlowFastSystem sys_eps = system.with_eps(eps_list[e]);
      const LpResult full =
          lp_iterate(sys_eps, X0, stream, cfgs[e], ManifoldMode::full_eps, &cache);
      const LpResult frozen =
          lp_iterate(sys_eps, X0, stream, cfgs[e], ManifoldMode::frozen_limit, &cache);
      gaps[e][r] = (full.h_value - frozen.h_value).norm();
    }
  });

  ManifoldGapReport out;
  out.report.seed = opts.master_seed;
  out.report.n_replicas = n_realizations;
  out.report.label = "manifold_gap";
  for (std::size_t e = 0; e < ne; ++e) {
    auto ms = mean_stderr(gaps[e]);
    out.report.rows.push_back({eps_list[e], ms.mean, ms.stderr_});
    if (e > 0) {
      int smaller = 0, smaller0 = 0;
      for (int r = 0; r < n_realizations; ++r) {
        if (gaps[e][r] < gaps[e - 1][r]) ++smaller;
        if (gaps[e][r] < gaps[0][r]) ++smaller0;
      }
      out.pathwise_monotone_frac.push_back(static_cast<double>(smaller) /
                                           n_realizations);
      out.pathwise_frac_vs_first.push_back(static_cast<double>(smaller0) /
                                           n_realizations);
    }
  }
  out.report.fit_if_possible();
  return out;
}

DecayFit attraction_pair(const SlowFastSystem& system, const Eigen::VectorXd& x_on,
                         const Eigen::VectorXd& y_on, const Eigen::VectorXd& x_off,
                         const Eigen::VectorXd& y_off, double T, double dt_slow,
                         const NoiseStream& stream) {
  const SamplePath a = integrate_slowfast(
      system, {x_on.data(), static_cast<std::size_t>(x_on.size())},
      {y_on.data(), static_cast<std::size_t>(y_on.size())}, T, dt_slow, stream);
  const SamplePath b = integrate_slowfast(
      system, {x_off.data(), static_cast<std::size_t>(x_off.size())},
      {y_off.data(), static_cast<std::size_t>(y_off.size())}, T, dt_slow, stream);

  const std::size_t ns = std::min(a.n_steps(), b.n_steps());
  std::vector<double> ts, logd;
  DecayFit fit;
  double d0 = 0.0;
  for (std::size_t i = 0; i < ns; ++i) {
    double d2 = 0.0;
    for (int c = 0; c < system.n; ++c) {
      const double dd = a.slow[i * system.n + c] - b.slow[i * system.n + c];
      d2 += dd * dd;
    }
    for (int c = 0; c < system.m; ++c) {
      const double dd = a.fast[i * system.m + c] - b.fast[i * system.m + c];
      d2 += dd * dd;
    }
    const double d = std::sqrt(d2);
    if (i == 0) d0 = d;
    if (d <= std::max(1e-13 * d0, 1e-290)) {
      fit.underflow_flagged = true;  // fit window auto-shortened
      break;
    }
    ts.push_back(a.dt * static_cast<double>(i));
    logd.push_back(std::log(d));
  }
  if (ts.size() < 3) {
    // distance at or below the floor from the start (e.g. identical states):
    // nothing to fit, report a flagged zero rate
    fit.underflow_flagged = true;
    fit.rate = 0.0;
    fit.t_fit_end = 0.0;
    return fit;
  }
  // Least squares slope of log d on t.
  const double npt = static_cast<double>(ts.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    sx += ts[i];
    sy += logd[i];
    sxx += ts[i] * ts[i];
    sxy += ts[i] * logd[i];
  }
  fit.rate = -(npt * sxy - sx * sy) / (npt * sxx - sx * sx);
  fit.t_fit_end = ts.back();
  return fit;
}

AttractionReport attraction_test(const SlowFastSystem& system, double x0,
                                 int n_realizations, const AttractionOptions& opts) {
  const double eps = system.eps;
  const double T = opts.t_span_in_eps * eps;
  const double dt_slow = opts.dt_slow_in_eps * eps;
  AssumptionReport rep = make_assumption_report(system);
  const bool lp_ok = rep.h2_holds;
  LPConfig cfg;
  if (lp_ok) cfg = LPConfig::auto_for(system, rep);

  std::vector<double> rates(n_realizations);
  std::vector<char> underflow(n_realizations, 0);
  parallel_for(static_cast<std::size_t>(n_realizations), [&](std::size_t r) {
    // Substep of the integrator: dt_slow/n_sub with n_sub even; stream dt must
    // divide it. n_sub = ceil(10*dt_slow/eps) = 2 here, so use dt_slow/2.
    NoiseStream stream(opts.master_seed, static_cast<std::uint32_t>(r), system.m,
                       dt_slow / 2.0);
    Eigen::VectorXd x_on(system.n);
    x_on.setConstant(x0);
    Eigen::VectorXd y_on(system.m);
    if (lp_ok) {
      const LpResult lp = lp_iterate(system, x_on, stream, cfg);
      y_on = lp.h_value + lp.eta0;
    } else {
      sample_stationary_ou(system.B, system.sigma, stream,
                           {y_on.data(), static_cast<std::size_t>(system.m)});
    }
    Eigen::VectorXd y_off = y_on;
    y_off(0) += opts.perturbation;
    const DecayFit fit =
        attraction_pair(system, x_on, y_on, x_on, y_off, T, dt_slow, stream);
    rates[r] = fit.rate;
    underflow[r] = fit.underflow_flagged ? 1 : 0;
  });

  AttractionReport out;
  out.eps = eps;
  out.n_realizations = n_realizations;
  out.rate_mean = mean_of(rates);
  std::vector<double> sorted = rates;
  std::sort(sorted.begin(), sorted.end());
  out.rate_median = sorted[sorted.size() / 2];
  out.any_underflow =
      std::any_of(underflow.begin(), underflow.end(), [](char c) { return c != 0; });
  return out;
}

ReducedPathIntegrator::ReducedPathIntegrator(const SlowFastSystem& system,
                                             const NoiseStream& stream,
                                             double burn_in)
    : system_(&system), stream_(stream), burn_in_(burn_in) {}

Eigen::VectorXd ReducedPathIntegrator::rhs(double t, const Eigen::VectorXd& x) const {
  const NoiseStream at_t = stream_.shifted(t);
  const Eigen::VectorXd h0 = h0_eval(*system_, x, at_t, burn_in_);
  // eta at time t: stationary draw at t - burn_in propagated forward along the
  // same increments (one continuous realization since the draw slot is fixed).
  const int m = system_->m;
  auto ju = static_cast<std::int64_t>(
      std::floor(system_->eps / 10.0 / stream_.dt() + 1e-9));
  if (ju < 1) ju = 1;
  const double h = static_cast<double>(ju) * stream_.dt();
  const auto n_steps = static_cast<std::int64_t>(std::ceil(burn_in_ / h - 1e-12));
  const OuTransition tr(system_->B, system_->sigma, system_->eps, h);
  Eigen::VectorXd eta(m), dW(m);
  sample_stationary_ou(system_->B, system_->sigma, at_t,
                       {eta.data(), static_cast<std::size_t>(m)});
  for (std::int64_t k = -n_steps; k < 0; ++k) {
    at_t.increment_sum(k * ju, (k + 1) * ju, {dW.data(), static_cast<std::size_t>(m)});
    tr.step({eta.data(), static_cast<std::size_t>(m)},
            {dW.data(), static_cast<std::size_t>(m)},
            {eta.data(), static_cast<std::size_t>(m)});
  }
  Eigen::VectorXd yarg = h0 + eta;
  Eigen::VectorXd fo(system_->n);
  system_->eval_f({x.data(), static_cast<std::size_t>(system_->n)},
                  {yarg.data(), static_cast<std::size_t>(m)},
                  {fo.data(), static_cast<std::size_t>(system_->n)});
  return system_->A * x + fo;
}

SamplePath ReducedPathIntegrator::integrate(const Eigen::VectorXd& x0, double T,
                                            double dt) {
  const auto n_steps = static_cast<std::size_t>(std::llround(T / dt));
  SamplePath path;
  path.t0 = 0.0;
  path.dt = dt;
  path.n = system_->n;
  path.m = 0;
  Eigen::VectorXd x = x0;
  path.slow.insert(path.slow.end(), x.data(), x.data() + x.size());
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t = dt * static_cast<double>(k);
    // Midpoint with the random coefficient frozen at t (one pullback per step).
    const Eigen::VectorXd k1 = rhs(t, x);
    const Eigen::VectorXd k2 = rhs(t, x + 0.5 * dt * k1);
    x += dt * k2;
    path.slow.insert(path.slow.end(), x.data(), x.data() + x.size());
  }
  return path;
}

void export_manifold_slice(const SlowFastSystem& system, const LPConfig& config,
                           std::span<const double> x_grid, int n_realizations,
                           std::uint64_t master_seed, const std::string& path) {
  const double dt_stream = system.eps / 10.0;
  std::vector<double> mean_h(x_grid.size()), std_h(x_grid.size());
  for (std::size_t ix = 0; ix < x_grid.size(); ++ix) {
    std::vector<double> vals(n_realizations);
    parallel_for(static_cast<std::size_t>(n_realizations), [&](std::size_t r) {
      NoiseStream stream(master_seed, static_cast<std::uint32_t>(r), system.m,
                         dt_stream);
      Eigen::VectorXd X0(system.n);
      X0.setConstant(x_grid[ix]);
      vals[r] = lp_iterate(system, X0, stream, config).h_value(0);
    });
    mean_h[ix] = mean_of(vals);
    std_h[ix] = std::sqrt(variance_of(vals));
  }
  std::FILE* fp = std::fopen(path.c_str(), "w");
  if (!fp) throw InvalidArgument("cannot open " + path);
  std::fprintf(fp, "X,mean_h,std_h,n_realizations\n");
  for (std::size_t ix = 0; ix < x_grid.size(); ++ix)
    std::fprintf(fp, "%.17g,%.17g,%.17g,%d\n", x_grid[ix], mean_h[ix], std_h[ix],
                 n_realizations);
  std::fclose(fp);
}

}  // namespace slowfast
