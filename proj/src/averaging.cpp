#include "slowfast/averaging.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "slowfast/errors.hpp"
#include "slowfast/integrate.hpp"
#include "slowfast/linalg.hpp"
#include "slowfast/manifold.hpp"
#include "slowfast/ou.hpp"
#include "slowfast/parallel.hpp"
#include "slowfast/stationary1d.hpp"
#include "slowfast/stats.hpp"

namespace slowfast {

EmpiricalFunction::EmpiricalFunction(std::vector<double> grid,
                                     std::vector<double> values,
                                     std::vector<double> stderrs)
    : dim_(1), grid_x_(std::move(grid)), values_(std::move(values)),
      stderrs_(std::move(stderrs)) {
  if (grid_x_.size() < 1 || grid_x_.size() != values_.size() ||
      values_.size() != stderrs_.size())
    throw InvalidArgument("EmpiricalFunction: inconsistent sizes");
  if (!std::is_sorted(grid_x_.begin(), grid_x_.end()))
    throw InvalidArgument("EmpiricalFunction: grid must be sorted");
  lo_ = {grid_x_.front()};
  hi_ = {grid_x_.back()};
}

EmpiricalFunction::EmpiricalFunction(std::vector<double> grid_x,
                                     std::vector<double> grid_y,
                                     std::vector<double> values,
                                     std::vector<double> stderrs)
    : dim_(2), grid_x_(std::move(grid_x)), grid_y_(std::move(grid_y)),
      values_(std::move(values)), stderrs_(std::move(stderrs)) {
  if (values_.size() != grid_x_.size() * grid_y_.size() ||
      stderrs_.size() != values_.size())
    throw InvalidArgument("EmpiricalFunction: inconsistent tensor sizes");
  lo_ = {grid_x_.front(), grid_y_.front()};
  hi_ = {grid_x_.back(), grid_y_.back()};
}

EmpiricalFunction::EmpiricalFunction(int dim, std::vector<Eigen::VectorXd> nodes,
                                     std::vector<double> values,
                                     std::vector<double> stderrs)
    : dim_(dim), nodes_(std::move(nodes)), values_(std::move(values)),
      stderrs_(std::move(stderrs)) {
  if (nodes_.empty() || nodes_.size() != values_.size())
    throw InvalidArgument("EmpiricalFunction: inconsistent scattered sizes");
  lo_.assign(dim_, 1e300);
  hi_.assign(dim_, -1e300);
  for (const auto& p : nodes_)
    for (int d = 0; d < dim_; ++d) {
      lo_[d] = std::min(lo_[d], p(d));
      hi_[d] = std::max(hi_[d], p(d));
    }
}

namespace {
std::size_t bracket(const std::vector<double>& g, double x) {
  // index i with g[i] <= x <= g[i+1]
  auto it = std::upper_bound(g.begin(), g.end(), x);
  std::size_t i = static_cast<std::size_t>(it - g.begin());
  if (i == 0) return 0;
  if (i >= g.size()) return g.size() - 2;
  return i - 1;
}
}  // namespace

double EmpiricalFunction::eval(std::span<const double> x) const {
  for (int d = 0; d < dim_ && d < static_cast<int>(lo_.size()); ++d)
    if (x[d] < lo_[d] - 1e-12 || x[d] > hi_[d] + 1e-12)
      throw TableRangeExceeded("query outside table hull");
  if (dim_ == 1) {
    if (grid_x_.size() == 1) return values_[0];
    const std::size_t i = bracket(grid_x_, x[0]);
    const double w = (x[0] - grid_x_[i]) / (grid_x_[i + 1] - grid_x_[i]);
    return (1.0 - w) * values_[i] + w * values_[i + 1];
  }
  if (dim_ == 2) {
    const std::size_t i = bracket(grid_x_, x[0]);
    const std::size_t j = bracket(grid_y_, x[1]);
    const double wx = (x[0] - grid_x_[i]) / (grid_x_[i + 1] - grid_x_[i]);
    const double wy = (x[1] - grid_y_[j]) / (grid_y_[j + 1] - grid_y_[j]);
    const std::size_t ny = grid_y_.size();
    const double v00 = values_[i * ny + j], v01 = values_[i * ny + j + 1];
    const double v10 = values_[(i + 1) * ny + j], v11 = values_[(i + 1) * ny + j + 1];
    return (1 - wx) * ((1 - wy) * v00 + wy * v01) + wx * ((1 - wy) * v10 + wy * v11);
  }
  // n > 2: nearest node, flagged once.
  nearest_used_ = true;
  double best = 1e300;
  std::size_t arg = 0;
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    double d2 = 0.0;
    for (int d = 0; d < dim_; ++d) d2 += (nodes_[k](d) - x[d]) * (nodes_[k](d) - x[d]);
    if (d2 < best) {
      best = d2;
      arg = k;
    }
  }
  return values_[arg];
}

double EmpiricalFunction::stderr_at(std::span<const double> x) const {
  if (dim_ == 1) {
    if (grid_x_.size() == 1) return stderrs_[0];
    const std::size_t i = bracket(grid_x_, x[0]);
    return std::max(stderrs_[i], stderrs_[i + 1]);
  }
  if (dim_ == 2) {
    const std::size_t i = bracket(grid_x_, x[0]);
    const std::size_t j = bracket(grid_y_, x[1]);
    const std::size_t ny = grid_y_.size();
    return std::max(std::max(stderrs_[i * ny + j], stderrs_[i * ny + j + 1]),
                    std::max(stderrs_[(i + 1) * ny + j], stderrs_[(i + 1) * ny + j + 1]));
  }
  double best = 1e300;
  std::size_t arg = 0;
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    double d2 = 0.0;
    for (int d = 0; d < dim_; ++d) d2 += (nodes_[k](d) - x[d]) * (nodes_[k](d) - x[d]);
    if (d2 < best) {
      best = d2;
      arg = k;
    }
  }
  return stderrs_[arg];
}

double EmpiricalFunction::max_stderr() const {
  double m = 0.0;
  for (double s : stderrs_) m = std::max(m, s);
  return m;
}

double EmpiricalFunction::discrete_lipschitz() const {
  if (dim_ != 1 || grid_x_.size() < 2) return 0.0;
  double L = 0.0;
  for (std::size_t i = 0; i + 1 < grid_x_.size(); ++i)
    L = std::max(L, std::fabs(values_[i + 1] - values_[i]) /
                        (grid_x_[i + 1] - grid_x_[i]));
  return L;
}

SlowDrift SlowDrift::analytic(int dim, Fn fn) {
  SlowDrift d;
  d.dim = dim;
  d.fn = std::move(fn);
  return d;
}

SlowDrift SlowDrift::from_table(EmpiricalFunction table) {
  SlowDrift d;
  d.dim = table.dim();
  d.table = std::move(table);
  return d;
}

void SlowDrift::eval(std::span<const double> x, std::span<double> out) const {
  if (table) {
    out[0] = table->eval(x);
    return;
  }
  fn(x, out);
}

ValueStderr fbar_time_average(const SlowFastSystem& system,
                              std::span<const double> x, double T_avg,
                              const NoiseStream& stream) {
  if (system.n != static_cast<int>(x.size()))
    throw InvalidArgument("fbar_time_average: x dim mismatch");
  const double beta = log_norm(system.B);
  const double lg = system.lip_g.value_or(0.0);
  const double decay = (beta + lg < 0.0) ? -(beta + lg) : -beta;
  const double mixing = system.eps / decay;
  if (!(T_avg >= 100.0 * mixing))
    throw InvalidArgument("fbar_time_average: T_avg below 100x mixing time");

  // Fast clock: tau_total = T_avg/eps, substep = stream dt.
  const double h = stream.dt();
  const double tau_total = T_avg / system.eps;
  const double tau_burn = 10.0 / decay;
  const auto n_burn = static_cast<std::int64_t>(std::ceil(tau_burn / h));
  const auto n_samp = static_cast<std::int64_t>(std::ceil(tau_total / h));

  const int m = system.m, n = system.n;
  const OuTransition tr(system.B, system.sigma, 1.0, h);
  BatchMeans batches(20);
  if (m == 1) {
    const double Ef = tr.propagator()(0, 0);
    const double Lq = tr.noise_factor()(0, 0);
    const double Wf = tr.forcing_weight()(0, 0);
    const double inv_sqrt_h = 1.0 / std::sqrt(h);
    double y, dW, gv, fv;
    sample_stationary_ou(system.B, system.sigma, stream, {&y, 1});
    for (std::int64_t k = 0; k < n_burn + n_samp; ++k) {
      system.eval_g({x.data(), x.size()}, {&y, 1}, {&gv, 1});
      stream.increment(k, {&dW, 1});
      y = Ef * y + Wf * gv + Lq * (dW * inv_sqrt_h);
      if (std::fabs(y) > 1e12) throw BlowUp("fbar_time_average: fast state diverged");
      if (k >= n_burn) {
        system.eval_f({x.data(), x.size()}, {&y, 1}, {&fv, 1});
        batches.add(fv);
      }
    }
    if (!batches.halves_consistent(5.0))
      throw MixingTooSlow("batch-mean halves differ by > 5 pooled SE");
    return {batches.mean(), batches.stderr_()};
  }
  Eigen::VectorXd y(m), dW(m), gv(m), fv(n);
  // start at the OU stationary law; burn-in washes in the nonlinearity
  sample_stationary_ou(system.B, system.sigma, stream,
                       {y.data(), static_cast<std::size_t>(m)});

  for (std::int64_t k = 0; k < n_burn + n_samp; ++k) {
    system.eval_g({x.data(), x.size()}, {y.data(), static_cast<std::size_t>(m)},
                  {gv.data(), static_cast<std::size_t>(m)});
    stream.increment(k, {dW.data(), static_cast<std::size_t>(m)});
    tr.step_full({y.data(), static_cast<std::size_t>(m)},
                 {gv.data(), static_cast<std::size_t>(m)},
                 {dW.data(), static_cast<std::size_t>(m)},
                 {y.data(), static_cast<std::size_t>(m)});
    if (y.norm() > 1e12) throw BlowUp("fbar_time_average: fast state diverged");
    if (k >= n_burn) {
      system.eval_f({x.data(), x.size()}, {y.data(), static_cast<std::size_t>(m)},
                    {fv.data(), static_cast<std::size_t>(n)});
      batches.add(fv(0));  // scalar slow drift observable (n = 1 tabulation)
    }
  }
  if (!batches.halves_consistent(5.0))
    throw MixingTooSlow("batch-mean halves differ by > 5 pooled SE");
  return {batches.mean(), batches.stderr_()};
}

Eigen::VectorXd stationary_fast_sample(const SlowFastSystem& system,
                                       std::span<const double> x,
                                       const NoiseStream& stream, double burn_in) {
  const double beta = log_norm(system.B);
  const double lg = system.lip_g.value_or(0.0);
  const double decay = (beta + lg < 0.0) ? -(beta + lg) : -beta;
  if (burn_in <= 0.0) burn_in = 25.0 * system.eps / decay;

  const int m = system.m;
  auto ju = static_cast<std::int64_t>(
      std::floor(system.eps / 10.0 / stream.dt() + 1e-9));
  if (ju < 1) ju = 1;
  const double h = static_cast<double>(ju) * stream.dt();
  const auto n_steps = static_cast<std::int64_t>(std::ceil(burn_in / h));

  const OuTransition tr(system.B, system.sigma, system.eps, h);
  Eigen::VectorXd eta(m), Y = Eigen::VectorXd::Zero(m), dW(m), yarg(m), go(m);
  sample_stationary_ou(system.B, system.sigma, stream,
                       {eta.data(), static_cast<std::size_t>(m)});
  for (std::int64_t k = -n_steps; k < 0; ++k) {
    yarg = Y + eta;
    system.eval_g({x.data(), x.size()}, {yarg.data(), static_cast<std::size_t>(m)},
                  {go.data(), static_cast<std::size_t>(m)});
    tr.step_forced({Y.data(), static_cast<std::size_t>(m)},
                   {go.data(), static_cast<std::size_t>(m)},
                   {Y.data(), static_cast<std::size_t>(m)});
    stream.increment_sum(k * ju, (k + 1) * ju,
                         {dW.data(), static_cast<std::size_t>(m)});
    tr.step({eta.data(), static_cast<std::size_t>(m)},
            {dW.data(), static_cast<std::size_t>(m)},
            {eta.data(), static_cast<std::size_t>(m)});
    if (Y.norm() > 1e12) throw BlowUp("stationary_fast_sample diverged");
  }
  return Y + eta;
}

ValueStderr fbar_ensemble(const SlowFastSystem& system, std::span<const double> x,
                          int n_replicas, std::uint64_t master_seed) {
  if (n_replicas < 100) throw InvalidArgument("fbar_ensemble: n_replicas >= 100");
  std::vector<double> vals(n_replicas);
  const double dt_stream = system.eps / 10.0;
  parallel_for(static_cast<std::size_t>(n_replicas), [&](std::size_t r) {
    NoiseStream stream(master_seed, static_cast<std::uint32_t>(r), system.m,
                       dt_stream);
    const Eigen::VectorXd ybar = stationary_fast_sample(system, x, stream);
    Eigen::VectorXd fv(system.n);
    system.eval_f({x.data(), x.size()},
                  {ybar.data(), static_cast<std::size_t>(system.m)},
                  {fv.data(), static_cast<std::size_t>(system.n)});
    vals[r] = fv(0);
  });
  auto ms = mean_stderr(vals);
  return {ms.mean, ms.stderr_};
}

EmpiricalFunction tabulate_fbar(const SlowFastSystem& system,
                                std::span<const double> x_grid,
                                FbarEstimator estimator,
                                const TabulateBudget& budget) {
  if (x_grid.empty()) throw InvalidArgument("tabulate_fbar: empty grid");
  std::vector<double> grid(x_grid.begin(), x_grid.end());
  std::vector<double> values(grid.size()), errs(grid.size());

  if (estimator == FbarEstimator::quadrature) {
    if (system.m != 1 || system.n != 1)
      throw InvalidArgument("quadrature estimator requires n = m = 1");
    parallel_for(grid.size(), [&](std::size_t i) {
      Stationary1D st(system, grid[i]);
      values[i] = st.fbar();
      errs[i] = 0.0;
    });
    return EmpiricalFunction(grid, values, errs);
  }

  if (estimator == FbarEstimator::time_average) {
    const double beta = log_norm(system.B);
    const double lg = system.lip_g.value_or(0.0);
    const double decay = (beta + lg < 0.0) ? -(beta + lg) : -beta;
    const double T_avg =
        budget.T_avg > 0.0 ? budget.T_avg : 2000.0 * system.eps / decay;
    parallel_for(grid.size(), [&](std::size_t i) {
      NoiseStream stream(budget.master_seed, static_cast<std::uint32_t>(i),
                         system.m, 0.02);
      const double xi = grid[i];
      auto vs = fbar_time_average(system, {&xi, 1}, T_avg, stream);
      values[i] = vs.value;
      errs[i] = vs.stderr_;
    });
    return EmpiricalFunction(grid, values, errs);
  }

  // ensemble estimator
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double xi = grid[i];
    auto vs = fbar_ensemble(system, {&xi, 1}, budget.n_replicas,
                            rng::mix64(budget.master_seed + 1000003ULL * i));
    values[i] = vs.value;
    errs[i] = vs.stderr_;
  }
  return EmpiricalFunction(grid, values, errs);
}

SamplePath integrate_averaged(const Eigen::MatrixXd& A, const SlowDrift& fbar,
                              std::span<const double> x0, double T, double dt) {
  const int n = static_cast<int>(A.rows());
  const auto n_steps = static_cast<std::size_t>(std::llround(T / dt));
  SamplePath path;
  path.t0 = 0.0;
  path.dt = dt;
  path.n = n;
  path.m = 0;
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(x0.data(), n);
  Eigen::VectorXd k1(n), k2(n), k3(n), k4(n), tmp(n), fv(n);
  auto rhs = [&](const Eigen::VectorXd& state, Eigen::VectorXd& out) {
    fbar.eval({state.data(), static_cast<std::size_t>(n)},
              {fv.data(), static_cast<std::size_t>(n)});
    out = A * state + fv;
  };
  path.slow.insert(path.slow.end(), x.data(), x.data() + n);
  for (std::size_t k = 0; k < n_steps; ++k) {
    try {
      rhs(x, k1);
      tmp = x + 0.5 * dt * k1;
      rhs(tmp, k2);
      tmp = x + 0.5 * dt * k2;
      rhs(tmp, k3);
      tmp = x + dt * k3;
      rhs(tmp, k4);
    } catch (const TableRangeExceeded&) {
      throw TableRangeExceeded("trajectory left the table hull at t = " +
                               std::to_string(dt * static_cast<double>(k)));
    }
    x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    path.slow.insert(path.slow.end(), x.data(), x.data() + n);
  }
  return path;
}

ConvergenceReport averaging_error_sweep(const SlowFastSystem& system, double x0,
                                        double T, std::span<const double> eps_list,
                                        std::span<const int> n_replicas_per_eps,
                                        const SweepOptions& opts,
                                        ConvergenceReport* l2_report) {
  if (eps_list.size() < 4)
    throw InvalidArgument("averaging_error_sweep: need >= 4 eps values");
  if (eps_list.size() != n_replicas_per_eps.size())
    throw InvalidArgument("averaging_error_sweep: budgets per eps mismatch");
  if (system.n != 1) throw InvalidArgument("averaging_error_sweep: n = 1 only");

  SlowDrift drift = opts.fbar.value_or(SlowDrift());
  if (!opts.fbar) {
    if (system.m != 1)
      throw InvalidArgument("default quadrature drift requires m = 1");
    // Fine quadrature table evaluated through an analytic callable.
    const int nt = 801;
    auto xs = std::make_shared<std::vector<double>>(nt);
    auto fb = std::make_shared<std::vector<double>>(nt);
    const double xlo = -0.25, xhi = 0.25;
    for (int i = 0; i < nt; ++i)
      (*xs)[i] = xlo + (xhi - xlo) * i / static_cast<double>(nt - 1);
    parallel_for(nt, [&](std::size_t i) {
      (*fb)[i] = Stationary1D(system, (*xs)[i]).fbar();
    });
    drift = SlowDrift::analytic(1, [xs, fb](std::span<const double> x,
                                            std::span<double> out) {
      const double rel = (x[0] - (*xs)[0]) / ((*xs)[1] - (*xs)[0]);
      const auto i = static_cast<std::size_t>(
          std::clamp(rel, 0.0, static_cast<double>(xs->size() - 2)));
      const double w = rel - static_cast<double>(i);
      out[0] = (1.0 - w) * (*fb)[i] + w * (*fb)[i + 1];
    });
  }

  ConvergenceReport report;
  report.label = "averaging_error";
  report.seed = opts.master_seed;
  if (l2_report) {
    l2_report->label = "averaging_error_l2";
    l2_report->seed = opts.master_seed;
    l2_report->rows.clear();
  }

  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    const double eps = eps_list[e];
    const SlowFastSystem sys = system.with_eps(eps);
    const double dt_slow = eps * opts.dt_slow_in_eps;
    const double dt_stream = dt_slow / 2.0;  // n_sub = 2 at this dt_slow
    const auto n_saved = static_cast<std::size_t>(std::llround(T / dt_slow)) + 1;

    // Deterministic averaged reference on the same grid.
    const double xv0 = x0;
    const SamplePath xbar =
        integrate_averaged(sys.A, drift, {&xv0, 1}, T, dt_slow);

    Stationary1D st0(sys, x0);  // stationary init draws (m = 1)

    const int n_rep = n_replicas_per_eps[e];
    const int n_pairs = opts.antithetic ? (n_rep + 1) / 2 : n_rep;
    report.n_replicas = std::max<long>(report.n_replicas, n_rep);

    std::vector<double> sum_abs(n_saved, 0.0), sum_sq(n_saved, 0.0);
    const std::size_t group = 512;
    std::vector<std::vector<double>> rows_abs(group), rows_sq(group);
    long done = 0;
    for (std::size_t g0 = 0; g0 < static_cast<std::size_t>(n_pairs); g0 += group) {
      const std::size_t g1 = std::min<std::size_t>(g0 + group, n_pairs);
      parallel_for(g1 - g0, [&](std::size_t k) {
        const std::size_t r = g0 + k;
        std::vector<double> abs_row(n_saved, 0.0), sq_row(n_saved, 0.0);
        const int reps = opts.antithetic ? 2 : 1;
        for (int s = 0; s < reps; ++s) {
          NoiseStream stream(opts.master_seed, static_cast<std::uint32_t>(r),
                             sys.m, dt_stream);
          if (s == 1) stream = stream.antithetic();
          double z;
          stream.init_normals({&z, 1}, 12345);
          const double u = 0.5 * std::erfc(-z / std::sqrt(2.0));
          double y0 = st0.sample(std::clamp(u, 1e-12, 1.0 - 1e-12));
          const double xinit = x0;
          const SamplePath path =
              integrate_slowfast(sys, {&xinit, 1}, {&y0, 1}, T, dt_slow, stream);
          const std::size_t ns = std::min(n_saved, path.n_steps());
          for (std::size_t j = 0; j < ns; ++j) {
            const double d = std::fabs(path.slow[j] - xbar.slow[j]);
            abs_row[j] += d;
            sq_row[j] += d * d;
          }
        }
        const double inv = 1.0 / reps;
        for (auto& v : abs_row) v *= inv;
        for (auto& v : sq_row) v *= inv;
        rows_abs[k] = std::move(abs_row);
        rows_sq[k] = std::move(sq_row);
      });
      for (std::size_t k = 0; k < g1 - g0; ++k) {
        for (std::size_t j = 0; j < n_saved; ++j) {
          sum_abs[j] += rows_abs[k][j];
          sum_sq[j] += rows_sq[k][j];
        }
        ++done;
      }
    }

    // sup over the saved slow grid of the mean absolute deviation.
    double sup = -1.0;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < n_saved; ++j) {
      const double mean = sum_abs[j] / static_cast<double>(done);
      if (mean > sup) {
        sup = mean;
        arg = j;
      }
    }
    const double mean_at = sum_abs[arg] / static_cast<double>(done);
    const double var_at =
        std::max(0.0, sum_sq[arg] / static_cast<double>(done) - mean_at * mean_at);
    const double se = std::sqrt(var_at / static_cast<double>(done));
    report.rows.push_back({eps, sup, se});

    if (l2_report) {
      double sup2 = -1.0;
      std::size_t arg2 = 0;
      for (std::size_t j = 0; j < n_saved; ++j) {
        const double mean2 = sum_sq[j] / static_cast<double>(done);
        if (mean2 > sup2) {
          sup2 = mean2;
          arg2 = j;
        }
      }
      (void)arg2;
      const double l2 = std::sqrt(std::max(0.0, sup2));
      // delta-method SE under a Gaussian deviation model: Var(d^2) = 2 (E d^2)^2
      const double se2 = l2 / std::sqrt(2.0 * static_cast<double>(done));
      l2_report->rows.push_back({eps, l2, l2 > 0.0 ? se2 : 0.0});
    }
  }
  report.fit_if_possible();
  if (l2_report && !l2_report->rows.empty()) l2_report->fit_if_possible();
  return report;
}

}  // namespace slowfast
