#include "slowfast/fluctuation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include <json.hpp>

#include "slowfast/errors.hpp"
#include "slowfast/integrate.hpp"
#include "slowfast/linalg.hpp"
#include "slowfast/ou.hpp"
#include "slowfast/parallel.hpp"
#include "slowfast/stationary1d.hpp"
#include "slowfast/stats.hpp"

namespace slowfast {

double FluctuationKernel::eval(double x, double y) const {
  double fv, fb;
  system->eval_f({&x, 1}, {&y, 1}, {&fv, 1});
  fbar.eval({&x, 1}, {&fb, 1});
  return fv - fb;
}

namespace {

void require_scalar(const SlowFastSystem& system, const char* who) {
  if (system.n != 1 || system.m != 1)
    throw InvalidArgument(std::string(who) + ": implemented for n = m = 1");
}

double toy_mixing_decay(const SlowFastSystem& system) {
  const double beta = log_norm(system.B);
  const double lg = system.lip_g.value_or(0.0);
  return (beta + lg < 0.0) ? -(beta + lg) : -beta;
}

}  // namespace

SigmaEstimate sigma_estimate(const SlowFastSystem& system, double x,
                             const SlowDrift& fbar, double T_corr, double T_total,
                             const NoiseStream& stream, const SigmaOptions& opts) {
  require_scalar(system, "sigma_estimate");
  const double decay = toy_mixing_decay(system);
  if (!(T_corr >= 20.0 / decay))
    throw InvalidArgument("sigma_estimate: T_corr below 20x mixing time");
  if (!(T_total >= 50.0 * T_corr))
    throw InvalidArgument("sigma_estimate: T_total below 50x T_corr");

  const double h = opts.dt_fast;
  const int q = std::max(1, opts.lag_stride);
  const double h_lag = h * q;  // lag grid spacing for the FFT-free sums
  const auto L = static_cast<std::size_t>(std::llround(T_corr / h_lag));
  const auto n_burn = static_cast<std::size_t>(std::llround(20.0 / decay / h));
  const auto n_steps = static_cast<std::size_t>(std::llround(T_total / h));
  const std::size_t N = n_steps / q;

  // Frozen-x fast-clock trajectory (eps-free by construction).
  const OuTransition tr(system.B, system.sigma, 1.0, h);
  const double Ef = tr.propagator()(0, 0);
  const double Lq = tr.noise_factor()(0, 0);
  const double Wf = tr.forcing_weight()(0, 0);
  const double inv_sqrt_h = 1.0 / std::sqrt(h);
  double y0;
  sample_stationary_ou(system.B, system.sigma, stream, {&y0, 1});
  double y = y0, gv, fv, fb, dW;
  fbar.eval({&x, 1}, {&fb, 1});

  std::vector<double> H;
  H.reserve(N);
  for (std::size_t k = 0; k < n_burn + n_steps; ++k) {
    system.eval_g({&x, 1}, {&y, 1}, {&gv, 1});
    stream.increment(static_cast<std::int64_t>(k), {&dW, 1});
    y = Ef * y + Wf * gv + Lq * (dW * inv_sqrt_h);
    if (std::fabs(y) > 1e12) throw BlowUp("sigma_estimate: fast state diverged");
    if (k >= n_burn && (k - n_burn) % q == 0 && H.size() < N) {
      system.eval_f({&x, 1}, {&y, 1}, {&fv, 1});
      H.push_back(fv - fb);
    }
  }
  const double mean_H = mean_of(H);
  for (auto& v : H) v -= mean_H;  // empirical centering

  // Lag-sum autocovariance and the running trapezoid integral of 2C.
  auto autocov_integral = [&](std::span<const double> series,
                              std::vector<double>* running) -> std::vector<double> {
    const std::size_t len = series.size();
    const std::size_t lmax = std::min(L, len - 1);
    std::vector<double> C(lmax + 1, 0.0);
    for (std::size_t l = 0; l <= lmax; ++l) {
      double s = 0.0;
      for (std::size_t k = 0; k + l < len; ++k) s += series[k] * series[k + l];
      C[l] = s / static_cast<double>(len - l);
    }
    std::vector<double> I(lmax + 1, 0.0);
    for (std::size_t l = 1; l <= lmax; ++l)
      I[l] = I[l - 1] + 2.0 * 0.5 * h_lag * (C[l - 1] + C[l]);
    if (running) *running = I;
    return I;
  };

  SigmaEstimate out;
  std::vector<double> I_full = autocov_integral(H, &out.running_integral);
  out.lags.resize(I_full.size());
  for (std::size_t l = 0; l < I_full.size(); ++l)
    out.lags[l] = h_lag * static_cast<double>(l);

  // Flatness screen on the last 20% of the lag range.
  const std::size_t l_flat = (I_full.size() * 8) / 10;
  const int nb = opts.n_batches;
  const std::size_t blen = H.size() / nb;
  auto batch_window_means = [&](std::size_t w_lo, std::size_t w_hi) {
    std::vector<double> vals(nb);
    for (int b = 0; b < nb; ++b) {
      std::span<const double> blk(H.data() + b * blen, blen);
      std::vector<double> Ib = autocov_integral(blk, nullptr);
      const std::size_t lo = std::min<std::size_t>(w_lo, Ib.size() - 1);
      const std::size_t hi = std::min<std::size_t>(w_hi, Ib.size());
      double acc = 0.0;
      for (std::size_t l = lo; l < hi; ++l) acc += Ib[l];
      vals[b] = acc / static_cast<double>(hi - lo);
    }
    return vals;
  };
  const double se_flat = stderr_of(batch_window_means(l_flat, I_full.size()));

  double flat_min = 1e300, flat_max = -1e300, flat_mean = 0.0;
  for (std::size_t l = l_flat; l < I_full.size(); ++l) {
    flat_min = std::min(flat_min, I_full[l]);
    flat_max = std::max(flat_max, I_full[l]);
    flat_mean += I_full[l];
  }
  flat_mean /= static_cast<double>(I_full.size() - l_flat);
  out.plateau_found = (flat_max - flat_min) <= std::max(se_flat, 1e-300);
  if (!out.plateau_found)
    throw NoPlateau("running integral varies by " + std::to_string(flat_max - flat_min) +
                    " > 1 SE (" + std::to_string(se_flat) + ") over the last 20% of lags");

  // Integration window: the first lag from which the running integral stays
  // inside the 1-SE band around the flat-region mean. Reading Sigma just past
  // that point avoids accumulating pure tail noise.
  std::size_t l_star = l_flat;
  for (std::size_t l = I_full.size(); l-- > 0;) {
    if (std::fabs(I_full[l] - flat_mean) > se_flat) {
      l_star = std::min<std::size_t>(l + 1, l_flat);
      break;
    }
    if (l == 0) l_star = 0;
  }
  const std::size_t w_hi =
      std::min<std::size_t>(l_star + std::max<std::size_t>(I_full.size() / 5, 2),
                            I_full.size());
  double window_mean = 0.0;
  for (std::size_t l = l_star; l < w_hi; ++l) window_mean += I_full[l];
  window_mean /= static_cast<double>(w_hi - l_star);
  const double se = stderr_of(batch_window_means(l_star, w_hi));

  out.window = out.lags[l_star];
  out.Sigma = Eigen::MatrixXd::Constant(1, 1, window_mean);
  out.stderr_ = Eigen::MatrixXd::Constant(1, 1, se);
  if (window_mean < -3.0 * se)
    throw NegativeDiagonal("Sigma estimate " + std::to_string(window_mean) +
                           " < -3 SE");
  return out;
}

Eigen::MatrixXd sigma_sqrt(const Eigen::MatrixXd& Sigma) {
  if ((Sigma - Sigma.transpose()).norm() > 1e-10 * (1.0 + Sigma.norm()))
    throw InvalidArgument("sigma_sqrt: Sigma must be symmetric");
  const double clip_tol = 1e-8 * std::max(Sigma.trace(), 0.0) + 1e-300;
  double min_eig = 0.0;
  Eigen::MatrixXd root = symmetric_sqrt_psd(Sigma, clip_tol, &min_eig);
  if (min_eig < -clip_tol)
    throw NotNearlyPSD("eigenvalue " + std::to_string(min_eig) + " below -clip_tol");
  return root;
}

ValueStderr hbar_estimate(const SlowFastSystem& system, double x, double y_fast,
                          const SlowDrift& fbar, int n_inner, double T_inner,
                          std::uint64_t master_seed, double dt_fast) {
  require_scalar(system, "hbar_estimate");
  const double decay = toy_mixing_decay(system);
  if (!(T_inner >= 20.0 / decay))
    throw InvalidArgument("hbar_estimate: T_inner below 20x mixing time");
  if (n_inner < 100) throw InvalidArgument("hbar_estimate: n_inner >= 100");

  const double h = dt_fast;
  const auto n_steps = static_cast<std::size_t>(std::llround(T_inner / h));
  const OuTransition tr(system.B, system.sigma, 1.0, h);
  const double Ef = tr.propagator()(0, 0);
  const double Lf = tr.noise_factor()(0, 0);
  const double Wf = tr.forcing_weight()(0, 0);
  const double inv_sqrt_h = 1.0 / std::sqrt(h);
  double fb;
  fbar.eval({&x, 1}, {&fb, 1});

  std::vector<double> integrals(n_inner);
  parallel_for(static_cast<std::size_t>(n_inner), [&](std::size_t r) {
    NoiseStream stream(master_seed, static_cast<std::uint32_t>(r), 1, h);
    double y = y_fast, gv, fv, dW;
    system.eval_f({&x, 1}, {&y, 1}, {&fv, 1});
    double H_prev = fv - fb, acc = 0.0;
    for (std::size_t k = 0; k < n_steps; ++k) {
      system.eval_g({&x, 1}, {&y, 1}, {&gv, 1});
      stream.increment(static_cast<std::int64_t>(k), {&dW, 1});
      y = Ef * y + Wf * gv + Lf * (dW * inv_sqrt_h);
      system.eval_f({&x, 1}, {&y, 1}, {&fv, 1});
      const double H_cur = fv - fb;
      acc += 0.5 * h * (H_prev + H_cur);
      H_prev = H_cur;
    }
    integrals[r] = acc;
  });
  auto ms = mean_stderr(integrals);
  return {ms.mean, ms.stderr_};
}

HbarCache::HbarCache(const SlowFastSystem& system, const SlowDrift& fbar,
                     std::span<const double> x_grid, std::span<const double> y_grid,
                     int n_inner, double T_inner, std::uint64_t master_seed,
                     double dt_fast)
    : table_(std::vector<double>{0.0}, std::vector<double>{0.0},
             std::vector<double>{0.0}),
      x_grid_(x_grid.begin(), x_grid.end()), y_grid_(y_grid.begin(), y_grid.end()) {
  const std::size_t nx = x_grid_.size(), ny = y_grid_.size();
  if (nx < 3 || ny < 2) throw InvalidArgument("HbarCache: grid too small");
  std::vector<double> values(nx * ny), errs(nx * ny);
  // Flatten nodes for load balance; seeds derived per node.
  parallel_for(nx * ny, [&](std::size_t k) {
    const std::size_t i = k / ny, j = k % ny;
    const auto vs =
        hbar_estimate(system, x_grid_[i], y_grid_[j], fbar, n_inner, T_inner,
                      rng::mix64(master_seed + 0x9e3779b97f4a7c15ULL * (k + 1)),
                      dt_fast);
    values[k] = vs.value;
    errs[k] = vs.stderr_;
  });
  table_ = EmpiricalFunction(x_grid_, y_grid_, values, errs);
  x_margin_ = x_grid_[1] - x_grid_[0];
}

double HbarCache::eval(double x, double y) const {
  // Tail queries are clamped to the hull: beyond the grid the kernel sits in
  // the far Gaussian tail where its contribution to the integrals is
  // negligible, and the boundary value is the closest available estimate.
  const double xs[2] = {std::clamp(x, table_.lo()[0], table_.hi()[0]),
                        std::clamp(y, table_.lo()[1], table_.hi()[1])};
  return table_.eval(xs);
}

double HbarCache::stderr_at(double x, double y) const {
  const double xs[2] = {std::clamp(x, table_.lo()[0], table_.hi()[0]),
                        std::clamp(y, table_.lo()[1], table_.hi()[1])};
  return table_.stderr_at(xs);
}

double HbarCache::dx_eval(double x, double y) const {
  const double hx = std::max(1e-3, 1e-2 * std::fabs(x));
  const double lo = table_.lo()[0], hi = table_.hi()[0];
  double xp = std::min(x + hx, hi), xm = std::max(x - hx, lo);
  if (xp <= xm) throw InvalidArgument("HbarCache: degenerate FD interval");
  return (eval(xp, y) - eval(xm, y)) / (xp - xm);
}

double HbarCache::fd_noise_ratio() const {
  const std::size_t nx = x_grid_.size(), ny = y_grid_.size();
  const auto& v = table_.values();
  const auto& s = table_.stderrs();
  std::vector<double> ratios;
  for (std::size_t i = 1; i + 1 < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j) {
      const double dxm = x_grid_[i + 1] - x_grid_[i - 1];
      const double fd = (v[(i + 1) * ny + j] - v[(i - 1) * ny + j]) / dxm;
      const double se = std::sqrt(s[(i + 1) * ny + j] * s[(i + 1) * ny + j] +
                                  s[(i - 1) * ny + j] * s[(i - 1) * ny + j]) / dxm;
      if (se == 0.0 && fd == 0.0)
        ratios.push_back(0.0);  // identically-zero kernel
      else
        ratios.push_back(std::fabs(fd) > 1e-300 ? se / std::fabs(fd) : 1e6);
    }
  std::sort(ratios.begin(), ratios.end());
  return ratios[ratios.size() / 2];
}

MartingaleReport martingale_residual(const SlowFastSystem& system, double x0,
                                     double T, int n_replicas,
                                     std::span<const PathFunctional> test_fns,
                                     const SlowDrift& fbar, const HbarCache& hbar,
                                     const MartingaleOptions& opts) {
  require_scalar(system, "martingale_residual");
  if (hbar.fd_noise_ratio() > 0.5)
    throw CacheResolutionTooCoarse("median SE(d_x Hbar) exceeds 50% of its value");

  const double eps = system.eps;
  const double sqrt_eps = std::sqrt(eps);
  const double dt_slow = eps * opts.dt_slow_in_eps;
  const auto n_slow = static_cast<std::size_t>(std::llround(T / dt_slow));
  const int save_every = std::max(1, static_cast<int>(n_slow / 100));
  const auto n_saved = n_slow / save_every + 1;
  const double a_lin = system.A(0, 0);

  Stationary1D st0(system, x0);

  // Schedule in saved-grid indices.
  std::vector<std::pair<std::size_t, std::size_t>> schedule;
  for (double sf : opts.s_fractions)
    for (double tf : opts.t_fractions)
      if (tf > sf + 1e-12) {
        const auto is = static_cast<std::size_t>(std::llround(sf * (n_saved - 1)));
        const auto it = static_cast<std::size_t>(std::llround(tf * (n_saved - 1)));
        schedule.emplace_back(is, it);
      }

  const std::size_t n_fns = test_fns.size();
  const std::size_t n_cells = schedule.size() * n_fns;
  std::vector<std::vector<double>> cell_vals(n_cells,
                                             std::vector<double>(n_replicas));
  std::vector<double> qv_vals(n_replicas), qv_ref(n_replicas);

  parallel_for(static_cast<std::size_t>(n_replicas), [&](std::size_t r) {
    NoiseStream stream(opts.master_seed, static_cast<std::uint32_t>(r), 1,
                       dt_slow / 2.0);
    double z;
    stream.init_normals({&z, 1}, 5150);
    const double u = 0.5 * std::erfc(-z / std::sqrt(2.0));
    double y0 = st0.sample(std::clamp(u, 1e-12, 1.0 - 1e-12));

    // Substep accumulators for the two time integrals in M.
    std::vector<double> IH_saved(n_saved, 0.0), IG_saved(n_saved, 0.0);
    double IH = 0.0, IG = 0.0;
    double prev_hint = 0.0, prev_gint = 0.0;
    bool have_prev = false;
    long substep_count = 0;
    const long per_save = 2L * save_every;  // n_sub = 2 per slow step
    std::size_t save_idx = 1;
    const double h_sub = dt_slow / 2.0;

    IntegrateOptions iopts;
    iopts.save_every = save_every;
    iopts.observer = [&](double, std::span<const double> xs,
                         std::span<const double> ys) {
      const double xv = xs[0], yv = ys[0];
      double fv, fb;
      system.eval_f({&xv, 1}, {&yv, 1}, {&fv, 1});
      fbar.eval({&xv, 1}, {&fb, 1});
      const double H = fv - fb;
      const double G = hbar.dx_eval(xv, yv) * (a_lin * xv + fv);  // Hbar_x (Ax+H+fbar)
      if (have_prev) {
        IH += 0.5 * h_sub * (prev_hint + H);
        IG += 0.5 * h_sub * (prev_gint + G);
      } else {
        // first substep: left endpoint approximated by the same value
        IH += h_sub * H * 0.5;
        IG += h_sub * G * 0.5;
        have_prev = true;
      }
      prev_hint = H;
      prev_gint = G;
      ++substep_count;
      if (substep_count % per_save == 0 && save_idx < n_saved) {
        IH_saved[save_idx] = IH;
        IG_saved[save_idx] = IG;
        ++save_idx;
      }
    };

    const double xinit = x0;
    const SamplePath path =
        integrate_slowfast(system, {&xinit, 1}, {&y0, 1}, T, dt_slow, stream, iopts);

    // M on the saved grid.
    std::vector<double> M(n_saved, 0.0);
    const double hbar0 = hbar.eval(path.slow[0], path.fast[0]);
    for (std::size_t j = 0; j < std::min(n_saved, path.n_steps()); ++j) {
      const double hb = hbar.eval(path.slow[j], path.fast[j]);
      M[j] = sqrt_eps * (hb - hbar0) + IH_saved[j] / sqrt_eps -
             sqrt_eps * IG_saved[j];
    }

    for (std::size_t c = 0; c < schedule.size(); ++c) {
      const auto [is, it] = schedule[c];
      const double s_time = path.dt * static_cast<double>(is);
      for (std::size_t f = 0; f < n_fns; ++f)
        cell_vals[c * n_fns + f][r] = (M[it] - M[is]) * test_fns[f](path, s_time);
    }

    double qv = 0.0, ref = 0.0;
    for (std::size_t j = 0; j + 1 < n_saved; ++j) {
      const double dM = M[j + 1] - M[j];
      qv += dM * dM;
      if (opts.Sigma_of_x)
        ref += 0.5 * path.dt *
               ((*opts.Sigma_of_x)(path.slow[j]) + (*opts.Sigma_of_x)(path.slow[j + 1]));
    }
    qv_vals[r] = qv;
    qv_ref[r] = ref;
  });

  MartingaleReport rep;
  rep.n_replicas = n_replicas;
  for (std::size_t c = 0; c < schedule.size(); ++c)
    for (std::size_t f = 0; f < n_fns; ++f) {
      auto ms = mean_stderr(cell_vals[c * n_fns + f]);
      ResidualCell cell;
      cell.s = schedule[c].first;
      cell.t = schedule[c].second;
      cell.fn_index = static_cast<int>(f);
      cell.residual = ms.mean;
      cell.stderr_ = ms.stderr_;
      rep.cells.push_back(cell);
      if (ms.stderr_ > 0.0)
        rep.max_abs_z = std::max(rep.max_abs_z, std::fabs(ms.mean) / ms.stderr_);
    }
  if (opts.Sigma_of_x) {
    auto qa = mean_stderr(qv_vals);
    auto qb = mean_stderr(qv_ref);
    rep.qv_ratio = qa.mean / qb.mean;
    rep.qv_ratio_stderr = rep.qv_ratio * std::sqrt((qa.stderr_ / qa.mean) * (qa.stderr_ / qa.mean) +
                                                   (qb.stderr_ / qb.mean) * (qb.stderr_ / qb.mean));
  }
  return rep;
}

SamplePath integrate_intermediate(const Eigen::MatrixXd& A, const SlowDrift& fbar,
                                  const std::function<double(double)>& sigma_bar,
                                  double eps, double x0, double T, double dt,
                                  const NoiseStream& stream) {
  if (std::fabs(stream.dt() - dt) > 1e-12 * dt)
    throw InvalidArgument("integrate_intermediate: stream dt must equal dt");
  const auto n_steps = static_cast<std::size_t>(std::llround(T / dt));
  const double a_lin = A(0, 0);
  const double se = std::sqrt(eps);

  SamplePath path;
  path.t0 = 0.0;
  path.dt = dt;
  path.n = 1;
  path.m = 0;
  path.slow.reserve(n_steps + 1);
  double x = x0, fb, dW;
  path.slow.push_back(x);
  for (std::size_t k = 0; k < n_steps; ++k) {
    fbar.eval({&x, 1}, {&fb, 1});
    stream.wtilde_increment(static_cast<std::int64_t>(k), {&dW, 1});
    x += (a_lin * x + fb) * dt + se * sigma_bar(x) * dW;
    path.slow.push_back(x);
  }
  return path;
}

double DiffusionTable::sigma_bar_scalar(double x) const {
  if (x_nodes.empty()) throw InvalidArgument("DiffusionTable: empty");
  if (x <= x_nodes.front()) return sigma_bar.front()(0, 0);
  if (x >= x_nodes.back()) return sigma_bar.back()(0, 0);
  auto it = std::upper_bound(x_nodes.begin(), x_nodes.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - x_nodes.begin()) - 1;
  const double w = (x - x_nodes[i]) / (x_nodes[i + 1] - x_nodes[i]);
  return (1.0 - w) * sigma_bar[i](0, 0) + w * sigma_bar[i + 1](0, 0);
}

void DiffusionTable::write_csv(const std::string& path) const {
  std::FILE* fp = std::fopen(path.c_str(), "w");
  if (!fp) throw InvalidArgument("cannot open " + path);
  std::fprintf(fp, "x,Sigma_rowmajor,stderr_rowmajor,sigma_bar_rowmajor,window\n");
  for (std::size_t i = 0; i < x_nodes.size(); ++i) {
    std::fprintf(fp, "%.17g", x_nodes[i]);
    auto dump = [&](const Eigen::MatrixXd& M) {
      std::fprintf(fp, ",\"");
      for (Eigen::Index r = 0; r < M.rows(); ++r)
        for (Eigen::Index c = 0; c < M.cols(); ++c)
          std::fprintf(fp, "%s%.17g", (r == 0 && c == 0) ? "" : " ", M(r, c));
      std::fprintf(fp, "\"");
    };
    dump(Sigma[i]);
    dump(Sigma_stderr[i]);
    dump(sigma_bar[i]);
    std::fprintf(fp, ",%.17g\n", window[i]);
  }
  std::fclose(fp);
}

void DiffusionTable::write_json_meta(const std::string& path) const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  auto arr = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < x_nodes.size(); ++i)
    arr.push_back({{"x", x_nodes[i]},
                   {"plateau_ok", static_cast<bool>(plateau_ok[i])},
                   {"window", window[i]}});
  j["nodes"] = arr;
  std::ofstream os(path);
  if (!os) throw InvalidArgument("cannot open " + path);
  os << j.dump(2) << "\n";
}

DiffusionTable tabulate_sigma(const SlowFastSystem& system,
                              std::span<const double> x_grid, const SlowDrift& fbar,
                              double T_corr, double T_total,
                              std::uint64_t master_seed, const SigmaOptions& opts) {
  DiffusionTable table;
  table.seed = master_seed;
  table.x_nodes.assign(x_grid.begin(), x_grid.end());
  const std::size_t nx = table.x_nodes.size();
  table.Sigma.resize(nx);
  table.Sigma_stderr.resize(nx);
  table.sigma_bar.resize(nx);
  table.window.assign(nx, 0.0);
  table.plateau_ok.assign(nx, 0);
  parallel_for(nx, [&](std::size_t i) {
    NoiseStream stream(rng::mix64(master_seed + 7919ULL * (i + 1)),
                       static_cast<std::uint32_t>(i), 1, opts.dt_fast);
    try {
      const SigmaEstimate est = sigma_estimate(system, table.x_nodes[i], fbar,
                                               T_corr, T_total, stream, opts);
      table.Sigma[i] = est.Sigma;
      table.Sigma_stderr[i] = est.stderr_;
      table.sigma_bar[i] = sigma_sqrt(est.Sigma);
      table.window[i] = est.window;
      table.plateau_ok[i] = 1;
    } catch (const NoPlateau&) {
      table.Sigma[i] = Eigen::MatrixXd::Zero(1, 1);
      table.Sigma_stderr[i] = Eigen::MatrixXd::Zero(1, 1);
      table.sigma_bar[i] = Eigen::MatrixXd::Zero(1, 1);
      table.plateau_ok[i] = 0;  // node flagged unusable
    }
  });
  return table;
}

IntermediateSweepReport intermediate_error_sweep(
    const SlowFastSystem& system, double x0, double T,
    std::span<const double> eps_list, std::span<const int> n_pairs_per_eps,
    const IntermediateSweepOptions& opts) {
  require_scalar(system, "intermediate_error_sweep");
  if (eps_list.size() < 4)
    throw InvalidArgument("intermediate_error_sweep: need >= 4 eps values");
  if (eps_list.size() != n_pairs_per_eps.size())
    throw InvalidArgument("intermediate_error_sweep: budgets mismatch");

  // Reduced-model reference tables from the exact stationary quadrature.
  const int nt = 801;
  auto xs = std::make_shared<std::vector<double>>(nt);
  auto fb = std::make_shared<std::vector<double>>(nt);
  auto sb = std::make_shared<std::vector<double>>(nt);
  const double xlo = -0.25, xhi = 0.25;
  for (int i = 0; i < nt; ++i)
    (*xs)[i] = xlo + (xhi - xlo) * i / static_cast<double>(nt - 1);
  parallel_for(nt, [&](std::size_t i) {
    Stationary1D st(system, (*xs)[i]);
    (*fb)[i] = st.fbar();
    (*sb)[i] = std::sqrt(std::max(0.0, st.sigma_gk()));
  });
  auto interp = [xs](const std::shared_ptr<std::vector<double>>& v, double x) {
    const double rel = (x - (*xs)[0]) / ((*xs)[1] - (*xs)[0]);
    const auto i = static_cast<std::size_t>(
        std::clamp(rel, 0.0, static_cast<double>(xs->size() - 2)));
    const double w = rel - static_cast<double>(i);
    return (1.0 - w) * (*v)[i] + w * (*v)[i + 1];
  };
  SlowDrift drift = SlowDrift::analytic(
      1, [interp, fb](std::span<const double> x, std::span<double> out) {
        out[0] = interp(fb, x[0]);
      });
  auto sigma_bar_fn = [interp, sb](double x) { return interp(sb, x); };
  auto phi = [](double u) { return std::tanh(20.0 * u); };

  IntermediateSweepReport rep;
  rep.weak.label = "intermediate_weak_error";
  rep.weak.seed = opts.master_seed;
  rep.averaged.label = "averaged_error_same_data";
  rep.averaged.seed = opts.master_seed;
  rep.intermediate_below_averaged = true;

  for (std::size_t e = 0; e < eps_list.size(); ++e) {
    const double eps = eps_list[e];
    const SlowFastSystem sys = system.with_eps(eps);
    const double dt_slow = eps * opts.dt_slow_in_eps;
    const double dt_stream = dt_slow / 2.0;
    const auto n_saved = static_cast<std::size_t>(std::llround(T / dt_slow)) + 1;
    const int n_pairs = n_pairs_per_eps[e];
    rep.weak.n_replicas = std::max<long>(rep.weak.n_replicas, 2L * n_pairs);

    const double xv0 = x0;
    const SamplePath xbar = integrate_averaged(sys.A, drift, {&xv0, 1}, T, dt_slow);
    Stationary1D st0(sys, x0);

    // Full-system ensemble: weak statistics plus sup_t E|x - xbar|.
    std::vector<double> f_mean(n_pairs), f_sec(n_pairs), f_phi(n_pairs);
    std::vector<double> sum_abs(n_saved, 0.0);
    std::vector<double> sumsq_abs(n_saved, 0.0);
    {
      const std::size_t group = 512;
      std::vector<std::vector<double>> rows(group);
      for (std::size_t g0 = 0; g0 < static_cast<std::size_t>(n_pairs); g0 += group) {
        const std::size_t g1 = std::min<std::size_t>(g0 + group, n_pairs);
        parallel_for(g1 - g0, [&](std::size_t k) {
          const std::size_t r = g0 + k;
          std::vector<double> abs_row(n_saved, 0.0);
          double am = 0, a2 = 0, ap = 0;
          const int reps = opts.antithetic ? 2 : 1;
          for (int s = 0; s < reps; ++s) {
            NoiseStream stream(opts.master_seed, static_cast<std::uint32_t>(r),
                               1, dt_stream);
            if (s == 1) stream = stream.antithetic();
            double z;
            stream.init_normals({&z, 1}, 12345);
            const double u = 0.5 * std::erfc(-z / std::sqrt(2.0));
            double y0 = st0.sample(std::clamp(u, 1e-12, 1.0 - 1e-12));
            const double xinit = x0;
            const SamplePath p =
                integrate_slowfast(sys, {&xinit, 1}, {&y0, 1}, T, dt_slow, stream);
            const double xT = p.slow.back();
            am += xT;
            a2 += xT * xT;
            ap += phi(xT);
            const std::size_t ns = std::min(n_saved, p.n_steps());
            for (std::size_t j = 0; j < ns; ++j)
              abs_row[j] += std::fabs(p.slow[j] - xbar.slow[j]);
          }
          const double inv = 1.0 / reps;
          f_mean[r] = am * inv;
          f_sec[r] = a2 * inv;
          f_phi[r] = ap * inv;
          for (auto& v : abs_row) v *= inv;
          rows[k] = std::move(abs_row);
        });
        for (std::size_t k = 0; k < g1 - g0; ++k)
          for (std::size_t j = 0; j < n_saved; ++j) {
            sum_abs[j] += rows[k][j];
            sumsq_abs[j] += rows[k][j] * rows[k][j];
          }
      }
    }

    // Intermediate-model ensemble (antithetic on the W~ branch).
    const int n_pairs_int =
        std::max(2000, n_pairs / std::max(1, opts.intermediate_pair_factor));
    std::vector<double> i_mean(n_pairs_int), i_sec(n_pairs_int), i_phi(n_pairs_int);
    parallel_for(static_cast<std::size_t>(n_pairs_int), [&](std::size_t r) {
      double am = 0, a2 = 0, ap = 0;
      const int reps = opts.antithetic ? 2 : 1;
      for (int s = 0; s < reps; ++s) {
        NoiseStream stream(opts.master_seed ^ 0x5bd1e995ULL,
                           static_cast<std::uint32_t>(r), 1, opts.dt_intermediate);
        if (s == 1) stream = stream.antithetic();
        const SamplePath p = integrate_intermediate(
            sys.A, drift, sigma_bar_fn, eps, x0, T, opts.dt_intermediate, stream);
        const double xT = p.slow.back();
        am += xT;
        a2 += xT * xT;
        ap += phi(xT);
      }
      const double inv = 1.0 / reps;
      i_mean[r] = am * inv;
      i_sec[r] = a2 * inv;
      i_phi[r] = ap * inv;
    });

    auto fm = mean_stderr(f_mean), fs = mean_stderr(f_sec), fp = mean_stderr(f_phi);
    auto im = mean_stderr(i_mean), is = mean_stderr(i_sec), ip = mean_stderr(i_phi);

    WeakStatRow stat;
    stat.eps = eps;
    stat.d_mean = std::fabs(fm.mean - im.mean);
    stat.se_mean = std::sqrt(fm.stderr_ * fm.stderr_ + im.stderr_ * im.stderr_);
    stat.d_second = std::fabs(fs.mean - is.mean);
    stat.se_second = std::sqrt(fs.stderr_ * fs.stderr_ + is.stderr_ * is.stderr_);
    stat.d_smooth = std::fabs(fp.mean - ip.mean);
    stat.se_smooth = std::sqrt(fp.stderr_ * fp.stderr_ + ip.stderr_ * ip.stderr_);
    rep.stats.push_back(stat);

    double d = stat.d_mean, se = stat.se_mean;
    if (stat.d_second > d) {
      d = stat.d_second;
      se = stat.se_second;
    }
    if (stat.d_smooth > d) {
      d = stat.d_smooth;
      se = stat.se_smooth;
    }
    rep.weak.rows.push_back({eps, d, se});

    // Averaged-model error from the same full-system replicas.
    double sup = -1.0;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < n_saved; ++j) {
      const double mean = sum_abs[j] / static_cast<double>(n_pairs);
      if (mean > sup) {
        sup = mean;
        arg = j;
      }
    }
    const double mean_at = sum_abs[arg] / static_cast<double>(n_pairs);
    const double var_at = std::max(
        0.0, sumsq_abs[arg] / static_cast<double>(n_pairs) - mean_at * mean_at);
    rep.averaged.rows.push_back(
        {eps, sup, std::sqrt(var_at / static_cast<double>(n_pairs))});

    if (!(d < sup)) rep.intermediate_below_averaged = false;
  }

  rep.weak.fit_if_possible();
  rep.averaged.fit_if_possible();
  return rep;
}

}  // namespace slowfast
