#include "slowfast/integrate.hpp"

#include <cmath>
#include <vector>

#include "slowfast/errors.hpp"
#include "slowfast/ou.hpp"
#include "slowfast/parallel.hpp"
#include "slowfast/stats.hpp"

namespace slowfast {

namespace {

int substeps_per_slow_step(double dt_slow, double eps) {
  int n_sub = static_cast<int>(std::ceil(10.0 * dt_slow / eps - 1e-12));
  if (n_sub < 1) n_sub = 1;
  if (n_sub % 2 != 0) ++n_sub;  // even count so the midpoint stage is on-grid
  return n_sub;
}

// Specialization for n = m = 1: same scheme, no vector scaffolding.
SamplePath integrate_slowfast_scalar(const SlowFastSystem& system, double x0,
                                     double y0, std::size_t n_slow, double dt_slow,
                                     int n_sub, std::int64_t j_per_sub,
                                     const OuTransition& fast,
                                     const NoiseStream& stream,
                                     const IntegrateOptions& opts) {
  const double a = system.A(0, 0);
  const double Ef = fast.propagator()(0, 0);
  const double Lf = fast.noise_factor()(0, 0);
  const double Wf = fast.forcing_weight()(0, 0);
  const double h = dt_slow / n_sub;
  const double inv_sqrt_h = 1.0 / std::sqrt(h);

  SamplePath path;
  path.t0 = 0.0;
  path.dt = dt_slow * opts.save_every;
  path.n = 1;
  path.m = 1;
  path.slow.reserve(n_slow / opts.save_every + 2);
  path.fast.reserve(n_slow / opts.save_every + 2);

  double x = x0, y = y0;
  path.slow.push_back(x);
  path.fast.push_back(y);

  double fx, gy, dW;
  std::int64_t sub_index = 0;
  const double blowup2 = opts.blowup_norm * opts.blowup_norm;
  const bool have_observer = static_cast<bool>(opts.observer);

  for (std::size_t k = 0; k < n_slow; ++k) {
    const double t_k = dt_slow * static_cast<double>(k);
    system.eval_f({&x, 1}, {&y, 1}, {&fx, 1});
    const double k1 = a * x + fx;
    const double x_mid = x + 0.5 * dt_slow * k1;
    double k2 = 0.0;
    double x_frozen = x;
    for (int s = 0; s < n_sub; ++s) {
      if (s == n_sub / 2) {
        system.eval_f({&x_mid, 1}, {&y, 1}, {&fx, 1});
        k2 = a * x_mid + fx;
        x_frozen = x_mid;
      }
      system.eval_g({&x_frozen, 1}, {&y, 1}, {&gy, 1});
      if (j_per_sub == 1) {
        stream.increment(sub_index, {&dW, 1});
      } else {
        stream.increment_sum(sub_index * j_per_sub, (sub_index + 1) * j_per_sub,
                             {&dW, 1});
      }
      y = Ef * y + Wf * gy + Lf * (dW * inv_sqrt_h);
      ++sub_index;
      if (have_observer) opts.observer(t_k + h * (s + 1), {&x_frozen, 1}, {&y, 1});
    }
    x += dt_slow * k2;
    if (x * x + y * y > blowup2) {
      path.blew_up = true;
      break;
    }
    if ((k + 1) % opts.save_every == 0) {
      path.slow.push_back(x);
      path.fast.push_back(y);
    }
  }
  return path;
}

}  // namespace

SamplePath integrate_slowfast(const SlowFastSystem& system,
                              std::span<const double> x0,
                              std::span<const double> y0, double T, double dt_slow,
                              const NoiseStream& stream,
                              const IntegrateOptions& opts) {
  const int n = system.n, m = system.m;
  if (static_cast<int>(x0.size()) != n || static_cast<int>(y0.size()) != m)
    throw InvalidArgument("integrate_slowfast: state dims mismatch");
  if (!(dt_slow > 0.0) || !(T > 0.0))
    throw InvalidArgument("integrate_slowfast: T, dt_slow must be positive");

  const int n_sub = substeps_per_slow_step(dt_slow, system.eps);
  const double h = dt_slow / n_sub;
  const double steps_per_sub = h / stream.dt();
  const auto j_per_sub = static_cast<std::int64_t>(std::llround(steps_per_sub));
  if (j_per_sub < 1 ||
      std::fabs(steps_per_sub - static_cast<double>(j_per_sub)) > 1e-9 * steps_per_sub)
    throw InvalidArgument("fast substep is not a multiple of the stream dt");

  const auto n_slow = static_cast<std::size_t>(std::llround(T / dt_slow));
  const OuTransition fast(system.B, system.sigma, system.eps, h);

  if (system.n == 1 && system.m == 1)
    return integrate_slowfast_scalar(system, x0[0], y0[0], n_slow, dt_slow, n_sub,
                                     j_per_sub, fast, stream, opts);

  SamplePath path;
  path.t0 = 0.0;
  path.dt = dt_slow * opts.save_every;
  path.n = n;
  path.m = m;
  path.slow.reserve((n_slow / opts.save_every + 2) * n);
  path.fast.reserve((n_slow / opts.save_every + 2) * m);

  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(x0.data(), n);
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(y0.data(), m);
  Eigen::VectorXd x_mid(n), k1(n), k2(n), fx(n), gy(m), dW(m);

  auto record = [&]() {
    path.slow.insert(path.slow.end(), x.data(), x.data() + n);
    path.fast.insert(path.fast.end(), y.data(), y.data() + m);
  };
  record();

  auto span_of = [](const Eigen::VectorXd& v) {
    return std::span<const double>(v.data(), static_cast<std::size_t>(v.size()));
  };

  std::int64_t sub_index = 0;
  const double blowup2 = opts.blowup_norm * opts.blowup_norm;

  for (std::size_t k = 0; k < n_slow; ++k) {
    const double t_k = dt_slow * static_cast<double>(k);

    system.eval_f(span_of(x), span_of(y), {fx.data(), static_cast<std::size_t>(n)});
    k1 = system.A * x + fx;
    x_mid = x + 0.5 * dt_slow * k1;

    // First half of the fast substeps with the slow state frozen at x.
    const Eigen::VectorXd* x_frozen = &x;
    for (int s = 0; s < n_sub; ++s) {
      if (s == n_sub / 2) {
        system.eval_f(span_of(x_mid), span_of(y), {fx.data(), static_cast<std::size_t>(n)});
        k2 = system.A * x_mid + fx;
        x_frozen = &x_mid;
      }
      system.eval_g(span_of(*x_frozen), span_of(y), {gy.data(), static_cast<std::size_t>(m)});
      stream.increment_sum(sub_index * j_per_sub, (sub_index + 1) * j_per_sub,
                           {dW.data(), static_cast<std::size_t>(m)});
      fast.step_full(span_of(y), {gy.data(), static_cast<std::size_t>(m)},
                     {dW.data(), static_cast<std::size_t>(m)},
                     {y.data(), static_cast<std::size_t>(m)});
      ++sub_index;
      if (opts.observer)
        opts.observer(t_k + h * (s + 1), span_of(*x_frozen), span_of(y));
    }
    x += dt_slow * k2;

    if (x.squaredNorm() + y.squaredNorm() > blowup2) {
      path.blew_up = true;
      break;
    }
    if ((k + 1) % opts.save_every == 0) record();
  }
  return path;
}

MomentSanityReport moment_sanity(const SlowFastSystem& system,
                                 std::span<const double> x0,
                                 std::span<const double> y0, double T,
                                 double dt_slow, int n_replicas,
                                 std::uint64_t master_seed) {
  if (n_replicas < 100) throw InvalidArgument("moment_sanity: n_replicas >= 100");
  const int n_sub = substeps_per_slow_step(dt_slow, system.eps);
  const double h = dt_slow / n_sub;

  std::vector<double> sup_sq(n_replicas, 0.0);
  parallel_for(static_cast<std::size_t>(n_replicas), [&](std::size_t r) {
    NoiseStream stream(master_seed, static_cast<std::uint32_t>(r), system.m, h);
    double peak = 0.0;
    for (std::size_t i = 0; i < x0.size(); ++i) peak += x0[i] * x0[i];
    for (std::size_t i = 0; i < y0.size(); ++i) peak += y0[i] * y0[i];
    IntegrateOptions opts;
    opts.observer = [&](double, std::span<const double> x, std::span<const double> y) {
      double nrm = 0.0;
      for (double v : x) nrm += v * v;
      for (double v : y) nrm += v * v;
      peak = std::max(peak, nrm);
    };
    (void)integrate_slowfast(system, x0, y0, T, dt_slow, stream, opts);
    sup_sq[r] = peak;
  });

  MomentSanityReport rep;
  rep.mean_sup_sq = mean_of(sup_sq);
  double z0_sq = 0.0;
  for (double v : x0) z0_sq += v * v;
  for (double v : y0) z0_sq += v * v;
  rep.ratio = rep.mean_sup_sq / (z0_sq + 1.0);
  rep.n_replicas = n_replicas;
  return rep;
}

}  // namespace slowfast
