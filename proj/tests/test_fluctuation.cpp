#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "slowfast/errors.hpp"
#include "slowfast/fluctuation.hpp"
#include "slowfast/parallel.hpp"
#include "slowfast/rng.hpp"
#include "slowfast/stationary1d.hpp"
#include "slowfast/stats.hpp"
#include "slowfast/toy.hpp"

using namespace slowfast;

namespace {
SlowDrift zero_drift() {
  return SlowDrift::analytic(1, [](std::span<const double>, std::span<double> o) {
    o[0] = 0.0;
  });
}

SlowDrift quad_drift(const SlowFastSystem& sys) {
  const int nt = 401;
  auto xs = std::make_shared<std::vector<double>>(nt);
  auto fb = std::make_shared<std::vector<double>>(nt);
  for (int i = 0; i < nt; ++i) (*xs)[i] = -0.2 + 0.4 * i / (nt - 1.0);
  parallel_for(nt, [&](std::size_t i) {
    (*fb)[i] = Stationary1D(sys, (*xs)[i]).fbar();
  });
  return SlowDrift::analytic(1, [xs, fb](std::span<const double> x,
                                         std::span<double> out) {
    const double rel = (x[0] - (*xs)[0]) / ((*xs)[1] - (*xs)[0]);
    const auto i = static_cast<std::size_t>(
        std::clamp(rel, 0.0, static_cast<double>(xs->size() - 2)));
    const double w = rel - static_cast<double>(i);
    out[0] = (1.0 - w) * (*fb)[i] + w * (*fb)[i + 1];
  });
}
}  // namespace

TEST_CASE("kernel centering: mean of H over the stationary law is ~0") {
  const SlowFastSystem sys = toy::toy_system(0.1, 0.01);
  FluctuationKernel H{&sys, quad_drift(sys)};
  Stationary1D st(sys, 0.05);
  const int R = 4000;
  std::vector<double> vals(R);
  for (int r = 0; r < R; ++r) {
    const double u = rng::uniform01(rng::hash_at(rng::derive_key(123, r, 0), 0));
    vals[r] = H.eval(0.05, st.sample(std::clamp(u, 1e-12, 1.0 - 1e-12)));
  }
  auto ms = mean_stderr(vals);
  CHECK(std::fabs(ms.mean) <= 3.0 * ms.stderr_ + 1e-9);
}

TEST_CASE("Sigma: exact zero at x = 0 for the toy") {
  const SlowFastSystem sys = toy::toy_system(0.1, 0.01);
  NoiseStream s(130, 0, 1, 0.02);
  const SigmaEstimate est = sigma_estimate(sys, 0.0, zero_drift(), 64.0, 3200.0, s);
  CHECK(est.Sigma(0, 0) == 0.0);  // H(0, .) == 0 since f = -x y
}

TEST_CASE("Sigma: scalar OU benchmark equals sigma^2") {
  const SlowFastSystem sys = make_builtin_system("linear_y", 0.5, 0.01);
  NoiseStream s(131, 0, 1, 0.02);
  const SigmaEstimate est =
      sigma_estimate(sys, 0.0, zero_drift(), 64.0, 64000.0, s);
  CHECK(std::fabs(est.Sigma(0, 0) - 0.25) <= 3.0 * est.stderr_(0, 0));
  CHECK(est.plateau_found);
}

TEST_CASE("Sigma: toy at x = 0.05 matches the quadrature reference") {
  const SlowFastSystem sys = toy::toy_system(0.1, 0.01);
  Stationary1D st(sys, 0.05);
  NoiseStream s(132, 0, 1, 0.02);
  const SigmaEstimate est =
      sigma_estimate(sys, 0.05, quad_drift(sys), 64.0, 50000.0, s);
  CHECK(std::fabs(est.Sigma(0, 0) - st.sigma_gk()) <= 3.0 * est.stderr_(0, 0));
  // and the paper's closed form within 20%
  CHECK(std::fabs(est.Sigma(0, 0) - 2.925e-5) <= 0.2 * 2.925e-5);
}

TEST_CASE("Sigma estimate is eps-free") {
  NoiseStream s1(133, 0, 1, 0.02), s2(133, 0, 1, 0.02);
  const SigmaEstimate a = sigma_estimate(toy::toy_system(0.1, 1e-2), 0.05,
                                         zero_drift(), 64.0, 6400.0, s1);
  const SigmaEstimate b = sigma_estimate(toy::toy_system(0.1, 1e-3), 0.05,
                                         zero_drift(), 64.0, 6400.0, s2);
  CHECK(a.Sigma(0, 0) == b.Sigma(0, 0));  // the fast clock never sees eps
}

TEST_CASE("sigma_sqrt: identity, rank-deficient, round-trip, failure") {
  CHECK((sigma_sqrt(Eigen::MatrixXd::Identity(3, 3)) -
         Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-14);

  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(2, 2);
  D(0, 0) = 4.0;
  const Eigen::MatrixXd rootD = sigma_sqrt(D);
  CHECK(rootD(0, 0) == doctest::Approx(2.0));
  CHECK(rootD(1, 1) == doctest::Approx(0.0));

  Eigen::MatrixXd Araw(3, 3);
  Araw << 0.3, -1.2, 0.5, 0.9, 0.1, -0.4, -0.7, 0.6, 1.1;
  const Eigen::MatrixXd S = Araw * Araw.transpose();
  const Eigen::MatrixXd R = sigma_sqrt(S);
  CHECK((R * R.transpose() - S).norm() <= 1e-10 * S.norm());

  Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
  bad(1, 1) = -1e-3;
  CHECK_THROWS_AS(sigma_sqrt(bad), NotNearlyPSD);
}

TEST_CASE("Hbar: zero kernel, OU conditional mean, tower consistency") {
  // f independent of y -> H == 0 -> Hbar == 0
  const SlowFastSystem zero_sys = make_builtin_system("linear_test", 0.4, 0.01);
  const auto z = hbar_estimate(zero_sys, 0.1, 0.3, zero_drift(), 200, 25.0, 134);
  CHECK(z.value == 0.0);
  CHECK(z.stderr_ == 0.0);

  // OU benchmark: Hbar(x, y) = y (integral of the conditional mean)
  const SlowFastSystem ou = make_builtin_system("linear_y", 0.3, 0.01);
  const auto hb = hbar_estimate(ou, 0.0, 0.5, zero_drift(), 4000, 30.0, 135);
  CHECK(std::fabs(hb.value - 0.5) <= 3.0 * hb.stderr_);

  // tower rule: 2 E[Hbar H] = Sigma over the stationary law (toy)
  const SlowFastSystem sys = toy::toy_system(0.1, 0.01);
  const SlowDrift fb = quad_drift(sys);
  Stationary1D st(sys, 0.05);
  FluctuationKernel H{&sys, fb};
  const int R = 220;
  std::vector<double> prod(R), se_in(R);
  parallel_for(R, [&](std::size_t r) {
    const double u = rng::uniform01(rng::hash_at(rng::derive_key(136, r, 0), 0));
    const double y = st.sample(std::clamp(u, 1e-12, 1.0 - 1e-12));
    const auto hbv =
        hbar_estimate(sys, 0.05, y, fb, 400, 64.0, rng::mix64(137 + r));
    prod[r] = 2.0 * hbv.value * H.eval(0.05, y);
    se_in[r] = 2.0 * hbv.stderr_ * std::fabs(H.eval(0.05, y));
  });
  auto ms = mean_stderr(prod);
  const double inner_se = mean_of(se_in) / std::sqrt(static_cast<double>(R));
  const double comb = std::sqrt(ms.stderr_ * ms.stderr_ + inner_se * inner_se);
  CHECK(std::fabs(ms.mean - st.sigma_gk()) <= 3.0 * comb);
}

TEST_CASE("HbarCache matches the quadrature Poisson solution") {
  const SlowFastSystem sys = toy::toy_system(0.1, 0.01);
  const SlowDrift fb = quad_drift(sys);
  std::vector<double> xg = {0.02, 0.035, 0.05, 0.065, 0.08};
  std::vector<double> yg;
  for (int j = 0; j < 17; ++j) yg.push_back(-0.28 + 0.035 * j);
  HbarCache cache(sys, fb, xg, yg, 400, 64.0, 138, 0.04);
  Stationary1D st(sys, 0.05);
  for (double y : {-0.15, -0.05, 0.05, 0.15}) {
    const double se = cache.stderr_at(0.05, y);
    CHECK(std::fabs(cache.eval(0.05, y) - st.hbar(y)) <= 4.0 * se + 2e-4);
  }
  CHECK(cache.fd_noise_ratio() < 1.0);
}

TEST_CASE("martingale: zero kernel gives identically zero residuals") {
  const SlowFastSystem sys = make_builtin_system("linear_test", 0.4, 0.01);
  std::vector<double> xg = {-0.1, 0.0, 0.1}, yg = {-1.0, 0.0, 1.0};
  HbarCache cache(sys, zero_drift(), xg, yg, 100, 25.0, 139, 0.05);
  std::vector<PathFunctional> fns;
  fns.push_back([](const SamplePath&, double) { return 1.0; });
  MartingaleOptions mo;
  mo.master_seed = 140;
  const MartingaleReport rep =
      martingale_residual(sys, 0.0, 0.5, 120, fns, zero_drift(), cache, mo);
  for (const auto& c : rep.cells) CHECK(c.residual == 0.0);
  CHECK(rep.max_abs_z == 0.0);
}

TEST_CASE("integrate_intermediate: zero diffusion reduces to the drift flow") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(1, 1);
  SlowDrift cf = SlowDrift::analytic(1, [](std::span<const double> x,
                                           std::span<double> o) {
    o[0] = -x[0] * x[0] * x[0] + 0.01 * x[0];
  });
  const double dt = 1e-3;
  NoiseStream s(141, 0, 1, dt);
  const SamplePath em = integrate_intermediate(A, cf, [](double) { return 0.0; },
                                               1e-2, 0.05, 1.0, dt, s);
  const double x0 = 0.05;
  const SamplePath rk = integrate_averaged(A, cf, {&x0, 1}, 1.0, dt);
  CHECK(std::fabs(em.slow.back() - rk.slow.back()) < 10.0 * dt * 1e-3);
}

TEST_CASE("intermediate model variance scales linearly in eps") {
  const SlowFastSystem sys = toy::toy_system(0.1, 0.01);
  SlowDrift fb = quad_drift(sys);
  auto sgq = std::make_shared<Stationary1D>(sys, 0.05);
  // frozen closed-form-ish diffusion table via quadrature at x
  auto sigma_bar = [&](double x) {
    return std::sqrt(std::max(0.0, Stationary1D(sys, x).sigma_gk()));
  };
  // precompute on a small grid for speed
  const int nn = 41;
  auto xs = std::make_shared<std::vector<double>>(nn);
  auto sb = std::make_shared<std::vector<double>>(nn);
  for (int i = 0; i < nn; ++i) {
    (*xs)[i] = -0.1 + 0.3 * i / (nn - 1.0);
    (*sb)[i] = sigma_bar((*xs)[i]);
  }
  auto sb_interp = [xs, sb](double x) {
    const double rel = (x - (*xs)[0]) / ((*xs)[1] - (*xs)[0]);
    const auto i = static_cast<std::size_t>(
        std::clamp(rel, 0.0, static_cast<double>(xs->size() - 2)));
    const double w = rel - static_cast<double>(i);
    return (1.0 - w) * (*sb)[i] + w * (*sb)[i + 1];
  };
  const double dt = 1e-3;
  double var[2];
  int idx = 0;
  for (double eps : {1e-2, 1e-3}) {
    const int R = 6000;
    std::vector<double> xT(R);
    parallel_for(R, [&](std::size_t r) {
      NoiseStream s(142, static_cast<std::uint32_t>(r), 1, dt);
      xT[r] = integrate_intermediate(sys.A, fb, sb_interp, eps, 0.05, 1.0, dt, s)
                  .slow.back();
    });
    var[idx++] = variance_of(xT);
  }
  CHECK(var[0] > 0.0);
  const double ratio = var[0] / var[1];
  CHECK(ratio > 10.0 / 1.5);
  CHECK(ratio < 10.0 * 1.5);
}

TEST_CASE("Euler-Maruyama weak order of the intermediate integrator") {
  // synthetic smooth model with an O(dt) weak bias large enough to measure:
  // dx = -x dt + sqrt(eps) sigma_bar(x) dW, eps = 1
  Eigen::MatrixXd A(1, 1);
  A << -1.0;
  SlowDrift zero = zero_drift();
  auto sigma_bar = [](double x) { return 0.4 * (1.0 + 0.8 * std::tanh(2.0 * x)); };
  auto run = [&](double dt, int pairs) {
    std::vector<double> xs(pairs);
    parallel_for(pairs, [&](std::size_t r) {
      double acc = 0.0;
      for (int s = 0; s < 2; ++s) {
        NoiseStream stream(143, static_cast<std::uint32_t>(r), 1, dt);
        if (s) stream = stream.antithetic();
        acc += integrate_intermediate(A, zero, sigma_bar, 1.0, 0.4, 1.0, dt, stream)
                   .slow.back();
      }
      xs[r] = acc / 2.0;
    });
    return mean_stderr(xs);
  };
  const auto a = run(0.1, 300000);
  const auto b = run(0.05, 300000);
  const auto c = run(0.025, 300000);
  const double d1 = a.mean - b.mean, d2 = b.mean - c.mean;
  const double order = std::log2(std::fabs(d1) / std::fabs(d2));
  CHECK(order >= 0.8);
}

TEST_CASE("exact collapse: f independent of y floors the weak errors") {
  const SlowFastSystem sys = make_builtin_system("linear_test", 0.1, 0.01);
  const std::vector<double> eps_list = {1e-1, 3.1622776601683794e-2, 1e-2,
                                        3.1622776601683794e-3};
  const std::vector<int> pairs = {30, 30, 30, 30};
  IntermediateSweepOptions opts;
  opts.master_seed = 145;
  const IntermediateSweepReport rep =
      intermediate_error_sweep(sys, 0.05, 0.5, eps_list, pairs, opts);
  for (const auto& row : rep.weak.rows) CHECK(row.error <= 1e-12);
  for (const auto& row : rep.averaged.rows) CHECK(row.error <= 1e-12);
}

TEST_CASE("diffusion table: factor reproduces Sigma, serialization works") {
  const SlowFastSystem sys = toy::toy_system(0.1, 0.01);
  const SlowDrift fb = quad_drift(sys);
  std::vector<double> grid = {0.03, 0.05, 0.07};
  const DiffusionTable table = tabulate_sigma(sys, grid, fb, 64.0, 6400.0, 144);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(table.plateau_ok[i]);
    const Eigen::MatrixXd rt = table.sigma_bar[i] * table.sigma_bar[i].transpose();
    CHECK((rt - table.Sigma[i]).norm() <= 1e-10 * (1.0 + table.Sigma[i].norm()));
  }
  CHECK(table.sigma_bar_scalar(0.04) > 0.0);
  table.write_csv("/tmp/slowfast_sigma_table.csv");
  table.write_json_meta("/tmp/slowfast_sigma_meta.json");
  std::remove("/tmp/slowfast_sigma_table.csv");
  std::remove("/tmp/slowfast_sigma_meta.json");
}
