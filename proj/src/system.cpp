#include "slowfast/system.hpp"

#include <cmath>
#include <mutex>

#include "slowfast/errors.hpp"
#include "slowfast/toy.hpp"

namespace slowfast {

void SlowFastSystem::validate() const {
  if (n <= 0 || m <= 0) throw InvalidArgument("system dims must be positive");
  if (!(eps > 0.0 && eps <= 1.0)) throw InvalidArgument("eps must be in (0,1]");
  if (sigma == 0.0) throw InvalidArgument("sigma must be nonzero");
  if (A.rows() != n || A.cols() != n) throw InvalidArgument("A must be n x n");
  if (B.rows() != m || B.cols() != m) throw InvalidArgument("B must be m x m");
  if (!A.allFinite() || !B.allFinite()) throw InvalidArgument("A, B must be finite");
  if (!f || !g) throw InvalidArgument("f, g must be set");
  // f(0,0) = 0 and g(0,0) = 0, checked by direct evaluation.
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n), y0 = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd fo(n), go(m);
  f({x0.data(), static_cast<std::size_t>(n)}, {y0.data(), static_cast<std::size_t>(m)},
    {fo.data(), static_cast<std::size_t>(n)});
  g({x0.data(), static_cast<std::size_t>(n)}, {y0.data(), static_cast<std::size_t>(m)},
    {go.data(), static_cast<std::size_t>(m)});
  if (fo.norm() > 1e-14) throw InvalidArgument("f(0,0) != 0");
  if (go.norm() > 1e-14) throw InvalidArgument("g(0,0) != 0");
}

namespace {

std::map<std::string, NonlinearityEntry>& mutable_registry() {
  static std::map<std::string, NonlinearityEntry> reg;
  static std::once_flag init;
  std::call_once(init, [] {
    auto zero_f = [](std::span<const double>, std::span<const double>,
                     std::span<double> out) {
      for (auto& v : out) v = 0.0;
    };

    Eigen::MatrixXd A1 = Eigen::MatrixXd::Zero(1, 1);
    Eigen::MatrixXd B1 = -Eigen::MatrixXd::Identity(1, 1);

    // Example system of the benchmark module. Operating-domain Lipschitz
    // constants on |x| <= 0.12, |y| <= 0.16 (inside the inner cutoff):
    //   sup |grad f| = sqrt(x^2 + y^2), sup |grad g| = sqrt(4x^2 + 16y^2).
    // Global constants over the blend annulus are larger and fail H2; the box
    // is the envelope the constructions operate on (the spectral-gap scan and
    // LP contraction are certified there, excursions are guarded at runtime).
    {
      NonlinearityEntry e;
      e.n = 1;
      e.m = 1;
      e.f = [](std::span<const double> x, std::span<const double> y,
               std::span<double> out) { out[0] = toy::f_value(x[0], y[0]); };
      e.g = [](std::span<const double> x, std::span<const double> y,
               std::span<double> out) { out[0] = toy::g_value(x[0], y[0]); };
      e.default_A = A1;
      e.default_B = B1;
      e.lip_f = std::sqrt(0.12 * 0.12 + 0.16 * 0.16);
      e.lip_g = std::sqrt(4.0 * 0.12 * 0.12 + 16.0 * 0.16 * 0.16);
      DomainBox box;
      box.lo = Eigen::Vector2d(-0.12, -0.16);
      box.hi = Eigen::Vector2d(0.12, 0.16);
      e.box = box;
      e.doc = "scalar cutoff system: f=-xy, g=x^2-2y^2 near 0";
      reg.emplace("toy", std::move(e));
    }

    // Pure linear system, f = g = 0.
    {
      NonlinearityEntry e;
      e.n = 1;
      e.m = 1;
      e.f = zero_f;
      e.g = zero_f;
      e.default_A = A1;
      e.default_B = B1;
      e.lip_f = 0.0;
      e.lip_g = 0.0;
      e.doc = "f = 0, g = 0";
      reg.emplace("linear_test", std::move(e));
    }

    // Slow drift reads the fast state directly: f(x,y) = y, g = 0.
    // Stationary benchmark with exact fbar = 0, Sigma = sigma^2, Hbar(y) = y.
    {
      NonlinearityEntry e;
      e.n = 1;
      e.m = 1;
      e.f = [](std::span<const double>, std::span<const double> y,
               std::span<double> out) { out[0] = y[0]; };
      e.g = zero_f;
      e.default_A = A1;
      e.default_B = B1;
      e.lip_f = 1.0;
      e.lip_g = 0.0;
      e.doc = "f = y, g = 0";
      reg.emplace("linear_y", std::move(e));
    }

    // Fast equation forced by the slow state only: f = 0, g(x,y) = x^2.
    {
      NonlinearityEntry e;
      e.n = 1;
      e.m = 1;
      e.f = zero_f;
      e.g = [](std::span<const double> x, std::span<const double>,
               std::span<double> out) { out[0] = x[0] * x[0]; };
      e.default_A = A1;
      e.default_B = B1;
      e.lip_f = 0.0;
      e.lip_g = 0.0;  // in y; x-variation handled by callers that need it
      e.doc = "f = 0, g = x^2 (independent of y)";
      reg.emplace("fast_forced", std::move(e));
    }
  });
  return reg;
}

}  // namespace

const std::map<std::string, NonlinearityEntry>& nonlinearity_registry() {
  return mutable_registry();
}

void register_nonlinearity_pair(const std::string& name, NonlinearityEntry entry) {
  mutable_registry()[name] = std::move(entry);
}

SlowFastSystem make_builtin_system(const std::string& name, double sigma, double eps) {
  const auto& reg = nonlinearity_registry();
  const auto it = reg.find(name);
  if (it == reg.end()) throw InvalidArgument("unknown builtin system: " + name);
  const NonlinearityEntry& e = it->second;
  SlowFastSystem s;
  s.n = e.n;
  s.m = e.m;
  s.A = e.default_A;
  s.B = e.default_B;
  s.f = e.f;
  s.g = e.g;
  s.sigma = sigma;
  s.eps = eps;
  s.f_name = name;
  s.g_name = name;
  s.lip_f = e.lip_f;
  s.lip_g = e.lip_g;
  s.box = e.box;
  s.validate();
  return s;
}

}  // namespace slowfast
