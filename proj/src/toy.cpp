#include "slowfast/toy.hpp"

#include <cmath>

#include "slowfast/errors.hpp"

namespace slowfast::toy {

namespace {
// Quintic smoothstep S(z) = 6z^5 - 15z^4 + 10z^3 on [0,1].
double smoothstep(double z) { return z * z * z * (10.0 + z * (-15.0 + 6.0 * z)); }
double smoothstep_deriv(double z) {
  const double u = z * (1.0 - z);
  return 30.0 * u * u;
}
constexpr double kWidth = kOuterR2 - kInnerR2;
}  // namespace

double blend(double r2) {
  if (r2 <= kInnerR2) return 1.0;
  if (r2 >= kOuterR2) return 0.0;
  return 1.0 - smoothstep((r2 - kInnerR2) / kWidth);
}

double blend_deriv(double r2) {
  if (r2 <= kInnerR2 || r2 >= kOuterR2) return 0.0;
  return -smoothstep_deriv((r2 - kInnerR2) / kWidth) / kWidth;
}

double f_value(double x, double y) {
  const double r2 = x * x + y * y;
  if (r2 >= kOuterR2) return 0.0;
  return -x * y * blend(r2);
}

double g_value(double x, double y) {
  const double r2 = x * x + y * y;
  if (r2 >= kOuterR2) return 0.0;
  return (x * x - 2.0 * y * y) * blend(r2);
}

SlowFastSystem toy_system(double sigma, double eps) {
  return make_builtin_system("toy", sigma, eps);
}

ClosedForms closed_forms(double x, double sigma) {
  ClosedForms cf;
  const double s2 = sigma * sigma;
  cf.fbar = -x * x * x + s2 * x;
  cf.Sigma = s2 * x * x * (1.0 - 12.0 * x * x + 20.0 * s2);
  cf.ybar_mean = x * x - s2;
  cf.in_asymptotic_zone = std::fabs(x) <= 0.15;
  return cf;
}

SamplePath normal_form_simulate(double sigma, double eps, double x0, double T,
                                double dt, const NoiseStream& stream) {
  if (stream.dim() != 3)
    throw InvalidArgument("normal_form_simulate needs a dim-3 stream");
  if (std::fabs(stream.dt() - dt) > 1e-12 * dt)
    throw InvalidArgument("normal_form_simulate: stream dt must equal dt");
  const auto n_steps = static_cast<std::size_t>(std::llround(T / dt));
  const double s2 = sigma * sigma;
  const double se = std::sqrt(eps);

  SamplePath path;
  path.t0 = 0.0;
  path.dt = dt;
  path.n = 1;
  path.m = 0;
  path.slow.reserve(n_steps + 1);
  path.slow.push_back(x0);

  double x = x0;
  double dW[3];
  for (std::size_t k = 0; k < n_steps; ++k) {
    stream.increment(static_cast<std::int64_t>(k), dW);
    const double drift = -x * x * x + s2 * x;
    x += drift * dt - se * sigma * x * dW[0] + std::sqrt(2.0) * se * s2 * x * dW[2] +
         4.0 * se * sigma * x * x * x * dW[1];
    path.slow.push_back(x);
  }
  return path;
}

}  // namespace slowfast::toy
