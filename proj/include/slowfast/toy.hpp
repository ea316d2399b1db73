#pragma once

#include <cstdint>

#include "slowfast/noise.hpp"
#include "slowfast/system.hpp"

namespace slowfast::toy {

// Scalar example system:
//   f(x,y) = -x y          for x^2+y^2 < 1/16, 0 for x^2+y^2 > 1/8
//   g(x,y) = x^2 - 2 y^2   same regions
// blended in the annulus by a quintic smoothstep in r^2 (C^2 everywhere).
inline constexpr double kInnerR2 = 1.0 / 16.0;
inline constexpr double kOuterR2 = 1.0 / 8.0;

// Blend weight w(r^2): 1 inside, 0 outside, C^2 transition.
double blend(double r2);
double blend_deriv(double r2);  // dw/d(r^2)

double f_value(double x, double y);
double g_value(double x, double y);

// System with A = 0, B = -1 (n = m = 1).
SlowFastSystem toy_system(double sigma, double eps);

// Asymptotic closed forms near x = 0 (valid zone |x| <= 0.15):
//   fbar_cf    = -x^3 + sigma^2 x
//   Sigma_cf   = sigma^2 x^2 (1 - 12 x^2 + 20 sigma^2)
//   ybar_mean  = x^2 - sigma^2
struct ClosedForms {
  double fbar = 0.0;
  double Sigma = 0.0;
  double ybar_mean = 0.0;
  bool in_asymptotic_zone = true;
};
ClosedForms closed_forms(double x, double sigma);

// Normal-form reduced model with three independent noises:
//   dx = (-x^3 + sigma^2 x) dt - sqrt(eps) sigma x dW1
//        + sqrt(2 eps) sigma^2 x dW3 + 4 sqrt(eps) sigma x^3 dW2
// Euler-Maruyama; the stream must have dim 3 (one lane per noise).
SamplePath normal_form_simulate(double sigma, double eps, double x0, double T,
                                double dt, const NoiseStream& stream);

}  // namespace slowfast::toy
