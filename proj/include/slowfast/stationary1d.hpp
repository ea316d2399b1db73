#pragma once

#include <functional>
#include <vector>

#include "slowfast/system.hpp"

namespace slowfast {

// Exact stationary references for scalar fast variables (m = 1).
//
// For frozen x the fast-clock process dy = b(y) ds + sigma dW with
// b(y) = B y + g(x, y) is a reversible 1-D diffusion with invariant density
// p(y) ~ exp((2/sigma^2) \int_0^y b). That gives, by quadrature:
//   - stationary expectations (mean of y, fbar = E f(x, y));
//   - the Green-Kubo integral Sigma = 2 \int_0^inf Cov(H(y_s), H(y_0)) ds
//     via the 1-D Poisson equation:  Sigma = (4/sigma^2) \int Phi(y)^2 / p(y) dy
//     with Phi(y) = \int_{-inf}^y (H - E H) p;
//   - the conditional-integral kernel Hbar(y) = psi(y), the centered solution
//     of L psi = -(H - E H).
struct Stationary1DOptions {
  double y_halfwidth = 0.0;  // 0 = auto (covers the Gaussian tails)
  int n_points = 8001;       // odd, Simpson-friendly
};

class Stationary1D {
 public:
  using Options = Stationary1DOptions;

  Stationary1D(const SlowFastSystem& system, double x_frozen,
               Options opts = Options());

  double mean_y() const { return mean_y_; }
  double fbar() const { return fbar_; }
  double sigma_gk() const { return sigma_gk_; }

  // E_p[fn(y)] by quadrature.
  double expectation(const std::function<double(double)>& fn) const;

  // Hbar(y): integral of the conditional expectation of the centered kernel.
  double hbar(double y) const;

  // Inverse-CDF draw from the stationary density, u in (0,1).
  double sample(double u) const;

  double x_frozen() const { return x_; }

 private:
  double x_;
  std::vector<double> grid_, p_, psi_, cdf_;  // density normalized, psi centered
  double h_ = 0.0;
  double mean_y_ = 0.0, fbar_ = 0.0, sigma_gk_ = 0.0;
};

}  // namespace slowfast
