#include "slowfast/stationary1d.hpp"
#include <algorithm>

#include <cmath>

#include "slowfast/errors.hpp"

namespace slowfast {

namespace {

// Composite-trapezoid cumulative integral of f over a uniform grid.
std::vector<double> cumulative(const std::vector<double>& f, double h) {
  std::vector<double> out(f.size(), 0.0);
  for (std::size_t i = 1; i < f.size(); ++i)
    out[i] = out[i - 1] + 0.5 * h * (f[i - 1] + f[i]);
  return out;
}

double integrate(const std::vector<double>& f, double h) {
  double s = 0.5 * (f.front() + f.back());
  for (std::size_t i = 1; i + 1 < f.size(); ++i) s += f[i];
  return s * h;
}

}  // namespace

Stationary1D::Stationary1D(const SlowFastSystem& system, double x_frozen,
                           Options opts)
    : x_(x_frozen) {
  if (system.m != 1 || system.n != 1)
    throw InvalidArgument("Stationary1D requires n = m = 1");
  const double b_lin = system.B(0, 0);
  if (!(b_lin < 0.0)) throw InvalidArgument("Stationary1D: B must be negative");
  const double sigma = system.sigma;
  const double s2 = sigma * sigma;

  double yw = opts.y_halfwidth;
  if (yw <= 0.0) {
    // OU tails ~ N(0, sigma^2 / (2|B|)); 12 standard deviations plus room for
    // the nonlinearity's mean shift.
    yw = 12.0 * std::sqrt(s2 / (2.0 * -b_lin)) + 0.3;
  }
  int np = opts.n_points;
  if (np < 101) np = 101;
  if (np % 2 == 0) ++np;
  h_ = 2.0 * yw / (np - 1);

  grid_.resize(np);
  std::vector<double> V(np, 0.0), b(np);
  const double x = x_;
  double gx[1], yv[1], out[1];
  gx[0] = x;
  for (int i = 0; i < np; ++i) {
    grid_[i] = -yw + h_ * i;
    yv[0] = grid_[i];
    system.eval_g({gx, 1}, {yv, 1}, {out, 1});
    b[i] = b_lin * grid_[i] + out[0];
  }
  // V(y) = (2/s2) \int b; anchored at the left edge, shifted by its max to
  // avoid overflow in exp.
  std::vector<double> cumb = cumulative(b, h_);
  double vmax = -1e300;
  for (int i = 0; i < np; ++i) {
    V[i] = (2.0 / s2) * cumb[i];
    vmax = std::max(vmax, V[i]);
  }
  p_.resize(np);
  for (int i = 0; i < np; ++i) p_[i] = std::exp(V[i] - vmax);
  const double z = integrate(p_, h_);
  for (auto& v : p_) v /= z;
  if (!(p_.front() < 1e-14 && p_.back() < 1e-14))
    throw InvalidArgument("Stationary1D: window too narrow for the density");

  // Stationary mean and fbar.
  std::vector<double> tmp(np);
  for (int i = 0; i < np; ++i) tmp[i] = grid_[i] * p_[i];
  mean_y_ = integrate(tmp, h_);
  std::vector<double> fvals(np);
  for (int i = 0; i < np; ++i) {
    yv[0] = grid_[i];
    system.eval_f({gx, 1}, {yv, 1}, {out, 1});
    fvals[i] = out[0];
    tmp[i] = out[0] * p_[i];
  }
  const double Ax = system.A(0, 0) * x;
  (void)Ax;
  fbar_ = integrate(tmp, h_);

  // Centered kernel H = f - fbar; Phi(y) = \int_{-inf}^y H p. Analytically
  // Phi decays like p in both tails; numerically the left-anchored cumulative
  // saturates at a roundoff residue, which Phi^2/p would amplify through the
  // tiny tail densities. Rebase the right half on the tail-from-the-right
  // representation and floor p where it underflows.
  for (int i = 0; i < np; ++i) tmp[i] = (fvals[i] - fbar_) * p_[i];
  std::vector<double> Phi = cumulative(tmp, h_);
  int i_mode = 0;
  for (int i = 1; i < np; ++i)
    if (p_[i] > p_[i_mode]) i_mode = i;
  const double resid = Phi[np - 1];
  for (int i = i_mode; i < np; ++i) Phi[i] -= resid;
  const double p_floor = 1e-30 * p_[i_mode];

  // Sigma = (4/s2) \int Phi^2 / p.
  std::vector<double> integ(np, 0.0);
  for (int i = 0; i < np; ++i)
    integ[i] = p_[i] > p_floor ? Phi[i] * Phi[i] / p_[i] : 0.0;
  sigma_gk_ = (4.0 / s2) * integrate(integ, h_);

  // psi' = -(2/s2) Phi / p, centered so E_p psi = 0.
  std::vector<double> dpsi(np, 0.0);
  for (int i = 0; i < np; ++i)
    dpsi[i] = p_[i] > p_floor ? -(2.0 / s2) * Phi[i] / p_[i] : 0.0;
  psi_ = cumulative(dpsi, h_);
  for (int i = 0; i < np; ++i) tmp[i] = psi_[i] * p_[i];
  const double psi_mean = integrate(tmp, h_);
  for (auto& v : psi_) v -= psi_mean;

  cdf_ = cumulative(p_, h_);
  const double total = cdf_.back();
  for (auto& v : cdf_) v /= total;
}

double Stationary1D::sample(double u) const {
  if (!(u > 0.0 && u < 1.0)) throw InvalidArgument("sample: u must be in (0,1)");
  auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
  std::size_t i = static_cast<std::size_t>(it - cdf_.begin());
  if (i == 0) return grid_.front();
  if (i >= cdf_.size()) return grid_.back();
  const double c0 = cdf_[i - 1], c1 = cdf_[i];
  const double w = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
  return grid_[i - 1] + w * h_;
}

double Stationary1D::expectation(const std::function<double(double)>& fn) const {
  std::vector<double> tmp(grid_.size());
  for (std::size_t i = 0; i < grid_.size(); ++i) tmp[i] = fn(grid_[i]) * p_[i];
  return integrate(tmp, h_);
}

double Stationary1D::hbar(double y) const {
  const double lo = grid_.front(), hi = grid_.back();
  if (y <= lo) return psi_.front();
  if (y >= hi) return psi_.back();
  const double rel = (y - lo) / h_;
  const auto i = static_cast<std::size_t>(rel);
  const double w = rel - static_cast<double>(i);
  return (1.0 - w) * psi_[i] + w * psi_[i + 1];
}

}  // namespace slowfast
