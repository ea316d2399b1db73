#pragma once

#include <Eigen/Dense>
#include <span>

#include "slowfast/noise.hpp"

namespace slowfast {

// One-step transition of d eta = (1/eps) B eta dt + (sigma/sqrt(eps)) dW,
// exact in distribution:
//   eta' = e^{B dt/eps} eta + xi,   xi ~ N(0, Q(dt)),
//   Q(dt) = (sigma^2/eps) \int_0^dt e^{B s/eps} e^{B^T s/eps} ds   (Van Loan).
// xi is produced deterministically from the supplied Wiener increment by
// whitening it and coloring with a symmetric factor of Q.
class OuTransition {
 public:
  OuTransition(const Eigen::MatrixXd& B, double sigma, double eps, double dt);

  const Eigen::MatrixXd& propagator() const { return E_; }
  const Eigen::MatrixXd& noise_cov() const { return Q_; }
  const Eigen::MatrixXd& noise_factor() const { return L_; }
  // (1/eps) \int_0^dt e^{B s/eps} ds = B^{-1}(e^{B dt/eps} - I); multiplies a
  // frozen forcing g/eps over the step in the exponential-Euler update.
  const Eigen::MatrixXd& forcing_weight() const { return W_; }
  double dt() const { return dt_; }

  // out = E state + L (dW / sqrt(dt)); aliasing of out with state is allowed.
  void step(std::span<const double> state, std::span<const double> dW,
            std::span<double> out) const;

  // Deterministic part only: out = E state + W forcing.
  void step_forced(std::span<const double> state, std::span<const double> forcing,
                   std::span<double> out) const;

  // Full exponential-Euler substep: out = E state + W forcing + L (dW/sqrt(dt)).
  void step_full(std::span<const double> state, std::span<const double> forcing,
                 std::span<const double> dW, std::span<double> out) const;

 private:
  int m_;
  double dt_;
  Eigen::MatrixXd E_, Q_, L_, W_;
};

// Q(inf): solves (1/eps) B Q + (1/eps) Q B^T + (sigma^2/eps) I = 0; the eps
// cancels, so the stationary covariance is eps-free.
Eigen::MatrixXd stationary_ou_cov(const Eigen::MatrixXd& B, double sigma);

// Draw from N(0, Q(inf)) using the stream's scratch-normal branch.
void sample_stationary_ou(const Eigen::MatrixXd& B, double sigma,
                          const NoiseStream& stream, std::span<double> out,
                          std::uint64_t slot_base = 0);

// Free-function form matching the operation contract; builds a transition.
void ou_exact_step(const Eigen::MatrixXd& B, double sigma, double eps,
                   std::span<const double> state, std::span<const double> dW,
                   double dt, std::span<double> out);

}  // namespace slowfast
