#include "slowfast/ou.hpp"

#include <cmath>

#include "slowfast/errors.hpp"
#include "slowfast/linalg.hpp"

namespace slowfast {

OuTransition::OuTransition(const Eigen::MatrixXd& B, double sigma, double eps,
                           double dt)
    : m_(static_cast<int>(B.rows())), dt_(dt) {
  if (!(dt > 0.0)) throw InvalidArgument("OuTransition: dt must be positive");
  const Eigen::MatrixXd F = B / eps;
  const Eigen::MatrixXd Qc =
      (sigma * sigma / eps) * Eigen::MatrixXd::Identity(m_, m_);
  Q_ = van_loan_cov(F, Qc, dt, &E_);
  double min_eig = 0.0;
  L_ = symmetric_sqrt_psd(Q_, 1e-12 * Q_.norm(), &min_eig);
  if (min_eig < -1e-12 * Q_.norm())
    throw CovarianceNotPSD("min eigenvalue " + std::to_string(min_eig));
  W_ = (dt / eps) * phi1((dt / eps) * B);
}

void OuTransition::step(std::span<const double> state, std::span<const double> dW,
                        std::span<double> out) const {
  const double inv_sqrt_dt = 1.0 / std::sqrt(dt_);
  Eigen::Map<const Eigen::VectorXd> s(state.data(), m_);
  Eigen::Map<const Eigen::VectorXd> w(dW.data(), m_);
  Eigen::VectorXd tmp = E_ * s;
  tmp.noalias() += L_ * (w * inv_sqrt_dt);
  Eigen::Map<Eigen::VectorXd>(out.data(), m_) = tmp;
}

void OuTransition::step_forced(std::span<const double> state,
                               std::span<const double> forcing,
                               std::span<double> out) const {
  Eigen::Map<const Eigen::VectorXd> s(state.data(), m_);
  Eigen::Map<const Eigen::VectorXd> f(forcing.data(), m_);
  Eigen::VectorXd tmp = E_ * s;
  tmp.noalias() += W_ * f;
  Eigen::Map<Eigen::VectorXd>(out.data(), m_) = tmp;
}

void OuTransition::step_full(std::span<const double> state,
                             std::span<const double> forcing,
                             std::span<const double> dW, std::span<double> out) const {
  const double inv_sqrt_dt = 1.0 / std::sqrt(dt_);
  Eigen::Map<const Eigen::VectorXd> s(state.data(), m_);
  Eigen::Map<const Eigen::VectorXd> f(forcing.data(), m_);
  Eigen::Map<const Eigen::VectorXd> w(dW.data(), m_);
  Eigen::VectorXd tmp = E_ * s;
  tmp.noalias() += W_ * f;
  tmp.noalias() += L_ * (w * inv_sqrt_dt);
  Eigen::Map<Eigen::VectorXd>(out.data(), m_) = tmp;
}

Eigen::MatrixXd stationary_ou_cov(const Eigen::MatrixXd& B, double sigma) {
  const Eigen::Index m = B.rows();
  const Eigen::MatrixXd C = -(sigma * sigma) * Eigen::MatrixXd::Identity(m, m);
  return solve_lyapunov(B, C);
}

void sample_stationary_ou(const Eigen::MatrixXd& B, double sigma,
                          const NoiseStream& stream, std::span<double> out,
                          std::uint64_t slot_base) {
  const Eigen::Index m = B.rows();
  const Eigen::MatrixXd Q = stationary_ou_cov(B, sigma);
  const Eigen::MatrixXd L = symmetric_sqrt_psd(Q, 1e-12 * Q.norm());
  Eigen::VectorXd z(m);
  stream.init_normals({z.data(), static_cast<std::size_t>(m)}, slot_base);
  Eigen::Map<Eigen::VectorXd>(out.data(), m) = L * z;
}

void ou_exact_step(const Eigen::MatrixXd& B, double sigma, double eps,
                   std::span<const double> state, std::span<const double> dW,
                   double dt, std::span<double> out) {
  OuTransition(B, sigma, eps, dt).step(state, dW, out);
}

}  // namespace slowfast
