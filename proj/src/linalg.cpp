#include "slowfast/linalg.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include "slowfast/errors.hpp"

namespace slowfast {

double log_norm(const Eigen::MatrixXd& M) {
  const Eigen::MatrixXd S = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  return es.eigenvalues().maxCoeff();
}

Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& M) { return M.exp(); }

namespace {

// Truncated series sum_{k>=0} Z^k / (k + shift)! starting at the given factorial.
Eigen::MatrixXd phi_series(const Eigen::MatrixXd& Z, int shift) {
  const Eigen::Index d = Z.rows();
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(d, d);
  double fact = 1.0;
  for (int k = 1; k <= shift; ++k) fact *= k;
  term /= fact;
  Eigen::MatrixXd sum = term;
  for (int k = 1; k < 40; ++k) {
    term = (term * Z) / static_cast<double>(k + shift);
    sum += term;
    if (term.norm() < 1e-18 * (1.0 + sum.norm())) break;
  }
  return sum;
}

}  // namespace

Eigen::MatrixXd phi1(const Eigen::MatrixXd& Z) {
  if (Z.norm() < 0.25) return phi_series(Z, 1);
  const Eigen::Index d = Z.rows();
  const Eigen::MatrixXd E = Z.exp();
  return Z.partialPivLu().solve(E - Eigen::MatrixXd::Identity(d, d));
}

Eigen::MatrixXd phi2(const Eigen::MatrixXd& Z) {
  if (Z.norm() < 0.25) return phi_series(Z, 2);
  const Eigen::Index d = Z.rows();
  const Eigen::MatrixXd E = Z.exp();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  return Z.partialPivLu().solve(Z.partialPivLu().solve(E - I - Z));
}

Eigen::MatrixXd van_loan_cov(const Eigen::MatrixXd& F, const Eigen::MatrixXd& Qc,
                             double t, Eigen::MatrixXd* propagator) {
  const Eigen::Index d = F.rows();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2 * d, 2 * d);
  M.topLeftCorner(d, d) = -F;
  M.topRightCorner(d, d) = Qc;
  M.bottomRightCorner(d, d) = F.transpose();
  const Eigen::MatrixXd E = (M * t).exp();
  const Eigen::MatrixXd Phi = E.bottomRightCorner(d, d).transpose();  // e^{F t}
  Eigen::MatrixXd Q = Phi * E.topRightCorner(d, d);
  Q = 0.5 * (Q + Q.transpose());
  if (propagator) *propagator = Phi;
  return Q;
}

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& B, const Eigen::MatrixXd& C) {
  const Eigen::Index m = B.rows();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(m * m, m * m);
  // vec(BX + XB^T) = (I kron B + B kron I) vec(X), column-major vec.
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index k = 0; k < m; ++k) {
        K(j * m + i, j * m + k) += B(i, k);  // (I kron B)
        K(j * m + i, k * m + i) += B(j, k);  // (B kron I)
      }
  Eigen::VectorXd c(m * m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < m; ++i) c(j * m + i) = C(i, j);
  const Eigen::VectorXd x = K.fullPivLu().solve(c);
  Eigen::MatrixXd X(m, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < m; ++i) X(i, j) = x(j * m + i);
  const double resid = (B * X + X * B.transpose() - C).norm();
  if (!(resid <= 1e-8 * (1.0 + C.norm())))
    throw LyapunovSolveFailed("residual " + std::to_string(resid));
  return 0.5 * (X + X.transpose());
}

Eigen::MatrixXd symmetric_sqrt_psd(const Eigen::MatrixXd& S, double clip_tol,
                                   double* min_eig) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (S + S.transpose()));
  const Eigen::VectorXd& ev = es.eigenvalues();
  if (min_eig) *min_eig = ev.minCoeff();
  Eigen::VectorXd root = ev;
  for (Eigen::Index i = 0; i < root.size(); ++i) {
    double v = root(i);
    if (v < 0.0 && v >= -clip_tol) v = 0.0;
    root(i) = v > 0.0 ? std::sqrt(v) : 0.0;
  }
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace slowfast
