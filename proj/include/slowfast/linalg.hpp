#pragma once

#include <Eigen/Dense>

namespace slowfast {

// Logarithmic norm mu(M) = lambda_max((M + M^T)/2).
double log_norm(const Eigen::MatrixXd& M);

// phi1(Z) = Z^{-1}(e^Z - I),  phi2(Z) = Z^{-2}(e^Z - I - Z).
// Series for small ||Z||, direct solve otherwise.
Eigen::MatrixXd phi1(const Eigen::MatrixXd& Z);
Eigen::MatrixXd phi2(const Eigen::MatrixXd& Z);

// Van Loan block-exponential: returns Q(t) = \int_0^t e^{F s} Qc e^{F^T s} ds
// and optionally the propagator e^{F t}.
Eigen::MatrixXd van_loan_cov(const Eigen::MatrixXd& F, const Eigen::MatrixXd& Qc,
                             double t, Eigen::MatrixXd* propagator = nullptr);

// Solve B X + X B^T = C (small dense systems, Kronecker form).
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& B, const Eigen::MatrixXd& C);

// Symmetric PSD square root with negative-eigenvalue clipping.
// Eigenvalues in [-clip_tol, 0) are set to 0; an eigenvalue below -clip_tol
// makes min_eig report it (caller decides whether to throw).
Eigen::MatrixXd symmetric_sqrt_psd(const Eigen::MatrixXd& S, double clip_tol,
                                   double* min_eig = nullptr);

Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& M);

}  // namespace slowfast
