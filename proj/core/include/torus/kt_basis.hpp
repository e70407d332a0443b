#ifndef TORUS_KT_BASIS_HPP
#define TORUS_KT_BASIS_HPP

#include <Eigen/Dense>

#include "torus/resonance.hpp"

namespace torus {

/// Certified frequency data: an integer matrix T in GL(d,Z) with a single
/// real eigenvalue lambda_1 outside the unit circle, its eigenvector omega
/// (normalised to omega_1 = 1), the dual vector omega_bar (lambda_1
/// eigenvector of T* with omega_bar.omega = 1), and the full eigensystem.
struct KTBasis {
    int d = 0;
    RVec omega;
    RVec omega_bar;
    IMat T;
    IMat T_star;
    IMat T_inv;  // exact: adjugate over the unit determinant
    long long det = 0;
    CVec lambda;  // descending modulus; lambda[0] real
    CMat evecs;   // columns omega^(1) = omega, omega^(2), ..., omega^(d)
    int power = 1;

    double lambda1() const { return lambda[0].real(); }
    /// Upper bound 1/(2 |omega_bar|_1) on admissible sigma.
    double sigma_bound() const { return 0.5 / omega_bar.lpNorm<1>(); }
};

/// d = 2 golden-mean data: T = [[0,1],[1,1]], omega = (1, (1+sqrt 5)/2).
KTBasis golden_basis();

/// d = 3 data for the real root of x^3 = x + 1: omega = (1, a, a^2),
/// T = [[0,1,0],[0,0,1],[1,1,0]].
KTBasis plastic_basis();

/// Certify an arbitrary integer matrix. Throws NotUnimodular, BadSpectrum
/// or DegenerateEigenvector when the hypotheses fail.
KTBasis from_matrix(const IMat& T);

/// Basis built on T^p (strictly larger feasible sigma for suitable p).
KTBasis basis_power(const KTBasis& b, int p);

/// Search (sigma, kappa) with kappa rho < rho_prime, sigma below the dual
/// bound, and the cone probe passing at truncation K: bisection on sigma
/// downward from the bound. Throws NoFeasibleParams when even the sigma -> 0
/// limit fails (suggest a higher basis power).
ResonanceParams choose_params(const KTBasis& b, double rho, double rho_prime, int K);

/// Same search gated only on the exact integer-index criterion (the
/// finite-truncation requirement the pullback relies on). Always feasible
/// for small sigma; used as a fallback when the real-direction cone cannot
/// contract at power 1.
ResonanceParams choose_params_window(const KTBasis& b, double rho, double rho_prime, int K);

struct DiophantineFit {
    double beta = 0.0;  // -1 - ln|lambda_1| / ln|lambda_2|
    double C = 0.0;     // min |omega.k| |k|^{beta+1} over 0 < |k|_1 <= K
    MultiIndex worst;
};

/// Fit the diophantine constant over the truncation window.
DiophantineFit diophantine_fit(const KTBasis& b, int K);

/// l1-induced operator norm of T^{-1}; logs when it exceeds |lambda_1|.
double t_inverse_l1_norm(const KTBasis& b);

}  // namespace torus

#endif
