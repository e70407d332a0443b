#ifndef TORUS_SPECTRAL_HPP
#define TORUS_SPECTRAL_HPP

#include <map>
#include <utility>
#include <vector>

#include "torus/renorm.hpp"

namespace torus {

/// Truncated linearisation DR(omega) on the flattened coefficient space of
/// resonant window modes (including k = 0). The operator maps mode k to T* k
/// with block lambda_1 T^{-1}; the k = 0 block carries the additional
/// rank-one time-rescaling correction lambda_1 (I - omega omega_bar^T) T^{-1}.
struct LinearizedOperator {
    KTBasis basis;
    ResonanceParams params;
    int K = 0;
    double rho = 0.6;  // radius for the weighted operator norms
    std::vector<MultiIndex> modes;  // resonant window modes, lexicographic
    std::map<MultiIndex, int> index_of;
    CMat matrix;  // dense, dim = d * modes.size()

    int col(int mode_idx, int comp) const { return mode_idx * basis.d + comp; }
    int lookup(const MultiIndex& k) const {
        auto it = index_of.find(k);
        return it == index_of.end() ? -1 : it->second;
    }
    CVec flatten(const FourierField& f) const;
    FourierField unflatten(const CVec& v, bool real_flag) const;

    /// Exact operator action on a field (resonant input projection included;
    /// the image may contain far-from-resonance modes).
    FourierField apply(const FourierField& f) const;

    /// The d x d block acting on constant fields.
    CMat constant_block() const;
};

/// Assemble DR(omega) mode-wise. Throws WindowOverflow if a resonant mode's
/// image leaves the window (prevented by a passing cone check).
LinearizedOperator build_dr_matrix(const KTBasis& b, const ResonanceParams& p, int K, double rho = 0.6);

/// Eigenvalues sorted by descending modulus. The nonconstant sub-block is
/// first verified structurally nilpotent, so its eigenvalues are reported as
/// exact zeros; the k = 0 block is solved densely.
std::vector<cplx> eigen_spectrum(const LinearizedOperator& L);

struct NilpotencyReport {
    int nilpotency_index = 1;   // smallest n with ((I-E) L)^n = 0 on the window
    double max_residual = 0.0;  // numerical norm of the n-th power (exact structural zero)
    std::vector<double> norms;  // weighted operator norms |L^n (I-E)|, n = 1..index
};

/// Support-chasing proof of nilpotency of the nonconstant block, plus the
/// operator-norm decay sequence.
NilpotencyReport nilpotency_check(const LinearizedOperator& L);

/// Splits f into stable and unstable parts: P^u = (I - P_omega) E with
/// P_omega c = (omega_bar . c) omega, so the unstable part is the constant
/// field along span{omega^(2), ..., omega^(d)} and stable = f - unstable.
std::pair<FourierField, FourierField> project_stable_unstable(const FourierField& f, const KTBasis& b);

/// Real basis of the unstable subspace (one column per real eigen-direction,
/// real/imaginary pair per complex-conjugate eigenvalue pair).
Eigen::MatrixXd unstable_real_basis(const KTBasis& b);
/// Coordinates of the unstable component of f in that basis.
RVec unstable_real_coords(const FourierField& f, const KTBasis& b);

/// Adjust the d-1 unstable coordinates of omega + f_seed by quasi-Newton
/// (secant) iteration so that n_targets renormalisation steps keep the
/// unstable component below 1e-9 |f_seed|'. Throws ShootingFailed after 50
/// iterations.
FourierField shoot_stable(const FourierField& f_seed, const RenormConfig& cfg, int n_targets);

struct FdValidation {
    double max_rel_err_operator = 0.0;  // exact operator action vs finite differences
    double max_rel_err_matrix = 0.0;    // matrix action vs resonant-projected differences
    int directions = 0;
    double step = 0.0;
};

/// Finite-difference check of the assembled matrix against renorm_step at
/// omega along random flattened basis directions.
FdValidation validate_dr_matrix(const LinearizedOperator& L, const RenormConfig& cfg, int n_directions = 20,
                                double t = 1e-7);

}  // namespace torus

#endif
