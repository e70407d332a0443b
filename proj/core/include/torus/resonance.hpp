#ifndef TORUS_RESONANCE_HPP
#define TORUS_RESONANCE_HPP

#include <Eigen/Dense>
#include <vector>

#include "torus/fourier_field.hpp"
#include "torus/multi_index.hpp"

namespace torus {

using IMat = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>;

/// Frequency, resonance width and cone contraction factor. An index k is far
/// from resonance when |omega.k| > sigma |k|_1; ties count as resonant.
struct ResonanceParams {
    RVec omega;
    double sigma = 0.0;
    double kappa = 0.0;

    void validate() const;
};

enum class ModeClass { Resonant, FarFromResonance };
enum class ResonancePart { plus, minus };

ModeClass classify(const MultiIndex& k, const ResonanceParams& p);

/// Keep the resonant (plus) or far-from-resonance (minus) modes of f.
/// project(f, plus) + project(f, minus) reproduces f bit-exactly.
FourierField project(const FourierField& f, const ResonanceParams& p, ResonancePart part);

/// Result of probing the sigma-cone {x : |omega.x| <= sigma |x|_1} against
/// the contraction requirement |T* x|_1 < kappa |x|_1.
struct ConeReport {
    /// Overall estimate: max over probed real directions and retained
    /// resonant integer indices.
    double max_ratio = 0.0;
    /// Real-direction part alone (exact extreme-point scan for d = 2, dense
    /// sampling for d >= 3).
    double max_ratio_directions = 0.0;
    /// Exhaustive maximum over resonant integer indices with |k|_1 <= K
    /// (zero when no nonzero resonant index is retained).
    double max_ratio_modes = 0.0;
    bool ok = false;        // max_ratio < kappa
    /// The finite-truncation requirement the pullback relies on: every
    /// retained resonant index satisfies |T* k|_1 <= kappa |k|_1 (and hence
    /// stays inside the window). Computed over exact integer arithmetic.
    bool modes_ok = false;
    RVec argmax;
    std::vector<RVec> violating_directions;
    std::vector<MultiIndex> violating_modes;
};

/// Probe the cone condition at truncation radius K. n_samples controls the
/// density of the d >= 3 direction sampling (ignored for d = 2 where the
/// extreme directions are enumerated exactly).
ConeReport check_cone_inclusion(const IMat& T, const ResonanceParams& p, int n_samples, int K);

/// Same probe, but throws ConeViolation listing offending directions when
/// the overall estimate fails.
ConeReport require_cone(const IMat& T, const ResonanceParams& p, int n_samples, int K);

}  // namespace torus

#endif
