#ifndef TORUS_RENORM_HPP
#define TORUS_RENORM_HPP

#include <string>
#include <utility>
#include <vector>

#include "torus/homotopy.hpp"
#include "torus/kt_basis.hpp"

namespace torus {

/// Full configuration of one renormalisation step R = F o T o U.
struct RenormConfig {
    KTBasis basis;
    ResonanceParams params;
    EliminationConfig elim;
    int K = 16;
    double rho = 0.6;
    double rho_prime = 0.5;
    double min_rescale = 0.1;
    int max_iters = 10;
    enum class RescaleMode { mean_dual, lambda1 };
    RescaleMode rescale_mode = RescaleMode::mean_dual;

    void validate() const;
};

/// Per-iteration diagnostics; all norms refer to the output field of the step.
struct StepReport {
    int iter = 0;
    double norm_prime = 0.0;        // |X - omega|'_rho
    double nonconstant_norm = 0.0;  // |(I-E) X|'_rho
    CVec mean;                      // E(X)
    cplx rescale{1.0, 0.0};         // omega_bar . E(X_tilde)
    double residual_minus = 0.0;    // |I^- X|_{rho'}
    int mode_count = 0;
    std::string error;  // non-empty when this step failed
};

struct PullbackReport {
    double dropped_nonresonant_mass = 0.0;
    double dropped_overflow_mass = 0.0;
};

/// Change of basis T(X) = T^{-1} X o T: mode k moves to T* k with coefficient
/// T^{-1} X_k (exact integer reindexing). When p is given, far-from-resonance
/// modes are dropped with a warning (the operator is defined on resonant
/// fields). Images outside the window throw WindowOverflow when
/// strict_window, otherwise they are dropped and accounted in rep.
FourierField pullback_T(const FourierField& X, const KTBasis& b, const ResonanceParams* p = nullptr,
                        PullbackReport* rep = nullptr, bool strict_window = false);

/// Time rescaling: divide by omega_bar . E(X). Throws RescaleDegenerate when
/// the factor is below min_rescale in modulus. Returns (X / s, s).
std::pair<FourierField, cplx> rescale_time(const FourierField& X, const KTBasis& b, double min_rescale);

/// One renormalisation step with the intermediate data a conjugacy check
/// needs: the displacement u of the elimination stage and the rescale factor.
struct RenormStepResult {
    FourierField field;
    StepReport report;
    FourierField u;
    double elimination_residual = 0.0;
};

RenormStepResult renorm_step_full(const FourierField& X, const RenormConfig& cfg);

/// One renormalisation step.
std::pair<FourierField, StepReport> renorm_step(const FourierField& X, const RenormConfig& cfg);

enum class IterStatus { CONVERGED, DIVERGED, MAXITER };

struct IterationResult {
    FourierField final_field;
    std::vector<StepReport> steps;
    IterStatus status = IterStatus::MAXITER;
};

/// Iterate R up to cfg.max_iters, stopping at |X - omega|'_rho < 1e-12
/// (CONVERGED) or when the distance exceeds ten times the initial one or a
/// step fails (DIVERGED, error recorded in the step report, never a throw).
IterationResult renorm_iterate(const FourierField& X, const RenormConfig& cfg);

/// |(I-E) f|'_rho: prime norm of the nonconstant part.
double nonconstant_prime_norm(const FourierField& f, double rho);

}  // namespace torus

#endif
