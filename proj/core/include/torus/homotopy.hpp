#ifndef TORUS_HOMOTOPY_HPP
#define TORUS_HOMOTOPY_HPP

#include <utility>
#include <vector>

#include "torus/fourier_field.hpp"
#include "torus/resonance.hpp"

namespace torus {

/// Numerical strategy for the elimination solve.
struct EliminationConfig {
    int lambda_steps = 8;     // homotopy discretisation (4-stage Runge-Kutta)
    int newton_polish = 2;    // full Newton steps after the homotopy
    double residual_tol = 1e-12;
    enum class LinSolve { direct, neumann };
    LinSolve linsolve = LinSolve::direct;
    /// Bound on intermediate mode counts as a multiple of the input support.
    double max_support_growth = 4096.0;
    double rho = 0.6;
    double rho_prime = 0.5;
    int order_cap = 30;       // composition series order cap
    double drop_tol = -1.0;   // negative: relative 1e-16 of running mass
};

struct EliminationResult {
    FourierField u;            // displacement, supported on far-from-resonance modes
    FourierField transformed;  // (DU)^{-1} X(U), U = id + u
    double residual = 0.0;     // |I^- transformed|_{rho'}
    double theorem_radius = 0.0;  // epsilon-hat diagnostic from the coordinate-change theorem
    bool inside_theorem_ball = false;
    /// (lambda, |F(u_lambda)|_{rho'}) along accepted homotopy steps, then one
    /// entry per Newton polish iteration (lambda = 1).
    std::vector<std::pair<double, double>> residual_history;
};

/// F(u) = I^- (I+Du)^{-1} [omega + f(id+u)]: the far-from-resonance part of
/// the transformed field. F(0) = I^- f.
FourierField f_operator(const FourierField& u, const FourierField& f, const ResonanceParams& p,
                        const EliminationConfig& cfg = {});

/// Derivative DF(u) h = I^- (I+Du)^{-1} [Df(id+u) h - Dh (I+Du)^{-1}(omega + f(id+u))].
FourierField df_apply(const FourierField& u, const FourierField& f, const FourierField& h,
                      const ResonanceParams& p, const EliminationConfig& cfg = {});

/// Mode-wise division by 2 pi i (k.omega); g must be supported on
/// far-from-resonance modes (throws ResonantInput otherwise).
FourierField small_divisor_inverse(const FourierField& g, const ResonanceParams& p, double rho_prime = 0.5);

/// Solve DF(0) h = g on the far-from-resonance subspace, by the Neumann
/// series -(D.omega)^{-1} [I - I^- fhat (D.omega)^{-1}]^{-1} or by a direct
/// solve of the truncated linear system, per cfg.linsolve.
FourierField df0_solve(const FourierField& g, const FourierField& f, const ResonanceParams& p,
                       const EliminationConfig& cfg);

/// Eliminate the far-from-resonance part of X = omega + f: integrates the
/// homotopy du/dlambda = -DF(u)^{-1} F(0) with classical RK4, then polishes
/// with full Newton steps. Resonant-only inputs return u = 0 bit-exactly.
EliminationResult eliminate(const FourierField& X, const ResonanceParams& p, const EliminationConfig& cfg);

/// Radius of the coordinate-change theorem's ball for these parameters
/// (diagnostic only, never a gate).
double elimination_theorem_radius(const ResonanceParams& p, double rho, double rho_prime);

}  // namespace torus

#endif
