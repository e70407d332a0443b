#ifndef TORUS_FLOW_HPP
#define TORUS_FLOW_HPP

#include <optional>
#include <vector>

#include "torus/kt_basis.hpp"
#include "torus/renorm.hpp"

namespace torus {

/// Lifted orbit on the universal cover (points are not wrapped).
struct Trajectory {
    std::vector<double> times;
    std::vector<RVec> points;
    RVec theta0;
};

/// Fixed-step RK4 on the lift with a step-doubling error monitor. X must be
/// real-flagged; throws StepTooLarge when the local error estimate exceeds
/// 1e-6.
Trajectory integrate(const FourierField& X, const RVec& theta0, double t_end, double dt);

struct WindingEstimate {
    std::optional<RVec> w;  // unit l1-norm direction; nullopt when undefined
    bool confident = false;  // two-horizon estimates agreed within 1e-2
};

/// Winding ratio estimate from the trajectory endpoint, Richardson-checked
/// between horizons t_end/2 and t_end. Bounded orbits report the zero vector.
WindingEstimate winding_ratio(const Trajectory& traj);

/// Conjugacy certificate for one renormalisation step: with h = (id+u) o T
/// and Y the step output, max over a grid_n^d grid of
/// |rescale Dh(theta) Y(theta) - X(h(theta))|_1.
double conjugacy_residual(const FourierField& X, const FourierField& Y, const FourierField& u, const KTBasis& b,
                          cplx rescale, int grid_n);

/// Convenience wrapper over the full step output.
double conjugacy_residual(const FourierField& X, const RenormStepResult& step, const KTBasis& b, int grid_n);

}  // namespace torus

#endif
