#ifndef TORUS_ERRORS_HPP
#define TORUS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace torus {

/// Base class for all library errors so callers can catch one type.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// fourier_core
struct NonConvergence : Error {
    using Error::Error;
};
struct Divergence : Error {
    using Error::Error;
};

// resonance
struct ConeViolation : Error {
    using Error::Error;
};

// kt_basis
struct NotUnimodular : Error {
    using Error::Error;
};
struct BadSpectrum : Error {
    using Error::Error;
};
struct DegenerateEigenvector : Error {
    using Error::Error;
};
struct NoFeasibleParams : Error {
    using Error::Error;
};

// homotopy_eliminator
struct ResonantInput : Error {
    using Error::Error;
};
struct SolverDiverged : Error {
    using Error::Error;
};

// renorm_operator
struct RescaleDegenerate : Error {
    using Error::Error;
};
struct WindowOverflow : Error {
    using Error::Error;
};

// spectral_analysis
struct ShootingFailed : Error {
    using Error::Error;
};

// flow_verify
struct StepTooLarge : Error {
    using Error::Error;
};

// cli_harness
struct ModeOutOfWindow : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace torus

#endif
