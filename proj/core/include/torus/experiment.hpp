#ifndef TORUS_EXPERIMENT_HPP
#define TORUS_EXPERIMENT_HPP

#include <string>

#include "torus/renorm.hpp"
#include "torus/serialize.hpp"

namespace torus {

/// Resolve a basis reference: "golden", "plastic" or "file:PATH".
KTBasis resolve_basis(const std::string& ref);

/// Build a RenormConfig from the shared JSON config schema; missing keys take
/// defaults. "sigma": "auto" runs the parameter search (falling back to the
/// integer-index criterion with a warning when the direction cone cannot
/// contract at this basis power).
RenormConfig config_from_json(const KTBasis& basis, const std::string& json_text);

/// Build a seed field from a generator spec:
///   {"preset": "constant"}
///   {"modes": [{"k": [..], "amp": a, "v_re": [..], "v_im": [..]}]}
///   {"random": {"count": n, "amp": a, "seed": s, "radius": r,
///               "include_mean": bool}}
///   {"file": "path.json"}
/// Mode and random specs produce omega plus a Hermitian-completed real
/// perturbation unless "real": false is set at the top level.
FourierField generate_field(const std::string& gen_json, const KTBasis& b, int K);

/// Run an experiment file: writes spec.json (echo), seed_<i>_traj.csv per
/// seed, and summary.json into out_dir. Deterministic given the recorded
/// seeds. Returns the exit code: 0 success, 1 numerical failure, 2 config
/// error (details in error.json).
int run_experiment(const std::string& spec_path, const std::string& out_dir);

}  // namespace torus

#endif
