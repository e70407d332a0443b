#ifndef TORUS_SERIALIZE_HPP
#define TORUS_SERIALIZE_HPP

#include <string>
#include <vector>

#include "torus/kt_basis.hpp"
#include "torus/renorm.hpp"

namespace torus {

/// Field wire format: {"dim": d, "real": bool, "K": K,
/// "modes": [{"k": [..], "re": [..], "im": [..]}]}. Round-trips are
/// bit-exact for finite doubles.
std::string field_to_json(const FourierField& f);
FourierField field_from_json(const std::string& text);

void save_field(const FourierField& f, const std::string& path);
FourierField load_field(const std::string& path);

/// Basis serialization: exact integer T plus decimal eigendata.
std::string basis_to_json(const KTBasis& b);
/// Load {"T": [[..]], "power": p} and certify.
KTBasis basis_from_json(const std::string& text);
KTBasis load_basis(const std::string& path);

/// Trajectory CSV with columns
/// iter,norm_prime,nonconstant_norm,rescale_re,rescale_im,mode_count,status.
/// Row 0 reports the initial field with unit rescale.
std::string steps_to_csv(const FourierField& initial, const std::vector<StepReport>& steps, IterStatus status,
                         double rho, double rho_prime, const ResonanceParams& params);

const char* iter_status_name(IterStatus s);

/// Deterministic shortest-round-trip double formatting used in all text
/// outputs.
std::string format_double(double v);

}  // namespace torus

#endif
