#pragma once

#include <string>
#include <string_view>

namespace forge {

enum class Pde { advection, advection_diffusion, viscous_burgers, inviscid_burgers };

std::string_view to_string(Pde pde);

/// Parses "advection", "advection_diffusion", "viscous_burgers" or
/// "inviscid_burgers". Throws std::invalid_argument otherwise.
Pde parse_pde(std::string_view name);

inline bool is_nonlinear(Pde pde) {
  return pde == Pde::viscous_burgers || pde == Pde::inviscid_burgers;
}

inline bool has_diffusion(Pde pde) {
  return pde == Pde::advection_diffusion || pde == Pde::viscous_burgers;
}

/// Number of periodicity constraints matching the spatial order of the PDE.
inline int boundary_count(Pde pde) { return has_diffusion(pde) ? 2 : 1; }

}  // namespace forge
