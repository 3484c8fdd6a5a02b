#include "forge/ode.hpp"
#include "forge/pde.hpp"

namespace forge {

namespace detail {

namespace {

Tableau make_dormand_prince() {
  Tableau t{};
  t.stages = 7;
  t.order = 5;
  t.c = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
  t.a[1] = {1.0 / 5};
  t.a[2] = {3.0 / 40, 9.0 / 40};
  t.a[3] = {44.0 / 45, -56.0 / 15, 32.0 / 9};
  t.a[4] = {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729};
  t.a[5] = {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656};
  t.a[6] = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84};
  t.b = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0.0};
  const std::array<double, 7> bh = {5179.0 / 57600, 0.0,          7571.0 / 16695, 393.0 / 640,
                                    -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};
  for (std::size_t i = 0; i < 7; ++i) t.b_err[i] = t.b[i] - bh[i];
  return t;
}

Tableau make_bogacki_shampine() {
  Tableau t{};
  t.stages = 4;
  t.order = 3;
  t.c = {0.0, 0.5, 0.75, 1.0};
  t.a[1] = {0.5};
  t.a[2] = {0.0, 0.75};
  t.a[3] = {2.0 / 9, 1.0 / 3, 4.0 / 9};
  t.b = {2.0 / 9, 1.0 / 3, 4.0 / 9, 0.0};
  const std::array<double, 4> bh = {7.0 / 24, 0.25, 1.0 / 3, 0.125};
  for (std::size_t i = 0; i < 4; ++i) t.b_err[i] = t.b[i] - bh[i];
  return t;
}

}  // namespace

const Tableau& tableau(RkMethod method) {
  static const Tableau dp = make_dormand_prince();
  static const Tableau bs = make_bogacki_shampine();
  return method == RkMethod::dormand_prince_45 ? dp : bs;
}

}  // namespace detail

std::vector<double> save_grid(double t0, double t_end, double save_every) {
  if (!(save_every > 0.0)) throw std::invalid_argument("save_grid: save interval must be > 0");
  const double span = t_end - t0;
  auto n = static_cast<long>(std::floor(span / save_every + 1e-9));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n + 2));
  for (long i = 0; i <= n; ++i) out.push_back(t0 + static_cast<double>(i) * save_every);
  if (t_end - out.back() > 1e-9 * save_every) {
    out.push_back(t_end);
  } else {
    out.back() = t_end;
  }
  return out;
}

std::string_view to_string(Pde pde) {
  switch (pde) {
    case Pde::advection: return "advection";
    case Pde::advection_diffusion: return "advection_diffusion";
    case Pde::viscous_burgers: return "viscous_burgers";
    case Pde::inviscid_burgers: return "inviscid_burgers";
  }
  return "unknown";
}

Pde parse_pde(std::string_view name) {
  for (Pde p : {Pde::advection, Pde::advection_diffusion, Pde::viscous_burgers, Pde::inviscid_burgers}) {
    if (to_string(p) == name) return p;
  }
  throw std::invalid_argument("unknown PDE '" + std::string(name) + "'");
}

}  // namespace forge
