#pragma once

// Galerkin evolution in an orthonormal spatial basis with tau-style boundary
// rows, fixed-step RK4, and the relative error metrics.

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "forge/basis_forge.hpp"
#include "forge/pde.hpp"
#include "forge/quadrature.hpp"

namespace forge {

/// Anything that can evaluate r functions and their first two derivatives.
struct SpatialBasis {
  int rank = 0;
  Interval domain;
  /// points x rank matrix of the `order`-th derivative (0, 1 or 2).
  std::function<Eigen::MatrixXd(std::span<const double>, int)> eval;
};

/// Wraps a forged basis (its Legendre representation).
SpatialBasis spatial_basis(const OrthonormalBasis& basis);

/// Exact trigonometric basis 1/sqrt(2pi), cos(kx)/sqrt(pi), sin(kx)/sqrt(pi),
/// .. in frequency order, `count` functions on [0, 2pi].
SpatialBasis trigonometric_basis(int count);

/// How the tau solve determines its b coefficients.
struct TauInfo {
  std::vector<int> determined;  // indices fixed by the boundary rows
  std::vector<int> evolved;     // indices advanced in time
  int active_rows = 0;          // rows that are not identically satisfied
  bool pivoted = false;         // determined columns are not the trailing ones
  double condition = 1.0;       // max singular value of all rows / min of the inverted block
};

struct GalerkinSystem {
  Pde pde = Pde::advection;
  double nu = 0.0;
  int r = 0;
  int b = 0;
  QuadratureGrid grid;
  Eigen::MatrixXd phi;         // M x r values at the nodes
  Eigen::MatrixXd d1;          // <phi_m, phi_k'>
  Eigen::MatrixXd d2;          // <phi_m, phi_k''>, empty when unused
  Eigen::MatrixXd t;           // r x r^2, column k*r + l holds <phi_m, phi_k phi_l'>; empty when unused
  Eigen::MatrixXd boundary;    // b x r
  TauInfo tau;
  Eigen::MatrixXd tau_map;     // determined = tau_map * evolved
};

/// Inner products by quadrature on `grid`. Boundary rows: phi_k(a) - phi_k(b)
/// and, when b = 2, phi_k'(a) - phi_k'(b). Rows whose entries are all below
/// 1e-10 are satisfied by every coefficient vector and are not enforced. If
/// the trailing sub-block has condition >= 1e12 (measured against the
/// largest singular value of all active rows), the best-conditioned choice
/// among the trailing min(2b, r) columns is used; throws if none is usable.
GalerkinSystem assemble(const SpatialBasis& basis, Pde pde, double nu, const QuadratureGrid& grid);

/// Galerkin projection of u0 (values at the system nodes) followed by tau.
Eigen::VectorXd initial_coefficients(const GalerkinSystem& sys, const Eigen::VectorXd& u0_nodes);

/// da/dt for every coefficient (the determined entries are overwritten by
/// the tau solve during evolution). Throws on non-finite input.
Eigen::VectorXd galerkin_rhs(const GalerkinSystem& sys, const Eigen::VectorXd& a);

/// Replaces the determined entries so every active boundary row annihilates a.
Eigen::VectorXd tau_enforce(const GalerkinSystem& sys, Eigen::VectorXd a);

/// u^r at the system nodes.
Eigen::VectorXd field_at_nodes(const GalerkinSystem& sys, const Eigen::VectorXd& a);

struct EvolveOptions {
  double dt = 1e-3;
  double t_final = 1.0;
  double energy_guard = 1.025;
  bool tau_every_stage = false;
  int save_stride = 1;  // keep every n-th step in the trajectory
};

struct CoefficientTrajectory {
  std::vector<double> times;
  Eigen::MatrixXd coefficients;  // one row per saved time
  std::vector<double> energy;    // sum a_k^2 at every step, index 0 is t = 0
  double dt = 0.0;
  bool blowup = false;
  bool non_finite = false;
  double halt_time = 0.0;        // time of the last completed step
};

using GalerkinObserver = std::function<void(double, const Eigen::VectorXd&)>;

/// Fixed-step RK4 on the evolved coefficients; tau after each completed step
/// (or each stage). Halts when the energy exceeds guard x initial energy or
/// the state becomes non-finite. The observer sees every saved step.
CoefficientTrajectory evolve(const GalerkinSystem& sys, const Eigen::VectorXd& a0, const EvolveOptions& options,
                             const GalerkinObserver& observer = {});

/// ||u - u_ref||_2 / ||u_ref||_2 over the node values. Throws for a zero reference.
double relative_error(const Eigen::VectorXd& u, const Eigen::VectorXd& u_ref);

/// Trapezoidal time average of an error series.
double averaged_error(const std::vector<double>& errors, const std::vector<double>& times);

}  // namespace forge
