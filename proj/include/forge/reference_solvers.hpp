#pragma once

// Ground-truth solvers: Fourier-Galerkin for the smooth problems and a
// MUSCL finite-volume scheme for inviscid Burgers.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "forge/ode.hpp"
#include "forge/pde.hpp"

namespace forge {

/// Fourier coefficients of u(x) = sum_k u_k e^{ikx}, k = -M/2 .. M/2-1,
/// stored in FFT order (k = 0, 1, .., M/2-1, -M/2, .., -1). The k = -M/2
/// entry is held at zero.
struct FourierState {
  Eigen::VectorXcd modes;

  Eigen::Index size() const { return modes.size(); }
  /// Wavenumber of storage slot i.
  static int wavenumber(Eigen::Index i, Eigen::Index m) {
    return static_cast<int>(i < m / 2 ? i : i - m);
  }

  /// Coefficients from values on the uniform grid x_j = 2 pi j / M.
  static FourierState from_grid(const Eigen::VectorXd& values);
  /// Values on the uniform grid (real part).
  Eigen::VectorXd to_grid() const;
  /// Complex values on the uniform grid.
  Eigen::VectorXcd to_grid_complex() const;
  /// Real part of the series at arbitrary points.
  Eigen::VectorXd eval(std::span<const double> points) const;
};

/// Trigonometric interpolant of uniform-grid data evaluated at `points`.
Eigen::VectorXd fourier_interpolate(const Eigen::VectorXd& uniform_values,
                                    std::span<const double> points);

/// Coefficients of the pointwise product a*b via 3/2-rule zero padding.
FourierState dealias_product(const FourierState& a, const FourierState& b);

/// Time derivative of the Fourier-Galerkin system. Inviscid Burgers is not
/// handled here (see muscl_rhs). Throws for nu < 0.
FourierState fourier_rhs(Pde pde, const FourierState& state, double nu);

/// Cell-centred finite-volume state on [0, 2pi) with N_c equal cells.
struct FiniteVolumeState {
  Eigen::VectorXd cells;

  double dx() const;
  /// Cell centres (i + 1/2) dx.
  Eigen::VectorXd centers() const;
  double mass() const { return cells.sum() * dx(); }
  double total_variation() const;
  /// Periodic piecewise-linear interpolation through the cell centres.
  Eigen::VectorXd interpolate(std::span<const double> points) const;
};

/// Semi-discrete MUSCL right-hand side for u_t + (u^2/2)_x = 0 with minmod
/// slopes and a Roe flux (Godunov value f(0) = 0 at transonic expansions).
Eigen::VectorXd muscl_rhs(const Eigen::VectorXd& cells);

/// Saved reference states for one initial condition.
class ReferenceSolution {
 public:
  enum class Kind { fourier, finite_volume };

  ReferenceSolution(Pde pde, double nu, Kind kind) : pde_(pde), nu_(nu), kind_(kind) {}

  Pde pde() const { return pde_; }
  double nu() const { return nu_; }
  Kind kind() const { return kind_; }
  const std::vector<double>& times() const { return times_; }
  std::size_t frames() const { return times_.size(); }

  void push_fourier(double t, FourierState s);
  void push_cells(double t, Eigen::VectorXd cells);

  const FourierState& fourier(std::size_t frame) const { return fourier_.at(frame); }
  const Eigen::VectorXd& cells(std::size_t frame) const { return cells_.at(frame); }

  /// Solution at saved frame `frame` evaluated at `points`: the Fourier series
  /// directly, or piecewise-linear interpolation of the cell values.
  Eigen::VectorXd eval(std::size_t frame, std::span<const double> points) const;

  /// Index of the saved frame nearest to t.
  std::size_t nearest_frame(double t) const;

 private:
  Pde pde_;
  double nu_;
  Kind kind_;
  std::vector<double> times_;
  std::vector<FourierState> fourier_;
  std::vector<Eigen::VectorXd> cells_;
};

struct ReferenceOptions {
  int fourier_modes = 128;
  int fv_cells = 4096;
  /// Fourier: Dormand-Prince 1e-10 / 1e-14; MUSCL: Bogacki-Shampine 1e-6 / 1e-8.
  RkOptions fourier_rk{1e-10, 1e-14, RkMethod::dormand_prince_45};
  RkOptions fv_rk{1e-6, 1e-8, RkMethod::bogacki_shampine_32};
  /// Step cap cfl * dx / max|u0| for the finite-volume path.
  double fv_cfl = 0.4;
};

/// Solves from u0 given on the uniform grid x_j = 2 pi j / N (any N; data
/// are moved to the solver grid by trigonometric interpolation) and saves at
/// the sorted `output_times`, which start at t = 0.
ReferenceSolution solve_reference(Pde pde, double nu, const Eigen::VectorXd& u0_uniform,
                                  const std::vector<double>& output_times,
                                  const ReferenceOptions& options = {});

/// Convenience: saves at 0, save_every, .., t_final.
ReferenceSolution solve_reference(Pde pde, double nu, const Eigen::VectorXd& u0_uniform, double t_final,
                                  double save_every, const ReferenceOptions& options = {});

/// A trajectory sampled on fixed points, ready for export.
struct Trajectory {
  std::vector<double> times;
  Eigen::MatrixXd states;  // one row per time
  Eigen::VectorXd grid;
  std::string metadata;
};

Trajectory sample_trajectory(const ReferenceSolution& sol, std::span<const double> points,
                             std::string metadata = {});

/// CSV with header t,x_0,..; 17 significant digits. Metadata goes on a
/// leading '#' line when non-empty.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

/// Binary trajectory: magic "FRGTRAJ1", u32 version, u64 rows, u64 cols,
/// u64 metadata length + bytes, grid (cols-1 doubles), then row-major
/// doubles with time in column 0. Little-endian.
void write_trajectory_binary(std::ostream& out, const Trajectory& traj);
Trajectory read_trajectory_binary(std::istream& in);

}  // namespace forge
