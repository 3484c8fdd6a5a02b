#pragma once

// Distills an orthonormal, hierarchical spatial basis from frozen trunk
// functions: B = W^{1/2} A, thin SVD B = Q S V^T, phi = W^{-1/2} Q, then a
// Legendre re-expansion so the basis can be evaluated and differentiated
// anywhere on the domain.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "forge/operator_net.hpp"
#include "forge/quadrature.hpp"

namespace forge {

/// Candidate functions tau_k sampled at the grid nodes, each column of unit
/// discrete norm.
struct CandidateSet {
  Eigen::MatrixXd values;  // M x p
  QuadratureGrid grid;
  std::vector<double> freeze_times;
  std::string source;

  Eigen::Index count() const { return values.cols(); }
};

/// Normalizes columns to unit discrete norm, dropping (with a warning) any
/// column whose norm is below 1e-14.
CandidateSet make_candidates(Eigen::MatrixXd values, QuadratureGrid grid, std::vector<double> freeze_times = {},
                             std::string source = {});

/// Trunk outputs at (t, x_i) for every freeze time, concatenated time-major
/// (column a*w + k is gamma_k at times[a]). Times outside [0, horizon] are
/// allowed with a warning.
CandidateSet freeze_trunk(const DeepONet& model, const std::vector<double>& times, const QuadratureGrid& grid,
                          double horizon, std::string source = {});

struct OrthonormalBasis {
  Eigen::VectorXd singular_values;  // all min(M, p), non-increasing
  Eigen::MatrixXd node_values;      // M x min(M, p), W^{-1/2} Q
  Eigen::MatrixXd legendre_coeffs;  // (L+1) x rank once projected
  int rank = 0;
  double threshold = 0.0;
  QuadratureGrid grid;
  int max_degree = -1;  // L, or -1 before projection
  std::string source;
  std::vector<double> freeze_times;
  bool reorthonormalized = false;

  bool projected() const { return max_degree >= 0; }
  Interval domain() const { return grid.domain(); }
};

/// Number of leading singular values strictly above `threshold`, optionally
/// capped at `max_count`. Warns when nothing survives.
int select_rank(const Eigen::VectorXd& singular_values, double threshold, std::optional<int> max_count = {});

/// Square-root SVD route. Never divides by a singular value.
OrthonormalBasis orthonormalize(const CandidateSet& candidates, double threshold,
                                std::optional<int> max_count = {});

/// Legendre coefficients c_jk = sum_i q_j(x_i) phi_k(x_i) w_i for the
/// retained columns. If the coefficient columns deviate from orthonormality
/// by more than 1e-8, a thin QR restores it (in order, so the hierarchy is
/// kept). Requires L < M.
OrthonormalBasis legendre_project(OrthonormalBasis basis, int max_degree);

/// Convenience: orthonormalize then legendre_project.
OrthonormalBasis forge_basis(const CandidateSet& candidates, double threshold, int max_degree,
                             std::optional<int> max_count = {});

/// phi_k (order 0) or its first or second derivative at `points`: points x rank.
Eigen::MatrixXd basis_eval(const OrthonormalBasis& basis, std::span<const double> points);
Eigen::MatrixXd basis_deriv(const OrthonormalBasis& basis, std::span<const double> points, int order);

/// Reference route through the Gram matrix D = A^T W A: eigenpairs
/// (sigma_k^2, v_k) and phi_k = A v_k / sigma_k for the first `count`
/// columns. Kept for comparison only; it loses accuracy as sigma_k shrinks.
struct GramRoute {
  Eigen::VectorXd singular_values;
  Eigen::MatrixXd node_values;
};
GramRoute gram_route(const CandidateSet& candidates, int count);

/// Basis file: magic "FRGBASIS", u32 version, domain (2 doubles), u64 M, L,
/// singular value count, node column count, rank, f64 threshold, u8
/// re-orthonormalized flag, singular values, node values and Legendre
/// coefficients (row-major), then source string and freeze times.
void save_basis(const OrthonormalBasis& basis, std::ostream& out);
OrthonormalBasis load_basis(std::istream& in);
void save_basis(const OrthonormalBasis& basis, const std::filesystem::path& path);
OrthonormalBasis load_basis(const std::filesystem::path& path);

inline constexpr std::uint32_t kBasisFormatVersion = 1;

/// "index,value" lines with a header, 1-based index.
void write_singular_values_csv(std::ostream& out, const Eigen::VectorXd& singular_values);

}  // namespace forge
