#pragma once

// Projection onto a forged basis and the two-term error bound
//   ||f - Pf|| <= (sum_{j>r} |<q_j,f>|^2)^{1/2} + sum_{j<=r} |<q_j,f>| ||q_j - P q_j||.

#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "forge/basis_forge.hpp"

namespace forge {

using ScalarFunction = std::function<double(double)>;

/// f1 = exp(cos(x/2)), f2 = exp(sin x), f3 = exp(sin 2x). Throws for other names.
ScalarFunction named_target(std::string_view name);

struct Projection {
  Eigen::VectorXd coefficients;  // a_k = <phi_k, f>
  Eigen::VectorXd residual;      // f - Pf at the nodes
  double residual_norm = 0.0;
};

/// Projects node values of f onto the retained node-value columns of the
/// basis (or the leading `count` of them) under the basis grid.
Projection project(const Eigen::VectorXd& f_nodes, const OrthonormalBasis& basis, int count = -1);

/// ||q_j - P q_j|| for j = 0..j_max, from the Legendre coefficients as
/// sqrt(1 - sum_k <phi_k, q_j>^2), or as the norm of the complement
/// component directly when that difference falls below 1e-6.
Eigen::VectorXd legendre_error_profile(const OrthonormalBasis& basis, int j_max);

struct ApproxReport {
  std::string target;
  Eigen::VectorXd coefficients;         // a_k = <phi_k, f>
  Eigen::VectorXd legendre_coeffs;      // <q_j, f>, j = 0..legendre_coeffs.size()-1
  Eigen::VectorXd legendre_errors;      // ||q_j - P q_j||, j = 0..r_leg
  Eigen::VectorXd contributions;        // |<q_j, f>| ||q_j - P q_j||, j = 0..r_leg
  double projection_error = 0.0;        // ||f - Pf||
  double tail = 0.0;
  double damped_sum = 0.0;
  double bound = 0.0;
  bool holds = true;                    // projection_error <= bound + 1e-9
};

/// Evaluates both terms of the bound for the retained basis functions. The
/// Legendre coefficients of f and ||f - Pf|| come from a Gauss rule with
/// `fine_nodes` points (at least 4(L+1)); the tail is summed up to degree
/// fine_nodes/2. Requires 0 <= r_leg < L.
ApproxReport ac3_bound(const ScalarFunction& f, const OrthonormalBasis& basis, int r_leg,
                       std::string target = {}, int fine_nodes = 2048);

/// Least-squares fit log|a_k| = log C - k log rho over entries above `floor`.
struct DecayFit {
  double rho = 1.0;
  double log_c = 0.0;
  double r_squared = 0.0;
  int points = 0;
};
DecayFit fit_geometric_decay(const Eigen::VectorXd& coefficients, double floor = 1e-14);

/// "degree,value" (or the given header) CSV, one row per entry, 0-based.
void write_curve_csv(std::ostream& out, const Eigen::VectorXd& values, std::string_view header = "degree,value");

}  // namespace forge
