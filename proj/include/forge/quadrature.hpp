#pragma once

#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace forge {

/// Closed interval [lo, hi] on which functions are represented.
struct Interval {
  double lo = 0.0;
  double hi = 2.0 * std::numbers::pi;

  double length() const { return hi - lo; }
  bool operator==(const Interval&) const = default;
};

/// Gauss-Legendre nodes and weights on an interval. The nodes and weights
/// define the discrete inner product <h1, h2> = h1^* W h2 used throughout.
class QuadratureGrid {
 public:
  QuadratureGrid() = default;
  QuadratureGrid(Eigen::VectorXd nodes, Eigen::VectorXd weights, Interval domain);

  const Eigen::VectorXd& nodes() const { return nodes_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  const Interval& domain() const { return domain_; }
  Eigen::Index size() const { return nodes_.size(); }

  /// sum_i w_i f(x_i) for values sampled at the nodes.
  double integrate(const Eigen::VectorXd& values) const;

 private:
  Eigen::VectorXd nodes_;
  Eigen::VectorXd weights_;
  Interval domain_;
};

/// M-point Gauss-Legendre rule on `domain`, computed by Newton iteration on
/// the Legendre roots and mapped affinely. Throws std::invalid_argument for
/// M < 1 or a degenerate interval.
QuadratureGrid gauss_legendre_rule(int m, Interval domain = {});

/// sum_i conj(h1_i) w_i h2_i.
std::complex<double> discrete_inner_product(std::span<const std::complex<double>> h1,
                                            std::span<const std::complex<double>> h2,
                                            const QuadratureGrid& grid);

/// Real-valued overload; identical to h1^T W h2.
double discrete_inner_product(const Eigen::VectorXd& h1, const Eigen::VectorXd& h2,
                              const QuadratureGrid& grid);

/// Legendre polynomials q_0..q_L normalized to unit L2 norm on `domain`.
class LegendreBasis {
 public:
  LegendreBasis(Interval domain, int max_degree);

  const Interval& domain() const { return domain_; }
  int max_degree() const { return max_degree_; }

  /// q_j at each point. Throws for j > L or a point outside the domain.
  Eigen::VectorXd eval(int j, std::span<const double> points) const;

  /// Matrix V with V(i, j) = q_j(points[i]) for j = 0..L.
  Eigen::MatrixXd vandermonde(std::span<const double> points) const;

  /// Values of sum_j c_j q_j at the points, one column per coefficient column.
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& coeffs, std::span<const double> points) const;

  /// Coefficients of the derivative of sum_j c_j q_j, with the 2/(b-a) chain
  /// factor applied. Output has the same length; the top entry is zero.
  Eigen::VectorXd differentiate(const Eigen::VectorXd& coeffs) const;

  /// Column-wise differentiate().
  Eigen::MatrixXd differentiate(const Eigen::MatrixXd& coeffs) const;

 private:
  void check_points(std::span<const double> points) const;

  Interval domain_;
  int max_degree_;
};

/// Free-function form of LegendreBasis::differentiate.
Eigen::VectorXd legendre_differentiate(const Eigen::VectorXd& coeffs, const LegendreBasis& basis);

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace forge
