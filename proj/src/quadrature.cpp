#include "forge/quadrature.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace forge {

namespace {

constexpr int kNewtonMaxIter = 100;
constexpr double kNewtonTol = 1e-15;

// Legendre P_n(x) and P_n'(x) by the three-term recurrence.
std::pair<double, double> legendre_with_derivative(int n, double x) {
  double p0 = 1.0;
  double p1 = x;
  if (n == 0) return {1.0, 0.0};
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  const double dp = n * (x * p1 - p0) / (x * x - 1.0);
  return {p1, dp};
}

}  // namespace

QuadratureGrid::QuadratureGrid(Eigen::VectorXd nodes, Eigen::VectorXd weights, Interval domain)
    : nodes_(std::move(nodes)), weights_(std::move(weights)), domain_(domain) {
  if (nodes_.size() != weights_.size()) {
    throw std::invalid_argument("QuadratureGrid: node/weight length mismatch");
  }
}

double QuadratureGrid::integrate(const Eigen::VectorXd& values) const {
  if (values.size() != size()) {
    throw std::invalid_argument("QuadratureGrid::integrate: length mismatch");
  }
  return weights_.dot(values);
}

QuadratureGrid gauss_legendre_rule(int m, Interval domain) {
  if (m < 1) throw std::invalid_argument("gauss_legendre_rule: M must be >= 1");
  if (!(domain.lo < domain.hi)) {
    throw std::invalid_argument("gauss_legendre_rule: degenerate interval [" +
                                std::to_string(domain.lo) + ", " + std::to_string(domain.hi) + "]");
  }

  Eigen::VectorXd x(m);
  Eigen::VectorXd w(m);
  const int half = (m + 1) / 2;
  for (int i = 0; i < half; ++i) {
    // Root i+1 counted from the right end, Tricomi-type initial guess.
    double z = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
    double dp = 0.0;
    for (int it = 0; it < kNewtonMaxIter; ++it) {
      const auto [p, d] = legendre_with_derivative(m, z);
      dp = d;
      const double dz = p / d;
      z -= dz;
      if (std::abs(dz) <= kNewtonTol) break;
    }
    dp = legendre_with_derivative(m, z).second;
    const double wi = 2.0 / ((1.0 - z * z) * dp * dp);
    // Ascending order: the root near +1 goes last.
    x(m - 1 - i) = z;
    x(i) = -z;
    w(m - 1 - i) = wi;
    w(i) = wi;
  }
  if (m % 2 == 1) x(m / 2) = 0.0;

  const double half_len = 0.5 * domain.length();
  const double mid = 0.5 * (domain.lo + domain.hi);
  Eigen::VectorXd nodes = (mid + half_len * x.array()).matrix();
  Eigen::VectorXd weights = half_len * w;
  return QuadratureGrid(std::move(nodes), std::move(weights), domain);
}

std::complex<double> discrete_inner_product(std::span<const std::complex<double>> h1,
                                            std::span<const std::complex<double>> h2,
                                            const QuadratureGrid& grid) {
  const auto m = static_cast<std::size_t>(grid.size());
  if (h1.size() != m || h2.size() != m) {
    throw std::invalid_argument("discrete_inner_product: vector length does not match grid");
  }
  std::complex<double> acc{0.0, 0.0};
  for (std::size_t i = 0; i < m; ++i) {
    acc += std::conj(h1[i]) * grid.weights()(static_cast<Eigen::Index>(i)) * h2[i];
  }
  return acc;
}

double discrete_inner_product(const Eigen::VectorXd& h1, const Eigen::VectorXd& h2,
                              const QuadratureGrid& grid) {
  if (h1.size() != grid.size() || h2.size() != grid.size()) {
    throw std::invalid_argument("discrete_inner_product: vector length does not match grid");
  }
  return (h1.array() * grid.weights().array() * h2.array()).sum();
}

LegendreBasis::LegendreBasis(Interval domain, int max_degree)
    : domain_(domain), max_degree_(max_degree) {
  if (!(domain.lo < domain.hi)) throw std::invalid_argument("LegendreBasis: degenerate interval");
  if (max_degree < 0) throw std::invalid_argument("LegendreBasis: negative degree");
}

void LegendreBasis::check_points(std::span<const double> points) const {
  const double slack = 1e-12 * domain_.length();
  for (double p : points) {
    if (!(p >= domain_.lo - slack && p <= domain_.hi + slack)) {
      throw std::invalid_argument("LegendreBasis: point " + std::to_string(p) +
                                  " outside the domain");
    }
  }
}

Eigen::MatrixXd LegendreBasis::vandermonde(std::span<const double> points) const {
  check_points(points);
  const auto n = static_cast<Eigen::Index>(points.size());
  const int l = max_degree_;
  Eigen::MatrixXd v(n, l + 1);
  const double len = domain_.length();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double xi = (2.0 * points[static_cast<std::size_t>(i)] - domain_.lo - domain_.hi) / len;
    double p0 = 1.0;
    double p1 = xi;
    v(i, 0) = p0;
    if (l >= 1) v(i, 1) = p1;
    for (int k = 2; k <= l; ++k) {
      const double p2 = ((2.0 * k - 1.0) * xi * p1 - (k - 1.0) * p0) / k;
      v(i, k) = p2;
      p0 = p1;
      p1 = p2;
    }
  }
  for (int j = 0; j <= l; ++j) v.col(j) *= std::sqrt((2.0 * j + 1.0) / len);
  return v;
}

Eigen::VectorXd LegendreBasis::eval(int j, std::span<const double> points) const {
  if (j < 0 || j > max_degree_) {
    throw std::invalid_argument("LegendreBasis::eval: degree " + std::to_string(j) +
                                " exceeds L = " + std::to_string(max_degree_));
  }
  return vandermonde(points).col(j);
}

Eigen::MatrixXd LegendreBasis::evaluate(const Eigen::MatrixXd& coeffs,
                                        std::span<const double> points) const {
  if (coeffs.rows() != max_degree_ + 1) {
    throw std::invalid_argument("LegendreBasis::evaluate: coefficient rows must be L+1");
  }
  return vandermonde(points) * coeffs;
}

Eigen::VectorXd LegendreBasis::differentiate(const Eigen::VectorXd& coeffs) const {
  const Eigen::Index n = coeffs.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  if (n <= 1) return out;
  const double len = domain_.length();
  // Move to the classical P_j basis on [-1, 1].
  Eigen::VectorXd c(n);
  for (Eigen::Index j = 0; j < n; ++j) c(j) = coeffs(j) * std::sqrt((2.0 * j + 1.0) / len);
  // d_{j-1} = (2j - 1) (c_j + d_{j+1} / (2j + 3)), downward from the top.
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n + 1);
  for (Eigen::Index j = n - 1; j >= 1; --j) {
    d(j - 1) = (2.0 * j - 1.0) * (c(j) + d(j + 1) / (2.0 * j + 3.0));
  }
  const double chain = 2.0 / len;
  for (Eigen::Index j = 0; j < n; ++j) {
    out(j) = chain * d(j) / std::sqrt((2.0 * j + 1.0) / len);
  }
  return out;
}

Eigen::MatrixXd LegendreBasis::differentiate(const Eigen::MatrixXd& coeffs) const {
  Eigen::MatrixXd out(coeffs.rows(), coeffs.cols());
  for (Eigen::Index k = 0; k < coeffs.cols(); ++k) out.col(k) = differentiate(Eigen::VectorXd(coeffs.col(k)));
  return out;
}

Eigen::VectorXd legendre_differentiate(const Eigen::VectorXd& coeffs, const LegendreBasis& basis) {
  return basis.differentiate(coeffs);
}

}  // namespace forge
