#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

namespace forge {

/// `n` uniformly spaced points on [0, 2pi), starting at 0.
Eigen::VectorXd uniform_sensors(int n);

/// Periodic Gaussian random field draws. The field is g(sin^2(x/2)) with g a
/// zero-mean Gaussian process under the squared-exponential kernel
/// exp(-|z1 - z2|^2 / (2 l^2)).
class GrfSampler {
 public:
  GrfSampler(double length_scale, Eigen::VectorXd sensors, std::uint64_t seed);

  double length_scale() const { return length_scale_; }
  const Eigen::VectorXd& sensors() const { return sensors_; }
  std::uint64_t seed() const { return seed_; }

  /// Kernel matrix on the transformed coordinates.
  Eigen::MatrixXd kernel() const;

  /// Jitter that was needed to factor the kernel (0 if none).
  double jitter() const { return jitter_; }

  /// `count` draws, one per row. Every call restarts from the seed.
  Eigen::MatrixXd sample(int count) const;

  /// Draws for an independent stream: seed + stream.
  Eigen::MatrixXd sample_stream(int count, std::uint64_t stream) const;

 private:
  double length_scale_;
  Eigen::VectorXd sensors_;
  std::uint64_t seed_;
  Eigen::VectorXd unique_z_;          // distinct transformed coordinates
  std::vector<Eigen::Index> slot_;    // sensor -> index into unique_z_
  Eigen::MatrixXd factor_;            // lower Cholesky factor on unique_z_
  double jitter_ = 0.0;
};

/// Squared-exponential kernel on z = sin^2(x/2).
double grf_kernel(double x1, double x2, double length_scale);

/// Rows as CSV with 17 significant digits.
void write_samples_csv(std::ostream& out, const Eigen::MatrixXd& samples);

}  // namespace forge
