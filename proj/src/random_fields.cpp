#include "forge/random_fields.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace forge {

namespace {

double transformed(double x) {
  const double s = std::sin(0.5 * x);
  return s * s;
}

}  // namespace

Eigen::VectorXd uniform_sensors(int n) {
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x(i) = 2.0 * std::numbers::pi * i / n;
  return x;
}

double grf_kernel(double x1, double x2, double length_scale) {
  const double dz = transformed(x1) - transformed(x2);
  return std::exp(-dz * dz / (2.0 * length_scale * length_scale));
}

GrfSampler::GrfSampler(double length_scale, Eigen::VectorXd sensors, std::uint64_t seed)
    : length_scale_(length_scale), sensors_(std::move(sensors)), seed_(seed) {
  if (!(length_scale_ > 0.0)) throw std::invalid_argument("GrfSampler: length scale must be > 0");
  if (sensors_.size() < 2) throw std::invalid_argument("GrfSampler: need at least 2 sensors");

  // Sensors sharing a transformed coordinate (x and 2pi - x, or 0 and 2pi)
  // share one latent value, so such draws agree bitwise there.
  std::vector<double> zs;
  slot_.resize(static_cast<std::size_t>(sensors_.size()));
  for (Eigen::Index i = 0; i < sensors_.size(); ++i) {
    const double z = transformed(sensors_(i));
    std::size_t s = 0;
    while (s < zs.size() && std::abs(zs[s] - z) > 1e-13) ++s;
    if (s == zs.size()) zs.push_back(z);
    slot_[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(s);
  }
  unique_z_ = Eigen::Map<const Eigen::VectorXd>(zs.data(), static_cast<Eigen::Index>(zs.size()));

  const Eigen::Index n = unique_z_.size();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double dz = unique_z_(i) - unique_z_(j);
      k(i, j) = std::exp(-dz * dz / (2.0 * length_scale_ * length_scale_));
    }
  }
  // The kernel is smooth, hence numerically low rank: escalate jitter.
  double jitter = 0.0;
  while (true) {
    Eigen::LLT<Eigen::MatrixXd> llt(k + jitter * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) {
      factor_ = llt.matrixL();
      jitter_ = jitter;
      return;
    }
    if (jitter == 0.0) {
      jitter = 1e-10;
    } else if (jitter < 1e-6 * (1.0 - 1e-9)) {
      jitter *= 10.0;
    } else {
      throw std::runtime_error("GrfSampler: Cholesky failed even with jitter 1e-6");
    }
  }
}

Eigen::MatrixXd GrfSampler::kernel() const {
  const Eigen::Index n = sensors_.size();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) k(i, j) = grf_kernel(sensors_(i), sensors_(j), length_scale_);
  }
  return k;
}

Eigen::MatrixXd GrfSampler::sample(int count) const { return sample_stream(count, 0); }

Eigen::MatrixXd GrfSampler::sample_stream(int count, std::uint64_t stream) const {
  if (count < 1) throw std::invalid_argument("GrfSampler::sample: count must be >= 1");
  std::mt19937_64 rng(seed_ + stream);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index n = unique_z_.size();
  Eigen::MatrixXd xi(n, count);
  for (int c = 0; c < count; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) xi(i, c) = normal(rng);
  }
  const Eigen::MatrixXd latent = factor_ * xi;
  Eigen::MatrixXd out(count, sensors_.size());
  for (Eigen::Index i = 0; i < sensors_.size(); ++i) {
    out.col(i) = latent.row(slot_[static_cast<std::size_t>(i)]).transpose();
  }
  return out;
}

void write_samples_csv(std::ostream& out, const Eigen::MatrixXd& samples) {
  const auto old = out.precision(17);
  for (Eigen::Index r = 0; r < samples.rows(); ++r) {
    for (Eigen::Index c = 0; c < samples.cols(); ++c) {
      if (c) out << ',';
      out << samples(r, c);
    }
    out << '\n';
  }
  out.precision(old);
}

}  // namespace forge
