#include "forge/basis_forge.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "forge/binary_io.hpp"
#include "forge/log.hpp"

namespace forge {

CandidateSet make_candidates(Eigen::MatrixXd values, QuadratureGrid grid, std::vector<double> freeze_times,
                             std::string source) {
  if (values.rows() != grid.size()) {
    throw std::invalid_argument("make_candidates: " + std::to_string(values.rows()) + " rows for a " +
                                std::to_string(grid.size()) + "-node grid");
  }
  const Eigen::VectorXd& w = grid.weights();
  std::vector<Eigen::Index> keep;
  Eigen::VectorXd norms(values.cols());
  for (Eigen::Index k = 0; k < values.cols(); ++k) {
    norms(k) = std::sqrt((w.array() * values.col(k).array().square()).sum());
    if (norms(k) >= 1e-14 && std::isfinite(norms(k))) {
      keep.push_back(k);
    }
  }
  if (static_cast<Eigen::Index>(keep.size()) < values.cols()) {
    warn("dropped " + std::to_string(values.cols() - static_cast<Eigen::Index>(keep.size())) +
         " candidate column(s) with zero norm");
  }
  CandidateSet out;
  out.values.resize(values.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    out.values.col(static_cast<Eigen::Index>(c)) = values.col(keep[c]) / norms(keep[c]);
  }
  out.grid = std::move(grid);
  out.freeze_times = std::move(freeze_times);
  out.source = std::move(source);
  return out;
}

CandidateSet freeze_trunk(const DeepONet& model, const std::vector<double>& times, const QuadratureGrid& grid,
                          double horizon, std::string source) {
  if (times.empty()) throw std::invalid_argument("freeze_trunk: no freeze times");
  const Eigen::Index m = grid.size();
  const Eigen::Index w = model.width();
  Eigen::MatrixXd values(m, w * static_cast<Eigen::Index>(times.size()));
  Eigen::MatrixXd queries(2, m);
  queries.row(1) = grid.nodes().transpose();
  for (std::size_t a = 0; a < times.size(); ++a) {
    const double t = times[a];
    if (t < 0.0 || t > horizon) {
      std::ostringstream msg;
      msg << "freeze time " << t << " lies outside the trained interval [0, " << horizon << "]";
      warn(msg.str());
    }
    queries.row(0).setConstant(t);
    values.middleCols(static_cast<Eigen::Index>(a) * w, w) = model.trunk_values(queries).transpose();
  }
  return make_candidates(std::move(values), grid, times, std::move(source));
}

int select_rank(const Eigen::VectorXd& singular_values, double threshold, std::optional<int> max_count) {
  int r = 0;
  while (r < singular_values.size() && singular_values(r) > threshold) ++r;
  if (max_count && *max_count < r) r = std::max(0, *max_count);
  if (r == 0) {
    std::ostringstream msg;
    msg << "no singular value exceeds the threshold " << threshold;
    warn(msg.str());
  }
  return r;
}

OrthonormalBasis orthonormalize(const CandidateSet& candidates, double threshold, std::optional<int> max_count) {
  if (!(threshold >= 0.0)) throw std::invalid_argument("orthonormalize: threshold must be >= 0");
  const Eigen::Index m = candidates.values.rows();
  if (m != candidates.grid.size() || candidates.count() == 0) {
    throw std::invalid_argument("orthonormalize: empty or misaligned candidate set");
  }
  if (candidates.count() > m) {
    warn("more candidates (" + std::to_string(candidates.count()) + ") than quadrature nodes (" +
         std::to_string(m) + "); at most " + std::to_string(m) + " functions can be retained");
  }
  const Eigen::ArrayXd sqrt_w = candidates.grid.weights().array().sqrt();
  const Eigen::MatrixXd b = candidates.values.array().colwise() * sqrt_w;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinU);
  if (svd.info() != Eigen::Success) throw std::runtime_error("orthonormalize: SVD did not converge");

  OrthonormalBasis out;
  out.singular_values = svd.singularValues();
  out.node_values = svd.matrixU().array().colwise() / sqrt_w;
  // Deterministic orientation: the largest-magnitude node value is positive.
  for (Eigen::Index k = 0; k < out.node_values.cols(); ++k) {
    Eigen::Index i = 0;
    out.node_values.col(k).cwiseAbs().maxCoeff(&i);
    if (out.node_values(i, k) < 0.0) out.node_values.col(k) *= -1.0;
  }
  out.threshold = threshold;
  out.rank = select_rank(out.singular_values, threshold, max_count);
  out.grid = candidates.grid;
  out.source = candidates.source;
  out.freeze_times = candidates.freeze_times;
  return out;
}

OrthonormalBasis legendre_project(OrthonormalBasis basis, int max_degree) {
  const Eigen::Index m = basis.grid.size();
  if (max_degree < 0 || max_degree >= m) {
    throw std::invalid_argument("legendre_project: need 0 <= L < M (L = " + std::to_string(max_degree) +
                                ", M = " + std::to_string(m) + ")");
  }
  const LegendreBasis legendre(basis.domain(), max_degree);
  const Eigen::MatrixXd v = legendre.vandermonde(as_span(basis.grid.nodes()));
  const Eigen::MatrixXd phi = basis.node_values.leftCols(basis.rank);
  Eigen::MatrixXd c = v.transpose() * (phi.array().colwise() * basis.grid.weights().array()).matrix();

  basis.reorthonormalized = false;
  if (basis.rank > 0) {
    const Eigen::MatrixXd gram = c.transpose() * c;
    const double dev = (gram - Eigen::MatrixXd::Identity(basis.rank, basis.rank)).cwiseAbs().maxCoeff();
    if (dev > 1e-8) {
      if (basis.rank > max_degree + 1) {
        throw std::invalid_argument("legendre_project: rank " + std::to_string(basis.rank) +
                                    " exceeds the L+1 = " + std::to_string(max_degree + 1) +
                                    " available Legendre modes");
      }
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(c);
      Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(c.rows(), c.cols());
      const Eigen::MatrixXd r = qr.matrixQR().topRows(c.cols()).triangularView<Eigen::Upper>();
      for (Eigen::Index k = 0; k < q.cols(); ++k) {
        if (r(k, k) < 0.0) q.col(k) *= -1.0;
      }
      c = std::move(q);
      basis.reorthonormalized = true;
    }
  }
  basis.legendre_coeffs = std::move(c);
  basis.max_degree = max_degree;
  return basis;
}

OrthonormalBasis forge_basis(const CandidateSet& candidates, double threshold, int max_degree,
                             std::optional<int> max_count) {
  return legendre_project(orthonormalize(candidates, threshold, max_count), max_degree);
}

Eigen::MatrixXd basis_eval(const OrthonormalBasis& basis, std::span<const double> points) {
  return basis_deriv(basis, points, 0);
}

Eigen::MatrixXd basis_deriv(const OrthonormalBasis& basis, std::span<const double> points, int order) {
  if (!basis.projected()) throw std::logic_error("basis has no Legendre coefficients yet");
  if (order < 0 || order > 2) throw std::invalid_argument("basis_deriv: order must be 0, 1 or 2");
  const LegendreBasis legendre(basis.domain(), basis.max_degree);
  Eigen::MatrixXd c = basis.legendre_coeffs;
  for (int d = 0; d < order; ++d) c = legendre.differentiate(c);
  return legendre.evaluate(c, points);
}

GramRoute gram_route(const CandidateSet& candidates, int count) {
  const Eigen::MatrixXd& a = candidates.values;
  const Eigen::MatrixXd d = a.transpose() * (a.array().colwise() * candidates.grid.weights().array()).matrix();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(d);
  if (eig.info() != Eigen::Success) throw std::runtime_error("gram_route: eigensolver failed");
  const Eigen::Index p = a.cols();
  count = static_cast<int>(std::min<Eigen::Index>(count, p));
  GramRoute out;
  out.singular_values.resize(p);
  out.node_values.resize(a.rows(), count);
  for (Eigen::Index k = 0; k < p; ++k) {
    out.singular_values(k) = std::sqrt(std::max(0.0, eig.eigenvalues()(p - 1 - k)));
  }
  for (int k = 0; k < count; ++k) {
    out.node_values.col(k) = a * eig.eigenvectors().col(p - 1 - k) / out.singular_values(k);
  }
  return out;
}

namespace {

constexpr std::string_view kBasisMagic = "FRGBASIS";

}  // namespace

void save_basis(const OrthonormalBasis& basis, std::ostream& out) {
  io::put_magic(out, kBasisMagic);
  io::put<std::uint32_t>(out, kBasisFormatVersion);
  io::put<double>(out, basis.domain().lo);
  io::put<double>(out, basis.domain().hi);
  io::put<std::uint64_t>(out, static_cast<std::uint64_t>(basis.grid.size()));
  io::put<std::int64_t>(out, basis.max_degree);
  io::put<std::uint64_t>(out, static_cast<std::uint64_t>(basis.singular_values.size()));
  io::put<std::uint64_t>(out, static_cast<std::uint64_t>(basis.node_values.cols()));
  io::put<std::uint64_t>(out, static_cast<std::uint64_t>(basis.rank));
  io::put<double>(out, basis.threshold);
  io::put<std::uint8_t>(out, basis.reorthonormalized ? 1 : 0);
  io::put_vector(out, basis.singular_values);
  io::put_matrix(out, basis.node_values);
  if (basis.projected()) io::put_matrix(out, basis.legendre_coeffs);
  io::put_string(out, basis.source);
  io::put<std::uint64_t>(out, basis.freeze_times.size());
  for (double t : basis.freeze_times) io::put<double>(out, t);
}

OrthonormalBasis load_basis(std::istream& in) {
  io::expect_magic(in, kBasisMagic, "basis");
  const auto version = io::get<std::uint32_t>(in, "version");
  if (version != kBasisFormatVersion) {
    throw io::FormatError("basis: unsupported format version " + std::to_string(version));
  }
  Interval domain;
  domain.lo = io::get<double>(in, "domain");
  domain.hi = io::get<double>(in, "domain");
  if (!(domain.lo < domain.hi)) throw io::FormatError("basis: degenerate domain");
  const auto m = static_cast<Eigen::Index>(io::get_dim(in, "node count"));
  const auto l = io::get<std::int64_t>(in, "max degree");
  const auto ns = static_cast<Eigen::Index>(io::get_dim(in, "singular value count"));
  const auto nc = static_cast<Eigen::Index>(io::get_dim(in, "node column count"));
  const auto r = static_cast<Eigen::Index>(io::get_dim(in, "rank"));
  if (m < 1 || l < -1 || l >= m || r > nc || nc > m || ns < nc || m * nc > static_cast<Eigen::Index>(io::kMaxDim)) {
    throw io::FormatError("basis: inconsistent shapes");
  }

  OrthonormalBasis basis;
  basis.grid = gauss_legendre_rule(static_cast<int>(m), domain);
  basis.max_degree = static_cast<int>(l);
  basis.rank = static_cast<int>(r);
  basis.threshold = io::get<double>(in, "threshold");
  basis.reorthonormalized = io::get<std::uint8_t>(in, "flags") != 0;
  basis.singular_values = io::get_vector(in, ns, "singular values");
  basis.node_values = io::get_matrix(in, m, nc, "node values");
  if (basis.projected()) basis.legendre_coeffs = io::get_matrix(in, l + 1, r, "Legendre coefficients");
  basis.source = io::get_string(in, "source");
  const auto nt = io::get_dim(in, "freeze time count");
  for (std::uint64_t a = 0; a < nt; ++a) basis.freeze_times.push_back(io::get<double>(in, "freeze times"));
  return basis;
}

void save_basis(const OrthonormalBasis& basis, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save_basis(basis, out);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

OrthonormalBasis load_basis(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load_basis(in);
}

void write_singular_values_csv(std::ostream& out, const Eigen::VectorXd& singular_values) {
  out << "index,value\n" << std::setprecision(17);
  for (Eigen::Index k = 0; k < singular_values.size(); ++k) out << k + 1 << ',' << singular_values(k) << '\n';
}

}  // namespace forge
