#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "forge/basis_forge.hpp"
#include "forge/log.hpp"

using namespace forge;
constexpr double kPi = std::numbers::pi;

namespace {

// Orthonormal trigonometric functions in frequency order: 1, cos x, sin x,
// cos 2x, ...
Eigen::MatrixXd trig_columns(const Eigen::VectorXd& x, int count) {
  Eigen::MatrixXd f(x.size(), count);
  for (int c = 0; c < count; ++c) {
    const int k = (c + 1) / 2;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (c == 0) {
        f(i, c) = 1.0 / std::sqrt(2 * kPi);
      } else if (c % 2 == 1) {
        f(i, c) = std::cos(k * x(i)) / std::sqrt(kPi);
      } else {
        f(i, c) = std::sin(k * x(i)) / std::sqrt(kPi);
      }
    }
  }
  return f;
}

// Orthogonal Sylvester-Hadamard matrix; all entries have magnitude
// 1/sqrt(n), so every column of F S H^T has the same norm and normalizing the
// candidates leaves the exact SVD (F, S, H) intact up to one scalar.
Eigen::MatrixXd hadamard(int n) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Ones(1, 1);
  while (h.rows() < n) {
    const Eigen::Index k = h.rows();
    Eigen::MatrixXd next(2 * k, 2 * k);
    next << h, h, h, -h;
    h = std::move(next);
  }
  return h / std::sqrt(static_cast<double>(n));
}

Eigen::MatrixXd gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const QuadratureGrid& grid) {
  return a.transpose() * (b.array().colwise() * grid.weights().array()).matrix();
}

struct WarningCapture {
  std::vector<std::string> seen;
  WarningSink previous;
  WarningCapture() {
    previous = set_warning_sink([this](std::string_view m) { seen.emplace_back(m); });
  }
  ~WarningCapture() { set_warning_sink(previous); }
};

}  // namespace

TEST_CASE("select_rank") {
  WarningCapture cap;
  CHECK(select_rank(Eigen::Vector3d(1, 0.1, 1e-13), 1e-12) == 2);
  CHECK(select_rank(Eigen::Vector3d(1, 1, 1), 0.0) == 3);
  CHECK(select_rank(Eigen::Vector3d(1, 1, 1), 0.0, 2) == 2);
  CHECK(cap.seen.empty());
  CHECK(select_rank(Eigen::Vector3d(1e-3, 1e-4, 0), 0.5) == 0);
  CHECK(cap.seen.size() == 1);
}

TEST_CASE("orthonormal candidates have unit singular values") {
  const QuadratureGrid grid = gauss_legendre_rule(128);
  const Eigen::MatrixXd f = trig_columns(grid.nodes(), 21);
  const OrthonormalBasis b = orthonormalize(make_candidates(f, grid), 0.0);
  CHECK((b.singular_values.array() - 1.0).abs().maxCoeff() < 1e-12);
  // Same span: cross Gram has orthonormal rows and columns.
  const Eigen::MatrixXd g = gram(f, b.node_values, grid);
  CHECK((g * g.transpose() - Eigen::MatrixXd::Identity(21, 21)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("singular values agree with the Gram eigenvalues") {
  const QuadratureGrid grid = gauss_legendre_rule(512);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  const Eigen::MatrixXd f = trig_columns(grid.nodes(), 31);
  Eigen::MatrixXd mix(31, 64);
  for (Eigen::Index i = 0; i < mix.size(); ++i) mix(i) = nd(rng);
  const CandidateSet cands = make_candidates(f * mix, grid);
  const OrthonormalBasis b = orthonormalize(cands, 0.0);
  const GramRoute oracle = gram_route(cands, 0);
  for (int k = 0; k < 31; ++k) {
    CHECK(std::abs(b.singular_values(k) - oracle.singular_values(k)) < 1e-10 * oracle.singular_values(k));
  }
  CHECK(b.singular_values(31) < 1e-12 * b.singular_values(0));
}

TEST_CASE("duplicate column is detected as rank deficiency") {
  const QuadratureGrid grid = gauss_legendre_rule(64);
  Eigen::MatrixXd f = trig_columns(grid.nodes(), 6);
  f.col(5) = f.col(2);
  const OrthonormalBasis b = orthonormalize(make_candidates(f, grid), 1e-9);
  CHECK(b.singular_values(5) < 1e-12);
  CHECK(b.rank == 5);
}

TEST_CASE("zero columns are dropped with a warning") {
  WarningCapture cap;
  const QuadratureGrid grid = gauss_legendre_rule(32);
  Eigen::MatrixXd f = trig_columns(grid.nodes(), 4);
  f.col(1).setZero();
  const CandidateSet c = make_candidates(f, grid);
  CHECK(c.count() == 3);
  CHECK(cap.seen.size() == 1);
  for (Eigen::Index k = 0; k < 3; ++k) CHECK(grid.integrate(c.values.col(k).cwiseAbs2()) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("freeze_trunk column counts") {
  WarningCapture cap;
  const QuadratureGrid grid = gauss_legendre_rule(64);
  const DeepONet net = DeepONet::glorot({16, 128, 2, 3}, 3);
  const CandidateSet one = freeze_trunk(net, {0.0}, grid, 1.0, "net");
  CHECK(one.count() == 128);
  CHECK(one.source == "net");

  std::vector<double> times;
  for (int a = 0; a <= 20; ++a) times.push_back(0.05 * a);
  const CandidateSet many = freeze_trunk(net, times, grid, 1.0);
  CHECK(many.count() == 2688);
  for (Eigen::Index k = 0; k < many.count(); k += 97) {
    CHECK(grid.integrate(many.values.col(k).cwiseAbs2()) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(cap.seen.empty());

  freeze_trunk(net, {1.5}, grid, 1.0);
  REQUIRE(cap.seen.size() == 1);
  CHECK(cap.seen[0].find("outside") != std::string::npos);
}

TEST_CASE("dead trunk units are dropped") {
  WarningCapture cap;
  DeepONet net = DeepONet::glorot({4, 8, 2, 3}, 5);
  auto& last = net.trunk().layers().back();
  last.weight.row(3).setZero();
  last.bias(3) = 0.0;
  const CandidateSet c = freeze_trunk(net, {0.0}, gauss_legendre_rule(32), 1.0);
  CHECK(c.count() == 7);
  CHECK(cap.seen.size() == 1);
}

TEST_CASE("Legendre projection of a Legendre polynomial") {
  const QuadratureGrid grid = gauss_legendre_rule(64);
  const LegendreBasis leg({}, 10);
  OrthonormalBasis b;
  b.grid = grid;
  b.node_values = leg.eval(3, as_span(grid.nodes()));
  b.singular_values = Eigen::VectorXd::Ones(1);
  b.rank = 1;
  const OrthonormalBasis p = legendre_project(b, 10);
  Eigen::VectorXd e3 = Eigen::VectorXd::Zero(11);
  e3(3) = 1.0;
  CHECK((p.legendre_coeffs.col(0) - e3).cwiseAbs().maxCoeff() < 1e-13);
  CHECK_FALSE(p.reorthonormalized);
  CHECK_THROWS_AS(legendre_project(b, 64), std::invalid_argument);
}

TEST_CASE("L = M - 1 interpolates the node values") {
  const QuadratureGrid grid = gauss_legendre_rule(64);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd mix(15, 10);
  for (Eigen::Index i = 0; i < mix.size(); ++i) mix(i) = nd(rng);
  const OrthonormalBasis b = forge_basis(make_candidates(trig_columns(grid.nodes(), 15) * mix, grid), 1e-12, 63);
  const Eigen::MatrixXd at_nodes = basis_eval(b, as_span(grid.nodes()));
  CHECK((at_nodes - b.node_values.leftCols(b.rank)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("smooth function is reconstructed to near machine precision") {
  const QuadratureGrid grid = gauss_legendre_rule(1024);
  Eigen::MatrixXd f(1024, 1);
  for (int i = 0; i < 1024; ++i) f(i, 0) = std::exp(std::sin(grid.nodes()(i)));
  const CandidateSet c = make_candidates(f, grid);
  const OrthonormalBasis b = forge_basis(c, 0.0, 127);
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(1000, 0.0, 2 * kPi);
  const Eigen::MatrixXd got = basis_eval(b, as_span(x));
  const double norm = std::sqrt(grid.integrate(f.col(0).cwiseAbs2()));
  // Sign is fixed by the largest node value, which is positive here.
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) worst = std::max(worst, std::abs(got(i, 0) - std::exp(std::sin(x(i))) / norm));
  CHECK(worst < 1e-10);
}

TEST_CASE("evaluation, derivatives and orthonormality") {
  const QuadratureGrid grid = gauss_legendre_rule(256);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd mix(21, 30);
  for (Eigen::Index i = 0; i < mix.size(); ++i) mix(i) = nd(rng) * std::pow(0.5, i % 21);
  const OrthonormalBasis b = forge_basis(make_candidates(trig_columns(grid.nodes(), 21) * mix, grid), 1e-9, 127);
  REQUIRE(b.rank == 21);

  CHECK((basis_eval(b, as_span(grid.nodes())) - b.node_values.leftCols(21)).cwiseAbs().maxCoeff() < 1e-8);

  // Independent finer rule.
  const QuadratureGrid fine = gauss_legendre_rule(512);
  const Eigen::MatrixXd v = basis_eval(b, as_span(fine.nodes()));
  CHECK((gram(v, v, fine) - Eigen::MatrixXd::Identity(21, 21)).cwiseAbs().maxCoeff() < 1e-8);

  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(100, 0.1, 2 * kPi - 0.1);
  const double h = 1e-5;
  const Eigen::VectorXd xp = x.array() + h;
  const Eigen::VectorXd xm = x.array() - h;
  const Eigen::MatrixXd fd = (basis_eval(b, as_span(xp)) - basis_eval(b, as_span(xm))) / (2 * h);
  const Eigen::MatrixXd d1 = basis_deriv(b, as_span(x), 1);
  CHECK((fd - d1).cwiseAbs().maxCoeff() < 1e-5 * d1.cwiseAbs().maxCoeff());

  CHECK_THROWS_AS(basis_deriv(b, as_span(x), 3), std::invalid_argument);
  const std::vector<double> outside{-0.5};
  CHECK_THROWS_AS(basis_eval(b, outside), std::invalid_argument);
}

TEST_CASE("second derivative of trigonometric basis functions") {
  const QuadratureGrid grid = gauss_legendre_rule(256);
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(200, 0.0, 2 * kPi);
  for (int k = 1; k <= 4; ++k) {
    Eigen::MatrixXd f(256, 1);
    for (int i = 0; i < 256; ++i) f(i, 0) = std::sin(k * grid.nodes()(i));
    const OrthonormalBasis b = forge_basis(make_candidates(f, grid), 0.0, 127);
    const Eigen::MatrixXd v = basis_eval(b, as_span(x));
    const Eigen::MatrixXd d2 = basis_deriv(b, as_span(x), 2);
    CHECK((d2 + k * k * v).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("hierarchy: truncation error equals the discarded spectrum") {
  const QuadratureGrid grid = gauss_legendre_rule(256);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd mix(25, 40);
  for (Eigen::Index i = 0; i < mix.size(); ++i) mix(i) = nd(rng) * std::pow(0.7, i % 25);
  const CandidateSet c = make_candidates(trig_columns(grid.nodes(), 25) * mix, grid);
  const OrthonormalBasis b = orthonormalize(c, 0.0);
  for (int s : {1, 5, 12, 20}) {
    const Eigen::MatrixXd phi = b.node_values.leftCols(s);
    const Eigen::MatrixXd coef = gram(phi, c.values, grid);
    const Eigen::MatrixXd resid = c.values - phi * coef;
    const double err = (resid.array().square().colwise() * grid.weights().array()).sum();
    const double tail = b.singular_values.tail(b.singular_values.size() - s).squaredNorm();
    CHECK(std::abs(err - tail) < 1e-9);
  }
}

TEST_CASE("square-root route keeps resolving where the Gram route stagnates") {
  const int m = 1024;
  const int p = 64;
  const QuadratureGrid grid = gauss_legendre_rule(m);
  Eigen::VectorXd s(p);
  for (int k = 0; k < p; ++k) s(k) = std::pow(10.0, -12.0 * k / (p - 1));
  const Eigen::MatrixXd a = trig_columns(grid.nodes(), p) * s.asDiagonal() * hadamard(p).transpose();
  const CandidateSet c = make_candidates(a, grid);
  const OrthonormalBasis b = orthonormalize(c, 0.0);
  const GramRoute g = gram_route(c, p);
  CHECK(b.singular_values(0) / b.singular_values(p - 1) > 1e8);

  Eigen::VectorXd f(m);
  for (int i = 0; i < m; ++i) f(i) = std::exp(std::sin(grid.nodes()(i)));
  const Eigen::VectorXd coef_sqrt = gram(b.node_values.leftCols(p), f, grid);
  const Eigen::VectorXd coef_gram = gram(g.node_values, f, grid);
  const double tail_sqrt = coef_sqrt.tail(20).cwiseAbs().maxCoeff();
  const double tail_gram = coef_gram.tail(20).cwiseAbs().maxCoeff();
  MESSAGE("coefficient tail: square-root route " << tail_sqrt << ", Gram route " << tail_gram);
  CHECK(tail_sqrt < 1e-12);
  CHECK(tail_gram > 1e-9);
}

TEST_CASE("basis files round-trip") {
  const QuadratureGrid grid = gauss_legendre_rule(64);
  CandidateSet c = make_candidates(trig_columns(grid.nodes(), 9), grid, {0.0, 0.5}, "model-abc");
  const OrthonormalBasis b = forge_basis(c, 1e-9, 40);
  std::stringstream ss;
  save_basis(b, ss);
  const OrthonormalBasis back = load_basis(ss);
  CHECK(back.singular_values == b.singular_values);
  CHECK(back.node_values == b.node_values);
  CHECK(back.legendre_coeffs == b.legendre_coeffs);
  CHECK(back.grid.nodes() == b.grid.nodes());
  CHECK(back.grid.weights() == b.grid.weights());
  CHECK(back.threshold == b.threshold);
  CHECK(back.rank == b.rank);
  CHECK(back.max_degree == 40);
  CHECK(back.source == "model-abc");
  CHECK(back.freeze_times == std::vector<double>{0.0, 0.5});

  std::stringstream model;
  save_model(DeepONet::glorot({4, 3, 2, 3}, 1), model);
  CHECK_THROWS_WITH(load_basis(model), doctest::Contains("magic"));

  const std::string bytes = ss.str();
  std::istringstream cut(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS(load_basis(cut));
}

TEST_CASE("singular value CSV") {
  std::ostringstream os;
  write_singular_values_csv(os, Eigen::Vector2d(1.0, 0.25));
  CHECK(os.str() == "index,value\n1,1\n2,0.25\n");
}
