#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "forge/galerkin.hpp"
#include "forge/reference_solvers.hpp"

using namespace forge;
constexpr double kPi = std::numbers::pi;

namespace {

Eigen::VectorXd sample(const QuadratureGrid& grid, const std::function<double(double)>& f) {
  Eigen::VectorXd v(grid.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f(grid.nodes()(i));
  return v;
}

// A non-periodic forged basis spanned by low-degree Legendre polynomials and
// a few trigonometric functions.
OrthonormalBasis mixed_basis(const QuadratureGrid& grid, int legendre, int trig) {
  const LegendreBasis leg({}, legendre - 1);
  Eigen::MatrixXd cols(grid.size(), legendre + trig);
  cols.leftCols(legendre) = leg.vandermonde(as_span(grid.nodes()));
  for (int c = 0; c < trig; ++c) cols.col(legendre + c) = sample(grid, [c](double x) { return std::sin((c + 1) * x); });
  return forge_basis(make_candidates(cols, grid), 1e-10, std::min<int>(100, static_cast<int>(grid.size()) - 1));
}

}  // namespace

TEST_CASE("oracle basis operator matrices") {
  const QuadratureGrid grid = gauss_legendre_rule(128);
  const GalerkinSystem sys = assemble(trigonometric_basis(33), Pde::advection_diffusion, 0.1, grid);
  Eigen::MatrixXd d1 = Eigen::MatrixXd::Zero(33, 33);
  Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(33, 33);
  for (int k = 1; k <= 16; ++k) {
    d1(2 * k - 1, 2 * k) = k;   // <cos, (sin)'>
    d1(2 * k, 2 * k - 1) = -k;  // <sin, (cos)'>
    d2(2 * k - 1, 2 * k - 1) = d2(2 * k, 2 * k) = -k * k;
  }
  CHECK((sys.d1 - d1).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((sys.d2 - d2).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((sys.d1 + sys.d1.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(sys.t.size() == 0);
  // Exactly periodic basis: nothing for the tau solve to do.
  CHECK(sys.tau.active_rows == 0);
  CHECK(sys.tau.evolved.size() == 33);
}

TEST_CASE("triple product contraction matches pointwise quadrature") {
  const QuadratureGrid grid = gauss_legendre_rule(128);
  const OrthonormalBasis basis = mixed_basis(grid, 6, 4);
  const GalerkinSystem sys = assemble(spatial_basis(basis), Pde::inviscid_burgers, 0.0, grid);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  Eigen::VectorXd a(sys.r);
  for (Eigen::Index k = 0; k < a.size(); ++k) a(k) = nd(rng);
  const Eigen::VectorXd u = sys.phi * a;
  const Eigen::VectorXd ux = basis_deriv(basis, as_span(grid.nodes()), 1) * a;
  const Eigen::VectorXd direct = -(sys.phi.transpose() * (grid.weights().array() * u.array() * ux.array()).matrix());
  CHECK((galerkin_rhs(sys, a) - direct).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("initial coefficients") {
  const QuadratureGrid grid = gauss_legendre_rule(128);
  const GalerkinSystem sys = assemble(trigonometric_basis(33), Pde::advection, 0.0, grid);
  const Eigen::VectorXd a = initial_coefficients(sys, sample(grid, [](double x) { return std::sin(x); }));
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(33);
  expected(2) = std::sqrt(kPi);
  CHECK((a - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(initial_coefficients(sys, Eigen::VectorXd::Zero(128)).isZero(0.0));
  const Eigen::VectorXd e2 = initial_coefficients(sys, sys.phi.col(2));
  CHECK((e2 - Eigen::VectorXd::Unit(33, 2)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(initial_coefficients(sys, Eigen::VectorXd::Zero(64)), std::invalid_argument);
}

TEST_CASE("right-hand sides") {
  const QuadratureGrid grid = gauss_legendre_rule(128);
  for (Pde pde : {Pde::advection, Pde::advection_diffusion, Pde::viscous_burgers, Pde::inviscid_burgers}) {
    const GalerkinSystem sys = assemble(trigonometric_basis(9), pde, 0.1, grid);
    CHECK(galerkin_rhs(sys, Eigen::VectorXd::Zero(9)).isZero(0.0));
  }
  const GalerkinSystem adv = assemble(trigonometric_basis(9), Pde::advection, 0.0, grid);
  // u = sin x/sqrt(pi) gives u_t = -cos x/sqrt(pi).
  const Eigen::VectorXd da = galerkin_rhs(adv, Eigen::VectorXd::Unit(9, 2));
  CHECK((da + Eigen::VectorXd::Unit(9, 1)).cwiseAbs().maxCoeff() < 1e-12);

  Eigen::VectorXd bad = Eigen::VectorXd::Zero(9);
  bad(3) = std::nan("");
  CHECK_THROWS_AS(galerkin_rhs(adv, bad), std::invalid_argument);

  // Viscous Burgers with small data is dominated by diffusion; the relative
  // deviation shrinks linearly with the amplitude.
  const GalerkinSystem vb = assemble(trigonometric_basis(9), Pde::viscous_burgers, 1.0, grid);
  Eigen::VectorXd dir(9);
  dir << 0.3, 1.0, -0.5, 0.2, 0.7, -0.1, 0.05, 0.4, -0.3;
  double prev = 0.0;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    const Eigen::VectorXd a = eps * dir;
    const Eigen::VectorXd lin = vb.nu * (vb.d2 * a);
    const double rel = (galerkin_rhs(vb, a) - lin).norm() / lin.norm();
    CHECK(rel < 10.0 * eps);
    if (prev > 0.0) CHECK(rel == doctest::Approx(prev / 10.0).epsilon(0.05));
    prev = rel;
  }
}

TEST_CASE("tau enforcement with one constraint") {
  const QuadratureGrid grid = gauss_legendre_rule(128);
  const OrthonormalBasis basis = mixed_basis(grid, 5, 3);
  const GalerkinSystem sys = assemble(spatial_basis(basis), Pde::advection, 0.0, grid);
  REQUIRE(sys.tau.active_rows == 1);
  CHECK_FALSE(sys.tau.pivoted);
  const int r = sys.r;
  Eigen::VectorXd a = Eigen::VectorXd::LinSpaced(r, 1.0, 2.0);
  const Eigen::VectorXd g = sys.boundary.row(0).transpose();
  const Eigen::VectorXd out = tau_enforce(sys, a);
  CHECK((out.head(r - 1) - a.head(r - 1)).isZero(0.0));
  CHECK(out(r - 1) == doctest::Approx(-g.head(r - 1).dot(a.head(r - 1)) / g(r - 1)).epsilon(1e-12));
  CHECK((tau_enforce(sys, out) - out).cwiseAbs().maxCoeff() < 1e-12);

  const std::vector<double> ends{0.0, 2 * kPi};
  const Eigen::VectorXd u = basis_eval(basis, ends) * out;
  CHECK(std::abs(u(0) - u(1)) < 1e-10);
}

TEST_CASE("tau enforcement with two constraints") {
  const QuadratureGrid grid = gauss_legendre_rule(128);
  const OrthonormalBasis basis = mixed_basis(grid, 6, 2);
  const GalerkinSystem sys = assemble(spatial_basis(basis), Pde::advection_diffusion, 0.05, grid);
  REQUIRE(sys.tau.active_rows == 2);
  const Eigen::VectorXd a = tau_enforce(sys, Eigen::VectorXd::Ones(sys.r));
  CHECK((sys.boundary * a).cwiseAbs().maxCoeff() < 1e-10);
  const Eigen::VectorXd again = tau_enforce(sys, a);
  CHECK((again - a).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("tau pivots away from a periodic trailing function") {
  const QuadratureGrid grid = gauss_legendre_rule(128);
  const LegendreBasis leg({}, 3);
  const Eigen::MatrixXd q = leg.vandermonde(as_span(grid.nodes()));
  // Hand-built orthonormal basis {q0, q1, q3, cos x / sqrt(pi)}; the last
  // one satisfies periodicity, so its boundary entry is zero.
  OrthonormalBasis b;
  b.grid = grid;
  b.node_values.resize(128, 4);
  b.node_values.col(0) = q.col(0);
  b.node_values.col(1) = q.col(1);
  b.node_values.col(2) = q.col(3);
  b.node_values.col(3) = sample(grid, [](double x) { return std::cos(x) / std::sqrt(kPi); });
  b.singular_values = Eigen::VectorXd::Ones(4);
  b.rank = 4;
  b = legendre_project(b, 100);
  REQUIRE_FALSE(b.reorthonormalized);
  const GalerkinSystem sys = assemble(spatial_basis(b), Pde::advection, 0.0, grid);
  CHECK(sys.tau.pivoted);
  REQUIRE(sys.tau.determined.size() == 1);
  CHECK(sys.tau.determined[0] == 2);
  const Eigen::VectorXd a = tau_enforce(sys, Eigen::Vector4d(0.2, 0.3, 0.4, 0.5));
  CHECK(std::abs(sys.boundary.row(0).dot(a)) < 1e-12);
  CHECK(a(3) == 0.5);
}

TEST_CASE("oracle advection reproduces the translation") {
  const QuadratureGrid grid = gauss_legendre_rule(128);
  const GalerkinSystem sys = assemble(trigonometric_basis(33), Pde::advection, 0.0, grid);
  auto u0 = [](double x) { return std::pow(std::sin(0.5 * x), 2); };
  const Eigen::VectorXd a0 = initial_coefficients(sys, sample(grid, u0));
  double worst = 0.0;
  EvolveOptions opt;
  opt.dt = 1e-3;
  opt.t_final = 1.0;
  const CoefficientTrajectory tr = evolve(sys, a0, opt, [&](double t, const Eigen::VectorXd& a) {
    const Eigen::VectorXd exact = sample(grid, [&](double x) { return u0(x - t); });
    worst = std::max(worst, (field_at_nodes(sys, a) - exact).cwiseAbs().maxCoeff());
  });
  CHECK(tr.times.size() == 1001);
  CHECK(tr.times.back() == doctest::Approx(1.0));
  CHECK_FALSE(tr.blowup);
  CHECK(worst < 1e-6);
}

TEST_CASE("oracle advection conserves energy") {
  const QuadratureGrid grid = gauss_legendre_rule(128);
  const GalerkinSystem sys = assemble(trigonometric_basis(33), Pde::advection, 0.0, grid);
  const Eigen::VectorXd a0 = initial_coefficients(sys, sample(grid, [](double x) { return std::exp(std::sin(x)); }));
  EvolveOptions opt;
  opt.t_final = 10.0;
  opt.save_stride = 1000;
  const CoefficientTrajectory tr = evolve(sys, a0, opt);
  REQUIRE(tr.energy.size() == 10001);
  double drift = 0.0;
  for (double e : tr.energy) drift = std::max(drift, std::abs(e - tr.energy[0]) / tr.energy[0]);
  CHECK(drift < 1e-8);
  CHECK(tr.times.size() == 11);
}

TEST_CASE("oracle advection-diffusion matches the exact decay and the Fourier solver") {
  const QuadratureGrid grid = gauss_legendre_rule(128);
  const double nu = 0.1;
  const GalerkinSystem sys = assemble(trigonometric_basis(33), Pde::advection_diffusion, nu, grid);
  auto u0 = [](double x) { return std::sin(x) + 0.5 * std::cos(3 * x); };
  Eigen::VectorXd uniform(128);
  for (int j = 0; j < 128; ++j) uniform(j) = u0(2 * kPi * j / 128);
  const ReferenceSolution ref = solve_reference(Pde::advection_diffusion, nu, uniform, 1.0, 0.1);

  EvolveOptions opt;
  opt.save_stride = 100;
  double worst_exact = 0.0;
  double worst_ref = 0.0;
  evolve(sys, initial_coefficients(sys, sample(grid, u0)), opt, [&](double t, const Eigen::VectorXd& a) {
    const Eigen::VectorXd u = field_at_nodes(sys, a);
    const Eigen::VectorXd exact = sample(grid, [&](double x) {
      return std::exp(-nu * t) * std::sin(x - t) + 0.5 * std::exp(-9 * nu * t) * std::cos(3 * (x - t));
    });
    worst_exact = std::max(worst_exact, (u - exact).cwiseAbs().maxCoeff());
    const Eigen::VectorXd r = ref.eval(ref.nearest_frame(t), as_span(grid.nodes()));
    worst_ref = std::max(worst_ref, (u - r).cwiseAbs().maxCoeff());
  });
  CHECK(worst_exact < 1e-6);
  CHECK(worst_ref < 1e-6);
}

TEST_CASE("viscous Burgers energy does not grow in the oracle basis") {
  const QuadratureGrid grid = gauss_legendre_rule(128);
  const GalerkinSystem sys = assemble(trigonometric_basis(33), Pde::viscous_burgers, 0.1, grid);
  EvolveOptions opt;
  opt.save_stride = 1000;
  const CoefficientTrajectory tr =
      evolve(sys, initial_coefficients(sys, sample(grid, [](double x) { return std::sin(x); })), opt);
  for (std::size_t n = 1; n < tr.energy.size(); ++n) CHECK(tr.energy[n] <= tr.energy[n - 1] + 1e-8);
}

TEST_CASE("zero initial data stays zero") {
  const QuadratureGrid grid = gauss_legendre_rule(64);
  const OrthonormalBasis basis = mixed_basis(grid, 5, 3);
  for (Pde pde : {Pde::advection, Pde::advection_diffusion, Pde::viscous_burgers, Pde::inviscid_burgers}) {
    const GalerkinSystem sys = assemble(spatial_basis(basis), pde, 0.1, grid);
    EvolveOptions opt;
    opt.t_final = 0.1;
    const CoefficientTrajectory tr = evolve(sys, Eigen::VectorXd::Zero(sys.r), opt);
    CHECK(tr.coefficients.isZero(0.0));
    CHECK_FALSE(tr.blowup);
  }
}

TEST_CASE("energy guard halts a growing solution") {
  const QuadratureGrid grid = gauss_legendre_rule(64);
  GalerkinSystem sys = assemble(trigonometric_basis(5), Pde::advection, 0.0, grid);
  sys.d1 = -Eigen::MatrixXd::Identity(5, 5);  // da/dt = a
  EvolveOptions opt;
  opt.dt = 1e-3;
  opt.t_final = 1.0;
  const CoefficientTrajectory tr = evolve(sys, Eigen::VectorXd::Ones(5), opt);
  CHECK(tr.blowup);
  // e^{2t} > 1.025 first at t = ln(1.025)/2 ~ 0.01235.
  CHECK(tr.halt_time == doctest::Approx(0.013).epsilon(1e-9));
  CHECK(tr.times.back() == tr.halt_time);
}

TEST_CASE("per-stage tau keeps the constraint") {
  const QuadratureGrid grid = gauss_legendre_rule(128);
  const OrthonormalBasis basis = mixed_basis(grid, 5, 3);
  const GalerkinSystem sys = assemble(spatial_basis(basis), Pde::advection, 0.0, grid);
  EvolveOptions opt;
  opt.t_final = 0.05;
  opt.tau_every_stage = true;
  const Eigen::VectorXd a0 = initial_coefficients(sys, sample(grid, [](double x) { return std::cos(x); }));
  const CoefficientTrajectory tr = evolve(sys, a0, opt);
  for (Eigen::Index i = 0; i < tr.coefficients.rows(); ++i) {
    CHECK(std::abs(sys.boundary.row(0).dot(tr.coefficients.row(i))) < 1e-10);
  }
}

TEST_CASE("error metrics") {
  const Eigen::Vector3d ref(1.0, -2.0, 0.5);
  CHECK(relative_error(ref, ref) == 0.0);
  CHECK(relative_error(2.0 * ref, ref) == doctest::Approx(1.0));
  const double eps = 1e-3;
  CHECK(relative_error(Eigen::Vector3d::Constant(1.0 + eps), Eigen::Vector3d::Ones()) ==
        doctest::Approx(eps).epsilon(1e-9));
  CHECK_THROWS_AS(relative_error(ref, Eigen::Vector3d::Zero()), std::invalid_argument);
  CHECK(averaged_error({0.0, 1.0, 1.0}, {0.0, 1.0, 2.0}) == doctest::Approx(0.75));
  CHECK(averaged_error({0.2}, {0.0}) == 0.2);
}

TEST_CASE("assemble rejects tiny ranks") {
  const QuadratureGrid grid = gauss_legendre_rule(32);
  CHECK_THROWS_AS(assemble(trigonometric_basis(2), Pde::viscous_burgers, 0.1, grid), std::invalid_argument);
  CHECK_NOTHROW(assemble(trigonometric_basis(2), Pde::advection, 0.0, grid));
}
