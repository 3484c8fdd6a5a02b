#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <sstream>

#include "forge/quadrature.hpp"
#include "forge/reference_solvers.hpp"

using namespace forge;
using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

namespace {

Eigen::VectorXd uniform_grid(int m) {
  Eigen::VectorXd x(m);
  for (int i = 0; i < m; ++i) x(i) = 2 * kPi * i / m;
  return x;
}

cd mode(const FourierState& s, int k) {
  const auto m = s.size();
  return s.modes(k >= 0 ? k : m + k);
}

// Brute-force truncated convolution sum_{p+q=k} a_p b_q over retained modes.
FourierState direct_convolution(const FourierState& a, const FourierState& b) {
  const int m = static_cast<int>(a.size());
  FourierState out{Eigen::VectorXcd::Zero(m)};
  for (int k = -m / 2 + 1; k < m / 2; ++k) {
    cd acc = 0.0;
    for (int p = -m / 2 + 1; p < m / 2; ++p) {
      const int q = k - p;
      if (q <= -m / 2 || q >= m / 2) continue;
      acc += mode(a, p) * mode(b, q);
    }
    out.modes(k >= 0 ? k : m + k) = acc;
  }
  return out;
}

FourierState random_bandlimited(int m, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::VectorXd v(m);
  for (int i = 0; i < m; ++i) v(i) = n(rng);
  return FourierState::from_grid(v);
}

}  // namespace

TEST_CASE("dealiased product equals the direct convolution") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const FourierState a = random_bandlimited(16, rng);
    const FourierState b = random_bandlimited(16, rng);
    const FourierState fast = dealias_product(a, b);
    const FourierState slow = direct_convolution(a, b);
    CHECK((fast.modes - slow.modes).cwiseAbs().maxCoeff() < 1e-12);
    // Commutative and bilinear.
    CHECK((dealias_product(b, a).modes - fast.modes).cwiseAbs().maxCoeff() < 1e-14);
    const FourierState a2{2.0 * a.modes};
    CHECK((dealias_product(a2, b).modes - 2.0 * fast.modes).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("dealiased product identities") {
  const Eigen::VectorXd x = uniform_grid(32);
  const FourierState one = FourierState::from_grid(Eigen::VectorXd::Ones(32));
  std::mt19937_64 rng(9);
  const FourierState a = random_bandlimited(32, rng);
  CHECK((dealias_product(a, one).modes - a.modes).cwiseAbs().maxCoeff() < 1e-14);

  const FourierState s = FourierState::from_grid(x.array().sin().matrix());
  const FourierState s2 = dealias_product(s, s);
  // sin^2 = 1/2 - (e^{2ix} + e^{-2ix}) / 4.
  CHECK(std::abs(mode(s2, 0) - 0.5) < 1e-15);
  CHECK(std::abs(mode(s2, 2) + 0.25) < 1e-15);
  CHECK(std::abs(mode(s2, -2) + 0.25) < 1e-15);
  double others = 0.0;
  for (int k = -15; k < 16; ++k) {
    if (k != 0 && std::abs(k) != 2) others = std::max(others, std::abs(mode(s2, k)));
  }
  CHECK(others < 1e-15);
}

TEST_CASE("Fourier right-hand side") {
  const FourierState zero{Eigen::VectorXcd::Zero(16)};
  for (Pde p : {Pde::advection, Pde::advection_diffusion, Pde::viscous_burgers}) {
    CHECK(fourier_rhs(p, zero, 0.1).modes.cwiseAbs().maxCoeff() == 0.0);
  }
  FourierState e1{Eigen::VectorXcd::Zero(16)};
  e1.modes(1) = 1.0;
  CHECK(std::abs(fourier_rhs(Pde::advection, e1, 0.0).modes(1) - cd(0.0, -1.0)) < 1e-15);
  CHECK_THROWS_AS(fourier_rhs(Pde::advection, e1, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(fourier_rhs(Pde::inviscid_burgers, e1, 0.0), std::invalid_argument);

  SUBCASE("Burgers nonlinearity of sin x is pure mode 2") {
    const FourierState s = FourierState::from_grid(uniform_grid(32).array().sin().matrix());
    const FourierState d = fourier_rhs(Pde::viscous_burgers, s, 0.0);
    // -u u_x = -sin(2x)/2 = (i/4) e^{2ix} - (i/4) e^{-2ix}.
    CHECK(std::abs(mode(d, 2) - cd(0.0, 0.25)) < 1e-15);
    CHECK(std::abs(mode(d, -2) - cd(0.0, -0.25)) < 1e-15);
    double others = 0.0;
    for (int k = -15; k < 16; ++k) {
      if (std::abs(k) != 2) others = std::max(others, std::abs(mode(d, k)));
    }
    CHECK(others < 1e-15);
  }
}

TEST_CASE("adaptive Runge-Kutta") {
  SUBCASE("zero right-hand side keeps the state") {
    Eigen::VectorXd y0(2);
    y0 << 1.5, -2.0;
    const auto sol = adaptive_rk<Eigen::VectorXd>(
        [](double, const Eigen::VectorXd& y) { return Eigen::VectorXd::Zero(y.size()); }, y0, 0.0, 1.0,
        RkOptions{}, 0.25);
    REQUIRE(sol.times.size() == 5);
    for (const auto& s : sol.states) CHECK(s == y0);
  }
  SUBCASE("exponential decay") {
    for (RkMethod m : {RkMethod::dormand_prince_45, RkMethod::bogacki_shampine_32}) {
      Eigen::VectorXd y0(1);
      y0 << 1.0;
      RkOptions opt{1e-10, 1e-14, m};
      const auto sol = adaptive_rk<Eigen::VectorXd>([](double, const Eigen::VectorXd& y) { return Eigen::VectorXd(-y); },
                                                    y0, 0.0, 1.0, opt, 0.1);
      CHECK(sol.times.back() == 1.0);
      CHECK(std::abs(sol.states.back()(0) - std::exp(-1.0)) < 1e-8);
    }
  }
  SUBCASE("save times are hit exactly") {
    Eigen::VectorXd y0(1);
    y0 << 1.0;
    const auto sol = adaptive_rk<Eigen::VectorXd>([](double t, const Eigen::VectorXd&) { return Eigen::VectorXd::Constant(1, std::cos(t)); },
                                                  y0, 0.0, 1.0, RkOptions{}, 1e-3);
    REQUIRE(sol.times.size() == 1001);
    for (std::size_t i = 0; i < sol.times.size(); ++i) CHECK(sol.times[i] == doctest::Approx(i * 1e-3).epsilon(1e-14));
  }
  SUBCASE("step underflow aborts") {
    Eigen::VectorXd y0(1);
    y0 << 1.0;
    auto blowup = [](double, const Eigen::VectorXd& y) { return Eigen::VectorXd(y.array().square() * 1e6); };
    CHECK_THROWS(adaptive_rk<Eigen::VectorXd>(blowup, y0, 0.0, 1.0, RkOptions{}, 0.5));
  }
}

TEST_CASE("advection reference is an exact translation") {
  const Eigen::VectorXd x = uniform_grid(128);
  const Eigen::VectorXd u0 = (0.5 * x.array()).sin().square();
  const auto sol = solve_reference(Pde::advection, 0.0, u0, 1.0, 1e-3);
  REQUIRE(sol.frames() == 1001);
  const auto g = gauss_legendre_rule(128);
  const Eigen::VectorXd exact = (0.5 * (g.nodes().array() - 1.0)).sin().square();
  CHECK((sol.eval(1000, as_span(g.nodes())) - exact).cwiseAbs().maxCoeff() < 1e-8);

  // Semi-discrete advection keeps every |u_k|.
  const auto& m0 = sol.fourier(0).modes;
  const auto& m1 = sol.fourier(1000).modes;
  CHECK((m0.cwiseAbs() - m1.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("advection over a full period returns the initial condition") {
  const Eigen::VectorXd x = uniform_grid(128);
  const Eigen::VectorXd u0 = (x.array().sin()).exp();
  const auto sol = solve_reference(Pde::advection, 0.0, u0, 2 * kPi, 0.5);
  CHECK((sol.fourier(sol.frames() - 1).to_grid() - u0).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("advection-diffusion decays as exp(-nu t)") {
  const Eigen::VectorXd x = uniform_grid(128);
  const Eigen::VectorXd u0 = x.array().sin();
  const auto sol = solve_reference(Pde::advection_diffusion, 0.1, u0, 1.0, 1e-3);
  const Eigen::VectorXd exact = std::exp(-0.1) * (x.array() - 1.0).sin();
  CHECK((sol.fourier(sol.frames() - 1).to_grid() - exact).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("viscous Burgers reference stays real") {
  const Eigen::VectorXd x = uniform_grid(128);
  const Eigen::VectorXd u0 = x.array().sin();
  const auto sol = solve_reference(Pde::viscous_burgers, 0.1, u0, 1.0, 0.05);
  double worst = 0.0;
  for (std::size_t f = 0; f < sol.frames(); ++f) {
    worst = std::max(worst, sol.fourier(f).to_grid_complex().imag().cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("MUSCL right-hand side") {
  SUBCASE("constant state is steady") {
    CHECK(muscl_rhs(Eigen::VectorXd::Constant(64, 0.7)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("too few cells") { CHECK_THROWS_AS(muscl_rhs(Eigen::VectorXd::Zero(4)), std::invalid_argument); }
  SUBCASE("transonic expansion does not stall") {
    // u = -1 then +1: an entropy-satisfying scheme must start to spread it.
    Eigen::VectorXd u(16);
    for (int i = 0; i < 16; ++i) u(i) = i < 8 ? -1.0 : 1.0;
    const Eigen::VectorXd du = muscl_rhs(u);
    CHECK(du(7) > 0.0);
    CHECK(du(8) < 0.0);
  }
}

namespace {

// Integrates Riemann data u = 1 on [1, 3), 0 elsewhere to t = 1.
ReferenceSolution riemann_run(std::vector<double> outs) {
  ReferenceOptions opt;
  const int n = opt.fv_cells;
  // Cell data are passed through the Fourier path only for smooth data, so
  // drive the integrator directly here.
  ReferenceSolution sol(Pde::inviscid_burgers, 0.0, ReferenceSolution::Kind::finite_volume);
  FiniteVolumeState fv{Eigen::VectorXd::Zero(n)};
  const Eigen::VectorXd c = fv.centers();
  for (int i = 0; i < n; ++i) fv.cells(i) = (c(i) >= 1.0 && c(i) < 3.0) ? 1.0 : 0.0;
  sol.push_cells(0.0, fv.cells);
  integrate_adaptive<Eigen::VectorXd>([](double, const Eigen::VectorXd& y) { return muscl_rhs(y); }, fv.cells, 0.0,
                                      outs, opt.fv_rk, [&](double t, const Eigen::VectorXd& y) { sol.push_cells(t, y); });
  return sol;
}

}  // namespace

TEST_CASE("MUSCL shock moves at the Rankine-Hugoniot speed") {
  const auto sol = riemann_run({0.5, 1.0});
  const Eigen::VectorXd& u = sol.cells(2);
  const FiniteVolumeState fv{u};
  const Eigen::VectorXd c = fv.centers();
  // Front: last crossing of 1/2 to the right of the plateau.
  double front = 0.0;
  for (Eigen::Index i = 1; i < u.size(); ++i) {
    if (u(i - 1) >= 0.5 && u(i) < 0.5) front = c(i - 1) + (u(i - 1) - 0.5) / (u(i - 1) - u(i)) * fv.dx();
  }
  CHECK(std::abs(front - 3.5) < 0.02 * 3.5);
  // Mass is conserved.
  CHECK(std::abs(FiniteVolumeState{sol.cells(0)}.mass() - fv.mass()) < 1e-12);
}

TEST_CASE("MUSCL is total-variation diminishing from sin x") {
  const Eigen::VectorXd u0 = uniform_grid(128).array().sin();
  std::vector<double> outs;
  for (int i = 0; i <= 150; ++i) outs.push_back(i * 0.01);
  const auto sol = solve_reference(Pde::inviscid_burgers, 0.0, u0, outs);
  const double tv0 = FiniteVolumeState{sol.cells(0)}.total_variation();
  const double m0 = FiniteVolumeState{sol.cells(0)}.mass();
  for (std::size_t f = 1; f < sol.frames(); ++f) {
    const FiniteVolumeState s{sol.cells(f)};
    REQUIRE(s.total_variation() <= tv0 * (1 + 1e-10));
    REQUIRE(std::abs(s.mass() - m0) < 1e-12 * (1 + sol.times()[f]));
  }
}

TEST_CASE("inviscid Burgers steepens towards t = 1") {
  const Eigen::VectorXd u0 = uniform_grid(128).array().sin();
  const auto sol = solve_reference(Pde::inviscid_burgers, 0.0, u0, std::vector<double>{0.0, 0.5, 0.9, 0.95, 0.99});
  std::vector<double> slope;
  for (std::size_t f = 0; f < sol.frames(); ++f) {
    const Eigen::VectorXd& u = sol.cells(f);
    const double dx = FiniteVolumeState{u}.dx();
    double s = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) s = std::max(s, std::abs(u((i + 1) % u.size()) - u(i)) / dx);
    slope.push_back(s);
  }
  for (std::size_t f = 1; f < slope.size(); ++f) CHECK(slope[f] > slope[f - 1]);
  // Characteristics: |u_x| = 1 / (1 - t) at x = pi.
  CHECK(slope[2] > 0.8 * 10.0);
  CHECK(slope[4] > 50.0);
}

TEST_CASE("trajectory export") {
  const Eigen::VectorXd u0 = uniform_grid(16).array().cos();
  ReferenceOptions opt;
  opt.fourier_modes = 16;
  const auto sol = solve_reference(Pde::advection, 0.0, u0, 0.2, 0.1, opt);
  const std::vector<double> pts = {0.0, 1.0, 2.0};
  const Trajectory tr = sample_trajectory(sol, pts, "seed=1");

  std::ostringstream csv;
  write_trajectory_csv(csv, tr);
  CHECK(csv.str().rfind("# seed=1\nt,x_0,x_1,x_2\n0,", 0) == 0);

  std::stringstream bin;
  write_trajectory_binary(bin, tr);
  const Trajectory back = read_trajectory_binary(bin);
  CHECK(back.times == tr.times);
  CHECK(back.states == tr.states);
  CHECK(back.grid == tr.grid);
  CHECK(back.metadata == tr.metadata);

  std::string bytes = bin.str();
  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS(read_trajectory_binary(truncated));
}
