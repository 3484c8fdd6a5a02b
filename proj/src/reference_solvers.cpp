#include "forge/reference_solvers.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

#include "forge/binary_io.hpp"
#include "forge/quadrature.hpp"

namespace forge {

namespace {

using cd = std::complex<double>;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> fft;
  return fft;
}

// Unnormalised inverse: sum_k c_k e^{2 pi i k j / n}.
Eigen::VectorXcd synthesize(const Eigen::VectorXcd& coeffs) {
  Eigen::VectorXcd out;
  fft_engine().inv(out, coeffs);
  return out * static_cast<double>(coeffs.size());
}

Eigen::VectorXcd analyze(const Eigen::VectorXcd& values) {
  Eigen::VectorXcd out;
  fft_engine().fwd(out, values);
  return out / static_cast<double>(values.size());
}

double minmod(double a, double b) {
  if (a * b <= 0.0) return 0.0;
  return std::abs(a) < std::abs(b) ? a : b;
}

double burgers_flux(double u) { return 0.5 * u * u; }

double roe_flux(double ul, double ur) {
  // Transonic expansion: the Godunov value f(0) = 0.
  if (ul < 0.0 && ur > 0.0) return 0.0;
  const double speed = 0.5 * (ul + ur);
  return speed >= 0.0 ? burgers_flux(ul) : burgers_flux(ur);
}

}  // namespace

FourierState FourierState::from_grid(const Eigen::VectorXd& values) {
  const Eigen::Index m = values.size();
  if (m < 2 || m % 2 != 0) throw std::invalid_argument("FourierState: grid size must be even and >= 2");
  FourierState s{analyze(values.cast<cd>())};
  s.modes(m / 2) = 0.0;
  return s;
}

Eigen::VectorXcd FourierState::to_grid_complex() const { return synthesize(modes); }

Eigen::VectorXd FourierState::to_grid() const { return to_grid_complex().real(); }

Eigen::VectorXd FourierState::eval(std::span<const double> points) const {
  const Eigen::Index m = size();
  Eigen::VectorXd out(static_cast<Eigen::Index>(points.size()));
  for (std::size_t p = 0; p < points.size(); ++p) {
    const double x = points[p];
    double acc = modes(0).real();
    for (Eigen::Index i = 1; i < m; ++i) {
      if (i == m / 2) continue;
      const int k = wavenumber(i, m);
      acc += (modes(i) * std::polar(1.0, k * x)).real();
    }
    out(static_cast<Eigen::Index>(p)) = acc;
  }
  return out;
}

Eigen::VectorXd fourier_interpolate(const Eigen::VectorXd& uniform_values, std::span<const double> points) {
  return FourierState::from_grid(uniform_values).eval(points);
}

FourierState dealias_product(const FourierState& a, const FourierState& b) {
  const Eigen::Index m = a.size();
  if (b.size() != m) throw std::invalid_argument("dealias_product: size mismatch");
  Eigen::Index mp = (3 * m + 1) / 2;
  if (mp % 2 != 0) ++mp;

  auto pad = [&](const Eigen::VectorXcd& c) {
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(mp);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (i == m / 2) continue;
      const int k = FourierState::wavenumber(i, m);
      out(k >= 0 ? k : mp + k) = c(i);
    }
    return out;
  };
  const Eigen::VectorXcd prod = synthesize(pad(a.modes)).cwiseProduct(synthesize(pad(b.modes)));
  const Eigen::VectorXcd padded = analyze(prod);

  FourierState out{Eigen::VectorXcd::Zero(m)};
  for (Eigen::Index i = 0; i < m; ++i) {
    if (i == m / 2) continue;
    const int k = FourierState::wavenumber(i, m);
    out.modes(i) = padded(k >= 0 ? k : mp + k);
  }
  return out;
}

FourierState fourier_rhs(Pde pde, const FourierState& state, double nu) {
  if (nu < 0.0) throw std::invalid_argument("fourier_rhs: viscosity must be >= 0");
  const Eigen::Index m = state.size();
  FourierState out{Eigen::VectorXcd::Zero(m)};
  const cd i_unit{0.0, 1.0};
  switch (pde) {
    case Pde::advection:
    case Pde::advection_diffusion: {
      const double visc = pde == Pde::advection_diffusion ? nu : 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        const double k = FourierState::wavenumber(i, m);
        out.modes(i) = (-i_unit * k - visc * k * k) * state.modes(i);
      }
      break;
    }
    case Pde::viscous_burgers: {
      const FourierState sq = dealias_product(state, state);
      for (Eigen::Index i = 0; i < m; ++i) {
        const double k = FourierState::wavenumber(i, m);
        out.modes(i) = -0.5 * i_unit * k * sq.modes(i) - nu * k * k * state.modes(i);
      }
      break;
    }
    case Pde::inviscid_burgers:
      throw std::invalid_argument("fourier_rhs: inviscid Burgers uses the MUSCL solver");
  }
  out.modes(m / 2) = 0.0;
  return out;
}

double FiniteVolumeState::dx() const { return kTwoPi / static_cast<double>(cells.size()); }

Eigen::VectorXd FiniteVolumeState::centers() const {
  const Eigen::Index n = cells.size();
  Eigen::VectorXd c(n);
  for (Eigen::Index i = 0; i < n; ++i) c(i) = (static_cast<double>(i) + 0.5) * dx();
  return c;
}

double FiniteVolumeState::total_variation() const {
  const Eigen::Index n = cells.size();
  double tv = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) tv += std::abs(cells((i + 1) % n) - cells(i));
  return tv;
}

Eigen::VectorXd FiniteVolumeState::interpolate(std::span<const double> points) const {
  const Eigen::Index n = cells.size();
  const double h = dx();
  Eigen::VectorXd out(static_cast<Eigen::Index>(points.size()));
  for (std::size_t p = 0; p < points.size(); ++p) {
    double s = points[p] / h - 0.5;
    s -= static_cast<double>(n) * std::floor(s / static_cast<double>(n));
    auto i0 = static_cast<Eigen::Index>(std::floor(s));
    const double frac = s - static_cast<double>(i0);
    i0 %= n;
    const Eigen::Index i1 = (i0 + 1) % n;
    out(static_cast<Eigen::Index>(p)) = (1.0 - frac) * cells(i0) + frac * cells(i1);
  }
  return out;
}

Eigen::VectorXd muscl_rhs(const Eigen::VectorXd& u) {
  const Eigen::Index n = u.size();
  if (n < 8) throw std::invalid_argument("muscl_rhs: need at least 8 cells");
  const double inv_dx = static_cast<double>(n) / kTwoPi;
  // Two periodic ghost cells on each side: g[i + 2] = u(i).
  std::vector<double> g(static_cast<std::size_t>(n + 4));
  g[0] = u(n - 2);
  g[1] = u(n - 1);
  for (Eigen::Index i = 0; i < n; ++i) g[i + 2] = u(i);
  g[n + 2] = u(0);
  g[n + 3] = u(1);
  // slope[i] for cells i = -1 .. n, stored at i + 1.
  std::vector<double> slope(static_cast<std::size_t>(n + 2));
  for (Eigen::Index i = 0; i < n + 2; ++i) slope[i] = minmod(g[i + 1] - g[i], g[i + 2] - g[i + 1]);
  // flux[i] at the interface i - 1/2 for i = 0 .. n.
  std::vector<double> flux(static_cast<std::size_t>(n + 1));
  for (Eigen::Index i = 0; i <= n; ++i) {
    flux[i] = roe_flux(g[i + 1] + 0.5 * slope[i], g[i + 2] - 0.5 * slope[i + 1]);
  }
  Eigen::VectorXd du(n);
  for (Eigen::Index i = 0; i < n; ++i) du(i) = -(flux[i + 1] - flux[i]) * inv_dx;
  return du;
}

void ReferenceSolution::push_fourier(double t, FourierState s) {
  times_.push_back(t);
  fourier_.push_back(std::move(s));
}

void ReferenceSolution::push_cells(double t, Eigen::VectorXd cells) {
  times_.push_back(t);
  cells_.push_back(std::move(cells));
}

Eigen::VectorXd ReferenceSolution::eval(std::size_t frame, std::span<const double> points) const {
  if (kind_ == Kind::fourier) return fourier_.at(frame).eval(points);
  return FiniteVolumeState{cells_.at(frame)}.interpolate(points);
}

std::size_t ReferenceSolution::nearest_frame(double t) const {
  if (times_.empty()) throw std::logic_error("ReferenceSolution: no frames");
  const auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return 0;
  if (it == times_.end()) return times_.size() - 1;
  const auto hi = static_cast<std::size_t>(it - times_.begin());
  return (t - times_[hi - 1] <= *it - t) ? hi - 1 : hi;
}

ReferenceSolution solve_reference(Pde pde, double nu, const Eigen::VectorXd& u0_uniform,
                                  const std::vector<double>& output_times, const ReferenceOptions& options) {
  if (output_times.empty() || output_times.front() != 0.0) {
    throw std::invalid_argument("solve_reference: output times must start at 0");
  }
  std::vector<double> later(output_times.begin() + 1, output_times.end());

  if (pde == Pde::inviscid_burgers) {
    ReferenceSolution sol(pde, 0.0, ReferenceSolution::Kind::finite_volume);
    FiniteVolumeState fv{Eigen::VectorXd::Zero(options.fv_cells)};
    const Eigen::VectorXd c = fv.centers();
    Eigen::VectorXd u0 = fourier_interpolate(u0_uniform, as_span(c));
    sol.push_cells(0.0, u0);
    // max|u| cannot grow for entropy solutions, so a CFL cap from u0 holds.
    RkOptions rk = options.fv_rk;
    const double umax = u0.cwiseAbs().maxCoeff();
    if (umax > 0.0) rk.max_step = std::min(rk.max_step, options.fv_cfl * fv.dx() / umax);
    if (!later.empty()) {
      integrate_adaptive<Eigen::VectorXd>(
          [](double, const Eigen::VectorXd& y) { return muscl_rhs(y); }, u0, 0.0, later, rk,
          [&](double t, const Eigen::VectorXd& y) { sol.push_cells(t, y); });
    }
    return sol;
  }

  ReferenceSolution sol(pde, nu, ReferenceSolution::Kind::fourier);
  FourierState s0;
  if (u0_uniform.size() == options.fourier_modes) {
    s0 = FourierState::from_grid(u0_uniform);
  } else {
    Eigen::VectorXd x(options.fourier_modes);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = kTwoPi * static_cast<double>(i) / static_cast<double>(x.size());
    s0 = FourierState::from_grid(fourier_interpolate(u0_uniform, as_span(x)));
  }
  sol.push_fourier(0.0, s0);
  if (!later.empty()) {
    integrate_adaptive<Eigen::VectorXcd>(
        [pde, nu](double, const Eigen::VectorXcd& y) { return fourier_rhs(pde, FourierState{y}, nu).modes; },
        s0.modes, 0.0, later, options.fourier_rk,
        [&](double t, const Eigen::VectorXcd& y) { sol.push_fourier(t, FourierState{y}); });
  }
  return sol;
}

ReferenceSolution solve_reference(Pde pde, double nu, const Eigen::VectorXd& u0_uniform, double t_final,
                                  double save_every, const ReferenceOptions& options) {
  return solve_reference(pde, nu, u0_uniform, save_grid(0.0, t_final, save_every), options);
}

Trajectory sample_trajectory(const ReferenceSolution& sol, std::span<const double> points, std::string metadata) {
  Trajectory traj;
  traj.times = sol.times();
  traj.grid = Eigen::Map<const Eigen::VectorXd>(points.data(), static_cast<Eigen::Index>(points.size()));
  traj.states.resize(static_cast<Eigen::Index>(sol.frames()), static_cast<Eigen::Index>(points.size()));
  for (std::size_t f = 0; f < sol.frames(); ++f) traj.states.row(static_cast<Eigen::Index>(f)) = sol.eval(f, points).transpose();
  traj.metadata = std::move(metadata);
  return traj;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const auto old = out.precision(17);
  if (!traj.metadata.empty()) out << "# " << traj.metadata << '\n';
  out << 't';
  for (Eigen::Index j = 0; j < traj.states.cols(); ++j) out << ",x_" << j;
  out << '\n';
  for (Eigen::Index r = 0; r < traj.states.rows(); ++r) {
    out << traj.times[static_cast<std::size_t>(r)];
    for (Eigen::Index j = 0; j < traj.states.cols(); ++j) out << ',' << traj.states(r, j);
    out << '\n';
  }
  out.precision(old);
}

namespace {
constexpr std::string_view kTrajMagic = "FRGTRAJ1";
constexpr std::uint32_t kTrajVersion = 1;
}  // namespace

void write_trajectory_binary(std::ostream& out, const Trajectory& traj) {
  io::put_magic(out, kTrajMagic);
  io::put<std::uint32_t>(out, kTrajVersion);
  const auto rows = static_cast<std::uint64_t>(traj.states.rows());
  const auto cols = static_cast<std::uint64_t>(traj.states.cols()) + 1;
  io::put<std::uint64_t>(out, rows);
  io::put<std::uint64_t>(out, cols);
  io::put_string(out, traj.metadata);
  io::put_vector(out, traj.grid);
  Eigen::MatrixXd full(traj.states.rows(), traj.states.cols() + 1);
  for (Eigen::Index r = 0; r < full.rows(); ++r) full(r, 0) = traj.times[static_cast<std::size_t>(r)];
  full.rightCols(traj.states.cols()) = traj.states;
  io::put_matrix(out, full);
}

Trajectory read_trajectory_binary(std::istream& in) {
  io::expect_magic(in, kTrajMagic, "trajectory");
  const auto version = io::get<std::uint32_t>(in, "version");
  if (version != kTrajVersion) throw io::FormatError("unsupported trajectory version " + std::to_string(version));
  const auto rows = static_cast<Eigen::Index>(io::get_dim(in, "rows"));
  const auto cols = static_cast<Eigen::Index>(io::get_dim(in, "cols"));
  if (cols < 1) throw io::FormatError("trajectory needs a time column");
  Trajectory traj;
  traj.metadata = io::get_string(in, "metadata");
  traj.grid = io::get_vector(in, cols - 1, "grid");
  const Eigen::MatrixXd full = io::get_matrix(in, rows, cols, "states");
  traj.times.assign(full.col(0).data(), full.col(0).data() + rows);
  traj.states = full.rightCols(cols - 1);
  return traj;
}

}  // namespace forge
