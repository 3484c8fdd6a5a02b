#include "forge/galerkin.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <Eigen/SVD>

namespace forge {

SpatialBasis spatial_basis(const OrthonormalBasis& basis) {
  if (!basis.projected()) throw std::invalid_argument("spatial_basis: basis has no Legendre coefficients");
  SpatialBasis s;
  s.rank = basis.rank;
  s.domain = basis.domain();
  s.eval = [basis](std::span<const double> points, int order) { return basis_deriv(basis, points, order); };
  return s;
}

SpatialBasis trigonometric_basis(int count) {
  if (count < 1) throw std::invalid_argument("trigonometric_basis: count must be >= 1");
  SpatialBasis s;
  s.rank = count;
  s.eval = [count](std::span<const double> points, int order) {
    const double c0 = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    const double c1 = 1.0 / std::sqrt(std::numbers::pi);
    Eigen::MatrixXd v(static_cast<Eigen::Index>(points.size()), count);
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      const double x = points[static_cast<std::size_t>(i)];
      v(i, 0) = order == 0 ? c0 : 0.0;
      for (int c = 1; c < count; ++c) {
        const int k = (c + 1) / 2;
        const double kx = k * x;
        const bool cosine = c % 2 == 1;
        double val = 0.0;
        switch (order) {
          case 0: val = cosine ? std::cos(kx) : std::sin(kx); break;
          case 1: val = cosine ? -k * std::sin(kx) : k * std::cos(kx); break;
          case 2: val = -k * k * (cosine ? std::cos(kx) : std::sin(kx)); break;
          default: throw std::invalid_argument("trigonometric_basis: order must be 0, 1 or 2");
        }
        v(i, c) = c1 * val;
      }
    }
    return v;
  };
  return s;
}

namespace {

// Largest singular value of the full boundary matrix over the smallest of
// the sub-block. Unlike the plain condition number this also flags a 1 x 1
// block that is tiny relative to the other entries.
double condition_number(const Eigen::MatrixXd& block, double scale) {
  const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(block).singularValues();
  if (s(s.size() - 1) == 0.0) return std::numeric_limits<double>::infinity();
  return std::max(s(0), scale) / s(s.size() - 1);
}

void setup_tau(GalerkinSystem& sys) {
  constexpr double kTrivialRow = 1e-10;
  constexpr double kMaxCondition = 1e12;
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < sys.boundary.rows(); ++i) {
    if (sys.boundary.row(i).cwiseAbs().maxCoeff() >= kTrivialRow) rows.push_back(i);
  }
  TauInfo& tau = sys.tau;
  tau.active_rows = static_cast<int>(rows.size());
  const int nb = tau.active_rows;
  const int r = sys.r;
  if (nb == 0) {
    for (int k = 0; k < r; ++k) tau.evolved.push_back(k);
    sys.tau_map.resize(0, r);
    return;
  }
  Eigen::MatrixXd g(nb, r);
  for (int i = 0; i < nb; ++i) g.row(i) = sys.boundary.row(rows[static_cast<std::size_t>(i)]);

  // Candidate column sets: the trailing block first, then every nb-subset of
  // the trailing min(2b, r) columns.
  const int pool = std::min(2 * nb, r);
  std::vector<std::vector<int>> choices;
  std::vector<int> trailing;
  for (int k = r - nb; k < r; ++k) trailing.push_back(k);
  choices.push_back(trailing);
  if (nb == 1) {
    for (int k = r - pool; k < r - 1; ++k) choices.push_back({k});
  } else {
    for (int a = r - pool; a < r; ++a) {
      for (int c = a + 1; c < r; ++c) choices.push_back({a, c});
    }
  }
  const double scale = Eigen::JacobiSVD<Eigen::MatrixXd>(g).singularValues()(0);
  auto block = [&](const std::vector<int>& cols) {
    Eigen::MatrixXd s(nb, nb);
    for (int j = 0; j < nb; ++j) s.col(j) = g.col(cols[static_cast<std::size_t>(j)]);
    return s;
  };
  std::size_t best = 0;
  double best_cond = condition_number(block(choices[0]), scale);
  if (best_cond >= kMaxCondition) {
    for (std::size_t c = 1; c < choices.size(); ++c) {
      const double cond = condition_number(block(choices[c]), scale);
      if (cond < best_cond) {
        best_cond = cond;
        best = c;
      }
    }
  }
  if (!(best_cond < kMaxCondition)) {
    std::ostringstream msg;
    msg << "tau: boundary sub-block is singular (condition " << best_cond << ") for every choice among the last "
        << pool << " basis functions";
    throw std::runtime_error(msg.str());
  }
  tau.determined = choices[best];
  tau.pivoted = best != 0;
  tau.condition = best_cond;
  for (int k = 0; k < r; ++k) {
    if (std::find(tau.determined.begin(), tau.determined.end(), k) == tau.determined.end()) tau.evolved.push_back(k);
  }
  Eigen::MatrixXd ge(nb, static_cast<Eigen::Index>(tau.evolved.size()));
  for (std::size_t j = 0; j < tau.evolved.size(); ++j) ge.col(static_cast<Eigen::Index>(j)) = g.col(tau.evolved[j]);
  sys.tau_map = -block(tau.determined).fullPivLu().solve(ge);
}

}  // namespace

GalerkinSystem assemble(const SpatialBasis& basis, Pde pde, double nu, const QuadratureGrid& grid) {
  if (!(nu >= 0.0)) throw std::invalid_argument("assemble: viscosity must be >= 0");
  GalerkinSystem sys;
  sys.pde = pde;
  sys.nu = has_diffusion(pde) ? nu : 0.0;
  sys.r = basis.rank;
  sys.b = boundary_count(pde);
  if (sys.r <= sys.b) {
    throw std::invalid_argument("assemble: rank " + std::to_string(sys.r) + " must exceed the " +
                                std::to_string(sys.b) + " boundary constraint(s)");
  }
  sys.grid = grid;
  const auto nodes = as_span(grid.nodes());
  const Eigen::ArrayXd w = grid.weights().array();
  sys.phi = basis.eval(nodes, 0);
  const Eigen::MatrixXd dphi = basis.eval(nodes, 1);
  const Eigen::MatrixXd wphi = sys.phi.array().colwise() * w;
  sys.d1 = wphi.transpose() * dphi;
  if (has_diffusion(pde)) sys.d2 = wphi.transpose() * basis.eval(nodes, 2);
  if (is_nonlinear(pde)) {
    const int r = sys.r;
    sys.t.resize(r, static_cast<Eigen::Index>(r) * r);
    for (int m = 0; m < r; ++m) {
      const Eigen::MatrixXd mk = (sys.phi.array().colwise() * wphi.col(m).array()).matrix().transpose() * dphi;
      const Eigen::MatrixXd mt = mk.transpose();
      sys.t.row(m) = Eigen::Map<const Eigen::RowVectorXd>(mt.data(), mt.size());
    }
  }

  const std::vector<double> ends{basis.domain.lo, basis.domain.hi};
  sys.boundary.resize(sys.b, sys.r);
  const Eigen::MatrixXd v0 = basis.eval(ends, 0);
  sys.boundary.row(0) = v0.row(0) - v0.row(1);
  if (sys.b == 2) {
    const Eigen::MatrixXd v1 = basis.eval(ends, 1);
    sys.boundary.row(1) = v1.row(0) - v1.row(1);
  }
  setup_tau(sys);
  return sys;
}

Eigen::VectorXd tau_enforce(const GalerkinSystem& sys, Eigen::VectorXd a) {
  if (sys.tau.determined.empty()) return a;
  Eigen::VectorXd ev(static_cast<Eigen::Index>(sys.tau.evolved.size()));
  for (std::size_t j = 0; j < sys.tau.evolved.size(); ++j) ev(static_cast<Eigen::Index>(j)) = a(sys.tau.evolved[j]);
  const Eigen::VectorXd det = sys.tau_map * ev;
  for (std::size_t j = 0; j < sys.tau.determined.size(); ++j) {
    a(sys.tau.determined[j]) = det(static_cast<Eigen::Index>(j));
  }
  return a;
}

Eigen::VectorXd initial_coefficients(const GalerkinSystem& sys, const Eigen::VectorXd& u0_nodes) {
  if (u0_nodes.size() != sys.grid.size()) {
    throw std::invalid_argument("initial_coefficients: " + std::to_string(u0_nodes.size()) + " values for a " +
                                std::to_string(sys.grid.size()) + "-node grid");
  }
  const Eigen::VectorXd a = sys.phi.transpose() * u0_nodes.cwiseProduct(sys.grid.weights());
  return tau_enforce(sys, a);
}

Eigen::VectorXd galerkin_rhs(const GalerkinSystem& sys, const Eigen::VectorXd& a) {
  if (a.size() != sys.r) throw std::invalid_argument("galerkin_rhs: coefficient count mismatch");
  if (!a.allFinite()) throw std::invalid_argument("galerkin_rhs: non-finite coefficients");
  Eigen::VectorXd da;
  switch (sys.pde) {
    case Pde::advection:
      da = -sys.d1 * a;
      break;
    case Pde::advection_diffusion:
      da = -sys.d1 * a + sys.nu * (sys.d2 * a);
      break;
    case Pde::viscous_burgers:
    case Pde::inviscid_burgers: {
      const Eigen::MatrixXd aa = a * a.transpose();
      da = -sys.t * Eigen::Map<const Eigen::VectorXd>(aa.data(), aa.size());
      if (sys.pde == Pde::viscous_burgers) da += sys.nu * (sys.d2 * a);
      break;
    }
  }
  return da;
}

Eigen::VectorXd field_at_nodes(const GalerkinSystem& sys, const Eigen::VectorXd& a) { return sys.phi * a; }

CoefficientTrajectory evolve(const GalerkinSystem& sys, const Eigen::VectorXd& a0, const EvolveOptions& opt,
                             const GalerkinObserver& observer) {
  if (!(opt.dt > 0.0) || !(opt.t_final > 0.0)) throw std::invalid_argument("evolve: dt and t_final must be > 0");
  if (a0.size() != sys.r) throw std::invalid_argument("evolve: coefficient count mismatch");
  const int stride = std::max(1, opt.save_stride);
  const long steps = std::lround(std::ceil(opt.t_final / opt.dt - 1e-9));

  CoefficientTrajectory traj;
  traj.dt = opt.dt;
  std::vector<Eigen::VectorXd> saved;
  Eigen::VectorXd a = tau_enforce(sys, a0);
  const double e0 = a.squaredNorm();
  traj.energy.push_back(e0);
  traj.times.push_back(0.0);
  saved.push_back(a);
  if (observer) observer(0.0, a);

  // Evolved entries advance; determined ones are refreshed by tau either per
  // stage or once per completed step.
  Eigen::VectorXd mask = Eigen::VectorXd::Ones(sys.r);
  for (int k : sys.tau.determined) mask(k) = 0.0;
  auto stage_state = [&](const Eigen::VectorXd& base, const Eigen::VectorXd& k, double h) {
    Eigen::VectorXd s = base + h * k.cwiseProduct(mask);
    return opt.tau_every_stage ? tau_enforce(sys, std::move(s)) : s;
  };

  const double h = opt.dt;
  for (long n = 1; n <= steps; ++n) {
    Eigen::VectorXd next;
    try {
      const Eigen::VectorXd k1 = galerkin_rhs(sys, a);
      const Eigen::VectorXd k2 = galerkin_rhs(sys, stage_state(a, k1, 0.5 * h));
      const Eigen::VectorXd k3 = galerkin_rhs(sys, stage_state(a, k2, 0.5 * h));
      const Eigen::VectorXd k4 = galerkin_rhs(sys, stage_state(a, k3, h));
      next = tau_enforce(sys, a + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4).cwiseProduct(mask));
    } catch (const std::invalid_argument&) {
      traj.non_finite = true;
      break;
    }
    const double t = n * h;
    if (!next.allFinite()) {
      traj.non_finite = true;
      break;
    }
    a = std::move(next);
    const double e = a.squaredNorm();
    traj.energy.push_back(e);
    traj.halt_time = t;
    const bool blew = e > opt.energy_guard * e0;
    if (n % stride == 0 || n == steps || blew) {
      traj.times.push_back(t);
      saved.push_back(a);
      if (observer) observer(t, a);
    }
    if (blew) {
      traj.blowup = true;
      break;
    }
  }
  traj.coefficients.resize(static_cast<Eigen::Index>(saved.size()), sys.r);
  for (std::size_t i = 0; i < saved.size(); ++i) traj.coefficients.row(static_cast<Eigen::Index>(i)) = saved[i];
  return traj;
}

double relative_error(const Eigen::VectorXd& u, const Eigen::VectorXd& u_ref) {
  if (u.size() != u_ref.size()) throw std::invalid_argument("relative_error: size mismatch");
  const double norm = u_ref.norm();
  if (norm == 0.0) throw std::invalid_argument("relative_error: reference has zero norm");
  return (u - u_ref).norm() / norm;
}

double averaged_error(const std::vector<double>& errors, const std::vector<double>& times) {
  if (errors.size() != times.size() || errors.empty()) {
    throw std::invalid_argument("averaged_error: need matching, non-empty series");
  }
  if (errors.size() == 1) return errors[0];
  double area = 0.0;
  for (std::size_t i = 1; i < errors.size(); ++i) area += 0.5 * (errors[i] + errors[i - 1]) * (times[i] - times[i - 1]);
  return area / (times.back() - times.front());
}

}  // namespace forge
