#include "forge/approximation.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "forge/log.hpp"

namespace forge {

ScalarFunction named_target(std::string_view name) {
  if (name == "f1") return [](double x) { return std::exp(std::cos(0.5 * x)); };
  if (name == "f2") return [](double x) { return std::exp(std::sin(x)); };
  if (name == "f3") return [](double x) { return std::exp(std::sin(2.0 * x)); };
  throw std::invalid_argument("unknown target function '" + std::string(name) + "' (expected f1, f2 or f3)");
}

Projection project(const Eigen::VectorXd& f_nodes, const OrthonormalBasis& basis, int count) {
  if (f_nodes.size() != basis.grid.size()) {
    throw std::invalid_argument("project: " + std::to_string(f_nodes.size()) + " values for a " +
                                std::to_string(basis.grid.size()) + "-node grid");
  }
  if (count < 0) count = basis.rank;
  if (count > basis.node_values.cols()) throw std::invalid_argument("project: count exceeds the basis size");
  const auto phi = basis.node_values.leftCols(count);
  const Eigen::VectorXd wf = f_nodes.cwiseProduct(basis.grid.weights());
  Projection out;
  out.coefficients = phi.transpose() * wf;
  out.residual = f_nodes - phi * out.coefficients;
  out.residual_norm = std::sqrt(basis.grid.integrate(out.residual.cwiseAbs2()));
  return out;
}

Eigen::VectorXd legendre_error_profile(const OrthonormalBasis& basis, int j_max) {
  if (!basis.projected()) throw std::logic_error("legendre_error_profile: basis has no Legendre coefficients");
  if (j_max < 0 || j_max > basis.max_degree) {
    throw std::invalid_argument("legendre_error_profile: j_max must lie in [0, L]");
  }
  const Eigen::MatrixXd& c = basis.legendre_coeffs;
  Eigen::VectorXd e(j_max + 1);
  for (int j = 0; j <= j_max; ++j) {
    const double gap = 1.0 - c.row(j).squaredNorm();
    if (gap > 1e-6) {
      e(j) = std::sqrt(gap);
    } else {
      // Nearly captured: sqrt(1 - s) would turn rounding in s into ~1e-8.
      Eigen::VectorXd r = -(c * c.row(j).transpose());
      r(j) += 1.0;
      e(j) = r.norm();
    }
  }
  return e;
}

ApproxReport ac3_bound(const ScalarFunction& f, const OrthonormalBasis& basis, int r_leg, std::string target,
                       int fine_nodes) {
  if (!basis.projected()) throw std::logic_error("ac3_bound: basis has no Legendre coefficients");
  const int l = basis.max_degree;
  if (r_leg < 0 || r_leg >= l) {
    throw std::invalid_argument("ac3_bound: r must lie in [0, L) with L = " + std::to_string(l));
  }
  fine_nodes = std::max(fine_nodes, 4 * (l + 1));
  const QuadratureGrid fine = gauss_legendre_rule(fine_nodes, basis.domain());
  const int j_top = fine_nodes / 2;
  const LegendreBasis legendre(basis.domain(), j_top);
  const Eigen::MatrixXd v = legendre.vandermonde(as_span(fine.nodes()));

  Eigen::VectorXd fx(fine_nodes);
  for (int i = 0; i < fine_nodes; ++i) fx(i) = f(fine.nodes()(i));
  const Eigen::VectorXd wf = fx.cwiseProduct(fine.weights());

  ApproxReport rep;
  rep.target = std::move(target);
  rep.legendre_coeffs = v.transpose() * wf;

  // Pf with the Legendre-represented basis functions, exact inner products.
  const Eigen::MatrixXd phi = v.leftCols(l + 1) * basis.legendre_coeffs;
  rep.coefficients = phi.transpose() * wf;
  const Eigen::VectorXd resid = fx - phi * rep.coefficients;
  rep.projection_error = std::sqrt(fine.integrate(resid.cwiseAbs2()));

  rep.legendre_errors = legendre_error_profile(basis, r_leg);
  rep.contributions = rep.legendre_coeffs.head(r_leg + 1).cwiseAbs().cwiseProduct(rep.legendre_errors);
  rep.tail = rep.legendre_coeffs.tail(j_top - r_leg).norm();
  rep.damped_sum = rep.contributions.sum();
  rep.bound = rep.tail + rep.damped_sum;
  rep.holds = rep.projection_error <= rep.bound + 1e-9;
  if (!rep.holds) {
    std::ostringstream msg;
    msg << "error bound violated for " << (rep.target.empty() ? "target" : rep.target) << ": ||f - Pf|| = "
        << rep.projection_error << " > " << rep.bound;
    warn(msg.str());
  }
  return rep;
}

DecayFit fit_geometric_decay(const Eigen::VectorXd& coefficients, double floor) {
  std::vector<double> ks;
  std::vector<double> ys;
  for (Eigen::Index k = 0; k < coefficients.size(); ++k) {
    const double a = std::abs(coefficients(k));
    if (a > floor) {
      ks.push_back(static_cast<double>(k));
      ys.push_back(std::log(a));
    }
  }
  DecayFit fit;
  fit.points = static_cast<int>(ks.size());
  if (fit.points < 2) return fit;
  const Eigen::Map<const Eigen::VectorXd> k(ks.data(), fit.points);
  const Eigen::Map<const Eigen::VectorXd> y(ys.data(), fit.points);
  const double km = k.mean();
  const double ym = y.mean();
  const double sxx = (k.array() - km).square().sum();
  const double sxy = ((k.array() - km) * (y.array() - ym)).sum();
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  fit.log_c = ym - slope * km;
  fit.rho = std::exp(-slope);
  const double ss_tot = (y.array() - ym).square().sum();
  const double ss_res = (y.array() - (fit.log_c + slope * k.array())).square().sum();
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

void write_curve_csv(std::ostream& out, const Eigen::VectorXd& values, std::string_view header) {
  out << header << '\n' << std::setprecision(17);
  for (Eigen::Index k = 0; k < values.size(); ++k) out << k << ',' << values(k) << '\n';
}

}  // namespace forge
