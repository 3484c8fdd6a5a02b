#pragma once

// Embedded Runge-Kutta pairs with PI step-size control. Output times are hit
// exactly by clipping the step, so results are bit-reproducible.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace forge {

enum class RkMethod { dormand_prince_45, bogacki_shampine_32 };

struct RkOptions {
  double rtol = 1e-10;
  double atol = 1e-14;
  RkMethod method = RkMethod::dormand_prince_45;
  double initial_step = 0.0;  // 0 selects a step automatically
  double max_step = std::numeric_limits<double>::infinity();
};

struct RkStats {
  long accepted = 0;
  long rejected = 0;
  long rhs_evals = 0;
};

template <class Vec>
struct OdeSolution {
  std::vector<double> times;
  std::vector<Vec> states;
  RkStats stats;
};

namespace detail {

struct Tableau {
  int stages;
  int order;  // order of the propagated solution
  std::array<double, 7> c;
  std::array<std::array<double, 7>, 7> a;
  std::array<double, 7> b;      // propagated
  std::array<double, 7> b_err;  // b - b_hat
};

const Tableau& tableau(RkMethod method);

template <class Vec>
double error_norm(const Vec& err, const Vec& y0, const Vec& y1, double rtol, double atol) {
  const Eigen::ArrayXd scale =
      atol + rtol * y0.cwiseAbs().array().max(y1.cwiseAbs().array());
  const Eigen::ArrayXd ratio = err.cwiseAbs().array() / scale;
  return std::sqrt(ratio.square().mean());
}

}  // namespace detail

/// Integrates y' = rhs(t, y) from t0 through the sorted `output_times`
/// (each > t0), calling observer(t, y) at every output time. Throws
/// std::runtime_error when the step size underflows 1e-14 of the span.
template <class Vec, class Rhs, class Observer>
RkStats integrate_adaptive(Rhs&& rhs, Vec y, double t0, const std::vector<double>& output_times,
                           const RkOptions& opt, Observer&& observer) {
  if (output_times.empty()) return {};
  if (!(opt.rtol > 0.0) || !(opt.atol > 0.0)) {
    throw std::invalid_argument("integrate_adaptive: tolerances must be positive");
  }
  const double t_end = output_times.back();
  const double span = t_end - t0;
  if (!(span > 0.0)) throw std::invalid_argument("integrate_adaptive: degenerate time span");

  const auto& tab = detail::tableau(opt.method);
  const double q = tab.order;  // error estimate of the embedded method is O(h^q)
  const double alpha = 0.7 / q;
  const double beta = 0.4 / q;
  const double h_min = 1e-14 * span;

  RkStats stats;
  std::vector<Vec> k(static_cast<std::size_t>(tab.stages));
  double t = t0;
  k[0] = rhs(t, y);
  ++stats.rhs_evals;

  double h = opt.initial_step;
  if (!(h > 0.0)) {
    const double yn = y.cwiseAbs().maxCoeff();
    const double fn = k[0].cwiseAbs().maxCoeff();
    h = (fn > 0.0) ? 0.01 * std::max(yn, opt.atol / opt.rtol) / fn : 0.01 * span;
    h = std::clamp(h, 1e-6 * span, 0.1 * span);
  }
  h = std::min(h, opt.max_step);

  double err_prev = 1e-4;
  std::size_t next_out = 0;
  while (next_out < output_times.size() && output_times[next_out] <= t0) {
    observer(t0, y);
    ++next_out;
  }

  Vec y_new;
  while (next_out < output_times.size()) {
    const double target = output_times[next_out];
    bool clipped = false;
    double step = h;
    if (t + step >= target || target - (t + step) < 1e-12 * span) {
      step = target - t;
      clipped = true;
    }
    if (step < h_min) {
      throw std::runtime_error("integrate_adaptive: step size underflow at t = " + std::to_string(t));
    }

    for (int s = 1; s < tab.stages; ++s) {
      Vec ys = y;
      for (int j = 0; j < s; ++j) {
        const double aij = tab.a[static_cast<std::size_t>(s)][static_cast<std::size_t>(j)];
        if (aij != 0.0) ys += (step * aij) * k[static_cast<std::size_t>(j)];
      }
      k[static_cast<std::size_t>(s)] = rhs(t + tab.c[static_cast<std::size_t>(s)] * step, ys);
      ++stats.rhs_evals;
    }
    y_new = y;
    Vec err = Vec::Zero(y.size());
    for (int s = 0; s < tab.stages; ++s) {
      const auto us = static_cast<std::size_t>(s);
      if (tab.b[us] != 0.0) y_new += (step * tab.b[us]) * k[us];
      if (tab.b_err[us] != 0.0) err += (step * tab.b_err[us]) * k[us];
    }
    const double en = detail::error_norm(err, y, y_new, opt.rtol, opt.atol);
    if (!std::isfinite(en)) {
      throw std::runtime_error("integrate_adaptive: non-finite state at t = " + std::to_string(t));
    }

    if (en <= 1.0) {
      t = clipped ? target : t + step;
      y = y_new;
      // FSAL: the last stage is f(t + h, y_new).
      k[0] = k[static_cast<std::size_t>(tab.stages - 1)];
      ++stats.accepted;
      double fac = 0.9 * std::pow(std::max(en, 1e-10), -alpha) * std::pow(err_prev, beta);
      fac = std::clamp(fac, 0.2, 5.0);
      err_prev = std::max(en, 1e-4);
      // A clipped step says nothing about the natural step size.
      if (!clipped || step >= h) h = std::min(step * fac, opt.max_step);
      if (clipped) {
        observer(t, y);
        ++next_out;
      }
    } else {
      ++stats.rejected;
      const double fac = std::max(0.2, 0.9 * std::pow(en, -alpha));
      h = step * fac;
    }
  }
  return stats;
}

/// Saves the solution at t0, t0 + save_every, ..., t_end.
std::vector<double> save_grid(double t0, double t_end, double save_every);

template <class Vec, class Rhs>
OdeSolution<Vec> adaptive_rk(Rhs&& rhs, const Vec& y0, double t0, double t_end, const RkOptions& opt,
                             double save_every) {
  if (!(t_end > t0)) throw std::invalid_argument("adaptive_rk: degenerate time span");
  OdeSolution<Vec> sol;
  sol.times.push_back(t0);
  sol.states.push_back(y0);
  const auto outs = save_grid(t0, t_end, save_every);
  std::vector<double> after(outs.begin() + 1, outs.end());
  sol.stats = integrate_adaptive(std::forward<Rhs>(rhs), y0, t0, after, opt, [&](double t, const Vec& y) {
    sol.times.push_back(t);
    sol.states.push_back(y);
  });
  return sol;
}

}  // namespace forge
