// Copyright 2026 The eqm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Numerical verification of the solver's local convergence story: descent of
// a surrogate energy, minimum-residual bound, local contraction rate and the
// induced residual decay, the sufficient-iteration formula, the warm-start
// saving, and a line-integral probe for non-conservative fields.
//
// Bounds are asserted only on analytic fields whose energy, smoothness
// constant, and contraction rate are known exactly. Learned fields get
// measurements, never assertions.

#ifndef EQM_ANALYSIS_HPP_
#define EQM_ANALYSIS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "eqm/core.hpp"
#include "eqm/errors.hpp"
#include "eqm/field.hpp"
#include "eqm/solver.hpp"

namespace eqm {

struct DescentReport {
  std::vector<double> energies;       // E(A^0) .. E(A^K)
  std::vector<double> residuals;      // r_0 .. r_{K-1}
  std::vector<double> prefix_bounds;  // bound for prefixes K' = 1 .. K
  bool violated = false;
  bool hypothesis_met = true;  // step size within the smoothness bound
  double step_size = 0.0;
  double smoothness = 0.0;
  double energy_floor = 0.0;
};

// Runs K plain gradient iterations (no momentum) on a conservative analytic
// field and checks, per prefix K', that the minimum squared residual stays
// within 2*(E0 - E*)/(eta*K'*H*d), and that the energy never increases by
// more than 1e-12.
inline DescentReport check_descent(const AnalyticField& field, const SolverConfig& cfg,
                                   const ActionChunk& init, int steps) {
  cfg.validate();
  field.validate();
  if (field.kind == AnalyticKind::kRotation) {
    throw std::invalid_argument("check_descent: field must be conservative");
  }
  if (cfg.momentum != 0.0) {
    throw std::invalid_argument("check_descent: momentum must be zero");
  }
  if (steps < 1) throw std::invalid_argument("check_descent: steps must be >= 1");
  require_shape(init, field.equilibrium.horizon, field.equilibrium.dim, "check_descent");

  const double smoothness = analytic_smoothness(field);
  const double area = static_cast<double>(init.values.size());  // H*d

  DescentReport report;
  report.step_size = cfg.step_size;
  report.smoothness = smoothness;
  report.energy_floor = 0.0;  // both conservative kinds attain E = 0 at A*
  report.hypothesis_met = cfg.step_size <= 1.0 / smoothness;

  ActionChunk current = init;
  report.energies.push_back(analytic_energy(field, current));
  auto evaluator = [&field](const ActionChunk& a, const Condition&) {
    return analytic_eval(field, a);
  };
  const Condition no_cond;  // analytic fields ignore the condition

  for (int k = 0; k < steps; ++k) {
    auto [next, residual] = nesterov_step(current, current, cfg, evaluator, no_cond, k);
    report.residuals.push_back(residual);
    current = std::move(next);
    report.energies.push_back(analytic_energy(field, current));
  }

  const double e0 = report.energies.front();
  double min_sq = std::numeric_limits<double>::infinity();
  for (int prefix = 1; prefix <= steps; ++prefix) {
    const double r = report.residuals[static_cast<std::size_t>(prefix - 1)];
    min_sq = std::min(min_sq, r * r);
    const double bound =
        2.0 * (e0 - report.energy_floor) / (cfg.step_size * prefix * area);
    report.prefix_bounds.push_back(bound);
    if (min_sq > bound) report.violated = true;
  }
  for (std::size_t k = 0; k + 1 < report.energies.size(); ++k) {
    if (report.energies[k + 1] > report.energies[k] + 1e-12) report.violated = true;
  }
  return report;
}

struct ContractionReport {
  double rho_hat = 0.0;
  std::vector<double> distances;        // ||A^k - A*||
  std::vector<double> ratios;           // successive distance ratios
  std::vector<bool> bound_satisfied;    // dist_k <= rho_hat^k * dist_0
  bool geometric_bound_holds = true;
};

// Estimates the local contraction rate from recorded iterates as the
// geometric mean of successive distance ratios over the first ten steps or
// until the distance falls below 1e-9, whichever comes first.
inline ContractionReport estimate_contraction(const SolverTrace& trace,
                                              const ActionChunk& a_star) {
  if (trace.iterates.size() < 3) {
    throw std::invalid_argument("estimate_contraction: need at least 3 recorded iterates");
  }
  ContractionReport report;
  for (const ActionChunk& a : trace.iterates) {
    require_shape(a, a_star.horizon, a_star.dim, "estimate_contraction");
    double sq = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      const double d = a.values[i] - a_star.values[i];
      sq += d * d;
    }
    report.distances.push_back(std::sqrt(sq));
  }

  constexpr double kFloor = 1e-9;
  constexpr int kMaxRatios = 10;
  double log_sum = 0.0;
  int used = 0;
  bool hit_zero = false;
  for (std::size_t k = 0; k + 1 < report.distances.size() && used < kMaxRatios; ++k) {
    if (report.distances[k] < kFloor) break;
    const double ratio = report.distances[k + 1] / report.distances[k];
    report.ratios.push_back(ratio);
    if (ratio == 0.0) {
      hit_zero = true;
      ++used;
      break;
    }
    log_sum += std::log(ratio);
    ++used;
  }
  if (used == 0) {
    report.rho_hat = 0.0;  // started at (numerical) convergence
  } else if (hit_zero) {
    report.rho_hat = 0.0;
  } else {
    report.rho_hat = std::exp(log_sum / used);
  }

  const double dist0 = report.distances.front();
  double envelope = dist0;
  for (std::size_t k = 0; k < report.distances.size(); ++k) {
    const bool ok = report.distances[k] <= envelope * (1.0 + 1e-9) + 1e-15;
    report.bound_satisfied.push_back(ok);
    if (!ok) report.geometric_bound_holds = false;
    envelope *= report.rho_hat;
  }
  return report;
}

// Residual ceiling implied by local smoothness and contraction:
// (L / sqrt(H*d)) * rho^k * dist0.
inline double residual_decay_bound(double smoothness, double rho, double dist0, int k,
                                   int horizon, int dim) {
  const double area = static_cast<double>(horizon) * dim;
  return smoothness / std::sqrt(area) * std::pow(rho, k) * dist0;
}

// Iterations sufficient to push the residual below tau under contraction
// rate rho, starting dist0 away from the equilibrium; zero when the
// threshold is already met at initialization.
inline int sufficient_iterations(double smoothness, double dist0, double tau, int horizon,
                                 int dim, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) {
    throw std::invalid_argument("sufficient_iterations: rho must be in (0,1)");
  }
  if (!(tau > 0.0)) throw std::invalid_argument("sufficient_iterations: tau must be > 0");
  const double area = static_cast<double>(horizon) * dim;
  const double arg = smoothness * dist0 / (tau * std::sqrt(area));
  if (arg <= 1.0) return 0;
  return static_cast<int>(std::ceil(std::log(arg) / std::log(1.0 / rho)));
}

// Iteration saving from shrinking the initial distance by factor alpha:
// log(1/alpha) / log(1/rho), ignoring the ceiling effect.
inline double warm_start_saving(double alpha, double rho) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("warm_start_saving: alpha must be in (0,1)");
  }
  if (!(rho > 0.0 && rho < 1.0)) {
    throw std::invalid_argument("warm_start_saving: rho must be in (0,1)");
  }
  return std::log(1.0 / alpha) / std::log(1.0 / rho);
}

// Discrete line integral of the field around a closed loop (trapezoid rule
// on the polygon through the given points). Near zero for gradient fields;
// proportional to enclosed area for the skew component.
template <class FieldFn>
double conservativity_probe(FieldFn&& field, const Condition& cond,
                            std::span<const ActionChunk> loop) {
  if (loop.size() < 3) {
    throw std::invalid_argument("conservativity_probe: need at least 3 loop points");
  }
  double integral = 0.0;
  std::vector<ActionChunk> values;
  values.reserve(loop.size());
  for (const ActionChunk& point : loop) values.push_back(field(point, cond));

  for (std::size_t i = 0; i < loop.size(); ++i) {
    const std::size_t j = (i + 1) % loop.size();
    for (std::size_t k = 0; k < loop[i].values.size(); ++k) {
      const double mid = 0.5 * (values[i].values[k] + values[j].values[k]);
      integral += mid * (loop[j].values[k] - loop[i].values[k]);
    }
  }
  return integral;
}

// Circle of M points in the plane of two flattened coordinates, centered at
// the given chunk. Convenience loop builder for the probe.
inline std::vector<ActionChunk> make_circle_loop(const ActionChunk& center, int coord_u,
                                                 int coord_v, double radius, int points) {
  if (points < 3) throw std::invalid_argument("make_circle_loop: need at least 3 points");
  const int n = static_cast<int>(center.values.size());
  if (coord_u < 0 || coord_v < 0 || coord_u >= n || coord_v >= n || coord_u == coord_v) {
    throw std::invalid_argument("make_circle_loop: bad coordinate indices");
  }
  const double two_pi = 2.0 * std::acos(-1.0);
  std::vector<ActionChunk> loop;
  loop.reserve(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    const double angle = two_pi * static_cast<double>(i) / points;
    ActionChunk p = center;
    p.values[static_cast<std::size_t>(coord_u)] += radius * std::cos(angle);
    p.values[static_cast<std::size_t>(coord_v)] += radius * std::sin(angle);
    loop.push_back(std::move(p));
  }
  return loop;
}

}  // namespace eqm

#endif  // EQM_ANALYSIS_HPP_
