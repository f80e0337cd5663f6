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

// Equilibrium decoding: momentum-accelerated iteration with a normalized
// lookahead residual as the stopping statistic, structural warm starts, and
// the fixed-step Euler sampler for the flow baseline.
//
// Evaluation accounting contract: every iteration evaluates the field exactly
// once, at the lookahead point, and that evaluation serves both the residual
// check and the update. A threshold stop at iteration T has consumed T+1
// evaluations; a capped run consumes exactly max_iterations evaluations (no
// evaluation happens at the cap index), which is what makes a tau=0 run with
// max_iterations=B consume exactly B evaluations per solve.

#ifndef EQM_SOLVER_HPP_
#define EQM_SOLVER_HPP_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "eqm/core.hpp"
#include "eqm/errors.hpp"
#include "eqm/field.hpp"
#include "eqm/rng.hpp"

namespace eqm {

struct SolverConfig {
  double step_size = 0.1;    // eta > 0
  double momentum = 0.9;     // mu in [0, 1)
  double threshold = 1e-3;   // tau >= 0; 0 means run to the cap
  int max_iterations = 300;  // K_max >= 1
  bool record_iterates = false;

  void validate() const {
    if (!(step_size > 0.0)) throw std::invalid_argument("SolverConfig: step_size must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) {
      throw std::invalid_argument("SolverConfig: momentum must be in [0,1)");
    }
    if (!(threshold >= 0.0)) throw std::invalid_argument("SolverConfig: threshold must be >= 0");
    if (max_iterations < 1) {
      throw std::invalid_argument("SolverConfig: max_iterations must be >= 1");
    }
  }
};

enum class StopReason { kThreshold, kCap };

struct SolverTrace {
  std::vector<double> residuals;  // r_0 .. r_last, one per field evaluation
  StopReason stop_reason = StopReason::kCap;
  int iterations = 0;  // T: the passing index, or max_iterations when capped
  std::vector<ActionChunk> iterates;  // A^0 .. A^last when recorded

  long evaluations() const { return static_cast<long>(residuals.size()); }
};

namespace detail {

inline ActionChunk lookahead_point(const ActionChunk& current, const ActionChunk& previous,
                                   double momentum) {
  ActionChunk out(current.horizon, current.dim);
  for (std::size_t i = 0; i < current.values.size(); ++i) {
    out.values[i] =
        current.values[i] + momentum * (current.values[i] - previous.values[i]);
  }
  return out;
}

inline void apply_update(const ActionChunk& lookahead, const ActionChunk& field_value,
                         double step_size, ActionChunk& next) {
  for (std::size_t i = 0; i < lookahead.values.size(); ++i) {
    next.values[i] = lookahead.values[i] - step_size * field_value.values[i];
  }
}

}  // namespace detail

// One accelerated iteration. Evaluates the field exactly once, at the
// lookahead point; returns the updated chunk and the normalized residual
// measured at that same point.
template <class FieldFn>
std::pair<ActionChunk, double> nesterov_step(const ActionChunk& current,
                                             const ActionChunk& previous,
                                             const SolverConfig& cfg, FieldFn&& field,
                                             const Condition& cond,
                                             int iteration_index = 0) {
  cfg.validate();
  if (!current.same_shape(previous)) {
    throw std::invalid_argument("nesterov_step: current/previous shape mismatch");
  }
  ActionChunk lookahead = detail::lookahead_point(current, previous, cfg.momentum);
  if (!lookahead.finite()) {
    throw SolverDivergence("nesterov_step: non-finite lookahead iterate", iteration_index);
  }
  ActionChunk value = field(lookahead, cond);
  require_shape(value, current.horizon, current.dim, "nesterov_step");
  if (!value.finite()) {
    throw SolverDivergence("nesterov_step: non-finite field value", iteration_index);
  }
  double residual = normalized_residual(value);
  ActionChunk next(current.horizon, current.dim);
  detail::apply_update(lookahead, value, cfg.step_size, next);
  if (!next.finite()) {
    throw SolverDivergence("nesterov_step: non-finite iterate", iteration_index);
  }
  return {std::move(next), residual};
}

// Iterates from init (with A^(-1) = A^(0)) until the lookahead residual
// drops to cfg.threshold or the iteration cap is reached. On a threshold
// stop the returned chunk is the lookahead point whose residual passed; on
// a cap stop it is the last updated iterate.
template <class FieldFn>
std::pair<ActionChunk, SolverTrace> solve_equilibrium(FieldFn&& field, const Condition& cond,
                                                      const ActionChunk& init,
                                                      const SolverConfig& cfg) {
  cfg.validate();
  require_finite(init, "solve_equilibrium");

  SolverTrace trace;
  trace.residuals.reserve(static_cast<std::size_t>(cfg.max_iterations));
  if (cfg.record_iterates) trace.iterates.push_back(init);

  ActionChunk previous = init;
  ActionChunk current = init;
  ActionChunk next(init.horizon, init.dim);

  for (int k = 0; k < cfg.max_iterations; ++k) {
    ActionChunk lookahead = detail::lookahead_point(current, previous, cfg.momentum);
    if (!lookahead.finite()) {
      throw SolverDivergence("solve_equilibrium: non-finite lookahead iterate", k);
    }
    ActionChunk value = field(lookahead, cond);
    require_shape(value, init.horizon, init.dim, "solve_equilibrium");
    if (!value.finite()) {
      throw SolverDivergence("solve_equilibrium: non-finite field value", k);
    }
    double residual = normalized_residual(value);
    trace.residuals.push_back(residual);
    if (residual <= cfg.threshold) {
      trace.stop_reason = StopReason::kThreshold;
      trace.iterations = k;
      return {std::move(lookahead), std::move(trace)};
    }
    detail::apply_update(lookahead, value, cfg.step_size, next);
    if (!next.finite()) {
      throw SolverDivergence("solve_equilibrium: non-finite iterate", k);
    }
    previous = std::move(current);
    current = next;
    if (cfg.record_iterates) trace.iterates.push_back(current);
  }
  trace.stop_reason = StopReason::kCap;
  trace.iterations = cfg.max_iterations;
  return {std::move(current), std::move(trace)};
}

// Iterations needed to reach tau according to a recorded residual sequence:
// index of the first residual <= tau, or cap when none qualifies. Threshold
// scans derive their per-tau iteration statistics from one trace this way.
inline int iterations_to_threshold(const std::vector<double>& residuals, double tau,
                                   int cap) {
  for (std::size_t k = 0; k < residuals.size(); ++k) {
    if (residuals[k] <= tau) return static_cast<int>(k);
  }
  return cap;
}

// ---------------------------------------------------------------------------
// Initialization

enum class WarmStartAlign {
  kShifted,  // copy the unexecuted rows, offset by the executed step count
  kLeading,  // copy the leading half as-is
};

struct WarmStartState {
  ActionChunk previous_output;
  int executed_steps = 1;  // e, in [1, H/2]
  WarmStartAlign alignment = WarmStartAlign::kShifted;
};

inline ActionChunk cold_start_init(int horizon, int dim, Rng& rng) {
  ActionChunk chunk(horizon, dim);
  for (double& v : chunk.values) v = draw_normal(rng);
  return chunk;
}

// Half-chunk reuse: the first H/2 rows come from the previous output chunk,
// the remaining H/2 rows are fresh standard-normal noise.
inline ActionChunk warm_start_init(const WarmStartState& ws, Rng& rng) {
  const ActionChunk& prev = ws.previous_output;
  const int horizon = prev.horizon;
  const int dim = prev.dim;
  if (horizon % 2 != 0) {
    throw std::invalid_argument("warm_start_init: horizon must be even");
  }
  const int half = horizon / 2;
  if (ws.executed_steps < 1 || ws.executed_steps + half > horizon) {
    throw std::invalid_argument("warm_start_init: executed_steps must be in [1, H/2]");
  }
  require_finite(prev, "warm_start_init");

  ActionChunk init(horizon, dim);
  const int offset = ws.alignment == WarmStartAlign::kShifted ? ws.executed_steps : 0;
  for (int t = 0; t < half; ++t) {
    for (int j = 0; j < dim; ++j) {
      init.at(t, j) = prev.at(t + offset, j);
    }
  }
  for (int t = half; t < horizon; ++t) {
    for (int j = 0; j < dim; ++j) {
      init.at(t, j) = draw_normal(rng);
    }
  }
  return init;
}

// ---------------------------------------------------------------------------
// Flow baseline sampler: integrate dA/dgamma = f(A; c, gamma) from gamma=0
// to 1 with K uniform Euler steps. Exactly K field evaluations.

template <class FlowFieldFn>
ActionChunk euler_flow_integrate(FlowFieldFn&& field, const Condition& cond, int steps,
                                 ActionChunk state) {
  if (steps < 1) throw std::invalid_argument("euler_flow_integrate: steps must be >= 1");
  require_finite(state, "euler_flow_integrate");
  const double dt = 1.0 / static_cast<double>(steps);
  for (int k = 0; k < steps; ++k) {
    const double gamma = static_cast<double>(k) * dt;
    ActionChunk value = field(state, cond, gamma);
    require_shape(value, state.horizon, state.dim, "euler_flow_integrate");
    for (std::size_t i = 0; i < state.values.size(); ++i) {
      state.values[i] += dt * value.values[i];
    }
    if (!state.finite()) {
      throw SolverDivergence("euler_flow_integrate: non-finite state", k);
    }
  }
  return state;
}

// Draws the start point from a standard normal and integrates a learned
// time-conditioned field.
inline ActionChunk euler_flow_sample(const FieldParams& params, const Condition& cond,
                                     int steps, Rng& rng) {
  if (!params.config.time_conditioned) {
    throw std::invalid_argument("euler_flow_sample: field must be time-conditioned");
  }
  ActionChunk start = cold_start_init(params.config.horizon, params.config.dim, rng);
  auto field = [&params](const ActionChunk& a, const Condition& c, double gamma) {
    return field_forward(params, a, c, gamma);
  };
  return euler_flow_integrate(field, cond, steps, std::move(start));
}

}  // namespace eqm

#endif  // EQM_SOLVER_HPP_
