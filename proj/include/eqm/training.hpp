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

// Training objectives: the equilibrium-matching regression with a decaying
// weight schedule, a standard conditional flow-matching baseline on the same
// interpolant, and a minimal deterministic stochastic-gradient loop.

#ifndef EQM_TRAINING_HPP_
#define EQM_TRAINING_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "eqm/core.hpp"
#include "eqm/csv.hpp"
#include "eqm/errors.hpp"
#include "eqm/field.hpp"
#include "eqm/rng.hpp"

namespace eqm {

enum class ScheduleKind { kLinear, kTruncatedLinear };

// Weight w(gamma) applied to the regression target. The one hard requirement
// is w(1) = 0, so that data chunks are equilibria of the learned field.
struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::kLinear;
  double slope = 4.0;  // lambda_w, used by the truncated-linear kind

  void validate() const {
    if (!(slope > 0.0)) throw std::invalid_argument("ScheduleSpec: slope must be > 0");
  }
};

inline double weight_schedule(double gamma, const ScheduleSpec& spec) {
  spec.validate();
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("weight_schedule: gamma outside [0,1]");
  }
  switch (spec.kind) {
    case ScheduleKind::kLinear:
      return 1.0 - gamma;
    case ScheduleKind::kTruncatedLinear:
      return std::min(spec.slope * (1.0 - gamma), 1.0);
  }
  return 0.0;
}

enum class Objective { kEqm, kFlow };
enum class OptimizerKind { kAdam, kSgd };

struct TrainConfig {
  int steps = 20000;
  int batch_size = 64;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::uint64_t seed = 1;
  ScheduleSpec schedule;
  Objective objective = Objective::kEqm;

  void validate() const {
    if (steps < 0) throw std::invalid_argument("TrainConfig: steps must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) {
      throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    }
    schedule.validate();
  }
};

// Per-dimension action statistics used to normalize demonstration chunks and
// to map decoded chunks back to environment actions.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std_dev;

  int dim() const { return static_cast<int>(mean.size()); }

  static NormStats identity(int dim) {
    NormStats s;
    s.mean.assign(dim, 0.0);
    s.std_dev.assign(dim, 1.0);
    return s;
  }

  double normalize(double value, int j) const { return (value - mean[j]) / std_dev[j]; }
  double denormalize(double value, int j) const { return mean[j] + std_dev[j] * value; }

  ActionChunk normalize_chunk(const ActionChunk& chunk) const {
    ActionChunk out = chunk;
    for (int t = 0; t < out.horizon; ++t) {
      for (int j = 0; j < out.dim; ++j) out.at(t, j) = normalize(chunk.at(t, j), j);
    }
    return out;
  }

  ActionChunk denormalize_chunk(const ActionChunk& chunk) const {
    ActionChunk out = chunk;
    for (int t = 0; t < out.horizon; ++t) {
      for (int j = 0; j < out.dim; ++j) out.at(t, j) = denormalize(chunk.at(t, j), j);
    }
    return out;
  }
};

struct DemoPair {
  Condition cond;
  ActionChunk chunk;  // stored normalized
};

struct Dataset {
  int env_kind = 0;  // numeric tag; interpreted by the environment module
  int horizon = 0;
  int dim = 0;
  int cond_width = 0;
  NormStats norm;
  std::vector<DemoPair> pairs;

  void validate() const {
    if (pairs.empty()) throw std::invalid_argument("Dataset: no demonstration pairs");
    for (const DemoPair& p : pairs) {
      if (p.chunk.horizon != horizon || p.chunk.dim != dim) {
        throw std::invalid_argument("Dataset: inconsistent chunk shape");
      }
      if (p.cond.width() != cond_width) {
        throw std::invalid_argument("Dataset: inconsistent condition width");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Objectives. The *_with variants take the per-sample draws explicitly; the
// rng variants draw gamma ~ U(0,1) then noise entries (row-major), fresh per
// sample, and delegate. Tests use the *_with variants to pin draws.

// Equilibrium-matching regression: the field at the interpolant regresses to
// w(gamma) * (noise - data), so the field points from data toward noise and
// the descent update walks interpolants back to the data manifold. Data
// chunks (gamma = 1, w = 0) are its equilibria.
inline double eqm_loss_with(const FieldParams& params, std::span<const DemoPair> batch,
                            const ScheduleSpec& schedule, std::span<const double> gammas,
                            std::span<const ActionChunk> noises, FieldGradient& grad) {
  if (batch.empty()) throw std::invalid_argument("eqm_loss: empty batch");
  if (gammas.size() != batch.size() || noises.size() != batch.size()) {
    throw std::invalid_argument("eqm_loss: draws do not match batch size");
  }
  if (params.config.time_conditioned) {
    throw std::invalid_argument("eqm_loss: field must be time-free");
  }
  std::vector<FieldSample> samples(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Interpolant interp = make_interpolant(batch[i].chunk, noises[i], gammas[i]);
    const double w = weight_schedule(gammas[i], schedule);
    ActionChunk target(interp.data.horizon, interp.data.dim);
    for (std::size_t k = 0; k < target.values.size(); ++k) {
      target.values[k] = w * (interp.noise.values[k] - interp.data.values[k]);
    }
    samples[i] = FieldSample{interp.a_gamma, batch[i].cond, std::move(target), std::nullopt};
  }
  return field_param_gradient(params, samples, grad);
}

namespace detail {
inline ActionChunk draw_noise_chunk(int horizon, int dim, Rng& rng) {
  ActionChunk noise(horizon, dim);
  for (double& v : noise.values) v = draw_normal(rng);
  return noise;
}
}  // namespace detail

inline double eqm_loss(const FieldParams& params, std::span<const DemoPair> batch,
                       const ScheduleSpec& schedule, Rng& rng, FieldGradient& grad) {
  std::vector<double> gammas(batch.size());
  std::vector<ActionChunk> noises(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    gammas[i] = draw_uniform(rng);
    noises[i] = detail::draw_noise_chunk(batch[i].chunk.horizon, batch[i].chunk.dim, rng);
  }
  return eqm_loss_with(params, batch, schedule, gammas, noises, grad);
}

// Conditional flow matching on the same interpolant: the time-conditioned
// field at (interpolant, cond, gamma) regresses to data - noise.
inline double flow_loss_with(const FieldParams& params, std::span<const DemoPair> batch,
                             std::span<const double> gammas,
                             std::span<const ActionChunk> noises, FieldGradient& grad) {
  if (batch.empty()) throw std::invalid_argument("flow_loss: empty batch");
  if (gammas.size() != batch.size() || noises.size() != batch.size()) {
    throw std::invalid_argument("flow_loss: draws do not match batch size");
  }
  if (!params.config.time_conditioned) {
    throw std::invalid_argument("flow_loss: field must be time-conditioned");
  }
  std::vector<FieldSample> samples(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Interpolant interp = make_interpolant(batch[i].chunk, noises[i], gammas[i]);
    ActionChunk target(interp.data.horizon, interp.data.dim);
    for (std::size_t k = 0; k < target.values.size(); ++k) {
      target.values[k] = interp.data.values[k] - interp.noise.values[k];
    }
    samples[i] = FieldSample{interp.a_gamma, batch[i].cond, std::move(target), gammas[i]};
  }
  return field_param_gradient(params, samples, grad);
}

inline double flow_loss(const FieldParams& params, std::span<const DemoPair> batch,
                        Rng& rng, FieldGradient& grad) {
  std::vector<double> gammas(batch.size());
  std::vector<ActionChunk> noises(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    gammas[i] = draw_uniform(rng);
    noises[i] = detail::draw_noise_chunk(batch[i].chunk.horizon, batch[i].chunk.dim, rng);
  }
  return flow_loss_with(params, batch, gammas, noises, grad);
}

// ---------------------------------------------------------------------------
// Optimizers. Updates run in fixed layer/coordinate order so that a fixed
// seed reproduces checkpoints bit-for-bit.

namespace detail {

struct AdamState {
  FieldGradient m;
  FieldGradient v;
  long t = 0;
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
};

inline void adam_update(FieldParams& params, const FieldGradient& grad, double lr,
                        AdamState& state) {
  if (state.m.empty()) {
    state.m = zero_gradient(params);
    state.v = zero_gradient(params);
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(state.t));
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto update = [&](std::vector<double>& p, const std::vector<double>& g,
                      std::vector<double>& m, std::vector<double>& v) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = AdamState::kBeta1 * m[i] + (1.0 - AdamState::kBeta1) * g[i];
        v[i] = AdamState::kBeta2 * v[i] + (1.0 - AdamState::kBeta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + AdamState::kEps);
      }
    };
    update(params.layers[l].w, grad[l].w, state.m[l].w, state.v[l].w);
    update(params.layers[l].b, grad[l].b, state.m[l].b, state.v[l].b);
  }
}

inline void sgd_update(FieldParams& params, const FieldGradient& grad, double lr) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    for (std::size_t i = 0; i < params.layers[l].w.size(); ++i) {
      params.layers[l].w[i] -= lr * grad[l].w[i];
    }
    for (std::size_t i = 0; i < params.layers[l].b.size(); ++i) {
      params.layers[l].b[i] -= lr * grad[l].b[i];
    }
  }
}

}  // namespace detail

struct TrainResult {
  FieldParams params;
  std::vector<double> losses;  // one entry per step, evaluated before the update
};

inline TrainResult train(const Dataset& dataset, const TrainConfig& config,
                         FieldParams initial) {
  config.validate();
  dataset.validate();
  if (config.objective == Objective::kFlow && !initial.config.time_conditioned) {
    throw std::invalid_argument("train: flow objective requires a time-conditioned field");
  }
  if (config.objective == Objective::kEqm && initial.config.time_conditioned) {
    throw std::invalid_argument("train: eqm objective requires a time-free field");
  }
  if (dataset.horizon != initial.config.horizon || dataset.dim != initial.config.dim ||
      dataset.cond_width != initial.config.cond_width) {
    throw std::invalid_argument("train: dataset shape does not match field config");
  }

  TrainResult result;
  result.params = std::move(initial);
  result.losses.reserve(static_cast<std::size_t>(config.steps));

  Rng rng(config.seed);
  FieldGradient grad = zero_gradient(result.params);
  detail::AdamState adam;
  std::vector<DemoPair> batch(static_cast<std::size_t>(config.batch_size));
  std::uniform_int_distribution<std::size_t> pick(0, dataset.pairs.size() - 1);

  for (int step = 0; step < config.steps; ++step) {
    for (auto& slot : batch) slot = dataset.pairs[pick(rng)];
    double loss = 0.0;
    if (config.objective == Objective::kEqm) {
      loss = eqm_loss(result.params, batch, config.schedule, rng, grad);
    } else {
      loss = flow_loss(result.params, batch, rng, grad);
    }
    if (!std::isfinite(loss)) {
      throw NumericError("train: loss diverged at step " + std::to_string(step));
    }
    result.losses.push_back(loss);
    if (config.optimizer == OptimizerKind::kAdam) {
      detail::adam_update(result.params, grad, config.learning_rate, adam);
    } else {
      detail::sgd_update(result.params, grad, config.learning_rate);
    }
  }
  return result;
}

// Loss curve as "step,loss" with a header row; steps are 1-based.
inline void write_loss_csv(const std::string& path, const std::vector<double>& losses) {
  CsvFile csv(path, {"step", "loss"});
  for (std::size_t i = 0; i < losses.size(); ++i) {
    csv.write_row({csv_num(static_cast<long long>(i + 1)), csv_num(losses[i])});
  }
}

}  // namespace eqm

#endif  // EQM_TRAINING_HPP_
