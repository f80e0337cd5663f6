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

// Toy point-mass tasks with scripted experts, demonstration generation, and
// a receding-horizon closed-loop executor. Environment randomness and
// decoder randomness come from split seeded streams, so A/B comparisons
// (warm vs. cold, one decoder vs. another) see identical environments.

#ifndef EQM_ENVS_HPP_
#define EQM_ENVS_HPP_

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "eqm/core.hpp"
#include "eqm/errors.hpp"
#include "eqm/rng.hpp"
#include "eqm/solver.hpp"
#include "eqm/training.hpp"

namespace eqm {

enum class EnvKind : int { kReach = 0, kTwoWaypoint = 1, kPress = 2 };

inline const char* env_kind_name(EnvKind kind) {
  switch (kind) {
    case EnvKind::kReach:
      return "reach";
    case EnvKind::kTwoWaypoint:
      return "two_waypoint";
    case EnvKind::kPress:
      return "press";
  }
  return "unknown";
}

inline EnvKind parse_env_kind(const std::string& name) {
  if (name == "reach") return EnvKind::kReach;
  if (name == "two_waypoint") return EnvKind::kTwoWaypoint;
  if (name == "press") return EnvKind::kPress;
  throw std::invalid_argument("unknown environment kind: " + name);
}

struct EnvSpec {
  EnvKind kind = EnvKind::kReach;
  double workspace_lo = 0.0;
  double workspace_hi = 1.0;
  double goal_tolerance = 0.05;  // delta
  int max_cycles = 60;
  int horizon = 8;  // H, even
  int dim = 2;      // d
  double process_noise = 0.005;
  double control_scale = 0.1;  // displacement per unit action

  // press succeeds only within a tighter radius around the target
  static constexpr double kPressToleranceFactor = 0.6;

  double success_tolerance() const {
    return kind == EnvKind::kPress ? kPressToleranceFactor * goal_tolerance
                                   : goal_tolerance;
  }

  int state_width() const { return dim + (kind == EnvKind::kTwoWaypoint ? 1 : 0); }
  int goal_width() const { return kind == EnvKind::kTwoWaypoint ? 2 * dim : dim; }
  int cond_width() const { return state_width() + goal_width(); }

  void validate() const {
    if (!(goal_tolerance > 0.0)) throw std::invalid_argument("EnvSpec: goal_tolerance must be > 0");
    if (horizon < 2 || horizon % 2 != 0) {
      throw std::invalid_argument("EnvSpec: horizon must be even and >= 2");
    }
    if (dim < 1) throw std::invalid_argument("EnvSpec: dim must be >= 1");
    if (max_cycles < 1) throw std::invalid_argument("EnvSpec: max_cycles must be >= 1");
    if (!(workspace_hi > workspace_lo)) {
      throw std::invalid_argument("EnvSpec: empty workspace");
    }
    if (!(process_noise >= 0.0)) throw std::invalid_argument("EnvSpec: negative noise scale");
    if (!(control_scale > 0.0)) throw std::invalid_argument("EnvSpec: control_scale must be > 0");
  }
};

inline EnvSpec make_env_spec(EnvKind kind) {
  EnvSpec spec;
  spec.kind = kind;
  return spec;
}

struct EnvState {
  std::vector<double> position;
  std::vector<double> goal;
  std::vector<double> waypoint;  // two_waypoint only
  bool waypoint_reached = false;
  bool success = false;
  int steps = 0;
};

namespace detail {

inline double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

inline std::vector<double> draw_point(Rng& rng, int dim, double lo, double hi) {
  std::vector<double> p(static_cast<std::size_t>(dim));
  for (double& v : p) v = draw_uniform(rng, lo, hi);
  return p;
}

// Rejection-sample a point at least min_dist away from a reference.
inline std::vector<double> draw_point_away(Rng& rng, int dim, double lo, double hi,
                                           const std::vector<double>& ref,
                                           double min_dist) {
  std::vector<double> p;
  for (int tries = 0; tries < 64; ++tries) {
    p = draw_point(rng, dim, lo, hi);
    if (distance(p, ref) >= min_dist) return p;
  }
  return p;
}

}  // namespace detail

// Draw order per episode: start position, then waypoint (two_waypoint only),
// then goal. Clean episodes start near the workspace center; randomized
// episodes start anywhere in the interior.
inline EnvState reset_env(const EnvSpec& spec, Rng& rng, bool clean_start) {
  spec.validate();
  const double span = spec.workspace_hi - spec.workspace_lo;
  const double margin_lo = spec.workspace_lo + 0.15 * span;
  const double margin_hi = spec.workspace_hi - 0.15 * span;
  const double min_sep = 0.25 * span;

  EnvState state;
  if (clean_start) {
    const double center = spec.workspace_lo + 0.5 * span;
    state.position.assign(static_cast<std::size_t>(spec.dim), center);
    for (double& v : state.position) v += draw_uniform(rng, -0.01 * span, 0.01 * span);
  } else {
    state.position = detail::draw_point(rng, spec.dim, spec.workspace_lo + 0.1 * span,
                                        spec.workspace_hi - 0.1 * span);
  }
  if (spec.kind == EnvKind::kTwoWaypoint) {
    state.waypoint = detail::draw_point_away(rng, spec.dim, margin_lo, margin_hi,
                                             state.position, min_sep);
    state.goal = detail::draw_point_away(rng, spec.dim, margin_lo, margin_hi,
                                         state.waypoint, min_sep);
  } else {
    state.goal = detail::draw_point_away(rng, spec.dim, margin_lo, margin_hi,
                                         state.position, min_sep);
  }
  return state;
}

// Executes one action: position moves by action * control_scale plus process
// noise, clamped to the workspace; progress flags update on proximity.
inline EnvState env_step(const EnvState& state, const std::vector<double>& action,
                         const EnvSpec& spec, Rng& rng) {
  if (action.size() != static_cast<std::size_t>(spec.dim)) {
    throw std::invalid_argument("env_step: action width mismatch");
  }
  EnvState next = state;
  for (int j = 0; j < spec.dim; ++j) {
    if (!std::isfinite(action[static_cast<std::size_t>(j)])) {
      throw NumericError("env_step: non-finite action");
    }
    double noise = spec.process_noise * draw_normal(rng);
    double p = next.position[static_cast<std::size_t>(j)] +
               action[static_cast<std::size_t>(j)] * spec.control_scale + noise;
    p = std::min(std::max(p, spec.workspace_lo), spec.workspace_hi);
    next.position[static_cast<std::size_t>(j)] = p;
  }
  next.steps += 1;

  if (spec.kind == EnvKind::kTwoWaypoint && !next.waypoint_reached &&
      detail::distance(next.position, next.waypoint) <= spec.goal_tolerance) {
    next.waypoint_reached = true;
  }
  const bool goal_ok =
      detail::distance(next.position, next.goal) <= spec.success_tolerance();
  if (spec.kind == EnvKind::kTwoWaypoint) {
    if (next.waypoint_reached && goal_ok) next.success = true;
  } else if (goal_ok) {
    next.success = true;
  }
  return next;
}

// State features followed by goal features; a pure function of the state.
inline Condition condition_for(const EnvState& state, const EnvSpec& spec) {
  Condition cond;
  cond.state = state.position;
  if (spec.kind == EnvKind::kTwoWaypoint) {
    cond.state.push_back(state.waypoint_reached ? 1.0 : 0.0);
    cond.goal = state.waypoint;
    cond.goal.insert(cond.goal.end(), state.goal.begin(), state.goal.end());
  } else {
    cond.goal = state.goal;
  }
  return cond;
}

// Inverse of condition_for, for policies that need the raw state (the
// scripted expert wrapped as a decoder).
inline EnvState decode_condition(const Condition& cond, const EnvSpec& spec) {
  if (cond.width() != spec.cond_width()) {
    throw std::invalid_argument("decode_condition: condition width mismatch");
  }
  EnvState state;
  state.position.assign(cond.state.begin(), cond.state.begin() + spec.dim);
  if (spec.kind == EnvKind::kTwoWaypoint) {
    state.waypoint_reached = cond.state[static_cast<std::size_t>(spec.dim)] > 0.5;
    state.waypoint.assign(cond.goal.begin(), cond.goal.begin() + spec.dim);
    state.goal.assign(cond.goal.begin() + spec.dim, cond.goal.end());
  } else {
    state.goal = cond.goal;
  }
  return state;
}

// H proportional-control actions toward the current target, magnitude-capped
// at 1, simulated forward noise-free; switches to the final goal mid-chunk
// once the simulated position reaches the waypoint.
inline ActionChunk scripted_expert(const EnvState& state, const EnvSpec& spec) {
  spec.validate();
  ActionChunk chunk(spec.horizon, spec.dim);
  std::vector<double> sim = state.position;
  bool reached = state.waypoint_reached;
  for (int t = 0; t < spec.horizon; ++t) {
    const std::vector<double>& target =
        (spec.kind == EnvKind::kTwoWaypoint && !reached) ? state.waypoint : state.goal;
    double norm_sq = 0.0;
    std::vector<double> a(static_cast<std::size_t>(spec.dim));
    for (int j = 0; j < spec.dim; ++j) {
      a[static_cast<std::size_t>(j)] =
          (target[static_cast<std::size_t>(j)] - sim[static_cast<std::size_t>(j)]) /
          spec.control_scale;
      norm_sq += a[static_cast<std::size_t>(j)] * a[static_cast<std::size_t>(j)];
    }
    const double norm = std::sqrt(norm_sq);
    if (norm > 1.0) {
      for (double& v : a) v /= norm;
    }
    for (int j = 0; j < spec.dim; ++j) {
      chunk.at(t, j) = a[static_cast<std::size_t>(j)];
      sim[static_cast<std::size_t>(j)] += spec.control_scale * a[static_cast<std::size_t>(j)];
    }
    if (spec.kind == EnvKind::kTwoWaypoint && !reached &&
        detail::distance(sim, state.waypoint) <= spec.goal_tolerance) {
      reached = true;
    }
  }
  return chunk;
}

// ---------------------------------------------------------------------------
// Demonstration generation

namespace detail {
inline constexpr std::uint64_t kSaltDatasetEnv = 0x64617461;   // demonstration rollouts
inline constexpr std::uint64_t kSaltEpisodeEnv = 0x656e7653;   // evaluation env stream
inline constexpr std::uint64_t kSaltEpisodeDecoder = 0x646563;  // evaluation decoder stream
}  // namespace detail

// Rolls the scripted expert and records a (condition, chunk) pair at every
// control cycle. The first fifth of the episodes start clean (near-canonical
// start), the rest are randomized. Chunks are stored normalized to per-dim
// zero mean and unit scale; the stats live in the dataset.
inline Dataset generate_dataset(const EnvSpec& spec, int n_episodes,
                                std::uint64_t seed) {
  spec.validate();
  if (n_episodes <= 0) {
    throw std::invalid_argument("generate_dataset: need at least one episode");
  }
  const int n_clean = n_episodes / 5;

  std::vector<Condition> conds;
  std::vector<ActionChunk> raw_chunks;
  for (int e = 0; e < n_episodes; ++e) {
    Rng rng(derive_seed(seed, detail::kSaltDatasetEnv, static_cast<std::uint64_t>(e)));
    EnvState state = reset_env(spec, rng, e < n_clean);
    for (int cycle = 0; cycle < spec.max_cycles && !state.success; ++cycle) {
      ActionChunk chunk = scripted_expert(state, spec);
      conds.push_back(condition_for(state, spec));
      raw_chunks.push_back(chunk);
      std::vector<double> action(static_cast<std::size_t>(spec.dim));
      for (int j = 0; j < spec.dim; ++j) action[static_cast<std::size_t>(j)] = chunk.at(0, j);
      state = env_step(state, action, spec, rng);
    }
  }

  NormStats norm;
  norm.mean.assign(static_cast<std::size_t>(spec.dim), 0.0);
  norm.std_dev.assign(static_cast<std::size_t>(spec.dim), 0.0);
  const double count = static_cast<double>(raw_chunks.size()) * spec.horizon;
  for (const ActionChunk& chunk : raw_chunks) {
    for (int t = 0; t < spec.horizon; ++t) {
      for (int j = 0; j < spec.dim; ++j) norm.mean[static_cast<std::size_t>(j)] += chunk.at(t, j);
    }
  }
  for (double& m : norm.mean) m /= count;
  for (const ActionChunk& chunk : raw_chunks) {
    for (int t = 0; t < spec.horizon; ++t) {
      for (int j = 0; j < spec.dim; ++j) {
        const double d = chunk.at(t, j) - norm.mean[static_cast<std::size_t>(j)];
        norm.std_dev[static_cast<std::size_t>(j)] += d * d;
      }
    }
  }
  for (double& s : norm.std_dev) s = std::max(std::sqrt(s / count), 1e-6);

  Dataset dataset;
  dataset.env_kind = static_cast<int>(spec.kind);
  dataset.horizon = spec.horizon;
  dataset.dim = spec.dim;
  dataset.cond_width = spec.cond_width();
  dataset.norm = norm;
  dataset.pairs.reserve(raw_chunks.size());
  for (std::size_t i = 0; i < raw_chunks.size(); ++i) {
    dataset.pairs.push_back(DemoPair{conds[i], norm.normalize_chunk(raw_chunks[i])});
  }
  return dataset;
}

// ---------------------------------------------------------------------------
// Dataset file format. All integers int32 little-endian, all reals float64
// little-endian:
//   "EQMD1" | env kind | horizon | dim | cond_width | count
//   | mean[dim] | std[dim]
//   | count records of { condition (cond_width), chunk (horizon*dim) }
// The state/goal split of a condition is implied by the env kind and dim.

inline constexpr const char kDatasetMagic[] = "EQMD1";

inline void save_dataset(const std::string& path, const Dataset& dataset) {
  dataset.validate();
  std::string out;
  out.append(kDatasetMagic, 5);
  detail::put_i32le(out, dataset.env_kind);
  detail::put_i32le(out, dataset.horizon);
  detail::put_i32le(out, dataset.dim);
  detail::put_i32le(out, dataset.cond_width);
  detail::put_i32le(out, static_cast<std::int32_t>(dataset.pairs.size()));
  for (double v : dataset.norm.mean) detail::put_f64le(out, v);
  for (double v : dataset.norm.std_dev) detail::put_f64le(out, v);
  for (const DemoPair& pair : dataset.pairs) {
    for (double v : pair.cond.state) detail::put_f64le(out, v);
    for (double v : pair.cond.goal) detail::put_f64le(out, v);
    for (double v : pair.chunk.values) detail::put_f64le(out, v);
  }
  detail::write_file_bytes(path, out, "dataset");
}

inline Dataset load_dataset(const std::string& path) {
  std::string data = detail::read_file_bytes(path, "dataset");
  detail::ByteReader reader(data, "dataset");
  if (reader.bytes(5) != kDatasetMagic) {
    throw std::invalid_argument("dataset: bad magic in " + path);
  }
  Dataset dataset;
  dataset.env_kind = reader.i32le();
  dataset.horizon = reader.i32le();
  dataset.dim = reader.i32le();
  dataset.cond_width = reader.i32le();
  const std::int32_t count = reader.i32le();
  if (dataset.horizon <= 0 || dataset.dim <= 0 || dataset.cond_width <= 0 || count <= 0) {
    throw std::invalid_argument("dataset: bad header in " + path);
  }
  EnvSpec probe = make_env_spec(static_cast<EnvKind>(dataset.env_kind));
  probe.horizon = dataset.horizon;
  probe.dim = dataset.dim;
  const int state_width = probe.state_width();
  if (probe.cond_width() != dataset.cond_width) {
    throw std::invalid_argument("dataset: condition width inconsistent with env kind");
  }

  dataset.norm.mean.resize(static_cast<std::size_t>(dataset.dim));
  dataset.norm.std_dev.resize(static_cast<std::size_t>(dataset.dim));
  for (double& v : dataset.norm.mean) v = reader.f64le();
  for (double& v : dataset.norm.std_dev) v = reader.f64le();

  dataset.pairs.resize(static_cast<std::size_t>(count));
  for (DemoPair& pair : dataset.pairs) {
    pair.cond.state.resize(static_cast<std::size_t>(state_width));
    pair.cond.goal.resize(static_cast<std::size_t>(dataset.cond_width - state_width));
    for (double& v : pair.cond.state) v = reader.f64le();
    for (double& v : pair.cond.goal) v = reader.f64le();
    pair.chunk = ActionChunk(dataset.horizon, dataset.dim);
    for (double& v : pair.chunk.values) v = reader.f64le();
  }
  if (!reader.exhausted()) {
    throw std::invalid_argument("dataset: trailing bytes in " + path);
  }
  return dataset;
}

// ---------------------------------------------------------------------------
// Closed-loop execution

// Per-cycle decode budget. Equilibrium decoding stops at the residual
// threshold or the iteration cap; the flow baseline uses max_iterations as
// its Euler step count and ignores tau.
struct Budget {
  double tau = 1e-3;
  int max_iterations = 64;
};

struct DecodeResult {
  ActionChunk chunk;  // decoder-space (normalized) output
  int iterations = 0;
  long evaluations = 0;
  std::vector<double> residuals;
};

struct EpisodeResult {
  bool success = false;
  int cycles = 0;
  long evaluations = 0;
  bool diverged = false;
  std::vector<int> cycle_iterations;
  std::vector<std::vector<double>> cycle_residuals;  // when recorded
};

struct ClosedLoopOptions {
  int episodes = 200;
  std::uint64_t base_seed = 0;
  Budget budget;
  bool warm_start = false;
  int executed_steps = 1;  // e actions executed per control cycle
  WarmStartAlign alignment = WarmStartAlign::kShifted;
  bool record_residuals = false;
  NormStats norm;  // maps decoder-space chunks to environment actions
};

// Runs seeded evaluation episodes: per cycle, build the condition, decode a
// chunk from a warm or cold start, execute the first executed_steps actions,
// repeat until success or the cycle cap. Solver divergence fails the episode
// instead of crashing the run.
template <class Policy>
std::vector<EpisodeResult> run_closed_loop(Policy&& policy, const EnvSpec& spec,
                                           const ClosedLoopOptions& opt) {
  spec.validate();
  if (opt.episodes < 1) throw std::invalid_argument("run_closed_loop: episodes must be >= 1");
  if (opt.executed_steps < 1 || opt.executed_steps > spec.horizon / 2) {
    throw std::invalid_argument("run_closed_loop: executed_steps must be in [1, H/2]");
  }
  if (opt.norm.dim() != spec.dim) {
    throw std::invalid_argument("run_closed_loop: normalization stats dim mismatch");
  }

  std::vector<EpisodeResult> results(static_cast<std::size_t>(opt.episodes));
  for (int e = 0; e < opt.episodes; ++e) {
    Rng env_rng(derive_seed(opt.base_seed, detail::kSaltEpisodeEnv,
                            static_cast<std::uint64_t>(e)));
    Rng dec_rng(derive_seed(opt.base_seed, detail::kSaltEpisodeDecoder,
                            static_cast<std::uint64_t>(e)));
    EnvState state = reset_env(spec, env_rng, /*clean_start=*/false);
    EpisodeResult& result = results[static_cast<std::size_t>(e)];
    std::optional<ActionChunk> previous_output;

    for (int cycle = 0; cycle < spec.max_cycles && !state.success; ++cycle) {
      const Condition cond = condition_for(state, spec);
      ActionChunk init =
          (opt.warm_start && previous_output.has_value())
              ? warm_start_init(
                    WarmStartState{*previous_output, opt.executed_steps, opt.alignment},
                    dec_rng)
              : cold_start_init(spec.horizon, spec.dim, dec_rng);

      DecodeResult decoded;
      try {
        decoded = policy(cond, init, opt.budget);
      } catch (const SolverDivergence&) {
        result.diverged = true;
        break;
      }
      result.cycles += 1;
      result.evaluations += decoded.evaluations;
      result.cycle_iterations.push_back(decoded.iterations);
      if (opt.record_residuals) result.cycle_residuals.push_back(decoded.residuals);
      previous_output = decoded.chunk;

      for (int s = 0; s < opt.executed_steps && !state.success; ++s) {
        std::vector<double> action(static_cast<std::size_t>(spec.dim));
        for (int j = 0; j < spec.dim; ++j) {
          action[static_cast<std::size_t>(j)] =
              opt.norm.denormalize(decoded.chunk.at(s, j), j);
        }
        state = env_step(state, action, spec, env_rng);
      }
    }
    result.success = state.success;
  }
  return results;
}

}  // namespace eqm

#endif  // EQM_ENVS_HPP_
