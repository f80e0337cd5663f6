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

// Shared numeric vocabulary: action chunks, conditions, interpolants, and
// the normalized residual used as the solver's stopping statistic.

#ifndef EQM_CORE_HPP_
#define EQM_CORE_HPP_

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "eqm/errors.hpp"

namespace eqm {

// An H x d matrix of consecutive actions, stored row-major by horizon step.
// The flatten layout (time-major) is a stable contract: checkpoints, dataset
// files, and the warm-start half-chunk copy all depend on it.
struct ActionChunk {
  int horizon = 0;
  int dim = 0;
  std::vector<double> values;  // size horizon * dim, row-major

  ActionChunk() = default;
  ActionChunk(int h, int d, double fill = 0.0)
      : horizon(h), dim(d), values(static_cast<std::size_t>(h) * d, fill) {
    if (h <= 0 || d <= 0) {
      throw std::invalid_argument("ActionChunk: horizon and dim must be positive");
    }
  }

  double& at(int t, int j) { return values[static_cast<std::size_t>(t) * dim + j]; }
  double at(int t, int j) const { return values[static_cast<std::size_t>(t) * dim + j]; }

  std::size_t size() const { return values.size(); }

  bool same_shape(const ActionChunk& other) const {
    return horizon == other.horizon && dim == other.dim;
  }

  bool finite() const {
    for (double v : values) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

inline void require_shape(const ActionChunk& chunk, int horizon, int dim,
                          const char* who) {
  if (chunk.horizon != horizon || chunk.dim != dim ||
      chunk.values.size() != static_cast<std::size_t>(horizon) * dim) {
    throw std::invalid_argument(std::string(who) + ": chunk shape mismatch, expected " +
                                std::to_string(horizon) + "x" + std::to_string(dim) +
                                ", got " + std::to_string(chunk.horizon) + "x" +
                                std::to_string(chunk.dim));
  }
}

inline void require_finite(const ActionChunk& chunk, const char* who) {
  if (!chunk.finite()) {
    throw NumericError(std::string(who) + ": non-finite entries in action chunk");
  }
}

// Environment state features concatenated with goal features. Total width is
// fixed per environment and must match the field network's condition width.
struct Condition {
  std::vector<double> state;
  std::vector<double> goal;

  int width() const { return static_cast<int>(state.size() + goal.size()); }

  std::vector<double> flat() const {
    std::vector<double> out;
    out.reserve(state.size() + goal.size());
    out.insert(out.end(), state.begin(), state.end());
    out.insert(out.end(), goal.begin(), goal.end());
    return out;
  }

  bool finite() const {
    for (double v : state) {
      if (!std::isfinite(v)) return false;
    }
    for (double v : goal) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

// Convex combination gamma*data + (1-gamma)*noise together with its parts.
struct Interpolant {
  ActionChunk a_gamma;
  double gamma = 0.0;
  ActionChunk data;
  ActionChunk noise;
};

inline Interpolant make_interpolant(const ActionChunk& data, const ActionChunk& noise,
                                    double gamma) {
  if (!data.same_shape(noise)) {
    throw std::invalid_argument("make_interpolant: data and noise shapes differ");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("make_interpolant: gamma outside [0,1]");
  }
  Interpolant out;
  out.gamma = gamma;
  out.data = data;
  out.noise = noise;
  out.a_gamma = ActionChunk(data.horizon, data.dim);
  for (std::size_t i = 0; i < data.values.size(); ++i) {
    out.a_gamma.values[i] = gamma * data.values[i] + (1.0 - gamma) * noise.values[i];
  }
  return out;
}

// Frobenius norm of the field output divided by sqrt(H*d). This is the
// stopping statistic; the same quantity appears in the convergence bounds.
inline double normalized_residual(const ActionChunk& field_output) {
  double sq = 0.0;
  for (double v : field_output.values) {
    if (!std::isfinite(v)) {
      throw NumericError("normalized_residual: non-finite field output");
    }
    sq += v * v;
  }
  double denom = std::sqrt(static_cast<double>(field_output.values.size()));
  return std::sqrt(sq) / denom;
}

inline std::vector<double> chunk_flatten(const ActionChunk& chunk) {
  return chunk.values;
}

inline ActionChunk chunk_unflatten(const std::vector<double>& flat, int horizon, int dim) {
  if (flat.size() != static_cast<std::size_t>(horizon) * dim) {
    throw std::invalid_argument("chunk_unflatten: length " + std::to_string(flat.size()) +
                                " does not match " + std::to_string(horizon) + "x" +
                                std::to_string(dim));
  }
  ActionChunk chunk(horizon, dim);
  chunk.values = flat;
  return chunk;
}

}  // namespace eqm

#endif  // EQM_CORE_HPP_
