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

// The trainable conditional vector field: a plain multilayer perceptron on
// [flatten(chunk); condition; (time)] with exact reverse-mode parameter
// gradients, plus closed-form analytic fields used as test instruments.

#ifndef EQM_FIELD_HPP_
#define EQM_FIELD_HPP_

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eqm/core.hpp"
#include "eqm/errors.hpp"
#include "eqm/rng.hpp"

namespace eqm {

enum class Activation : int {
  kTanh = 0,
  kIdentity = 1,  // test instrument; trained fields use tanh
};

struct FieldConfig {
  int horizon = 8;
  int dim = 2;
  int cond_width = 4;
  std::vector<int> hidden = {128, 128};
  Activation activation = Activation::kTanh;
  bool time_conditioned = false;  // true only for the flow baseline

  int input_width() const {
    return horizon * dim + cond_width + (time_conditioned ? 1 : 0);
  }
  int output_width() const { return horizon * dim; }

  void validate() const {
    if (horizon <= 0 || dim <= 0 || cond_width <= 0) {
      throw std::invalid_argument("FieldConfig: horizon, dim, cond_width must be positive");
    }
    for (int w : hidden) {
      if (w <= 0) throw std::invalid_argument("FieldConfig: hidden widths must be positive");
    }
  }

  bool operator==(const FieldConfig&) const = default;
};

struct LayerParams {
  int in = 0;
  int out = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;  // out

  LayerParams() = default;
  LayerParams(int in_width, int out_width)
      : in(in_width),
        out(out_width),
        w(static_cast<std::size_t>(out_width) * in_width, 0.0),
        b(static_cast<std::size_t>(out_width), 0.0) {}
};

struct FieldParams {
  FieldConfig config;
  std::vector<LayerParams> layers;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
  }
};

// Gradients share the parameter layout.
using FieldGradient = std::vector<LayerParams>;

inline FieldGradient zero_gradient(const FieldParams& params) {
  FieldGradient grad;
  grad.reserve(params.layers.size());
  for (const auto& l : params.layers) grad.emplace_back(l.in, l.out);
  return grad;
}

// Fan-in scaled uniform init; the final layer is zero so the untrained field
// is the zero field (initial residual is exactly zero).
inline FieldParams init_params(const FieldConfig& config, std::uint64_t rng_seed) {
  config.validate();
  FieldParams params;
  params.config = config;

  std::vector<int> widths;
  widths.push_back(config.input_width());
  for (int h : config.hidden) widths.push_back(h);
  widths.push_back(config.output_width());

  Rng rng(rng_seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    LayerParams layer(widths[l], widths[l + 1]);
    bool final_layer = (l + 2 == widths.size());
    if (!final_layer) {
      double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : layer.w) v = dist(rng);
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

namespace detail {

inline double activate(Activation act, double z) {
  switch (act) {
    case Activation::kTanh:
      return std::tanh(z);
    case Activation::kIdentity:
      return z;
  }
  return z;
}

// Derivative in terms of the post-activation value.
inline double activate_grad_from_output(Activation act, double h) {
  switch (act) {
    case Activation::kTanh:
      return 1.0 - h * h;
    case Activation::kIdentity:
      return 1.0;
  }
  return 1.0;
}

inline void pack_input(const FieldConfig& config, const ActionChunk& chunk,
                       const Condition& cond, std::optional<double> time,
                       double* dst) {
  require_shape(chunk, config.horizon, config.dim, "field_forward");
  if (cond.width() != config.cond_width) {
    throw std::invalid_argument("field input: condition width " +
                                std::to_string(cond.width()) + " != configured " +
                                std::to_string(config.cond_width));
  }
  if (config.time_conditioned && !time.has_value()) {
    throw std::invalid_argument("field input: time required for a time-conditioned field");
  }
  if (!config.time_conditioned && time.has_value()) {
    throw std::invalid_argument("field input: time supplied to a time-free field");
  }
  std::size_t k = 0;
  for (double v : chunk.values) dst[k++] = v;
  for (double v : cond.state) dst[k++] = v;
  for (double v : cond.goal) dst[k++] = v;
  if (time.has_value()) dst[k++] = *time;
}

// Single-sample scratch reused across calls in hot loops.
struct ForwardScratch {
  std::vector<std::vector<double>> acts;  // acts[0] = input, acts[L] = output

  void resize(const FieldParams& params) {
    acts.resize(params.layers.size() + 1);
    acts[0].resize(params.config.input_width());
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      acts[l + 1].resize(params.layers[l].out);
    }
  }
};

// Forward through all layers; activation applied to every layer but the last.
inline void forward_core(const FieldParams& params, ForwardScratch& scratch) {
  const std::size_t n_layers = params.layers.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const LayerParams& layer = params.layers[l];
    const double* x = scratch.acts[l].data();
    double* y = scratch.acts[l + 1].data();
    const bool last = (l + 1 == n_layers);
    for (int o = 0; o < layer.out; ++o) {
      const double* wrow = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
      double s = layer.b[o];
      for (int i = 0; i < layer.in; ++i) s += wrow[i] * x[i];
      y[o] = last ? s : activate(params.config.activation, s);
    }
  }
}

inline void check_layers_finite(const ForwardScratch& scratch, const char* who) {
  for (std::size_t l = 1; l < scratch.acts.size(); ++l) {
    for (double v : scratch.acts[l]) {
      if (!std::isfinite(v)) {
        throw NumericError(std::string(who) + ": non-finite value in layer " +
                           std::to_string(l - 1));
      }
    }
  }
}

}  // namespace detail

inline ActionChunk field_forward(const FieldParams& params, const ActionChunk& chunk,
                                 const Condition& cond,
                                 std::optional<double> time = std::nullopt) {
  detail::ForwardScratch scratch;
  scratch.resize(params);
  detail::pack_input(params.config, chunk, cond, time, scratch.acts[0].data());
  detail::forward_core(params, scratch);

  ActionChunk out(params.config.horizon, params.config.dim);
  out.values = scratch.acts.back();
  if (!out.finite()) detail::check_layers_finite(scratch, "field_forward");
  return out;
}

// One (input, target) pair for the mean-squared-error batch gradient.
struct FieldSample {
  ActionChunk chunk;
  Condition cond;
  ActionChunk target;
  std::optional<double> time;
};

// Exact reverse-mode gradient of the batch-mean squared error
//   loss = (1/B) * sum_b ||f(chunk_b; cond_b) - target_b||_F^2.
// Accumulation runs in sample order so results are bit-reproducible.
inline double field_param_gradient(const FieldParams& params,
                                   std::span<const FieldSample> batch,
                                   FieldGradient& grad) {
  if (batch.empty()) {
    throw std::invalid_argument("field_param_gradient: empty batch");
  }
  const std::size_t n_layers = params.layers.size();
  if (grad.size() != n_layers) grad = zero_gradient(params);
  for (auto& g : grad) {
    std::fill(g.w.begin(), g.w.end(), 0.0);
    std::fill(g.b.begin(), g.b.end(), 0.0);
  }

  detail::ForwardScratch scratch;
  scratch.resize(params);
  std::vector<std::vector<double>> delta(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) delta[l].resize(params.layers[l].out);

  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;

  for (const FieldSample& sample : batch) {
    require_shape(sample.target, params.config.horizon, params.config.dim,
                  "field_param_gradient");
    detail::pack_input(params.config, sample.chunk, sample.cond, sample.time,
                       scratch.acts[0].data());
    detail::forward_core(params, scratch);

    // delta at the output layer: d(loss)/d(pre-activation) with linear output.
    const std::vector<double>& y = scratch.acts[n_layers];
    double sample_sq = 0.0;
    for (std::size_t o = 0; o < y.size(); ++o) {
      double diff = y[o] - sample.target.values[o];
      sample_sq += diff * diff;
      delta[n_layers - 1][o] = 2.0 * inv_batch * diff;
    }
    if (!std::isfinite(sample_sq)) {
      detail::check_layers_finite(scratch, "field_param_gradient");
      throw NumericError("field_param_gradient: non-finite loss");
    }
    loss += inv_batch * sample_sq;

    for (std::size_t l = n_layers; l-- > 0;) {
      const LayerParams& layer = params.layers[l];
      LayerParams& g = grad[l];
      const double* x = scratch.acts[l].data();
      const double* d = delta[l].data();
      for (int o = 0; o < layer.out; ++o) {
        double* grow = g.w.data() + static_cast<std::size_t>(o) * layer.in;
        const double dv = d[o];
        for (int i = 0; i < layer.in; ++i) grow[i] += dv * x[i];
        g.b[o] += dv;
      }
      if (l > 0) {
        // propagate through the activation of the previous layer
        std::vector<double>& dprev = delta[l - 1];
        for (int i = 0; i < layer.in; ++i) {
          double s = 0.0;
          for (int o = 0; o < layer.out; ++o) {
            s += layer.w[static_cast<std::size_t>(o) * layer.in + i] * d[o];
          }
          dprev[i] = s * detail::activate_grad_from_output(
                             params.config.activation, scratch.acts[l][i]);
        }
      }
    }
  }
  return loss;
}

inline double field_param_gradient(const FieldParams& params,
                                   const std::vector<FieldSample>& batch,
                                   FieldGradient& grad) {
  return field_param_gradient(params, std::span<const FieldSample>(batch), grad);
}

// ---------------------------------------------------------------------------
// Analytic fields with known equilibria, energies, and smoothness constants.
// Convergence bounds are asserted only on these; learned fields are measured.

enum class AnalyticKind : int {
  kLinearContraction,        // kappa * (A - A*)
  kQuadraticEnergyGradient,  // gradient of 0.5 * kappa * ||A - A*||^2
  kRotation,                 // adds a divergence-free skew component
};

struct AnalyticField {
  AnalyticKind kind = AnalyticKind::kLinearContraction;
  double stiffness = 1.0;  // kappa > 0
  ActionChunk equilibrium;
  double rotation_strength = 0.0;  // omega

  void validate() const {
    if (!(stiffness > 0.0)) throw std::invalid_argument("AnalyticField: stiffness must be > 0");
    if (equilibrium.values.empty()) {
      throw std::invalid_argument("AnalyticField: equilibrium point required");
    }
  }
};

inline ActionChunk analytic_eval(const AnalyticField& field, const ActionChunk& chunk) {
  field.validate();
  require_shape(chunk, field.equilibrium.horizon, field.equilibrium.dim, "analytic_eval");
  ActionChunk out(chunk.horizon, chunk.dim);
  const std::size_t n = chunk.values.size();
  for (std::size_t i = 0; i < n; ++i) {
    out.values[i] = field.stiffness * (chunk.values[i] - field.equilibrium.values[i]);
  }
  if (field.kind == AnalyticKind::kRotation) {
    // skew-pair consecutive flattened coordinates: (u, v) -> (-v, u)
    for (std::size_t i = 0; i + 1 < n; i += 2) {
      double u = chunk.values[i] - field.equilibrium.values[i];
      double v = chunk.values[i + 1] - field.equilibrium.values[i + 1];
      out.values[i] += -field.rotation_strength * v;
      out.values[i + 1] += field.rotation_strength * u;
    }
  }
  return out;
}

// Surrogate energy for the conservative kinds; the rotation kind has none.
inline double analytic_energy(const AnalyticField& field, const ActionChunk& chunk) {
  if (field.kind == AnalyticKind::kRotation) {
    throw std::invalid_argument("analytic_energy: rotation field is not conservative");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < chunk.values.size(); ++i) {
    double d = chunk.values[i] - field.equilibrium.values[i];
    sq += d * d;
  }
  return 0.5 * field.stiffness * sq;
}

inline double analytic_smoothness(const AnalyticField& field) {
  if (field.kind == AnalyticKind::kRotation) {
    return std::sqrt(field.stiffness * field.stiffness +
                     field.rotation_strength * field.rotation_strength);
  }
  return field.stiffness;
}

// ---------------------------------------------------------------------------
// Checkpoint format. Byte layout (all integers int32 little-endian, all
// parameters IEEE-754 float64 little-endian):
//   "EQMF1" | horizon | dim | cond_width | n_hidden | hidden[0..n-1]
//   | activation tag | time_conditioned | layer 0 W row-major, layer 0 b, ...

namespace detail {

inline void put_i32le(std::string& out, std::int32_t v) {
  auto u = static_cast<std::uint32_t>(v);
  out.push_back(static_cast<char>(u & 0xff));
  out.push_back(static_cast<char>((u >> 8) & 0xff));
  out.push_back(static_cast<char>((u >> 16) & 0xff));
  out.push_back(static_cast<char>((u >> 24) & 0xff));
}

inline void put_f64le(std::string& out, double d) {
  auto u = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  ByteReader(const std::string& data, const std::string& what)
      : data_(data), what_(what) {}

  std::int32_t i32le() {
    require(4);
    std::uint32_t u = 0;
    for (int i = 0; i < 4; ++i) {
      u |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return static_cast<std::int32_t>(u);
  }

  double f64le() {
    require(8);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) {
      u |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return std::bit_cast<double>(u);
  }

  std::string bytes(std::size_t n) {
    require(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool exhausted() const { return pos_ == data_.size(); }

 private:
  void require(std::size_t n) {
    if (pos_ + n > data_.size()) {
      throw std::invalid_argument(what_ + ": truncated file");
    }
  }

  const std::string& data_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::string read_file_bytes(const std::string& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument(what + ": cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

inline void write_file_bytes(const std::string& path, const std::string& data,
                             const std::string& what) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::invalid_argument(what + ": cannot open " + path + " for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error(what + ": short write to " + path);
}

}  // namespace detail

inline constexpr const char kCheckpointMagic[] = "EQMF1";

inline void save_checkpoint(const std::string& path, const FieldParams& params) {
  std::string out;
  out.append(kCheckpointMagic, 5);
  detail::put_i32le(out, params.config.horizon);
  detail::put_i32le(out, params.config.dim);
  detail::put_i32le(out, params.config.cond_width);
  detail::put_i32le(out, static_cast<std::int32_t>(params.config.hidden.size()));
  for (int h : params.config.hidden) detail::put_i32le(out, h);
  detail::put_i32le(out, static_cast<std::int32_t>(params.config.activation));
  detail::put_i32le(out, params.config.time_conditioned ? 1 : 0);
  for (const LayerParams& layer : params.layers) {
    for (double v : layer.w) detail::put_f64le(out, v);
    for (double v : layer.b) detail::put_f64le(out, v);
  }
  detail::write_file_bytes(path, out, "checkpoint");
}

inline FieldParams load_checkpoint(const std::string& path) {
  std::string data = detail::read_file_bytes(path, "checkpoint");
  detail::ByteReader reader(data, "checkpoint");
  if (reader.bytes(5) != kCheckpointMagic) {
    throw std::invalid_argument("checkpoint: bad magic in " + path);
  }
  FieldConfig config;
  config.horizon = reader.i32le();
  config.dim = reader.i32le();
  config.cond_width = reader.i32le();
  std::int32_t n_hidden = reader.i32le();
  if (n_hidden < 0 || n_hidden > 64) {
    throw std::invalid_argument("checkpoint: implausible hidden layer count");
  }
  config.hidden.clear();
  for (int i = 0; i < n_hidden; ++i) config.hidden.push_back(reader.i32le());
  config.activation = static_cast<Activation>(reader.i32le());
  config.time_conditioned = reader.i32le() != 0;
  config.validate();

  FieldParams params = init_params(config, 0);
  for (LayerParams& layer : params.layers) {
    for (double& v : layer.w) v = reader.f64le();
    for (double& v : layer.b) v = reader.f64le();
  }
  if (!reader.exhausted()) {
    throw std::invalid_argument("checkpoint: trailing bytes in " + path);
  }
  return params;
}

}  // namespace eqm

#endif  // EQM_FIELD_HPP_
