// Copyright 2026 The TreeZero Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense networks with exact backpropagation, Adam and SGD-with-momentum, and
// the handful of vector utilities the policy/value heads need.

#ifndef TREEZERO_DIFFNET_HPP_
#define TREEZERO_DIFFNET_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "treezero/common.hpp"

namespace tz::nn {

enum class Activation { identity, relu, tanh };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct LayerSpec {
  int in_dim = 1;
  int out_dim = 1;
  Activation activation = Activation::identity;

  bool operator==(const LayerSpec&) const = default;
};

struct MlpSpec {
  std::vector<LayerSpec> layers;

  // Throws ConfigError on empty specs, non-positive dims or a dimension
  // mismatch between consecutive layers.
  void validate() const;
  int input_dim() const { return layers.front().in_dim; }
  int output_dim() const { return layers.back().out_dim; }

  // dims = {in, h1, ..., out}; hidden layers use `hidden`, the last `output`.
  static MlpSpec make(const std::vector<int>& dims, Activation hidden,
                      Activation output);

  bool operator==(const MlpSpec&) const = default;
};

// All weights and biases of one network in a single contiguous buffer.
// Layer l stores its weight matrix input-major: W[i * out_dim + o].
class ParamStore {
 public:
  ParamStore() = default;
  explicit ParamStore(const MlpSpec& spec);  // zero-filled

  std::span<double> weights(std::size_t layer);
  std::span<const double> weights(std::size_t layer) const;
  std::span<double> bias(std::size_t layer);
  std::span<const double> bias(std::size_t layer) const;

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  std::size_t size() const { return data_.size(); }
  std::size_t num_layers() const { return offsets_.size(); }

  void set_zero();
  bool all_finite() const;

  bool operator==(const ParamStore& o) const { return data_ == o.data_; }

 private:
  struct Offsets {
    std::size_t w, b, in, out;
  };
  std::vector<double> data_;
  std::vector<Offsets> offsets_;
};

// Post-activation outputs of every layer; activations[0] is the input.
struct ForwardCache {
  std::vector<Vec> activations;
};

ParamStore init_params(const MlpSpec& spec, std::uint64_t seed);

class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, std::uint64_t seed);
  Mlp(MlpSpec spec, ParamStore params);

  const MlpSpec& spec() const { return spec_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  int input_dim() const { return spec_.input_dim(); }
  int output_dim() const { return spec_.output_dim(); }

  // Throws on dimension mismatch or non-finite input. `cache` is optional.
  Vec forward(std::span<const double> input, ForwardCache* cache = nullptr) const;

  // Accumulates d<output_grad, output>/dparams into `grads` and returns the
  // gradient with respect to the input.
  Vec backward(const ForwardCache& cache, std::span<const double> output_grad,
               ParamStore& grads) const;

 private:
  MlpSpec spec_;
  ParamStore params_;
};

struct BackwardResult {
  ParamStore param_grads;
  Vec input_grad;
};

// Convenience wrapper that returns freshly allocated gradients.
BackwardResult backward(const Mlp& net, const ForwardCache& cache,
                        std::span<const double> output_grad);

// --- optimizers -------------------------------------------------------------

enum class OptimizerKind { adam, sgd_momentum };

const char* to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;
  double weight_decay = 0.0;

  bool operator==(const OptimizerConfig&) const = default;
};

// Optimizer over an ordered list of parameter tensors. Moment (Adam) or
// velocity (SGD) buffers are created on the first step and must keep the same
// shapes afterwards.
class Optimizer {
 public:
  Optimizer() = default;
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  // Throws Error if any gradient is non-finite; parameters stay untouched.
  void step(const std::vector<std::span<double>>& params,
            const std::vector<std::span<const double>>& grads);

  const OptimizerConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  std::int64_t step_count() const { return steps_; }

  void save(std::ostream& os) const;
  static Optimizer load(std::istream& is);

  bool operator==(const Optimizer&) const = default;

 private:
  void ensure_state(const std::vector<std::span<double>>& params);

  OptimizerConfig cfg_;
  std::int64_t steps_ = 0;
  std::vector<Vec> first_;   // Adam m, or SGD velocity
  std::vector<Vec> second_;  // Adam v
};

// Single-tensor helpers mirroring the two update rules.
void adam_step(std::span<double> params, std::span<const double> grads,
               Optimizer& state);
void sgd_momentum_step(std::span<double> params, std::span<const double> grads,
                       Optimizer& state);

// --- vector utilities -------------------------------------------------------

Vec softmax(std::span<const double> logits, double temperature = 1.0);
Vec log_softmax(std::span<const double> logits);
double cosine_similarity(std::span<const double> u, std::span<const double> v);
// Gradient of cosine_similarity with respect to u.
Vec cosine_similarity_grad(std::span<const double> u, std::span<const double> v);
double cross_entropy(std::span<const double> target_probs,
                     std::span<const double> logits);
// d cross_entropy / d logits = softmax(logits) - target.
Vec cross_entropy_grad(std::span<const double> target_probs,
                       std::span<const double> logits);
double entropy(std::span<const double> probs);

// --- checkpoints ------------------------------------------------------------
//
// Text format, one token per value, doubles in C99 hexadecimal notation so a
// save/load cycle is bit-exact:
//   mlp v1 <num_layers>
//   layer <in> <out> <activation>          (repeated)
//   params <count> <hex> ...

void save_mlp(std::ostream& os, const Mlp& net);
Mlp load_mlp(std::istream& is);

void write_doubles(std::ostream& os, std::span<const double> values);
Vec read_doubles(std::istream& is, std::size_t count);
std::string hex_double(double x);
double parse_double(const std::string& token);
// Reads the next whitespace token and throws if it differs from `expected`.
void expect_token(std::istream& is, const std::string& expected);

}  // namespace tz::nn

#endif  // TREEZERO_DIFFNET_HPP_
