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

#include "treezero/diffnet.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <numeric>
#include <ostream>

namespace tz::nn {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation: " + s);
}

void MlpSpec::validate() const {
  if (layers.empty()) throw ConfigError("MlpSpec has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].in_dim < 1 || layers[i].out_dim < 1) {
      throw ConfigError("layer " + std::to_string(i) + " has a non-positive dimension");
    }
    if (i + 1 < layers.size() && layers[i].out_dim != layers[i + 1].in_dim) {
      throw ConfigError("layer " + std::to_string(i) + " out_dim " +
                        std::to_string(layers[i].out_dim) + " != layer " +
                        std::to_string(i + 1) + " in_dim " +
                        std::to_string(layers[i + 1].in_dim));
    }
  }
}

MlpSpec MlpSpec::make(const std::vector<int>& dims, Activation hidden,
                      Activation output) {
  if (dims.size() < 2) throw ConfigError("MlpSpec::make needs at least two dims");
  MlpSpec spec;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = i + 2 == dims.size();
    spec.layers.push_back({dims[i], dims[i + 1], last ? output : hidden});
  }
  spec.validate();
  return spec;
}

ParamStore::ParamStore(const MlpSpec& spec) {
  spec.validate();
  std::size_t cursor = 0;
  for (const auto& l : spec.layers) {
    const auto in = static_cast<std::size_t>(l.in_dim);
    const auto out = static_cast<std::size_t>(l.out_dim);
    offsets_.push_back({cursor, cursor + in * out, in, out});
    cursor += in * out + out;
  }
  data_.assign(cursor, 0.0);
}

std::span<double> ParamStore::weights(std::size_t layer) {
  const auto& o = offsets_.at(layer);
  return std::span<double>(data_).subspan(o.w, o.in * o.out);
}
std::span<const double> ParamStore::weights(std::size_t layer) const {
  const auto& o = offsets_.at(layer);
  return std::span<const double>(data_).subspan(o.w, o.in * o.out);
}
std::span<double> ParamStore::bias(std::size_t layer) {
  const auto& o = offsets_.at(layer);
  return std::span<double>(data_).subspan(o.b, o.out);
}
std::span<const double> ParamStore::bias(std::size_t layer) const {
  const auto& o = offsets_.at(layer);
  return std::span<const double>(data_).subspan(o.b, o.out);
}

void ParamStore::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

bool ParamStore::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double x) { return std::isfinite(x); });
}

ParamStore init_params(const MlpSpec& spec, std::uint64_t seed) {
  ParamStore store(spec);
  Rng rng(seed);
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& ls = spec.layers[l];
    const double bound = std::sqrt(6.0 / (ls.in_dim + ls.out_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : store.weights(l)) w = dist(rng);
  }
  return store;
}

Mlp::Mlp(MlpSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), params_(init_params(spec_, seed)) {}

Mlp::Mlp(MlpSpec spec, ParamStore params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  if (params_.size() != ParamStore(spec_).size()) {
    throw Error("ParamStore does not match MlpSpec");
  }
}

namespace {

void apply_activation(Activation a, Vec& v) {
  switch (a) {
    case Activation::identity: break;
    case Activation::relu:
      for (double& x : v) x = x > 0.0 ? x : 0.0;
      break;
    case Activation::tanh:
      for (double& x : v) x = std::tanh(x);
      break;
  }
}

}  // namespace

Vec Mlp::forward(std::span<const double> input, ForwardCache* cache) const {
  if (static_cast<int>(input.size()) != input_dim()) {
    throw Error("forward: input length " + std::to_string(input.size()) +
                " != " + std::to_string(input_dim()));
  }
  for (double x : input) {
    if (!std::isfinite(x)) throw Error("forward: non-finite input");
  }
  Vec x(input.begin(), input.end());
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(x);
  }
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    const auto& ls = spec_.layers[l];
    const auto w = params_.weights(l);
    const auto b = params_.bias(l);
    Vec y(b.begin(), b.end());
    const std::size_t out = ls.out_dim;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      const double* row = w.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) y[o] += xi * row[o];
    }
    apply_activation(ls.activation, y);
    x = std::move(y);
    if (cache) cache->activations.push_back(x);
  }
  return x;
}

Vec Mlp::backward(const ForwardCache& cache, std::span<const double> output_grad,
                  ParamStore& grads) const {
  const std::size_t nl = spec_.layers.size();
  if (cache.activations.size() != nl + 1) throw Error("backward: cache does not match network");
  if (static_cast<int>(output_grad.size()) != output_dim()) {
    throw Error("backward: output_grad length mismatch");
  }
  if (grads.size() != params_.size()) throw Error("backward: gradient store shape mismatch");

  Vec g(output_grad.begin(), output_grad.end());
  for (std::size_t l = nl; l-- > 0;) {
    const auto& ls = spec_.layers[l];
    const Vec& y = cache.activations[l + 1];
    const Vec& x = cache.activations[l];
    switch (ls.activation) {
      case Activation::identity: break;
      case Activation::relu:
        for (std::size_t o = 0; o < g.size(); ++o) {
          if (y[o] <= 0.0) g[o] = 0.0;
        }
        break;
      case Activation::tanh:
        for (std::size_t o = 0; o < g.size(); ++o) g[o] *= 1.0 - y[o] * y[o];
        break;
    }
    auto gb = grads.bias(l);
    for (std::size_t o = 0; o < g.size(); ++o) gb[o] += g[o];
    auto gw = grads.weights(l);
    const auto w = params_.weights(l);
    const std::size_t out = ls.out_dim;
    Vec gx(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double xi = x[i];
      double* grow = gw.data() + i * out;
      const double* wrow = w.data() + i * out;
      double acc = 0.0;
      for (std::size_t o = 0; o < out; ++o) {
        grow[o] += xi * g[o];
        acc += wrow[o] * g[o];
      }
      gx[i] = acc;
    }
    g = std::move(gx);
  }
  return g;
}

BackwardResult backward(const Mlp& net, const ForwardCache& cache,
                        std::span<const double> output_grad) {
  BackwardResult r{ParamStore(net.spec()), {}};
  r.input_grad = net.backward(cache, output_grad, r.param_grads);
  return r;
}

// --- optimizers -------------------------------------------------------------

const char* to_string(OptimizerKind k) {
  return k == OptimizerKind::adam ? "adam" : "sgd_momentum";
}

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd_momentum") return OptimizerKind::sgd_momentum;
  throw ConfigError("unknown optimizer kind: " + s);
}

void Optimizer::ensure_state(const std::vector<std::span<double>>& params) {
  if (first_.empty()) {
    for (const auto& p : params) {
      first_.emplace_back(p.size(), 0.0);
      if (cfg_.kind == OptimizerKind::adam) second_.emplace_back(p.size(), 0.0);
    }
    return;
  }
  if (first_.size() != params.size()) throw Error("optimizer: tensor count changed");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (first_[k].size() != params[k].size()) throw Error("optimizer: tensor shape changed");
  }
}

void Optimizer::step(const std::vector<std::span<double>>& params,
                     const std::vector<std::span<const double>>& grads) {
  if (params.size() != grads.size()) throw Error("optimizer: params/grads count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != grads[k].size()) throw Error("optimizer: params/grads shape mismatch");
    for (double g : grads[k]) {
      if (!std::isfinite(g)) throw Error("optimizer: non-finite gradient rejected");
    }
  }
  ensure_state(params);
  ++steps_;
  const double lr = cfg_.lr;
  const double wd = cfg_.weight_decay;
  if (cfg_.kind == OptimizerKind::adam) {
    const double t = static_cast<double>(steps_);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto p = params[k];
      auto g = grads[k];
      Vec& m = first_[k];
      Vec& v = second_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i] + wd * p[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  } else {
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto p = params[k];
      auto g = grads[k];
      Vec& vel = first_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        vel[i] = cfg_.momentum * vel[i] + g[i] + wd * p[i];
        p[i] -= lr * vel[i];
      }
    }
  }
}

void adam_step(std::span<double> params, std::span<const double> grads,
               Optimizer& state) {
  if (state.config().kind != OptimizerKind::adam) throw Error("adam_step on non-Adam state");
  state.step({params}, {grads});
}

void sgd_momentum_step(std::span<double> params, std::span<const double> grads,
                       Optimizer& state) {
  if (state.config().kind != OptimizerKind::sgd_momentum) {
    throw Error("sgd_momentum_step on non-SGD state");
  }
  state.step({params}, {grads});
}

void Optimizer::save(std::ostream& os) const {
  os << "optimizer v1 " << to_string(cfg_.kind) << ' ' << hex_double(cfg_.lr) << ' '
     << hex_double(cfg_.beta1) << ' ' << hex_double(cfg_.beta2) << ' '
     << hex_double(cfg_.eps) << ' ' << hex_double(cfg_.momentum) << ' '
     << hex_double(cfg_.weight_decay) << ' ' << steps_ << ' ' << first_.size() << ' '
     << second_.size() << '\n';
  for (const auto& t : first_) {
    os << t.size() << ' ';
    write_doubles(os, t);
  }
  for (const auto& t : second_) {
    os << t.size() << ' ';
    write_doubles(os, t);
  }
}

Optimizer Optimizer::load(std::istream& is) {
  expect_token(is, "optimizer");
  expect_token(is, "v1");
  std::string kind, tok;
  is >> kind;
  OptimizerConfig cfg;
  cfg.kind = optimizer_from_string(kind);
  double* fields[] = {&cfg.lr, &cfg.beta1, &cfg.beta2, &cfg.eps, &cfg.momentum,
                      &cfg.weight_decay};
  for (double* f : fields) {
    is >> tok;
    *f = parse_double(tok);
  }
  Optimizer opt(cfg);
  std::size_t n1 = 0, n2 = 0;
  is >> opt.steps_ >> n1 >> n2;
  if (!is) throw Error("optimizer checkpoint truncated");
  for (std::size_t k = 0; k < n1; ++k) {
    std::size_t sz = 0;
    is >> sz;
    opt.first_.push_back(read_doubles(is, sz));
  }
  for (std::size_t k = 0; k < n2; ++k) {
    std::size_t sz = 0;
    is >> sz;
    opt.second_.push_back(read_doubles(is, sz));
  }
  return opt;
}

// --- vector utilities -------------------------------------------------------

Vec softmax(std::span<const double> logits, double temperature) {
  if (logits.empty()) throw Error("softmax of an empty vector");
  if (!(temperature > 0.0)) throw Error("softmax temperature must be positive");
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vec p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) throw Error("softmax of non-finite logits");
    p[i] = std::exp((logits[i] - mx) / temperature);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

Vec log_softmax(std::span<const double> logits) {
  if (logits.empty()) throw Error("log_softmax of an empty vector");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double lse = mx + std::log(sum);
  Vec out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw Error("cosine_similarity: length mismatch");
  const double nu = std::sqrt(dot(u, u));
  const double nv = std::sqrt(dot(v, v));
  if (!(nu > 0.0) || !(nv > 0.0)) throw Error("cosine_similarity: zero-norm input");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

Vec cosine_similarity_grad(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw Error("cosine_similarity: length mismatch");
  const double nu = std::sqrt(dot(u, u));
  const double nv = std::sqrt(dot(v, v));
  if (!(nu > 0.0) || !(nv > 0.0)) throw Error("cosine_similarity: zero-norm input");
  const double cos = dot(u, v) / (nu * nv);
  Vec g(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    g[i] = v[i] / (nu * nv) - cos * u[i] / (nu * nu);
  }
  return g;
}

double cross_entropy(std::span<const double> target_probs,
                     std::span<const double> logits) {
  if (target_probs.size() != logits.size()) throw Error("cross_entropy: length mismatch");
  const Vec lp = log_softmax(logits);
  double loss = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    if (target_probs[i] < 0.0) throw Error("cross_entropy: negative target entry");
    if (target_probs[i] > 0.0) loss -= target_probs[i] * lp[i];
  }
  return loss;
}

Vec cross_entropy_grad(std::span<const double> target_probs,
                       std::span<const double> logits) {
  if (target_probs.size() != logits.size()) throw Error("cross_entropy: length mismatch");
  Vec g = softmax(logits);
  double mass = 0.0;
  for (double t : target_probs) mass += t;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = mass * g[i] - target_probs[i];
  return g;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

// --- checkpoints ------------------------------------------------------------

std::string hex_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", x);
  return buf;
}

double parse_double(const std::string& token) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (token.empty() || end != token.c_str() + token.size()) {
    throw Error("malformed number in checkpoint: '" + token + "'");
  }
  return v;
}

void expect_token(std::istream& is, const std::string& expected) {
  std::string tok;
  if (!(is >> tok) || tok != expected) {
    throw Error("checkpoint: expected '" + expected + "', got '" + tok + "'");
  }
}

void write_doubles(std::ostream& os, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) os << ' ';
    os << hex_double(values[i]);
  }
  os << '\n';
}

Vec read_doubles(std::istream& is, std::size_t count) {
  Vec out(count);
  std::string tok;
  for (std::size_t i = 0; i < count; ++i) {
    if (!(is >> tok)) throw Error("checkpoint truncated while reading values");
    out[i] = parse_double(tok);
  }
  return out;
}

void save_mlp(std::ostream& os, const Mlp& net) {
  const auto& spec = net.spec();
  os << "mlp v1 " << spec.layers.size() << '\n';
  for (const auto& l : spec.layers) {
    os << "layer " << l.in_dim << ' ' << l.out_dim << ' ' << to_string(l.activation) << '\n';
  }
  os << "params " << net.params().size() << ' ';
  write_doubles(os, net.params().flat());
}

Mlp load_mlp(std::istream& is) {
  expect_token(is, "mlp");
  expect_token(is, "v1");
  std::size_t n = 0;
  is >> n;
  MlpSpec spec;
  for (std::size_t i = 0; i < n; ++i) {
    expect_token(is, "layer");
    LayerSpec l;
    std::string act;
    is >> l.in_dim >> l.out_dim >> act;
    l.activation = activation_from_string(act);
    spec.layers.push_back(l);
  }
  if (!is) throw Error("checkpoint: truncated layer list");
  spec.validate();
  expect_token(is, "params");
  std::size_t count = 0;
  is >> count;
  ParamStore store(spec);
  if (count != store.size()) throw Error("checkpoint: parameter count mismatch");
  const Vec values = read_doubles(is, count);
  std::copy(values.begin(), values.end(), store.flat().begin());
  return Mlp(std::move(spec), std::move(store));
}

}  // namespace tz::nn
