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

#include "treezero/explore.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

namespace tz {

TemperatureSchedule TemperatureSchedule::decay(std::int64_t threshold) {
  if (threshold < 1) throw ConfigError("temperature threshold must be >= 1");
  TemperatureSchedule s;
  s.mode = Mode::decay;
  s.threshold_steps = threshold;
  return s;
}

TemperatureSchedule TemperatureSchedule::fixed(double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("fixed temperature must be positive");
  TemperatureSchedule s;
  s.mode = Mode::fixed;
  s.fixed_temperature = temperature;
  return s;
}

double temperature_at(const TemperatureSchedule& s, std::int64_t step) {
  if (s.mode == TemperatureSchedule::Mode::fixed) return s.fixed_temperature;
  // Integer comparisons keep the breakpoints exact.
  if (2 * step < s.threshold_steps) return 1.0;
  if (4 * step < 3 * s.threshold_steps) return 0.5;
  return 0.25;
}

int eps_greedy_mix(int search_action, const std::vector<int>& legal, double eps, Rng& rng) {
  if (legal.empty()) throw Error("eps_greedy_mix: empty legal set");
  if (eps < 0.0 || eps > 1.0) throw Error("eps_greedy_mix: eps must lie in [0, 1]");
  if (eps == 0.0) return search_action;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (unif(rng) < eps) {
    std::uniform_int_distribution<std::size_t> pick(0, legal.size() - 1);
    return legal[pick(rng)];
  }
  return search_action;
}

double policy_entropy(std::span<const double> probs) { return nn::entropy(probs); }

double combine_reward(double r_ext, double r_int, double beta) { return r_ext + beta * r_int; }

Vec minmax_normalize(const Vec& errors) {
  if (errors.empty()) return {};
  const auto [lo, hi] = std::minmax_element(errors.begin(), errors.end());
  Vec out(errors.size(), 0.0);
  if (*hi > *lo) {
    for (std::size_t i = 0; i < errors.size(); ++i) out[i] = (errors[i] - *lo) / (*hi - *lo);
  }
  return out;
}

// --- RND --------------------------------------------------------------------

RndModule::RndModule(int obs_dim, RndConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  using nn::Activation;
  const auto spec = nn::MlpSpec::make({obs_dim, cfg_.hidden_dim, cfg_.output_dim},
                                      Activation::relu, Activation::identity);
  target_ = nn::Mlp(spec, mix_seed(seed, 101));
  predictor_ = nn::Mlp(spec, mix_seed(seed, 202));
  nn::OptimizerConfig oc;
  oc.kind = cfg_.optimizer;
  oc.lr = cfg_.lr;
  opt_ = nn::Optimizer(oc);
}

double RndModule::error(std::span<const double> obs) const {
  const Vec p = predictor_.forward(obs);
  const Vec t = target_.forward(obs);
  double e = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) e += (p[i] - t[i]) * (p[i] - t[i]);
  return e;
}

double RndModule::train_step(const std::vector<Vec>& observations) {
  if (observations.empty()) throw Error("rnd_train_step: empty batch");
  nn::ParamStore grads(predictor_.spec());
  const double scale = 1.0 / observations.size();
  double loss = 0.0;
  for (const Vec& obs : observations) {
    nn::ForwardCache cache;
    const Vec p = predictor_.forward(obs, &cache);
    const Vec t = target_.forward(obs);
    Vec g(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      loss += scale * (p[i] - t[i]) * (p[i] - t[i]);
      g[i] = 2.0 * scale * (p[i] - t[i]);
    }
    predictor_.backward(cache, g, grads);
  }
  std::span<const double> g = grads.flat();
  opt_.step({predictor_.params().flat()}, {g});
  return loss;
}

void RndModule::save(std::ostream& os) const {
  os << "rnd v1 " << cfg_.hidden_dim << ' ' << cfg_.output_dim << ' ' << nn::hex_double(cfg_.lr)
     << ' ' << nn::to_string(cfg_.optimizer) << ' ' << nn::hex_double(cfg_.beta) << '\n';
  nn::save_mlp(os, target_);
  nn::save_mlp(os, predictor_);
  opt_.save(os);
}

RndModule RndModule::load(std::istream& is) {
  nn::expect_token(is, "rnd");
  nn::expect_token(is, "v1");
  RndModule m;
  std::string lr, opt, beta;
  is >> m.cfg_.hidden_dim >> m.cfg_.output_dim >> lr >> opt >> beta;
  if (!is) throw Error("rnd checkpoint: truncated header");
  m.cfg_.lr = nn::parse_double(lr);
  m.cfg_.optimizer = nn::optimizer_from_string(opt);
  m.cfg_.beta = nn::parse_double(beta);
  m.target_ = nn::load_mlp(is);
  m.predictor_ = nn::load_mlp(is);
  m.opt_ = nn::Optimizer::load(is);
  return m;
}

double rnd_error(const RndModule& rnd, std::span<const double> obs) { return rnd.error(obs); }

Vec rnd_intrinsic_batch(const RndModule& rnd, const std::vector<Vec>& observations) {
  if (observations.empty()) throw Error("rnd_intrinsic_batch: empty batch");
  Vec errors;
  errors.reserve(observations.size());
  for (const Vec& o : observations) errors.push_back(rnd.error(o));
  return minmax_normalize(errors);
}

double rnd_train_step(RndModule& rnd, const std::vector<Vec>& observations) {
  return rnd.train_step(observations);
}

void ExploreConfig::validate() const {
  static const char* kNames[] = {"naive", "double_sim", "fixed_temperature",
                                 "entropy_reg", "eps_greedy", "intrinsic"};
  if (std::find(std::begin(kNames), std::end(kNames), strategy) == std::end(kNames)) {
    throw ConfigError("unknown exploration strategy: " + strategy);
  }
  if (eps < 0.0 || eps > 1.0) throw ConfigError("explore.eps must lie in [0, 1]");
  if (entropy_weight < 0.0) throw ConfigError("explore.entropy_weight must be >= 0");
  if (!(fixed_temperature > 0.0)) throw ConfigError("explore.fixed_temperature must be positive");
  if (rnd.beta < 0.0) throw ConfigError("explore.rnd.beta must be >= 0");
  if (rnd.hidden_dim < 1 || rnd.output_dim < 1) throw ConfigError("explore.rnd dims must be positive");
  if (temperature_threshold < 0) throw ConfigError("explore.temperature_threshold must be >= 0");
}

ExploreConfig ExploreConfig::resolved() const {
  validate();
  ExploreConfig r = *this;
  if (strategy == "double_sim") r.double_simulations = true;
  if (strategy == "fixed_temperature") r.fixed_mode = true;
  if (strategy == "entropy_reg" && r.entropy_weight == 0.0) r.entropy_weight = 0.05;
  if (strategy == "eps_greedy" && r.eps == 0.0) r.eps = 0.25;
  if (strategy == "intrinsic") r.intrinsic = true;
  return r;
}

TemperatureSchedule ExploreConfig::schedule(std::int64_t total_env_steps) const {
  const ExploreConfig r = resolved();
  if (r.fixed_mode) return TemperatureSchedule::fixed(r.fixed_temperature);
  const std::int64_t threshold = r.temperature_threshold > 0 ? r.temperature_threshold : total_env_steps;
  return TemperatureSchedule::decay(std::max<std::int64_t>(1, threshold));
}

}  // namespace tz
