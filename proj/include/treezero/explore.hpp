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

// Exploration: action temperature schedules, epsilon-greedy mixing, policy
// entropy and random network distillation (RND) intrinsic rewards.

#ifndef TREEZERO_EXPLORE_HPP_
#define TREEZERO_EXPLORE_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "treezero/common.hpp"
#include "treezero/diffnet.hpp"

namespace tz {

struct TemperatureSchedule {
  enum class Mode { decay, fixed };
  Mode mode = Mode::decay;
  std::int64_t threshold_steps = 1;
  double fixed_temperature = 1.0;

  static TemperatureSchedule decay(std::int64_t threshold);
  static TemperatureSchedule fixed(double temperature);
};

// 1 below 50% of the threshold, 0.5 below 75%, 0.25 afterwards.
double temperature_at(const TemperatureSchedule& schedule, std::int64_t step);

// With probability eps a uniform legal action, otherwise `search_action`.
int eps_greedy_mix(int search_action, const std::vector<int>& legal, double eps, Rng& rng);

// -sum p log p with 0 log 0 = 0.
double policy_entropy(std::span<const double> probs);

double combine_reward(double r_ext, double r_int, double beta);

// Min-max normalizes raw errors to [0, 1]; all-equal errors map to zeros.
Vec minmax_normalize(const Vec& errors);

struct RndConfig {
  int hidden_dim = 64;
  int output_dim = 32;
  double lr = 1e-3;
  nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
  double beta = 1.0 / 300.0;

  bool operator==(const RndConfig&) const = default;
};

class RndModule {
 public:
  RndModule() = default;
  RndModule(int obs_dim, RndConfig cfg, std::uint64_t seed);

  // ||predictor(obs) - target(obs)||^2.
  double error(std::span<const double> obs) const;
  // Mean error over the batch before the update; one optimizer step on the
  // predictor. The target network is never modified.
  double train_step(const std::vector<Vec>& observations);

  const RndConfig& config() const { return cfg_; }
  const nn::Mlp& target() const { return target_; }
  const nn::Mlp& predictor() const { return predictor_; }
  nn::Mlp& predictor() { return predictor_; }

  void save(std::ostream& os) const;
  static RndModule load(std::istream& is);

 private:
  RndConfig cfg_;
  nn::Mlp target_;
  nn::Mlp predictor_;
  nn::Optimizer opt_;
};

double rnd_error(const RndModule& rnd, std::span<const double> obs);
// Per-observation intrinsic rewards, min-max normalized over the batch.
Vec rnd_intrinsic_batch(const RndModule& rnd, const std::vector<Vec>& observations);
double rnd_train_step(RndModule& rnd, const std::vector<Vec>& observations);

// Named exploration strategy plus composable knobs. Explicit knobs always
// apply; the strategy name fills in the knob it is named after when that knob
// is left at its neutral value:
//   double_sim         collection and evaluation use 2x num_simulations
//   fixed_temperature  constant acting temperature `fixed_temperature`
//   entropy_reg        entropy_weight defaults to 0.05
//   eps_greedy         eps defaults to 0.25
//   intrinsic          RND intrinsic reward on
struct ExploreConfig {
  std::string strategy = "naive";
  bool fixed_mode = false;
  double fixed_temperature = 1.0;
  double eps = 0.0;
  double entropy_weight = 0.0;
  bool intrinsic = false;
  bool double_simulations = false;
  RndConfig rnd;
  std::int64_t temperature_threshold = 0;  // 0 = total_env_steps

  void validate() const;
  // Knobs after applying the strategy preset.
  ExploreConfig resolved() const;
  TemperatureSchedule schedule(std::int64_t total_env_steps) const;
  bool operator==(const ExploreConfig&) const = default;
};

}  // namespace tz

#endif  // TREEZERO_EXPLORE_HPP_
