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

// The learner: unrolled multi-step loss with exact gradients, global-norm
// clipping and the optimizer step.

#ifndef TREEZERO_TRAINER_HPP_
#define TREEZERO_TRAINER_HPP_

#include <cstdint>
#include <vector>

#include "treezero/diffnet.hpp"
#include "treezero/explore.hpp"
#include "treezero/model.hpp"
#include "treezero/replay.hpp"
#include "treezero/search.hpp"

namespace tz {

struct LossWeights {
  double policy = 1.0;
  double value = 1.0;
  double reward = 1.0;
  double consistency = 0.0;
  double entropy = 0.0;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

struct LossBreakdown {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double reward = 0.0;
  double consistency = 0.0;
  double entropy = 0.0;  // mean policy entropy (enters the total as -weight * entropy)
  double grad_norm = 0.0;  // before clipping
  Vec td_errors;           // |value_target(u=0) - v(u=0)| per sample
};

// One gradient buffer per network, in MuZeroModel::networks() order.
using ModelGrads = std::vector<nn::ParamStore>;

// Factor applied to the gradient flowing back into the dynamics input.
inline constexpr double kDynamicsGradScale = 0.5;

ModelGrads zero_grads(const MuZeroModel& model);
double global_norm(const ModelGrads& grads);
// Rescales so that the global norm is at most max_norm; returns the norm
// before clipping.
double clip_global_norm(ModelGrads& grads, double max_norm);

// Batch-mean loss. Per-step terms at u >= 1 are scaled by 1/U, the gradient
// flowing back into the previous latent through the dynamics input is scaled
// by `dynamics_grad_scale` and every sample is weighted by its importance weight. In
// stochastic mode the afterstate value (target: value target of the parent
// step) joins the value term and the chance-outcome cross-entropy joins the
// policy term.
LossBreakdown unrolled_loss(const MuZeroModel& model, const TransitionBatch& batch,
                            const LossWeights& weights, int unroll_steps, ModelGrads* grads,
                            double dynamics_grad_scale = kDynamicsGradScale);

struct TrainerConfig {
  int batch_size = 64;
  double grad_clip = 10.0;
  LossWeights weights;
  int unroll_steps = 5;
  bool reanalyze = true;  // honored only with a learned model
  SearchConfig search;    // used by reanalyze

  bool operator==(const TrainerConfig&) const = default;
};

struct TrainMetrics {
  std::int64_t step = 0;
  LossBreakdown loss;
  double rnd_loss = 0.0;
};

class Learner {
 public:
  Learner() = default;
  Learner(TrainerConfig cfg, nn::OptimizerConfig opt);

  // sample -> reanalyze -> loss -> clip -> step -> priorities -> RND.
  TrainMetrics train_iteration(ReplayBuffer& buffer, MuZeroModel& model, RndModule* rnd, Rng& rng);

  const TrainerConfig& config() const { return cfg_; }
  nn::Optimizer& optimizer() { return opt_; }
  const nn::Optimizer& optimizer() const { return opt_; }
  std::int64_t steps() const { return steps_; }
  void set_steps(std::int64_t s) { steps_ = s; }

 private:
  TrainerConfig cfg_;
  nn::Optimizer opt_;
  std::int64_t steps_ = 0;
};

// Applies one optimizer step to every network of the model.
void apply_gradients(MuZeroModel& model, const ModelGrads& grads, nn::Optimizer& opt);

}  // namespace tz

#endif  // TREEZERO_TRAINER_HPP_
