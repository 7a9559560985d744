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

// The learned world model: representation, dynamics and prediction networks,
// the self-supervised projection heads and the optional afterstate/chance
// heads, together with the policy-head helpers shared by search and training.

#ifndef TREEZERO_MODEL_HPP_
#define TREEZERO_MODEL_HPP_

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "treezero/common.hpp"
#include "treezero/diffnet.hpp"
#include "treezero/envs.hpp"

namespace tz {

enum class PolicyKind { categorical, factored, gaussian };
enum class ValueHeadKind { tanh_bounded, linear };

const char* to_string(PolicyKind k);
PolicyKind policy_kind_from_string(const std::string& s);
const char* to_string(ValueHeadKind k);
ValueHeadKind value_head_from_string(const std::string& s);

// How the policy logits of the prediction network map onto actions.
//   categorical: one logit per joint action
//   factored:    `bins` logits per dimension, independent per dimension
//   gaussian:    mean and log-std per dimension (raw continuous actions)
struct PolicyLayout {
  PolicyKind kind = PolicyKind::categorical;
  ActionSpace space;

  int logits_size() const;
  // Enumerable actions only (categorical, factored).
  int num_joint_actions() const { return space.joint_size(); }

  // Probability of every joint action restricted to `legal` (empty = all).
  Vec joint_probs(std::span<const double> logits, const std::vector<int>& legal) const;
  double log_prob(std::span<const double> logits, const Action& a) const;
  // dlogits += weight * d log_prob / d logits.
  void add_log_prob_grad(std::span<const double> logits, const Action& a, double weight,
                         std::span<double> dlogits) const;
  Action sample(std::span<const double> logits, Rng& rng) const;
  double entropy(std::span<const double> logits) const;
  // dlogits += weight * d entropy / d logits.
  void add_entropy_grad(std::span<const double> logits, double weight,
                        std::span<double> dlogits) const;
};

struct NetworkOutput {
  Vec latent;
  double value = 0.0;
  double reward = 0.0;
  Vec policy_logits;
};

struct AfterstateOutput {
  Vec afterstate;
  double value = 0.0;
  Vec chance_logits;
};

enum class SslBranch { online, target };

struct ModelConfig {
  int latent_dim = 64;
  int hidden_dim = 128;
  int embed_dim = 64;
  PolicyKind policy = PolicyKind::categorical;
  ValueHeadKind value_head = ValueHeadKind::linear;
  bool stochastic = false;

  bool operator==(const ModelConfig&) const = default;
};

struct ModelNets {
  nn::Mlp representation;         // obs -> latent (tanh)
  nn::Mlp dynamics;               // latent ++ action -> latent ++ reward
  nn::Mlp prediction;             // latent -> logits ++ value
  nn::Mlp projection;             // latent -> embedding
  nn::Mlp projection_head;        // embedding -> embedding (online branch)
  nn::Mlp afterstate_dynamics;    // latent ++ action -> afterstate (tanh)
  nn::Mlp afterstate_prediction;  // afterstate -> value ++ chance logits
  nn::Mlp chance_dynamics;        // afterstate ++ chance one-hot -> latent ++ reward
};

class MuZeroModel {
 public:
  MuZeroModel() = default;
  MuZeroModel(const EnvSpec& env, ModelConfig cfg, std::uint64_t seed);

  NetworkOutput initial_inference(std::span<const double> obs) const;
  NetworkOutput recurrent_inference(std::span<const double> latent, const Action& action) const;
  AfterstateOutput afterstate_inference(std::span<const double> latent,
                                        const Action& action) const;
  NetworkOutput chance_recurrent_inference(std::span<const double> afterstate,
                                           std::span<const double> chance_code) const;
  Vec ssl_embed(std::span<const double> latent, SslBranch branch) const;

  const ModelConfig& config() const { return cfg_; }
  const PolicyLayout& policy_layout() const { return layout_; }
  int obs_dim() const { return obs_dim_; }
  int chance_dim() const { return chance_dim_; }
  bool two_player() const { return num_players_ == 2; }
  int num_players() const { return num_players_; }
  double squash_value(double raw) const;

  ModelNets& nets() { return nets_; }
  const ModelNets& nets() const { return nets_; }
  // Every network in a fixed order (used by optimizers and checkpoints).
  std::vector<nn::Mlp*> networks();
  std::vector<const nn::Mlp*> networks() const;

  // Throws ConfigError if the model was built for a different environment.
  void check_compatible(const EnvSpec& env) const;

  void save(std::ostream& os) const;
  static MuZeroModel load(std::istream& is);

 private:
  ModelConfig cfg_;
  PolicyLayout layout_;
  int obs_dim_ = 0;
  int num_players_ = 1;
  int chance_dim_ = 0;
  ModelNets nets_;
};

// -cos(online, target); throws Error on zero-norm embeddings.
double consistency_loss(std::span<const double> online, std::span<const double> target);

// Validates a one-hot chance code.
void check_one_hot(std::span<const double> code);

}  // namespace tz

#endif  // TREEZERO_MODEL_HPP_
