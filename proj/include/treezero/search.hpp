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

// Tree search: PUCT MCTS with min-max value normalization over a world
// adapter (learned model or perfect simulator), root Dirichlet noise,
// visit-count action sampling, and the Gumbel, Sampled and Stochastic
// variants.

#ifndef TREEZERO_SEARCH_HPP_
#define TREEZERO_SEARCH_HPP_

#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "treezero/common.hpp"
#include "treezero/envs.hpp"
#include "treezero/model.hpp"

namespace tz {

enum class SearchVariant { puct, gumbel, sampled, stochastic };

const char* to_string(SearchVariant v);
SearchVariant search_variant_from_string(const std::string& s);

struct SearchConfig {
  int num_simulations = 50;
  double c1 = 1.25;
  double c2 = 19652.0;
  double dirichlet_alpha = 0.3;
  double noise_weight = 0.25;
  double discount = 0.997;
  bool two_player = false;
  SearchVariant variant = SearchVariant::puct;
  int gumbel_m_top = 16;
  double gumbel_c_visit = 50.0;
  double gumbel_c_scale = 0.1;
  int sampled_k = 20;

  bool operator==(const SearchConfig&) const = default;
};

class MinMaxStats {
 public:
  void update(double v);
  // (q - min) / (max - min) when max > min; q unchanged otherwise.
  double normalize(double q) const;
  bool initialized() const { return max_ >= min_; }
  double min() const { return min_; }
  double max() const { return max_; }

 private:
  double min_ = std::numeric_limits<double>::infinity();
  double max_ = -std::numeric_limits<double>::infinity();
};

enum class NodeKind { decision, chance };

struct TreeNode {
  double prior = 0.0;
  int visit_count = 0;
  double value_sum = 0.0;  // from the perspective of to_play
  double reward = 0.0;     // received on the edge into this node, mover's view
  int state = -1;          // world-adapter handle
  int to_play = 0;
  NodeKind kind = NodeKind::decision;
  bool evaluated = false;
  bool terminal = false;
  Action action;  // edge label: action (decision parent) or outcome index (chance parent)
  int parent = -1;
  std::vector<int> children;

  double value() const { return visit_count > 0 ? value_sum / visit_count : 0.0; }
};

class SearchTree {
 public:
  int add_node(TreeNode node);
  TreeNode& node(int id) { return nodes_.at(id); }
  const TreeNode& node(int id) const { return nodes_.at(id); }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Flat text table "id parent action N Q P reward" for golden tests.
  std::string dump() const;

 private:
  std::vector<TreeNode> nodes_;
};

// Result of evaluating a decision state.
struct Evaluation {
  int state = -1;
  double value = 0.0;   // for to_play; 0 at terminal states
  double reward = 0.0;  // on the edge into this state
  Vec policy_logits;
  std::vector<int> legal;  // empty = every action
  int to_play = 0;
  bool terminal = false;
};

// Result of evaluating an afterstate (chance node).
struct ChanceEvaluation {
  int state = -1;
  double value = 0.0;
  Vec outcome_probs;
};

class WorldAdapter {
 public:
  enum class Kind { learned_model, perfect_simulator };

  virtual ~WorldAdapter() = default;
  virtual Kind kind() const = 0;
  virtual const PolicyLayout& policy_layout() const = 0;
  virtual Evaluation evaluate_root() = 0;
  virtual Evaluation evaluate_transition(int state, const Action& action) = 0;
  virtual bool supports_chance() const { return false; }
  virtual ChanceEvaluation evaluate_afterstate(int state, const Action& action);
  virtual Evaluation evaluate_chance(int afterstate, int outcome);
};

// Searches inside the learned model. Interior nodes treat every action as
// legal; the root uses the environment's legal set.
class LearnedModelAdapter : public WorldAdapter {
 public:
  LearnedModelAdapter(const MuZeroModel& model, Vec root_obs, std::vector<int> root_legal,
                      int root_to_play);

  Kind kind() const override { return Kind::learned_model; }
  const PolicyLayout& policy_layout() const override { return model_.policy_layout(); }
  Evaluation evaluate_root() override;
  Evaluation evaluate_transition(int state, const Action& action) override;
  bool supports_chance() const override { return model_.config().stochastic; }
  ChanceEvaluation evaluate_afterstate(int state, const Action& action) override;
  Evaluation evaluate_chance(int afterstate, int outcome) override;

 private:
  struct Latent {
    Vec vec;
    int to_play;
  };
  const MuZeroModel& model_;
  Vec root_obs_;
  std::vector<int> root_legal_;
  int root_to_play_;
  std::vector<Latent> states_;
};

// Policy logits and value for an environment state.
using StateEvaluator = std::function<std::pair<Vec, double>(const Env&)>;

StateEvaluator model_evaluator(const MuZeroModel& model);
// Zero logits (uniform prior) and zero value.
StateEvaluator uniform_evaluator(const PolicyLayout& layout);

// Searches with the true environment (AlphaZero). States are env clones;
// chance nodes use the environment's true chance law.
class PerfectSimulatorAdapter : public WorldAdapter {
 public:
  PerfectSimulatorAdapter(const Env& root, PolicyLayout layout, StateEvaluator evaluator,
                          double discount, std::uint64_t seed);

  Kind kind() const override { return Kind::perfect_simulator; }
  const PolicyLayout& policy_layout() const override { return layout_; }
  Evaluation evaluate_root() override;
  Evaluation evaluate_transition(int state, const Action& action) override;
  bool supports_chance() const override { return root_->has_chance(); }
  ChanceEvaluation evaluate_afterstate(int state, const Action& action) override;
  Evaluation evaluate_chance(int afterstate, int outcome) override;

 private:
  Evaluation evaluate_env(int id, double reward, bool terminal);

  std::unique_ptr<Env> root_;
  PolicyLayout layout_;
  StateEvaluator evaluator_;
  double discount_;
  Rng rng_;
  std::vector<std::unique_ptr<Env>> states_;
  std::vector<double> pending_reward_;
};

struct SearchResult {
  std::vector<Action> actions;       // root candidates (all joint actions unless sampled)
  std::vector<int> visit_counts;     // per candidate
  Vec visit_distribution;            // per candidate
  Vec improved_policy;               // completedQ-based for gumbel, visits otherwise
  double root_value = 0.0;           // root W/N, for the player to move
  int selected_index = 0;            // gumbel choice, or the most visited candidate
  Action selected_action;
  bool subset = false;               // candidates are a sampled subset
};

struct SearchOptions {
  bool add_noise = false;  // root Dirichlet noise (collection only)
};

SearchResult run_mcts(WorldAdapter& world, const SearchConfig& cfg, Rng& rng,
                      SearchOptions options = {});

// --- building blocks (exposed for tests) ------------------------------------

Vec add_dirichlet_noise(const Vec& priors, double alpha, double weight, Rng& rng);

// Q of `child` seen from its parent: reward + discount * (+/-) child value.
double child_q(const SearchTree& tree, int parent, int child, const SearchConfig& cfg);

// PUCT score of every child of `node` (same order as node.children).
Vec puct_scores(const SearchTree& tree, int node, const MinMaxStats& minmax,
                const SearchConfig& cfg);
// Index into tree.node(node).children; throws on unexpanded nodes.
int puct_select(const SearchTree& tree, int node, const MinMaxStats& minmax,
                const SearchConfig& cfg);

void backup(SearchTree& tree, const std::vector<int>& path, double leaf_value,
            const SearchConfig& cfg, MinMaxStats& minmax);

// Index of the sampled visit count; temperature <= 0 selects the argmax
// (lowest index on ties).
int sample_action_from_visits(const std::vector<int>& visits, double temperature, Rng& rng);
Vec visit_probabilities(const std::vector<int>& visits, double temperature);

// (candidate_count, sims_per_candidate) per sequential-halving phase.
std::vector<std::pair<int, int>> sequential_halving_schedule(int m_top, int budget);

double sigma_transform(double q_normalized, int max_child_visit, double c_visit,
                       double c_scale);

// Per-child completed Q (normalized) of a decision node.
Vec completed_q(const SearchTree& tree, int node, const MinMaxStats& minmax,
                const SearchConfig& cfg, double root_value_normalized);

struct SampledActions {
  std::vector<Action> actions;
  Vec prior;  // count / K over the deduplicated actions
};
// Draws K actions i.i.d. from the policy restricted to `legal` (empty = all).
SampledActions sample_root_actions(const PolicyLayout& layout, std::span<const double> logits,
                                   const std::vector<int>& legal, int k, Rng& rng);

// Child index of a chance node, sampled proportionally to child priors.
int chance_node_select(const SearchTree& tree, int node, Rng& rng);

}  // namespace tz

#endif  // TREEZERO_SEARCH_HPP_
