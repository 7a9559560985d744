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

#include "treezero/search.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace tz {

const char* to_string(SearchVariant v) {
  switch (v) {
    case SearchVariant::puct: return "puct";
    case SearchVariant::gumbel: return "gumbel";
    case SearchVariant::sampled: return "sampled";
    case SearchVariant::stochastic: return "stochastic";
  }
  return "?";
}

SearchVariant search_variant_from_string(const std::string& s) {
  if (s == "puct") return SearchVariant::puct;
  if (s == "gumbel") return SearchVariant::gumbel;
  if (s == "sampled") return SearchVariant::sampled;
  if (s == "stochastic") return SearchVariant::stochastic;
  throw ConfigError("unknown search variant: " + s);
}

// --- MinMaxStats / tree -----------------------------------------------------

void MinMaxStats::update(double v) {
  min_ = std::min(min_, v);
  max_ = std::max(max_, v);
}

double MinMaxStats::normalize(double q) const {
  if (max_ > min_) return (q - min_) / (max_ - min_);
  return q;
}

int SearchTree::add_node(TreeNode node) {
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

std::string SearchTree::dump() const {
  std::ostringstream os;
  os << "id parent action N Q P reward\n";
  os << std::setprecision(6);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    os << i << ' ' << n.parent << ' ';
    if (n.action.is_discrete()) {
      os << n.action.index;
    } else {
      for (std::size_t d = 0; d < n.action.raw.size(); ++d) os << (d ? "," : "") << n.action.raw[d];
    }
    os << ' ' << n.visit_count << ' ' << n.value() << ' ' << n.prior << ' ' << n.reward << '\n';
  }
  return os.str();
}

// --- adapters ---------------------------------------------------------------

ChanceEvaluation WorldAdapter::evaluate_afterstate(int, const Action&) {
  throw Error("world adapter does not model chance events");
}

Evaluation WorldAdapter::evaluate_chance(int, int) {
  throw Error("world adapter does not model chance events");
}

LearnedModelAdapter::LearnedModelAdapter(const MuZeroModel& model, Vec root_obs,
                                         std::vector<int> root_legal, int root_to_play)
    : model_(model),
      root_obs_(std::move(root_obs)),
      root_legal_(std::move(root_legal)),
      root_to_play_(root_to_play) {}

Evaluation LearnedModelAdapter::evaluate_root() {
  NetworkOutput out = model_.initial_inference(root_obs_);
  Evaluation ev;
  ev.state = static_cast<int>(states_.size());
  states_.push_back({std::move(out.latent), root_to_play_});
  ev.value = out.value;
  ev.policy_logits = std::move(out.policy_logits);
  ev.legal = root_legal_;
  ev.to_play = root_to_play_;
  return ev;
}

Evaluation LearnedModelAdapter::evaluate_transition(int state, const Action& action) {
  const Latent& parent = states_.at(state);
  NetworkOutput out = model_.recurrent_inference(parent.vec, action);
  const int to_play = model_.two_player() ? 1 - parent.to_play : parent.to_play;
  Evaluation ev;
  ev.state = static_cast<int>(states_.size());
  states_.push_back({std::move(out.latent), to_play});
  ev.value = out.value;
  ev.reward = out.reward;
  ev.policy_logits = std::move(out.policy_logits);
  ev.to_play = to_play;
  return ev;
}

ChanceEvaluation LearnedModelAdapter::evaluate_afterstate(int state, const Action& action) {
  const Latent& parent = states_.at(state);
  AfterstateOutput out = model_.afterstate_inference(parent.vec, action);
  ChanceEvaluation ev;
  ev.state = static_cast<int>(states_.size());
  states_.push_back({std::move(out.afterstate), parent.to_play});
  ev.value = out.value;
  ev.outcome_probs = nn::softmax(out.chance_logits);
  return ev;
}

Evaluation LearnedModelAdapter::evaluate_chance(int afterstate, int outcome) {
  const Latent& parent = states_.at(afterstate);
  Vec code(model_.chance_dim(), 0.0);
  code.at(outcome) = 1.0;
  NetworkOutput out = model_.chance_recurrent_inference(parent.vec, code);
  Evaluation ev;
  ev.state = static_cast<int>(states_.size());
  states_.push_back({std::move(out.latent), parent.to_play});
  ev.value = out.value;
  ev.reward = out.reward;
  ev.policy_logits = std::move(out.policy_logits);
  ev.to_play = parent.to_play;
  return ev;
}

StateEvaluator model_evaluator(const MuZeroModel& model) {
  return [&model](const Env& env) {
    NetworkOutput out = model.initial_inference(env.observation());
    return std::make_pair(std::move(out.policy_logits), out.value);
  };
}

StateEvaluator uniform_evaluator(const PolicyLayout& layout) {
  const int n = layout.logits_size();
  return [n](const Env&) { return std::make_pair(Vec(n, 0.0), 0.0); };
}

PerfectSimulatorAdapter::PerfectSimulatorAdapter(const Env& root, PolicyLayout layout,
                                                 StateEvaluator evaluator, double discount,
                                                 std::uint64_t seed)
    : root_(root.clone()),
      layout_(std::move(layout)),
      evaluator_(std::move(evaluator)),
      discount_(discount),
      rng_(seed) {}

Evaluation PerfectSimulatorAdapter::evaluate_env(int id, double reward, bool terminal) {
  const Env& env = *states_.at(id);
  Evaluation ev;
  ev.state = id;
  ev.reward = reward;
  ev.to_play = env.to_play();
  ev.terminal = terminal;
  if (terminal) {
    ev.value = 0.0;
    ev.policy_logits.assign(layout_.logits_size(), 0.0);
    return ev;
  }
  auto [logits, value] = evaluator_(env);
  ev.policy_logits = std::move(logits);
  ev.value = value;
  ev.legal = env.legal_actions();
  return ev;
}

Evaluation PerfectSimulatorAdapter::evaluate_root() {
  if (root_->done()) throw Error("search root is terminal");
  states_.push_back(root_->clone());
  pending_reward_.push_back(0.0);
  return evaluate_env(static_cast<int>(states_.size()) - 1, 0.0, false);
}

Evaluation PerfectSimulatorAdapter::evaluate_transition(int state, const Action& action) {
  auto env = states_.at(state)->clone();
  const StepResult r = env->step(action);
  states_.push_back(std::move(env));
  pending_reward_.push_back(0.0);
  return evaluate_env(static_cast<int>(states_.size()) - 1, r.reward, r.done);
}

ChanceEvaluation PerfectSimulatorAdapter::evaluate_afterstate(int state, const Action& action) {
  auto env = states_.at(state)->clone();
  const double reward = env->step_afterstate(action);
  ChanceEvaluation ev;
  ev.outcome_probs = env->chance_distribution();
  // One sampled resolution estimates the afterstate value.
  std::discrete_distribution<int> pick(ev.outcome_probs.begin(), ev.outcome_probs.end());
  auto probe = env->clone();
  const StepResult r = probe->resolve_chance(pick(rng_));
  double next_value = 0.0;
  if (!r.done) next_value = evaluator_(*probe).second;
  ev.value = reward + discount_ * next_value;
  ev.state = static_cast<int>(states_.size());
  states_.push_back(std::move(env));
  pending_reward_.push_back(reward);
  return ev;
}

Evaluation PerfectSimulatorAdapter::evaluate_chance(int afterstate, int outcome) {
  auto env = states_.at(afterstate)->clone();
  const double reward = pending_reward_.at(afterstate);
  const StepResult r = env->resolve_chance(outcome);
  states_.push_back(std::move(env));
  pending_reward_.push_back(0.0);
  return evaluate_env(static_cast<int>(states_.size()) - 1, reward, r.done);
}

// --- building blocks --------------------------------------------------------

Vec add_dirichlet_noise(const Vec& priors, double alpha, double weight, Rng& rng) {
  if (weight < 0.0 || weight > 1.0) throw Error("dirichlet noise weight must lie in [0, 1]");
  if (weight == 0.0 || priors.empty()) return priors;
  std::gamma_distribution<double> gamma(alpha, 1.0);
  Vec noise(priors.size());
  double sum = 0.0;
  for (double& x : noise) {
    x = gamma(rng);
    sum += x;
  }
  Vec out(priors.size());
  for (std::size_t i = 0; i < priors.size(); ++i) {
    const double d = sum > 0.0 ? noise[i] / sum : 1.0 / priors.size();
    out[i] = (1.0 - weight) * priors[i] + weight * d;
  }
  return out;
}

double child_q(const SearchTree& tree, int parent, int child, const SearchConfig& cfg) {
  const TreeNode& p = tree.node(parent);
  const TreeNode& c = tree.node(child);
  const double sign = (cfg.two_player && c.to_play != p.to_play) ? -1.0 : 1.0;
  const double disc = c.kind == NodeKind::chance ? 1.0 : cfg.discount;
  return c.reward + disc * sign * c.value();
}

Vec puct_scores(const SearchTree& tree, int node, const MinMaxStats& minmax,
                const SearchConfig& cfg) {
  const TreeNode& n = tree.node(node);
  if (n.children.empty()) throw Error("puct_select on an unexpanded node");
  if (n.kind != NodeKind::decision) throw Error("puct_select on a chance node");
  double visited_q = 0.0;
  int visited_n = 0;
  for (int c : n.children) {
    const TreeNode& ch = tree.node(c);
    if (ch.visit_count > 0) {
      visited_q += ch.visit_count * minmax.normalize(child_q(tree, node, c, cfg));
      visited_n += ch.visit_count;
    }
  }
  const double unvisited_q = visited_n > 0 ? visited_q / visited_n : 0.5;
  const double total = n.visit_count;
  const double explore = std::sqrt(total) * (cfg.c1 + std::log((total + cfg.c2 + 1.0) / cfg.c2));
  Vec scores;
  scores.reserve(n.children.size());
  for (int c : n.children) {
    const TreeNode& ch = tree.node(c);
    const double q = ch.visit_count > 0 ? minmax.normalize(child_q(tree, node, c, cfg)) : unvisited_q;
    scores.push_back(q + ch.prior * explore / (1.0 + ch.visit_count));
  }
  return scores;
}

int puct_select(const SearchTree& tree, int node, const MinMaxStats& minmax,
                const SearchConfig& cfg) {
  const Vec scores = puct_scores(tree, node, minmax, cfg);
  int best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = static_cast<int>(i);
  }
  return best;
}

void backup(SearchTree& tree, const std::vector<int>& path, double leaf_value,
            const SearchConfig& cfg, MinMaxStats& minmax) {
  double g = leaf_value;
  for (std::size_t i = path.size(); i-- > 0;) {
    TreeNode& n = tree.node(path[i]);
    n.value_sum += g;
    n.visit_count += 1;
    if (i == 0) break;
    const TreeNode& parent = tree.node(path[i - 1]);
    const double sign = (cfg.two_player && n.to_play != parent.to_play) ? -1.0 : 1.0;
    // An afterstate edge (decision -> chance) carries no discount and no reward.
    const double disc = n.kind == NodeKind::chance ? 1.0 : cfg.discount;
    minmax.update(n.reward + disc * sign * n.value());
    g = n.reward + disc * sign * g;
  }
}

Vec visit_probabilities(const std::vector<int>& visits, double temperature) {
  int total = 0;
  for (int v : visits) {
    if (v < 0) throw Error("negative visit count");
    total += v;
  }
  if (total == 0) throw Error("sample_action_from_visits: all visit counts are zero");
  Vec p(visits.size(), 0.0);
  if (temperature <= 0.0) {
    int best = 0;
    for (std::size_t i = 1; i < visits.size(); ++i) {
      if (visits[i] > visits[best]) best = static_cast<int>(i);
    }
    p[best] = 1.0;
    return p;
  }
  const double vmax = *std::max_element(visits.begin(), visits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < visits.size(); ++i) {
    if (visits[i] > 0) {
      p[i] = std::exp((std::log(visits[i]) - std::log(vmax)) / temperature);
      sum += p[i];
    }
  }
  for (double& x : p) x /= sum;
  return p;
}

int sample_action_from_visits(const std::vector<int>& visits, double temperature, Rng& rng) {
  const Vec p = visit_probabilities(visits, temperature);
  if (temperature <= 0.0) {
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  int last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i];
    last = static_cast<int>(i);
    if (u < acc) return last;
  }
  return last;
}

std::vector<std::pair<int, int>> sequential_halving_schedule(int m_top, int budget) {
  if (m_top < 2) throw Error("sequential halving needs at least two candidates");
  int m = 1;
  while (m * 2 <= m_top) m *= 2;
  if (budget < m) throw Error("sequential halving budget is smaller than the candidate count");
  int phases = 0;
  while ((1 << phases) < m) ++phases;
  std::vector<std::pair<int, int>> schedule;
  int count = m;
  for (int i = 0; i < phases; ++i) {
    schedule.emplace_back(count, std::max(1, budget / (phases * count)));
    count /= 2;
  }
  return schedule;
}

double sigma_transform(double q_normalized, int max_child_visit, double c_visit,
                       double c_scale) {
  return (c_visit + max_child_visit) * c_scale * q_normalized;
}

Vec completed_q(const SearchTree& tree, int node, const MinMaxStats& minmax,
                const SearchConfig& cfg, double root_value_normalized) {
  const TreeNode& n = tree.node(node);
  double weighted = 0.0;
  int visits = 0;
  Vec q(n.children.size(), 0.0);
  for (std::size_t i = 0; i < n.children.size(); ++i) {
    const TreeNode& ch = tree.node(n.children[i]);
    if (ch.visit_count > 0) {
      q[i] = minmax.normalize(child_q(tree, node, n.children[i], cfg));
      weighted += ch.visit_count * q[i];
      visits += ch.visit_count;
    }
  }
  const double v_mix = (root_value_normalized + weighted) / (1.0 + visits);
  for (std::size_t i = 0; i < n.children.size(); ++i) {
    if (tree.node(n.children[i]).visit_count == 0) q[i] = v_mix;
  }
  return q;
}

SampledActions sample_root_actions(const PolicyLayout& layout, std::span<const double> logits,
                                   const std::vector<int>& legal, int k, Rng& rng) {
  if (k < 1) throw Error("sample_root_actions: K must be >= 1");
  for (double z : logits) {
    if (!std::isfinite(z)) throw Error("sample_root_actions: degenerate policy");
  }
  std::vector<Action> draws;
  if (layout.kind == PolicyKind::gaussian) {
    for (int i = 0; i < k; ++i) draws.push_back(layout.sample(logits, rng));
  } else {
    const Vec probs = layout.joint_probs(logits, legal);
    std::discrete_distribution<int> dist(probs.begin(), probs.end());
    for (int i = 0; i < k; ++i) draws.push_back(Action::discrete(dist(rng)));
  }
  SampledActions out;
  if (layout.kind == PolicyKind::gaussian) {
    for (const Action& a : draws) {
      auto it = std::find(out.actions.begin(), out.actions.end(), a);
      if (it == out.actions.end()) {
        out.actions.push_back(a);
        out.prior.push_back(1.0 / k);
      } else {
        out.prior[it - out.actions.begin()] += 1.0 / k;
      }
    }
    return out;
  }
  std::map<int, int> counts;
  for (const Action& a : draws) ++counts[a.index];
  for (const auto& [a, c] : counts) {
    out.actions.push_back(Action::discrete(a));
    out.prior.push_back(static_cast<double>(c) / k);
  }
  return out;
}

int chance_node_select(const SearchTree& tree, int node, Rng& rng) {
  const TreeNode& n = tree.node(node);
  if (n.kind != NodeKind::chance) throw Error("chance_node_select on a decision node");
  if (n.children.empty()) throw Error("chance_node_select: empty outcome set");
  Vec w;
  w.reserve(n.children.size());
  for (int c : n.children) w.push_back(tree.node(c).prior);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  const double u = unif(rng) * total;
  double acc = 0.0;
  int last = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) continue;
    acc += w[i];
    last = static_cast<int>(i);
    if (u < acc) return last;
  }
  return last;
}

// --- search driver ----------------------------------------------------------

namespace {

class Searcher {
 public:
  Searcher(WorldAdapter& world, const SearchConfig& cfg, Rng& rng)
      : world_(world), cfg_(cfg), rng_(rng), layout_(world.policy_layout()) {
    if (cfg_.num_simulations < 1) throw ConfigError("num_simulations must be >= 1");
    if (cfg_.variant == SearchVariant::stochastic && !world_.supports_chance()) {
      throw ConfigError("stochastic search needs a world adapter with chance events");
    }
    if (layout_.kind == PolicyKind::gaussian && cfg_.variant != SearchVariant::sampled) {
      throw ConfigError("gaussian policies need the sampled search variant");
    }
  }

  SearchResult run(const SearchOptions& options) {
    const Evaluation root_ev = world_.evaluate_root();
    root_value_estimate_ = root_ev.value;
    TreeNode root;
    root.prior = 1.0;
    tree_.add_node(std::move(root));
    install_decision(0, root_ev);
    if (tree_.node(0).children.empty()) throw Error("search root has no legal actions");
    if (options.add_noise && cfg_.variant != SearchVariant::gumbel) {
      TreeNode& r = tree_.node(0);
      Vec priors;
      for (int c : r.children) priors.push_back(tree_.node(c).prior);
      priors = add_dirichlet_noise(priors, cfg_.dirichlet_alpha, cfg_.noise_weight, rng_);
      for (std::size_t i = 0; i < r.children.size(); ++i) tree_.node(r.children[i]).prior = priors[i];
    }
    backup(tree_, {0}, root_ev.value, cfg_, minmax_);

    if (cfg_.variant == SearchVariant::gumbel) return run_gumbel();

    for (int sim = 0; sim < cfg_.num_simulations; ++sim) simulate(sim, -1);
    SearchResult res = collect();
    res.improved_policy = res.visit_distribution;
    res.selected_index = argmax_visits(res.visit_counts);
    res.selected_action = res.actions[res.selected_index];
    return res;
  }

  const SearchTree& tree() const { return tree_; }

 private:
  // Creates decision children for an evaluated state.
  void install_decision(int id, const Evaluation& ev) {
    {
      TreeNode& n = tree_.node(id);
      n.state = ev.state;
      n.to_play = ev.to_play;
      n.terminal = ev.terminal;
      n.evaluated = true;
      n.kind = NodeKind::decision;
    }
    if (ev.terminal) return;
    const bool chance_children = cfg_.variant == SearchVariant::stochastic;
    std::vector<Action> actions;
    Vec priors;
    if (cfg_.variant == SearchVariant::sampled) {
      SampledActions s = sample_root_actions(layout_, ev.policy_logits, ev.legal, cfg_.sampled_k, rng_);
      actions = std::move(s.actions);
      priors = std::move(s.prior);
    } else {
      const Vec p = layout_.joint_probs(ev.policy_logits, ev.legal);
      if (ev.legal.empty()) {
        for (int a = 0; a < static_cast<int>(p.size()); ++a) {
          actions.push_back(Action::discrete(a));
          priors.push_back(p[a]);
        }
      } else {
        for (int a : ev.legal) {
          actions.push_back(Action::discrete(a));
          priors.push_back(p[a]);
        }
      }
    }
    for (std::size_t i = 0; i < actions.size(); ++i) {
      TreeNode child;
      child.prior = priors[i];
      child.action = std::move(actions[i]);
      child.parent = id;
      child.to_play = ev.to_play;
      child.kind = chance_children ? NodeKind::chance : NodeKind::decision;
      const int cid = tree_.add_node(std::move(child));
      tree_.node(id).children.push_back(cid);
    }
  }

  void install_chance(int id, const ChanceEvaluation& ev) {
    {
      TreeNode& n = tree_.node(id);
      n.state = ev.state;
      n.evaluated = true;
    }
    const int to_play = tree_.node(id).to_play;
    for (std::size_t o = 0; o < ev.outcome_probs.size(); ++o) {
      if (ev.outcome_probs[o] <= 0.0) continue;
      TreeNode child;
      child.prior = ev.outcome_probs[o];
      child.action = Action::discrete(static_cast<int>(o));
      child.parent = id;
      child.to_play = to_play;
      child.kind = NodeKind::decision;
      const int cid = tree_.add_node(std::move(child));
      tree_.node(id).children.push_back(cid);
    }
    if (tree_.node(id).children.empty()) throw Error("chance node has an empty outcome set");
  }

  // One select -> expand -> backup pass. `forced_root_child` (index into the
  // root's children) pins the first step, as sequential halving requires.
  void simulate(int sim, int forced_root_child) {
    try {
      std::vector<int> path = {0};
      int node = 0;
      while (true) {
        const TreeNode& n = tree_.node(node);
        if (!n.evaluated || n.terminal) break;
        int pick = 0;
        if (n.kind == NodeKind::chance) {
          pick = chance_node_select(tree_, node, rng_);
        } else if (node == 0 && forced_root_child >= 0) {
          pick = forced_root_child;
        } else {
          pick = puct_select(tree_, node, minmax_, cfg_);
        }
        node = tree_.node(node).children[pick];
        path.push_back(node);
      }
      double value = 0.0;
      TreeNode& leaf = tree_.node(node);
      if (!leaf.evaluated) {
        const int parent_id = path[path.size() - 2];
        const TreeNode& parent = tree_.node(parent_id);
        const int parent_state = parent.state;
        const Action action = leaf.action;
        if (leaf.kind == NodeKind::chance) {
          const ChanceEvaluation ev = world_.evaluate_afterstate(parent_state, action);
          install_chance(node, ev);
          value = ev.value;
        } else {
          const Evaluation ev = parent.kind == NodeKind::chance
                                    ? world_.evaluate_chance(parent_state, action.index)
                                    : world_.evaluate_transition(parent_state, action);
          tree_.node(node).reward = ev.reward;
          install_decision(node, ev);
          value = ev.terminal ? 0.0 : ev.value;
        }
      }
      backup(tree_, path, value, cfg_, minmax_);
    } catch (const Error& e) {
      throw Error("simulation " + std::to_string(sim) + ": " + e.what());
    }
  }

  SearchResult collect() const {
    const TreeNode& r = tree_.node(0);
    SearchResult res;
    res.subset = cfg_.variant == SearchVariant::sampled;
    res.root_value = r.value();
    if (res.subset) {
      for (int c : r.children) {
        res.actions.push_back(tree_.node(c).action);
        res.visit_counts.push_back(tree_.node(c).visit_count);
      }
    } else {
      const int n = layout_.num_joint_actions();
      res.visit_counts.assign(n, 0);
      for (int a = 0; a < n; ++a) res.actions.push_back(Action::discrete(a));
      for (int c : r.children) {
        res.visit_counts[tree_.node(c).action.index] = tree_.node(c).visit_count;
      }
    }
    const int total = std::accumulate(res.visit_counts.begin(), res.visit_counts.end(), 0);
    res.visit_distribution.assign(res.visit_counts.size(), 0.0);
    for (std::size_t i = 0; i < res.visit_counts.size(); ++i) {
      res.visit_distribution[i] = total > 0 ? static_cast<double>(res.visit_counts[i]) / total : 0.0;
    }
    return res;
  }

  static int argmax_visits(const std::vector<int>& visits) {
    int best = 0;
    for (std::size_t i = 1; i < visits.size(); ++i) {
      if (visits[i] > visits[best]) best = static_cast<int>(i);
    }
    return best;
  }

  int max_root_child_visits() const {
    int m = 0;
    for (int c : tree_.node(0).children) m = std::max(m, tree_.node(c).visit_count);
    return m;
  }

  SearchResult run_gumbel() {
    const TreeNode& root = tree_.node(0);
    const int num_children = static_cast<int>(root.children.size());
    // Root logits per child: log prior is the logit up to a constant.
    Vec logits(num_children);
    for (int i = 0; i < num_children; ++i) {
      logits[i] = std::log(std::max(tree_.node(root.children[i]).prior, 1e-300));
    }
    SearchResult res;
    if (num_children == 1) {
      for (int sim = 0; sim < cfg_.num_simulations; ++sim) simulate(sim, 0);
      res = collect();
      res.improved_policy = res.visit_distribution;
      res.selected_index = index_of_child(0, res);
      res.selected_action = res.actions[res.selected_index];
      return res;
    }
    std::extreme_value_distribution<double> gumbel(0.0, 1.0);
    Vec g(num_children);
    for (double& x : g) x = gumbel(rng_);

    int m = std::min({cfg_.gumbel_m_top, num_children, cfg_.num_simulations});
    std::vector<int> candidates(num_children);
    std::iota(candidates.begin(), candidates.end(), 0);
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](int a, int b) { return g[a] + logits[a] > g[b] + logits[b]; });
    int sim = 0;
    if (m < 2) {
      for (; sim < cfg_.num_simulations; ++sim) simulate(sim, candidates[0]);
      candidates.resize(1);
    } else {
      // The per-phase floor of one visit can overshoot tiny budgets; shrink m
      // until the whole schedule fits.
      auto schedule = sequential_halving_schedule(m, cfg_.num_simulations);
      while (schedule_total(schedule) > cfg_.num_simulations) {
        schedule = sequential_halving_schedule(schedule.front().first / 2, cfg_.num_simulations);
      }
      candidates.resize(schedule.front().first);
      for (const auto& [count, per] : schedule) {
        candidates.resize(count);
        for (int c : candidates) {
          for (int k = 0; k < per; ++k) simulate(sim++, c);
        }
        const int max_visit = max_root_child_visits();
        Vec score(num_children, -std::numeric_limits<double>::infinity());
        for (int c : candidates) {
          const double q = minmax_.normalize(child_q(tree_, 0, tree_.node(0).children[c], cfg_));
          score[c] = g[c] + logits[c] +
                     sigma_transform(q, max_visit, cfg_.gumbel_c_visit, cfg_.gumbel_c_scale);
        }
        std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
          return score[a] > score[b] || (score[a] == score[b] && a < b);
        });
        candidates.resize(std::max(1, count / 2));
      }
    }
    res = collect();
    const double root_norm = minmax_.normalize(root_value_estimate_);
    const Vec cq = completed_q(tree_, 0, minmax_, cfg_, root_norm);
    const int max_visit = max_root_child_visits();
    Vec improved_logits(num_children);
    for (int i = 0; i < num_children; ++i) {
      improved_logits[i] =
          logits[i] + sigma_transform(cq[i], max_visit, cfg_.gumbel_c_visit, cfg_.gumbel_c_scale);
    }
    const Vec improved = nn::softmax(improved_logits);
    res.improved_policy.assign(res.actions.size(), 0.0);
    for (int i = 0; i < num_children; ++i) res.improved_policy[index_of_child(i, res)] = improved[i];
    res.selected_index = index_of_child(candidates.front(), res);
    res.selected_action = res.actions[res.selected_index];
    return res;
  }

  static int schedule_total(const std::vector<std::pair<int, int>>& schedule) {
    int total = 0;
    for (const auto& [count, per] : schedule) total += count * per;
    return total;
  }

  int index_of_child(int child_pos, const SearchResult& res) const {
    const Action& a = tree_.node(tree_.node(0).children[child_pos]).action;
    if (!res.subset) return a.index;
    return child_pos;
  }

  WorldAdapter& world_;
  const SearchConfig& cfg_;
  Rng& rng_;
  const PolicyLayout& layout_;
  SearchTree tree_;
  MinMaxStats minmax_;
  double root_value_estimate_ = 0.0;
};

}  // namespace

SearchResult run_mcts(WorldAdapter& world, const SearchConfig& cfg, Rng& rng,
                      SearchOptions options) {
  Searcher searcher(world, cfg, rng);
  return searcher.run(options);
}

}  // namespace tz
