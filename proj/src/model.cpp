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

#include "treezero/model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>

namespace tz {

namespace {

constexpr double kMinLogStd = -5.0;
constexpr double kMaxLogStd = 1.0;

Vec concat(std::span<const double> a, std::span<const double> b) {
  Vec out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

const char* to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::categorical: return "categorical";
    case PolicyKind::factored: return "factored";
    case PolicyKind::gaussian: return "gaussian";
  }
  return "?";
}

PolicyKind policy_kind_from_string(const std::string& s) {
  if (s == "categorical") return PolicyKind::categorical;
  if (s == "factored") return PolicyKind::factored;
  if (s == "gaussian") return PolicyKind::gaussian;
  throw ConfigError("unknown policy kind: " + s);
}

const char* to_string(ValueHeadKind k) {
  return k == ValueHeadKind::tanh_bounded ? "tanh_bounded" : "linear";
}

ValueHeadKind value_head_from_string(const std::string& s) {
  if (s == "tanh_bounded") return ValueHeadKind::tanh_bounded;
  if (s == "linear") return ValueHeadKind::linear;
  throw ConfigError("unknown value head kind: " + s);
}

// --- PolicyLayout -----------------------------------------------------------

int PolicyLayout::logits_size() const {
  switch (kind) {
    case PolicyKind::categorical: return space.joint_size();
    case PolicyKind::factored: return space.dim * space.bins;
    case PolicyKind::gaussian: return 2 * space.dim;
  }
  return 0;
}

Vec PolicyLayout::joint_probs(std::span<const double> logits,
                              const std::vector<int>& legal) const {
  const int n = space.joint_size();
  Vec probs(n, 0.0);
  if (kind == PolicyKind::gaussian) throw Error("joint_probs: gaussian policy is not enumerable");
  if (kind == PolicyKind::categorical) {
    if (legal.empty()) return nn::softmax(logits);
    Vec sub;
    for (int a : legal) sub.push_back(logits[a]);
    const Vec p = nn::softmax(sub);
    for (std::size_t i = 0; i < legal.size(); ++i) probs[legal[i]] = p[i];
    return probs;
  }
  std::vector<Vec> per_dim;
  for (int d = 0; d < space.dim; ++d) {
    per_dim.push_back(nn::softmax(logits.subspan(d * space.bins, space.bins)));
  }
  double total = 0.0;
  auto fill = [&](int a) {
    const auto bins = space.decode(a);
    double p = 1.0;
    for (int d = 0; d < space.dim; ++d) p *= per_dim[d][bins[d]];
    probs[a] = p;
    total += p;
  };
  if (legal.empty()) {
    for (int a = 0; a < n; ++a) fill(a);
  } else {
    for (int a : legal) fill(a);
  }
  for (double& p : probs) p /= total;
  return probs;
}

double PolicyLayout::log_prob(std::span<const double> logits, const Action& a) const {
  switch (kind) {
    case PolicyKind::categorical:
      return nn::log_softmax(logits)[a.index];
    case PolicyKind::factored: {
      const auto bins = space.decode(a.index);
      double lp = 0.0;
      for (int d = 0; d < space.dim; ++d) {
        lp += nn::log_softmax(logits.subspan(d * space.bins, space.bins))[bins[d]];
      }
      return lp;
    }
    case PolicyKind::gaussian: {
      double lp = 0.0;
      for (int d = 0; d < space.dim; ++d) {
        const double mean = logits[d];
        const double log_std = std::clamp(logits[space.dim + d], kMinLogStd, kMaxLogStd);
        const double z = (a.raw.at(d) - mean) / std::exp(log_std);
        lp += -0.5 * z * z - log_std - 0.5 * std::log(2.0 * std::numbers::pi);
      }
      return lp;
    }
  }
  return 0.0;
}

void PolicyLayout::add_log_prob_grad(std::span<const double> logits, const Action& a,
                                     double weight, std::span<double> dlogits) const {
  switch (kind) {
    case PolicyKind::categorical: {
      const Vec p = nn::softmax(logits);
      for (std::size_t i = 0; i < p.size(); ++i) dlogits[i] -= weight * p[i];
      dlogits[a.index] += weight;
      return;
    }
    case PolicyKind::factored: {
      const auto bins = space.decode(a.index);
      for (int d = 0; d < space.dim; ++d) {
        const Vec p = nn::softmax(logits.subspan(d * space.bins, space.bins));
        for (int b = 0; b < space.bins; ++b) dlogits[d * space.bins + b] -= weight * p[b];
        dlogits[d * space.bins + bins[d]] += weight;
      }
      return;
    }
    case PolicyKind::gaussian: {
      for (int d = 0; d < space.dim; ++d) {
        const double mean = logits[d];
        const double raw_ls = logits[space.dim + d];
        const double log_std = std::clamp(raw_ls, kMinLogStd, kMaxLogStd);
        const double sd = std::exp(log_std);
        const double z = (a.raw.at(d) - mean) / sd;
        dlogits[d] += weight * z / sd;
        if (raw_ls > kMinLogStd && raw_ls < kMaxLogStd) dlogits[space.dim + d] += weight * (z * z - 1.0);
      }
      return;
    }
  }
}

Action PolicyLayout::sample(std::span<const double> logits, Rng& rng) const {
  for (double z : logits) {
    if (!std::isfinite(z)) throw Error("policy sample: degenerate (non-finite) policy");
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto draw = [&](const Vec& p) {
    double u = unif(rng), acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      acc += p[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(p.size()) - 1;
  };
  switch (kind) {
    case PolicyKind::categorical:
      return Action::discrete(draw(nn::softmax(logits)));
    case PolicyKind::factored: {
      std::vector<int> bins(space.dim);
      for (int d = 0; d < space.dim; ++d) {
        bins[d] = draw(nn::softmax(logits.subspan(d * space.bins, space.bins)));
      }
      return Action::discrete(space.encode(bins));
    }
    case PolicyKind::gaussian: {
      std::normal_distribution<double> normal(0.0, 1.0);
      Vec raw(space.dim);
      for (int d = 0; d < space.dim; ++d) {
        const double log_std = std::clamp(logits[space.dim + d], kMinLogStd, kMaxLogStd);
        raw[d] = logits[d] + std::exp(log_std) * normal(rng);
      }
      return Action::continuous(std::move(raw));
    }
  }
  return {};
}

double PolicyLayout::entropy(std::span<const double> logits) const {
  switch (kind) {
    case PolicyKind::categorical:
      return nn::entropy(nn::softmax(logits));
    case PolicyKind::factored: {
      double h = 0.0;
      for (int d = 0; d < space.dim; ++d) {
        h += nn::entropy(nn::softmax(logits.subspan(d * space.bins, space.bins)));
      }
      return h;
    }
    case PolicyKind::gaussian: {
      double h = 0.0;
      for (int d = 0; d < space.dim; ++d) {
        h += std::clamp(logits[space.dim + d], kMinLogStd, kMaxLogStd) +
             0.5 * (1.0 + std::log(2.0 * std::numbers::pi));
      }
      return h;
    }
  }
  return 0.0;
}

void PolicyLayout::add_entropy_grad(std::span<const double> logits, double weight,
                                    std::span<double> dlogits) const {
  auto categorical_grad = [&](std::span<const double> z, std::span<double> dz) {
    const Vec p = nn::softmax(z);
    const double h = nn::entropy(p);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double lp = p[i] > 0.0 ? std::log(p[i]) : 0.0;
      dz[i] += weight * (-p[i] * (lp + h));
    }
  };
  switch (kind) {
    case PolicyKind::categorical:
      categorical_grad(logits, dlogits);
      return;
    case PolicyKind::factored:
      for (int d = 0; d < space.dim; ++d) {
        categorical_grad(logits.subspan(d * space.bins, space.bins),
                         dlogits.subspan(d * space.bins, space.bins));
      }
      return;
    case PolicyKind::gaussian:
      for (int d = 0; d < space.dim; ++d) {
        const double raw_ls = logits[space.dim + d];
        if (raw_ls > kMinLogStd && raw_ls < kMaxLogStd) dlogits[space.dim + d] += weight;
      }
      return;
  }
}

// --- MuZeroModel ------------------------------------------------------------

MuZeroModel::MuZeroModel(const EnvSpec& env, ModelConfig cfg, std::uint64_t seed)
    : cfg_(cfg), obs_dim_(env.obs_dim), num_players_(env.num_players) {
  using nn::Activation;
  using nn::MlpSpec;
  layout_.kind = cfg_.policy;
  layout_.space = env.action_space;
  if (cfg_.policy != PolicyKind::categorical &&
      env.action_space.kind != ActionSpace::Kind::continuous) {
    throw ConfigError("factored/gaussian policies need a continuous action space");
  }
  if (cfg_.stochastic) {
    if (!env.chance_dim) throw ConfigError("stochastic model needs an env with chance_dim");
    chance_dim_ = *env.chance_dim;
  }
  const int L = cfg_.latent_dim, H = cfg_.hidden_dim, E = cfg_.embed_dim;
  const int A = env.action_space.encoding_dim();
  const int P = layout_.logits_size();
  if (L < 1 || H < 1 || E < 1) throw ConfigError("model dimensions must be positive");
  auto sub = [&](std::uint64_t k) { return mix_seed(seed, k); };
  nets_.representation =
      nn::Mlp(MlpSpec::make({obs_dim_, H, L}, Activation::relu, Activation::tanh), sub(1));
  nets_.dynamics =
      nn::Mlp(MlpSpec::make({L + A, H, L + 1}, Activation::relu, Activation::identity), sub(2));
  nets_.prediction =
      nn::Mlp(MlpSpec::make({L, H, P + 1}, Activation::relu, Activation::identity), sub(3));
  nets_.projection =
      nn::Mlp(MlpSpec::make({L, H, E}, Activation::relu, Activation::identity), sub(4));
  nets_.projection_head =
      nn::Mlp(MlpSpec::make({E, H, E}, Activation::relu, Activation::identity), sub(5));
  if (cfg_.stochastic) {
    const int C = chance_dim_;
    nets_.afterstate_dynamics =
        nn::Mlp(MlpSpec::make({L + A, H, L}, Activation::relu, Activation::tanh), sub(6));
    nets_.afterstate_prediction =
        nn::Mlp(MlpSpec::make({L, H, C + 1}, Activation::relu, Activation::identity), sub(7));
    nets_.chance_dynamics =
        nn::Mlp(MlpSpec::make({L + C, H, L + 1}, Activation::relu, Activation::identity), sub(8));
  }
}

double MuZeroModel::squash_value(double raw) const {
  return cfg_.value_head == ValueHeadKind::tanh_bounded ? std::tanh(raw) : raw;
}

NetworkOutput MuZeroModel::initial_inference(std::span<const double> obs) const {
  if (static_cast<int>(obs.size()) != obs_dim_) {
    throw Error("initial_inference: observation length " + std::to_string(obs.size()) +
                " != " + std::to_string(obs_dim_));
  }
  NetworkOutput out;
  out.latent = nets_.representation.forward(obs);
  Vec pv = nets_.prediction.forward(out.latent);
  out.value = squash_value(pv.back());
  pv.pop_back();
  out.policy_logits = std::move(pv);
  out.reward = 0.0;
  return out;
}

NetworkOutput MuZeroModel::recurrent_inference(std::span<const double> latent,
                                               const Action& action) const {
  if (static_cast<int>(latent.size()) != cfg_.latent_dim) {
    throw Error("recurrent_inference: latent dimension mismatch");
  }
  const Vec enc = layout_.space.encode_action(action);
  Vec d = nets_.dynamics.forward(concat(latent, enc));
  NetworkOutput out;
  out.reward = d.back();
  d.pop_back();
  for (double& x : d) x = std::tanh(x);
  out.latent = std::move(d);
  Vec pv = nets_.prediction.forward(out.latent);
  out.value = squash_value(pv.back());
  pv.pop_back();
  out.policy_logits = std::move(pv);
  return out;
}

AfterstateOutput MuZeroModel::afterstate_inference(std::span<const double> latent,
                                                   const Action& action) const {
  if (!cfg_.stochastic) throw Error("afterstate_inference: model has no stochastic heads");
  if (static_cast<int>(latent.size()) != cfg_.latent_dim) {
    throw Error("afterstate_inference: latent dimension mismatch");
  }
  AfterstateOutput out;
  out.afterstate = nets_.afterstate_dynamics.forward(concat(latent, layout_.space.encode_action(action)));
  Vec vc = nets_.afterstate_prediction.forward(out.afterstate);
  out.value = squash_value(vc.front());
  out.chance_logits.assign(vc.begin() + 1, vc.end());
  return out;
}

void check_one_hot(std::span<const double> code) {
  int ones = 0;
  for (double x : code) {
    if (x == 1.0) {
      ++ones;
    } else if (x != 0.0) {
      throw Error("chance code is not one-hot");
    }
  }
  if (ones != 1) throw Error("chance code is not one-hot");
}

NetworkOutput MuZeroModel::chance_recurrent_inference(std::span<const double> afterstate,
                                                      std::span<const double> chance_code) const {
  if (!cfg_.stochastic) throw Error("chance_recurrent_inference: model has no stochastic heads");
  if (static_cast<int>(chance_code.size()) != chance_dim_) {
    throw Error("chance_recurrent_inference: chance code length mismatch");
  }
  check_one_hot(chance_code);
  Vec d = nets_.chance_dynamics.forward(concat(afterstate, chance_code));
  NetworkOutput out;
  out.reward = d.back();
  d.pop_back();
  for (double& x : d) x = std::tanh(x);
  out.latent = std::move(d);
  Vec pv = nets_.prediction.forward(out.latent);
  out.value = squash_value(pv.back());
  pv.pop_back();
  out.policy_logits = std::move(pv);
  return out;
}

Vec MuZeroModel::ssl_embed(std::span<const double> latent, SslBranch branch) const {
  Vec proj = nets_.projection.forward(latent);
  if (branch == SslBranch::target) return proj;
  return nets_.projection_head.forward(proj);
}

std::vector<nn::Mlp*> MuZeroModel::networks() {
  std::vector<nn::Mlp*> out = {&nets_.representation, &nets_.dynamics, &nets_.prediction,
                               &nets_.projection, &nets_.projection_head};
  if (cfg_.stochastic) {
    out.push_back(&nets_.afterstate_dynamics);
    out.push_back(&nets_.afterstate_prediction);
    out.push_back(&nets_.chance_dynamics);
  }
  return out;
}

std::vector<const nn::Mlp*> MuZeroModel::networks() const {
  auto nets = const_cast<MuZeroModel*>(this)->networks();
  return {nets.begin(), nets.end()};
}

void MuZeroModel::check_compatible(const EnvSpec& env) const {
  const auto& s = layout_.space;
  const bool same_space = s.kind == env.action_space.kind && s.n == env.action_space.n &&
                          s.dim == env.action_space.dim && s.bins == env.action_space.bins;
  if (env.obs_dim != obs_dim_ || !same_space || env.num_players != num_players_ ||
      (cfg_.stochastic && env.chance_dim.value_or(-1) != chance_dim_)) {
    throw ConfigError("model/environment spec mismatch");
  }
}

double consistency_loss(std::span<const double> online, std::span<const double> target) {
  return -nn::cosine_similarity(online, target);
}

void MuZeroModel::save(std::ostream& os) const {
  const auto& s = layout_.space;
  os << "model v1 " << obs_dim_ << ' ' << num_players_ << ' ' << chance_dim_ << ' '
     << (s.kind == ActionSpace::Kind::discrete ? "discrete" : "continuous") << ' ' << s.n
     << ' ' << s.dim << ' ' << s.bins << ' ' << cfg_.latent_dim << ' ' << cfg_.hidden_dim
     << ' ' << cfg_.embed_dim << ' ' << to_string(cfg_.policy) << ' '
     << to_string(cfg_.value_head) << ' ' << (cfg_.stochastic ? 1 : 0) << '\n';
  for (const nn::Mlp* net : networks()) nn::save_mlp(os, *net);
}

MuZeroModel MuZeroModel::load(std::istream& is) {
  nn::expect_token(is, "model");
  nn::expect_token(is, "v1");
  MuZeroModel m;
  std::string kind, policy, head;
  int stochastic = 0;
  auto& s = m.layout_.space;
  is >> m.obs_dim_ >> m.num_players_ >> m.chance_dim_ >> kind >> s.n >> s.dim >> s.bins >>
      m.cfg_.latent_dim >> m.cfg_.hidden_dim >> m.cfg_.embed_dim >> policy >> head >> stochastic;
  if (!is) throw Error("model checkpoint: truncated header");
  s.kind = kind == "discrete" ? ActionSpace::Kind::discrete : ActionSpace::Kind::continuous;
  m.cfg_.policy = policy_kind_from_string(policy);
  m.cfg_.value_head = value_head_from_string(head);
  m.cfg_.stochastic = stochastic != 0;
  m.layout_.kind = m.cfg_.policy;
  for (nn::Mlp* net : m.networks()) *net = nn::load_mlp(is);
  return m;
}

}  // namespace tz
