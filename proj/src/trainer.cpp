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

#include "treezero/trainer.hpp"

#include <cmath>
#include <sstream>

namespace tz {

namespace {

// Indices into MuZeroModel::networks().
enum NetIndex {
  kRepr = 0,
  kDyn = 1,
  kPred = 2,
  kProj = 3,
  kHead = 4,
  kAfterDyn = 5,
  kAfterPred = 6,
  kChanceDyn = 7,
};

Vec concat(std::span<const double> a, std::span<const double> b) {
  Vec out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// Adds coef * d(loss)/d(logits) and returns the policy loss
//   -sum_a target(a) log pi(a)
// over the candidate set (the whole joint space when empty).
double policy_loss(const PolicyLayout& layout, std::span<const double> logits, const Vec& target,
                   const std::vector<Action>& candidates, double coef, std::span<double> dlogits) {
  if (candidates.empty() && layout.kind == PolicyKind::categorical) {
    const Vec g = nn::cross_entropy_grad(target, logits);
    for (std::size_t i = 0; i < g.size(); ++i) dlogits[i] += coef * g[i];
    return nn::cross_entropy(target, logits);
  }
  double loss = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (target[k] <= 0.0) continue;
    const Action a = candidates.empty() ? Action::discrete(static_cast<int>(k)) : candidates[k];
    loss -= target[k] * layout.log_prob(logits, a);
    layout.add_log_prob_grad(logits, a, -coef * target[k], dlogits);
  }
  return loss;
}

struct StepCache {
  Vec latent;
  nn::ForwardCache pred;
  Vec pred_out;
  double reward_hat = 0.0;
  // u >= 1
  nn::ForwardCache dyn;  // dynamics, or chance dynamics in stochastic mode
  nn::ForwardCache after_dyn;
  nn::ForwardCache after_pred;
  Vec after_pred_out;
  int chance = -1;
  bool consistency = false;
  nn::ForwardCache proj;
  nn::ForwardCache head;
  Vec online;
  Vec target_embed;
};

bool nonzero(const Vec& v) {
  for (double x : v) {
    if (x != 0.0) return true;
  }
  return false;
}

}  // namespace

void LossWeights::validate() const {
  if (policy < 0 || value < 0 || reward < 0 || consistency < 0 || entropy < 0) {
    throw ConfigError("loss weights must be >= 0");
  }
}

ModelGrads zero_grads(const MuZeroModel& model) {
  ModelGrads g;
  for (const nn::Mlp* net : model.networks()) g.emplace_back(net->spec());
  return g;
}

double global_norm(const ModelGrads& grads) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double x : g.flat()) sq += x * x;
  }
  return std::sqrt(sq);
}

double clip_global_norm(ModelGrads& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& g : grads) {
      for (double& x : g.flat()) x *= s;
    }
  }
  return norm;
}

LossBreakdown unrolled_loss(const MuZeroModel& model, const TransitionBatch& batch,
                            const LossWeights& w, int U, ModelGrads* grads,
                            double dynamics_grad_scale) {
  if (batch.samples.empty()) throw Error("unrolled_loss: empty batch");
  const auto nets = model.networks();
  const auto& layout = model.policy_layout();
  const bool stochastic = model.config().stochastic;
  const int L = model.config().latent_dim;
  const int P = layout.logits_size();
  const double B = static_cast<double>(batch.samples.size());
  if (grads && grads->size() != nets.size()) throw Error("unrolled_loss: gradient buffer mismatch");

  LossBreakdown out;
  for (const TransitionSample& s : batch.samples) {
    if (static_cast<int>(s.targets.size()) != U + 1 || static_cast<int>(s.actions.size()) != U) {
      throw Error("unrolled_loss: sample unroll depth differs from the configured U");
    }
    std::vector<StepCache> st(U + 1);
    nn::ForwardCache repr_cache;
    st[0].latent = nets[kRepr]->forward(s.observation, &repr_cache);
    // Forward through the unroll.
    for (int u = 0; u <= U; ++u) {
      StepCache& c = st[u];
      if (u >= 1) {
        const Vec enc = layout.space.encode_action(s.actions[u - 1]);
        Vec d;
        if (stochastic) {
          const Vec as = nets[kAfterDyn]->forward(concat(st[u - 1].latent, enc), &c.after_dyn);
          c.after_pred_out = nets[kAfterPred]->forward(as, &c.after_pred);
          c.chance = s.targets[u].chance_outcome;
          Vec code(model.chance_dim(), 0.0);
          code[c.chance >= 0 ? c.chance : 0] = 1.0;
          d = nets[kChanceDyn]->forward(concat(as, code), &c.dyn);
        } else {
          d = nets[kDyn]->forward(concat(st[u - 1].latent, enc), &c.dyn);
        }
        c.latent.resize(L);
        for (int i = 0; i < L; ++i) c.latent[i] = std::tanh(d[i]);
        c.reward_hat = d[L];
      }
      c.pred_out = nets[kPred]->forward(c.latent, &c.pred);
      if (u >= 1 && w.consistency > 0.0 && !s.targets[u].observation.empty()) {
        c.target_embed = model.ssl_embed(nets[kRepr]->forward(s.targets[u].observation), SslBranch::target);
        const Vec proj = nets[kProj]->forward(c.latent, &c.proj);
        c.online = nets[kHead]->forward(proj, &c.head);
        c.consistency = nonzero(c.online) && nonzero(c.target_embed);
      }
    }

    // Losses and backward pass, last step first.
    std::vector<Vec> dlatent(U + 1, Vec(L, 0.0));
    for (int u = U; u >= 0; --u) {
      StepCache& c = st[u];
      const UnrollTarget& tg = s.targets[u];
      const double coef = s.weight * (u == 0 ? 1.0 : 1.0 / U) / B;
      std::span<const double> logits(c.pred_out.data(), P);
      const double raw_v = c.pred_out[P];
      const double v = model.squash_value(raw_v);
      const double reward_hat = c.reward_hat;
      Vec dpred(P + 1, 0.0);

      if (u == 0) out.td_errors.push_back(std::abs(tg.value - v));
      const double lv = (v - tg.value) * (v - tg.value);
      out.value += coef * lv;
      const double dv = 2.0 * (v - tg.value);
      const double dsquash = model.config().value_head == ValueHeadKind::tanh_bounded ? 1.0 - v * v : 1.0;
      dpred[P] += coef * w.value * dv * dsquash;

      if (!tg.absorbing) {
        const double lp = policy_loss(layout, logits, tg.policy, tg.candidates, coef * w.policy,
                                      std::span<double>(dpred.data(), P));
        out.policy += coef * lp;
        const double h = layout.entropy(logits);
        out.entropy += coef * h;
        layout.add_entropy_grad(logits, -coef * w.entropy, std::span<double>(dpred.data(), P));
      }
      if (grads) {
        const Vec dl = nets[kPred]->backward(c.pred, dpred, (*grads)[kPred]);
        for (int i = 0; i < L; ++i) dlatent[u][i] += dl[i];
      }

      if (u == 0) break;

      if (c.consistency) {
        const double cs = nn::cosine_similarity(c.online, c.target_embed);
        out.consistency += coef * (-cs);
        if (grads) {
          Vec g = nn::cosine_similarity_grad(c.online, c.target_embed);
          for (double& x : g) x *= -coef * w.consistency;
          const Vec dproj = nets[kHead]->backward(c.head, g, (*grads)[kHead]);
          const Vec dl = nets[kProj]->backward(c.proj, dproj, (*grads)[kProj]);
          for (int i = 0; i < L; ++i) dlatent[u][i] += dl[i];
        }
      }

      const double lr = (reward_hat - tg.reward) * (reward_hat - tg.reward);
      out.reward += coef * lr;
      Vec ddyn(L + 1, 0.0);
      ddyn[L] = coef * w.reward * 2.0 * (reward_hat - tg.reward);
      for (int i = 0; i < L; ++i) ddyn[i] = dlatent[u][i] * (1.0 - c.latent[i] * c.latent[i]);

      if (!stochastic) {
        if (grads) {
          const Vec din = nets[kDyn]->backward(c.dyn, ddyn, (*grads)[kDyn]);
          for (int i = 0; i < L; ++i) dlatent[u - 1][i] += dynamics_grad_scale * din[i];
        }
        continue;
      }

      // Afterstate value and chance-outcome terms.
      const Vec& ap = c.after_pred_out;
      const double q = model.squash_value(ap[0]);
      const double qt = s.targets[u - 1].value;
      out.value += coef * (q - qt) * (q - qt);
      const double dq = model.config().value_head == ValueHeadKind::tanh_bounded ? 1.0 - q * q : 1.0;
      Vec dap(ap.size(), 0.0);
      dap[0] = coef * w.value * 2.0 * (q - qt) * dq;
      if (c.chance >= 0) {
        std::span<const double> chance_logits(ap.data() + 1, ap.size() - 1);
        Vec onehot(ap.size() - 1, 0.0);
        onehot[c.chance] = 1.0;
        out.policy += coef * nn::cross_entropy(onehot, chance_logits);
        const Vec g = nn::cross_entropy_grad(onehot, chance_logits);
        for (std::size_t i = 0; i < g.size(); ++i) dap[1 + i] = coef * w.policy * g[i];
      }
      if (grads) {
        const Vec din = nets[kChanceDyn]->backward(c.dyn, ddyn, (*grads)[kChanceDyn]);
        Vec das = nets[kAfterPred]->backward(c.after_pred, dap, (*grads)[kAfterPred]);
        for (int i = 0; i < L; ++i) das[i] += din[i];
        const Vec dprev = nets[kAfterDyn]->backward(c.after_dyn, das, (*grads)[kAfterDyn]);
        for (int i = 0; i < L; ++i) dlatent[u - 1][i] += dynamics_grad_scale * dprev[i];
      }
    }
    if (grads) nets[kRepr]->backward(repr_cache, dlatent[0], (*grads)[kRepr]);
  }
  out.total = w.policy * out.policy + w.value * out.value + w.reward * out.reward +
              w.consistency * out.consistency - w.entropy * out.entropy;
  if (!std::isfinite(out.total)) {
    std::ostringstream msg;
    msg << "non-finite loss: policy=" << out.policy << " value=" << out.value
        << " reward=" << out.reward << " consistency=" << out.consistency
        << " entropy=" << out.entropy;
    throw Error(msg.str());
  }
  if (grads) out.grad_norm = global_norm(*grads);
  return out;
}

void apply_gradients(MuZeroModel& model, const ModelGrads& grads, nn::Optimizer& opt) {
  std::vector<std::span<double>> params;
  std::vector<std::span<const double>> g;
  auto nets = model.networks();
  if (nets.size() != grads.size()) throw Error("apply_gradients: gradient buffer mismatch");
  for (std::size_t i = 0; i < nets.size(); ++i) {
    params.push_back(nets[i]->params().flat());
    g.push_back(grads[i].flat());
  }
  opt.step(params, g);
}

Learner::Learner(TrainerConfig cfg, nn::OptimizerConfig opt) : cfg_(cfg), opt_(opt) {
  cfg_.weights.validate();
  if (cfg_.batch_size < 1) throw ConfigError("trainer.batch_size must be positive");
  if (!(cfg_.grad_clip > 0.0)) throw ConfigError("trainer.grad_clip must be positive");
}

TrainMetrics Learner::train_iteration(ReplayBuffer& buffer, MuZeroModel& model, RndModule* rnd,
                                      Rng& rng) {
  TransitionBatch batch = buffer.sample_batch(cfg_.batch_size, rng);
  if (cfg_.reanalyze && buffer.config().reanalyze_ratio > 0.0) {
    reanalyze_batch(buffer, batch, model, cfg_.search);
  }
  ModelGrads grads = zero_grads(model);
  TrainMetrics m;
  m.loss = unrolled_loss(model, batch, cfg_.weights, cfg_.unroll_steps, &grads);
  clip_global_norm(grads, cfg_.grad_clip);
  apply_gradients(model, grads, opt_);
  std::vector<std::int64_t> ids;
  for (const auto& s : batch.samples) ids.push_back(s.index);
  buffer.update_priorities(ids, m.loss.td_errors);
  buffer.add_trained(static_cast<std::int64_t>(batch.samples.size()));
  if (rnd) {
    std::vector<Vec> obs;
    for (const auto& s : batch.samples) {
      const bool next = s.targets.size() > 1 && !s.targets[1].observation.empty();
      obs.push_back(next ? s.targets[1].observation : s.observation);
    }
    m.rnd_loss = rnd->train_step(obs);
  }
  m.step = ++steps_;
  return m;
}

}  // namespace tz
