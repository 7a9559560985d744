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

#include <cmath>

#include "doctest.h"
#include "loss_oracle.hpp"
#include "test_util.hpp"
#include "treezero/trainer.hpp"

using namespace tz;
using namespace tz::test;

namespace {

void check_fd(MuZeroModel& m, const TransitionBatch& batch, const LossWeights& w, int U) {
  const test::FdStats st = test::fd_compare(m, batch, w, U);
  CHECK(st.forward_gap <= 1e-10 * std::max(1.0, reference_loss(m, batch, w, U)));
  CHECK(st.checked > 100);
  CHECK(st.max_rel <= 1e-4);
  CHECK(st.global_rel <= 1e-4);
}

TrainerConfig small_trainer(int batch = 8) {
  TrainerConfig c;
  c.batch_size = batch;
  c.unroll_steps = 2;
  return c;
}

GameSegment random_segment(Env& env, Rng& rng, std::uint64_t seed) {
  GameSegment s;
  s.observations.push_back(env.reset(seed));
  const int n = env.spec().action_space.joint_size();
  while (!env.done()) {
    const auto legal = env.legal_actions();
    std::uniform_int_distribution<std::size_t> d(0, legal.size() - 1);
    const int a = legal[d(rng)];
    Vec pi(n, 0.0);
    for (int l : legal) pi[l] = 1.0 / legal.size();
    s.to_play.push_back(env.to_play());
    s.legal.push_back(legal);
    const StepResult r = env.step(Action::discrete(a));
    s.observations.push_back(r.obs);
    s.actions.push_back(Action::discrete(a));
    s.rewards_ext.push_back(r.reward);
    s.rewards_int.push_back(0.0);
    s.candidates.emplace_back();
    s.policy_targets.push_back(pi);
    s.root_values.push_back(0.0);
    s.chance_outcomes.push_back(r.chance_outcome.value_or(-1));
    s.search_seeds.push_back(0);
  }
  return s;
}

std::vector<double> all_params(const MuZeroModel& m) {
  std::vector<double> out;
  for (const nn::Mlp* net : m.networks()) {
    const auto f = net->params().flat();
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("defaults") {
  const LossWeights w;
  CHECK(w.policy == 1.0);
  CHECK(w.value == 1.0);
  CHECK(w.reward == 1.0);
  CHECK(w.consistency == 0.0);
  CHECK(w.entropy == 0.0);
  const TrainerConfig t;
  CHECK(t.batch_size == 64);
  CHECK(t.grad_clip == 10.0);
  CHECK(t.unroll_steps == 5);
  CHECK(kDynamicsGradScale == 0.5);
  CHECK(nn::OptimizerConfig{}.lr == 3e-3);
  CHECK(nn::OptimizerConfig{}.kind == nn::OptimizerKind::adam);
}

TEST_CASE("finite differences: plain loss, L=4, U=2, one sample") {
  auto env = make_env("tictactoe", {});
  MuZeroModel m(env->spec(), tiny(), 1);
  Rng rng(2);
  TransitionBatch batch;
  batch.samples.push_back(make_sample(m, 2, rng));
  check_fd(m, batch, LossWeights{}, 2);
}

TEST_CASE("finite differences: consistency and entropy terms, absorbing tail") {
  auto env = make_env("gridmaze", {{"room_width", 2}, {"height", 2}});
  MuZeroModel m(env->spec(), tiny(), 3);
  Rng rng(4);
  LossWeights w;
  w.consistency = 2.0;
  w.entropy = 0.05;
  TransitionBatch batch;
  batch.samples.push_back(make_sample(m, 2, rng, false, 2));
  batch.samples.push_back(make_sample(m, 2, rng));
  batch.samples[1].weight = 0.4;
  check_fd(m, batch, w, 2);
}

TEST_CASE("finite differences: stochastic model") {
  auto env = make_env("2048", {{"num_chances", 2}});
  MuZeroModel m(env->spec(), tiny(PolicyKind::categorical, true), 5);
  Rng rng(6);
  TransitionBatch batch;
  batch.samples.push_back(make_sample(m, 2, rng));
  check_fd(m, batch, LossWeights{}, 2);
}

TEST_CASE("finite differences: factored policy over sampled candidates") {
  auto env = make_env("pendulum", {{"bins", 5}});
  MuZeroModel m(env->spec(), tiny(PolicyKind::factored), 7);
  Rng rng(8);
  TransitionBatch batch;
  batch.samples.push_back(make_sample(m, 2, rng, true));
  check_fd(m, batch, LossWeights{}, 2);
}

TEST_CASE("consistency target branch is stop-gradient") {
  auto env = make_env("gridmaze", {{"room_width", 2}, {"height", 2}});
  MuZeroModel m(env->spec(), tiny(), 9);
  Rng rng(10);
  LossWeights w;
  w.policy = w.value = w.reward = 0.0;
  w.consistency = 1.0;
  TransitionBatch batch;
  batch.samples.push_back(make_sample(m, 1, rng));
  ModelGrads g = zero_grads(m);
  unrolled_loss(m, batch, w, 1, &g, 1.0);
  // Differentiating through the target branch too gives a different gradient
  // on the shared representation and projection networks.
  double max_gap = 0.0;
  auto nets = m.networks();
  for (int n : {0, 3}) {
    auto p = nets[n]->params().flat();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double keep = p[j];
      p[j] = keep + 1e-6;
      const double up = reference_loss(m, batch, w, 1);
      p[j] = keep - 1e-6;
      const double dn = reference_loss(m, batch, w, 1);
      p[j] = keep;
      max_gap = std::max(max_gap, std::fabs((up - dn) / 2e-6 - g[n].flat()[j]));
    }
  }
  CHECK(max_gap > 1e-3);
  // The head network is online-only, so no gradient reaches it from elsewhere.
  CHECK(global_norm(ModelGrads{g[4]}) > 0.0);
}

TEST_CASE("dynamics input gradient is scaled by the configured factor") {
  auto env = make_env("tictactoe", {});
  MuZeroModel m(env->spec(), tiny(), 11);
  Rng rng(12);
  LossWeights w;
  w.policy = w.value = 0.0;  // reward only: every path to the representation crosses one dynamics input
  TransitionBatch batch;
  batch.samples.push_back(make_sample(m, 1, rng));
  ModelGrads full = zero_grads(m), half = zero_grads(m), dflt = zero_grads(m);
  unrolled_loss(m, batch, w, 1, &full, 1.0);
  unrolled_loss(m, batch, w, 1, &half, 0.5);
  unrolled_loss(m, batch, w, 1, &dflt);
  const auto f = full[0].flat();
  const auto h = half[0].flat();
  for (std::size_t j = 0; j < f.size(); ++j) CHECK(h[j] == doctest::Approx(0.5 * f[j]).epsilon(1e-12));
  CHECK(global_norm(ModelGrads{full[0]}) > 0.0);
  const auto fd = full[1].flat();
  const auto hd = half[1].flat();
  for (std::size_t j = 0; j < fd.size(); ++j) CHECK(hd[j] == fd[j]);
  for (std::size_t n = 0; n < dflt.size(); ++n) {
    const auto a = dflt[n].flat();
    const auto b = half[n].flat();
    CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
}

TEST_CASE("U=0 degenerate loss is policy cross-entropy plus value error") {
  auto env = make_env("tictactoe", {});
  MuZeroModel m(env->spec(), tiny(), 13);
  Rng rng(14);
  TransitionBatch batch;
  batch.samples.push_back(make_sample(m, 0, rng));
  const auto& s = batch.samples[0];
  const NetworkOutput out = m.initial_inference(s.observation);
  double ce = 0.0;
  for (int k = 0; k < 9; ++k) ce -= s.targets[0].policy[k] * log_softmax_at(out.policy_logits, k);
  const double mse = (out.value - s.targets[0].value) * (out.value - s.targets[0].value);
  const LossBreakdown lb = unrolled_loss(m, batch, LossWeights{}, 0, nullptr);
  CHECK(lb.total == doctest::Approx(ce + mse).epsilon(1e-12));
  CHECK(lb.reward == 0.0);
  CHECK(lb.consistency == 0.0);
  CHECK(lb.td_errors.size() == 1u);
  CHECK(lb.td_errors[0] == doctest::Approx(std::fabs(s.targets[0].value - out.value)).epsilon(1e-15));
}

TEST_CASE("loss composition and importance weights") {
  auto env = make_env("tictactoe", {});
  MuZeroModel m(env->spec(), tiny(), 15);
  Rng rng(16);
  TransitionBatch batch;
  batch.samples.push_back(make_sample(m, 2, rng));
  LossWeights w;
  w.policy = 0.7;
  w.value = 1.3;
  w.reward = 0.4;
  w.entropy = 0.05;
  const LossBreakdown lb = unrolled_loss(m, batch, w, 2, nullptr);
  CHECK(lb.total == doctest::Approx(0.7 * lb.policy + 1.3 * lb.value + 0.4 * lb.reward - 0.05 * lb.entropy).epsilon(1e-14));
  TransitionBatch half = batch;
  half.samples[0].weight = 0.5;
  CHECK(unrolled_loss(m, half, w, 2, nullptr).total == doctest::Approx(0.5 * lb.total).epsilon(1e-14));
  CHECK_THROWS_AS(unrolled_loss(m, batch, w, 3, nullptr), Error);
  TransitionBatch bad = batch;
  bad.samples[0].targets[1].value = std::nan("");
  try {
    unrolled_loss(m, bad, w, 2, nullptr);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("non-finite loss") != std::string::npos);
  }
}

TEST_CASE("gradient clipping") {
  auto env = make_env("tictactoe", {});
  MuZeroModel m(env->spec(), tiny(), 17);
  Rng rng(18);
  for (double scale : {0.01, 1.0, 100.0}) {
    ModelGrads g = zero_grads(m);
    for (auto& p : g) {
      for (double& x : p.flat()) x = random_vec(1, rng, scale)[0];
    }
    const ModelGrads before = g;
    const double norm = clip_global_norm(g, 10.0);
    CHECK(norm == global_norm(before));
    CHECK(global_norm(g) <= 10.0 + 1e-9);
    if (norm <= 10.0) {
      for (std::size_t n = 0; n < g.size(); ++n) {
        const auto a = g[n].flat();
        const auto b = before[n].flat();
        CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
      }
    } else {
      CHECK(global_norm(g) == doctest::Approx(10.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("train_iteration: zero learning rate leaves parameters unchanged") {
  auto env = make_env("tictactoe", {});
  MuZeroModel m(env->spec(), tiny(), 19);
  BufferConfig bc;
  bc.unroll_steps = 2;
  ReplayBuffer buf(bc);
  Rng rng(20);
  for (int i = 0; i < 4; ++i) buf.push_segment(random_segment(*env, rng, i));
  nn::OptimizerConfig oc;
  oc.lr = 0.0;
  Learner learner(small_trainer(), oc);
  const auto before = all_params(m);
  const TrainMetrics tm = learner.train_iteration(buf, m, nullptr, rng);
  CHECK(all_params(m) == before);
  CHECK(tm.step == 1);
  CHECK(std::isfinite(tm.loss.total));
  CHECK(tm.loss.grad_norm > 0.0);
  CHECK(buf.stats().trained == 8);
}

TEST_CASE("train_iteration: reported TD errors become the priorities") {
  auto env = make_env("tictactoe", {});
  MuZeroModel m(env->spec(), tiny(), 21);
  BufferConfig bc;
  bc.unroll_steps = 2;
  ReplayBuffer buf(bc);
  Rng rng(22);
  for (int i = 0; i < 4; ++i) buf.push_segment(random_segment(*env, rng, i));
  Learner learner(small_trainer(), nn::OptimizerConfig{});
  Rng probe = rng;
  const TransitionBatch batch = buf.sample_batch(8, probe);
  const TrainMetrics tm = learner.train_iteration(buf, m, nullptr, rng);
  REQUIRE(tm.loss.td_errors.size() == 8u);
  std::map<std::int64_t, double> last;
  for (int i = 0; i < 8; ++i) last[batch.samples[i].index] = tm.loss.td_errors[i];
  for (auto [id, td] : last) CHECK(buf.priority(id) == td + ReplayBuffer::kPriorityEps);
}

TEST_CASE("train_iteration: deterministic given seeds") {
  auto env = make_env("gridmaze", {{"room_width", 2}, {"height", 2}, {"max_steps", 20}});
  auto run = [&] {
    MuZeroModel m(env->spec(), tiny(), 23);
    BufferConfig bc;
    bc.unroll_steps = 2;
    bc.reanalyze_ratio = 0.5;
    ReplayBuffer buf(bc);
    Rng rng(24);
    for (int i = 0; i < 3; ++i) buf.push_segment(random_segment(*env, rng, i));
    TrainerConfig tc = small_trainer();
    tc.search.num_simulations = 4;
    tc.weights.consistency = 2.0;
    Learner learner(tc, nn::OptimizerConfig{});
    RndModule rnd(env->spec().obs_dim, RndConfig{}, 3);
    std::vector<double> losses;
    for (int i = 0; i < 5; ++i) losses.push_back(learner.train_iteration(buf, m, &rnd, rng).loss.total);
    return std::make_pair(losses, all_params(m));
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("property: loss decreases on a frozen batch for every variant") {
  struct Variant {
    const char* env;
    std::map<std::string, double> params;
    PolicyKind policy;
    bool stochastic;
    bool sampled;
    double consistency;
    double entropy;
  };
  const std::vector<Variant> variants = {
      {"tictactoe", {}, PolicyKind::categorical, false, false, 0.0, 0.0},
      {"tictactoe", {}, PolicyKind::categorical, false, false, 2.0, 0.0},
      {"tictactoe", {}, PolicyKind::categorical, false, false, 0.0, 0.05},
      {"2048", {{"num_chances", 2}}, PolicyKind::categorical, true, false, 0.0, 0.0},
      {"pendulum", {{"bins", 5}}, PolicyKind::factored, false, true, 2.0, 0.0},
      {"pendulum", {{"bins", 5}}, PolicyKind::gaussian, false, true, 0.0, 0.0},
  };
  for (const Variant& v : variants) {
    CAPTURE(v.env);
    auto env = make_env(v.env, v.params);
    ModelConfig mc = tiny(v.policy, v.stochastic);
    mc.hidden_dim = 16;
    MuZeroModel m(env->spec(), mc, 25);
    Rng rng(26);
    TransitionBatch batch;
    for (int i = 0; i < 4; ++i) {
      TransitionSample s = make_sample(m, 2, rng, v.sampled && v.policy != PolicyKind::gaussian);
      if (v.policy == PolicyKind::gaussian) {
        for (auto& a : s.actions) a = Action::continuous({0.3});
        for (auto& t : s.targets) {
          t.candidates = {Action::continuous({0.2}), Action::continuous({-0.5})};
          t.policy = {0.7, 0.3};
        }
      }
      batch.samples.push_back(s);
    }
    LossWeights w;
    w.consistency = v.consistency;
    w.entropy = v.entropy;
    nn::Optimizer opt(nn::OptimizerConfig{});
    const double first = unrolled_loss(m, batch, w, 2, nullptr).total;
    double last = first;
    for (int i = 0; i < 200; ++i) {
      ModelGrads g = zero_grads(m);
      last = unrolled_loss(m, batch, w, 2, &g).total;
      clip_global_norm(g, 10.0);
      apply_gradients(m, g, opt);
    }
    last = unrolled_loss(m, batch, w, 2, nullptr).total;
    CHECK(last < first);
  }
}

TEST_CASE("two-player targets: seat relabeling is invariant, adjacent plies are negated") {
  auto env = make_env("tictactoe", {});
  Rng rng(27);
  BufferConfig cfg;
  cfg.discount = 1.0;
  cfg.n_step = 9;
  cfg.unroll_steps = 0;
  int decisive = 0;
  for (int g = 0; g < 100; ++g) {
    GameSegment s = random_segment(*env, rng, g);
    GameSegment swapped = s;
    for (int& p : swapped.to_play) p = 1 - p;
    if (s.winner) swapped.winner = 1 - *s.winner;
    for (int pos = 0; pos < s.length(); ++pos) {
      const double z = compute_targets(s, pos, cfg)[0].value;
      CHECK(compute_targets(swapped, pos, cfg)[0].value == z);
      if (pos + 1 < s.length()) {
        CHECK(compute_targets(s, pos + 1, cfg)[0].value == -z);
      }
    }
    decisive += s.external_return() != 0.0;
  }
  CHECK(decisive > 0);
}

}  // TEST_SUITE
