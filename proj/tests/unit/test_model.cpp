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
#include <sstream>

#include "doctest.h"
#include "test_util.hpp"
#include "treezero/model.hpp"

using namespace tz;

namespace {

ModelConfig small(PolicyKind policy = PolicyKind::categorical, bool stochastic = false) {
  ModelConfig c;
  c.latent_dim = 6;
  c.hidden_dim = 10;
  c.embed_dim = 5;
  c.policy = policy;
  c.stochastic = stochastic;
  return c;
}

EnvSpec tictactoe_spec() { return make_env("tictactoe", {})->spec(); }

}  // namespace

TEST_SUITE("model") {

TEST_CASE("initial inference: zero reward, determinism, bounded value") {
  ModelConfig cfg = small();
  cfg.value_head = ValueHeadKind::tanh_bounded;
  const MuZeroModel m(tictactoe_spec(), cfg, 1);
  auto env = make_env("tictactoe", {});
  const Vec obs = env->reset(0);
  const NetworkOutput a = m.initial_inference(obs);
  const NetworkOutput b = m.initial_inference(obs);
  CHECK(a.reward == 0.0);
  CHECK(a.latent == b.latent);
  CHECK(a.value == b.value);
  CHECK(a.policy_logits == b.policy_logits);
  CHECK(static_cast<int>(a.latent.size()) == cfg.latent_dim);
  CHECK(static_cast<int>(a.policy_logits.size()) == 9);
  Rng rng(3);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 50; ++i) {
    Vec x(27);
    for (double& v : x) v = u(rng);
    CHECK(std::fabs(m.initial_inference(x).value) <= 1.0);
  }
  CHECK_THROWS_AS(m.initial_inference(Vec(5, 0.0)), Error);
}

TEST_CASE("recurrent inference: deterministic, discrete one-hot encoding") {
  const MuZeroModel m(tictactoe_spec(), small(), 2);
  const Vec latent = m.initial_inference(Vec(27, 0.0)).latent;
  const NetworkOutput a = m.recurrent_inference(latent, Action::discrete(4));
  const NetworkOutput b = m.recurrent_inference(latent, Action::discrete(4));
  CHECK(a.latent == b.latent);
  CHECK(a.reward == b.reward);
  CHECK(m.nets().dynamics.input_dim() == 6 + 9);
  const Vec enc = ActionSpace::make_discrete(9).encode_action(Action::discrete(4));
  for (int i = 0; i < 9; ++i) CHECK(enc[i] == (i == 4 ? 1.0 : 0.0));
  CHECK_THROWS_AS(m.recurrent_inference(latent, Action::discrete(9)), Error);
  CHECK_THROWS_AS(m.recurrent_inference(latent, Action::continuous({0.1})), Error);
}

TEST_CASE("continuous action appends raw components") {
  EnvSpec spec;
  spec.obs_dim = 3;
  spec.action_space = ActionSpace::make_continuous(2, 5);
  spec.max_steps = 10;
  const MuZeroModel m(spec, small(PolicyKind::factored), 4);
  CHECK(m.nets().dynamics.input_dim() == 6 + 2);
  const Vec enc = spec.action_space.encode_action(Action::continuous({0.25, -0.5}));
  CHECK(enc == Vec{0.25, -0.5});
  const Vec latent = m.initial_inference(Vec{1.0, 0.0, 0.0}).latent;
  const NetworkOutput a = m.recurrent_inference(latent, Action::continuous({0.25, -0.5}));
  const NetworkOutput b = m.recurrent_inference(latent, Action::discrete(spec.action_space.encode({2, 1})));
  CHECK(b.latent.size() == a.latent.size());
  CHECK(m.policy_layout().logits_size() == 10);
}

TEST_CASE("afterstate and chance heads") {
  auto env = make_env("2048", {{"num_chances", 2}});
  const MuZeroModel m(env->spec(), small(PolicyKind::categorical, true), 5);
  CHECK(m.chance_dim() == 32);
  const Vec obs = env->reset(1);
  const Vec latent = m.initial_inference(obs).latent;
  const AfterstateOutput as = m.afterstate_inference(latent, Action::discrete(1));
  const AfterstateOutput as2 = m.afterstate_inference(latent, Action::discrete(1));
  CHECK(as.afterstate == as2.afterstate);
  CHECK(as.chance_logits.size() == 32u);
  double s = 0.0;
  for (double p : nn::softmax(as.chance_logits)) s += p;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));

  Vec code(32, 0.0);
  code[7] = 1.0;
  const NetworkOutput c1 = m.chance_recurrent_inference(as.afterstate, code);
  const NetworkOutput c2 = m.chance_recurrent_inference(as.afterstate, code);
  CHECK(c1.latent == c2.latent);
  CHECK(std::isfinite(c1.reward));
  Vec bad(32, 0.0);
  bad[0] = 0.5;
  bad[1] = 0.5;
  CHECK_THROWS_AS(m.chance_recurrent_inference(as.afterstate, bad), Error);
  CHECK_THROWS_AS(check_one_hot(Vec{0.5, 0.5}), Error);

  const MuZeroModel plain(env->spec(), small(), 5);
  CHECK_THROWS_AS(plain.afterstate_inference(latent, Action::discrete(1)), Error);
}

TEST_CASE("stochastic mode needs an environment with chance events") {
  CHECK_THROWS_AS(MuZeroModel(tictactoe_spec(), small(PolicyKind::categorical, true), 1), ConfigError);
}

TEST_CASE("ssl embedding branches") {
  const MuZeroModel m(tictactoe_spec(), small(), 6);
  const Vec latent = m.initial_inference(Vec(27, 0.5)).latent;
  const Vec online = m.ssl_embed(latent, SslBranch::online);
  const Vec target = m.ssl_embed(latent, SslBranch::target);
  CHECK(online.size() == target.size());
  CHECK(static_cast<int>(online.size()) == 5);
  CHECK(target == m.nets().projection.forward(latent));
  CHECK(online == m.nets().projection_head.forward(m.nets().projection.forward(latent)));
  for (double x : online) CHECK(std::isfinite(x));
}

TEST_CASE("consistency loss") {
  const Vec u = {0.3, -0.1, 2.0};
  CHECK(consistency_loss(u, u) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(consistency_loss(Vec{1.0, 0.0}, Vec{0.0, 1.0}) == 0.0);
  CHECK_THROWS_AS(consistency_loss(Vec{0.0, 0.0}, Vec{0.0, 1.0}), Error);
}

TEST_CASE("policy layout: factored probabilities are per-dimension products") {
  PolicyLayout layout;
  layout.kind = PolicyKind::factored;
  layout.space = ActionSpace::make_continuous(2, 3);
  CHECK(layout.logits_size() == 6);
  CHECK(layout.num_joint_actions() == 9);
  const Vec logits = {0.1, 0.5, -0.3, 1.0, 0.0, 0.2};
  const Vec p = layout.joint_probs(logits, {});
  const Vec d0 = nn::softmax(std::span<const double>(logits).subspan(0, 3));
  const Vec d1 = nn::softmax(std::span<const double>(logits).subspan(3, 3));
  double s = 0.0;
  for (int j = 0; j < 9; ++j) {
    const auto bins = layout.space.decode(j);
    CHECK(p[j] == doctest::Approx(d0[bins[0]] * d1[bins[1]]).epsilon(1e-13));
    CHECK(layout.log_prob(logits, Action::discrete(j)) == doctest::Approx(std::log(p[j])).epsilon(1e-12));
    s += p[j];
  }
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(layout.entropy(logits) == doctest::Approx(nn::entropy(d0) + nn::entropy(d1)).epsilon(1e-12));
}

TEST_CASE("policy layout: masked categorical probabilities") {
  PolicyLayout layout;
  layout.space = ActionSpace::make_discrete(4);
  const Vec p = layout.joint_probs(Vec{0.0, 1.0, 2.0, 3.0}, {0, 2});
  CHECK(p[1] == 0.0);
  CHECK(p[3] == 0.0);
  CHECK(p[0] + p[2] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(p[2] / p[0] == doctest::Approx(std::exp(2.0)).epsilon(1e-12));
}

TEST_CASE("policy layout: gaussian log density and gradients") {
  PolicyLayout layout;
  layout.kind = PolicyKind::gaussian;
  layout.space = ActionSpace::make_continuous(1, 11);
  CHECK(layout.logits_size() == 2);
  const Vec logits = {0.2, std::log(0.5)};
  const Action a = Action::continuous({0.7});
  const double z = (0.7 - 0.2) / 0.5;
  const double expected = -0.5 * z * z - std::log(0.5) - 0.5 * std::log(2.0 * M_PI);
  CHECK(layout.log_prob(logits, a) == doctest::Approx(expected).epsilon(1e-12));

  for (const PolicyLayout& l : {layout, PolicyLayout{PolicyKind::factored, ActionSpace::make_continuous(2, 3)},
                                PolicyLayout{PolicyKind::categorical, ActionSpace::make_discrete(5)}}) {
    Rng rng(8);
    std::normal_distribution<double> n(0.0, 0.5);
    Vec lg(l.logits_size());
    for (double& x : lg) x = n(rng);
    const Action act = l.kind == PolicyKind::gaussian ? Action::continuous({0.3}) : Action::discrete(2);
    Vec g(lg.size(), 0.0), ge(lg.size(), 0.0);
    l.add_log_prob_grad(lg, act, 1.0, g);
    l.add_entropy_grad(lg, 1.0, ge);
    for (std::size_t i = 0; i < lg.size(); ++i) {
      Vec up = lg, dn = lg;
      up[i] += 1e-6;
      dn[i] -= 1e-6;
      const double fd = (l.log_prob(up, act) - l.log_prob(dn, act)) / 2e-6;
      const double fde = (l.entropy(up) - l.entropy(dn)) / 2e-6;
      CHECK(std::fabs(fd - g[i]) <= 1e-6 * std::max(1.0, std::fabs(fd)));
      CHECK(std::fabs(fde - ge[i]) <= 1e-6 * std::max(1.0, std::fabs(fde)));
    }
  }
}

TEST_CASE("save and load round trip; compatibility check") {
  auto env = make_env("2048", {{"num_chances", 2}});
  const MuZeroModel m(env->spec(), small(PolicyKind::categorical, true), 9);
  std::stringstream ss;
  m.save(ss);
  const MuZeroModel back = MuZeroModel::load(ss);
  CHECK(back.config() == m.config());
  const auto a = m.networks();
  const auto b = back.networks();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->params() == b[i]->params());
  CHECK_NOTHROW(back.check_compatible(env->spec()));
  CHECK_THROWS_AS(back.check_compatible(tictactoe_spec()), ConfigError);
}

}  // TEST_SUITE
