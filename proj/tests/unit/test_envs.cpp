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

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "doctest.h"
#include "test_util.hpp"
#include "treezero/envs.hpp"

using namespace tz;

namespace {

// Independent tic-tac-toe oracle: plain negamax over explicit lines.
constexpr int kLines[8][3] = {{0, 1, 2}, {3, 4, 5}, {6, 7, 8}, {0, 3, 6},
                              {1, 4, 7}, {2, 5, 8}, {0, 4, 8}, {2, 4, 6}};

int line_winner(const std::array<int, 9>& b) {
  for (const auto& l : kLines) {
    if (b[l[0]] != 0 && b[l[0]] == b[l[1]] && b[l[1]] == b[l[2]]) return b[l[0]];
  }
  return 0;
}

int ttt_negamax(std::array<int, 9>& b, int mover) {
  int best = -2;
  bool any = false;
  for (int c = 0; c < 9; ++c) {
    if (b[c] != 0) continue;
    any = true;
    b[c] = mover;
    const int v = line_winner(b) == mover ? 1 : -ttt_negamax(b, 3 - mover);
    b[c] = 0;
    best = std::max(best, v);
  }
  return any ? best : 0;
}

std::array<int, 9> to_array(const std::vector<int>& v) {
  std::array<int, 9> a{};
  std::copy(v.begin(), v.end(), a.begin());
  return a;
}

}  // namespace

TEST_SUITE("envs") {

TEST_CASE("kinrow reset: all-empty plane encoding") {
  auto env = make_env("tictactoe", {});
  const Vec obs = env->reset(0);
  REQUIRE(obs.size() == 27u);
  for (int i = 0; i < 27; ++i) CHECK(obs[i] == (i < 9 ? 1.0 : 0.0));
  CHECK(env->spec().num_players == 2);
  CHECK(env->spec().max_steps == 9);
  CHECK(env->to_play() == 0);
  CHECK(env->legal_actions().size() == 9u);
}

TEST_CASE("kinrow observation is from the mover's perspective") {
  KInRow env(3, 3, 3, false);
  env.reset(0);
  env.step(Action::discrete(4));
  const Vec obs = env.observation();
  CHECK(obs[4] == 0.0);
  CHECK(obs[9 + 4] == 0.0);
  CHECK(obs[18 + 4] == 1.0);  // opponent's stone for player 1
  env.step(Action::discrete(0));
  const Vec o2 = env.observation();
  CHECK(o2[9 + 4] == 1.0);
  CHECK(o2[18 + 0] == 1.0);
}

TEST_CASE("kinrow: completing a line rewards the mover and ends the game") {
  KInRow env(3, 3, 3, false);
  env.reset(0);
  for (int a : {0, 3, 1, 4}) {
    const StepResult r = env.step(Action::discrete(a));
    CHECK(r.reward == 0.0);
    CHECK_FALSE(r.done);
  }
  const StepResult r = env.step(Action::discrete(2));
  CHECK(r.reward == 1.0);
  CHECK(r.done);
  REQUIRE(r.winner.has_value());
  CHECK(*r.winner == 0);
  CHECK(env.done());
  CHECK_THROWS_AS(env.step(Action::discrete(5)), Error);
  CHECK(env.done());
  CHECK_THROWS_AS(env.legal_actions(), Error);
}

TEST_CASE("kinrow: illegal actions are errors") {
  KInRow env(3, 3, 3, false);
  env.reset(0);
  env.step(Action::discrete(4));
  CHECK_THROWS_AS(env.step(Action::discrete(4)), Error);
  CHECK_THROWS_AS(env.step(Action::discrete(9)), Error);
  CHECK_THROWS_AS(env.step(Action::discrete(-1)), Error);
  CHECK(env.steps_taken() == 1);
}

TEST_CASE("connect4: gravity and full columns") {
  auto env = make_env("connect4", {});
  env->reset(0);
  CHECK(env->legal_actions().size() == 7u);
  auto& k = dynamic_cast<KInRow&>(*env);
  CHECK(k.cell_for_action(3) == 5 * 7 + 3);
  for (int i = 0; i < 6; ++i) env->step(Action::discrete(3));
  const auto legal = env->legal_actions();
  CHECK(legal.size() == 6u);
  CHECK(std::find(legal.begin(), legal.end(), 3) == legal.end());
  CHECK_THROWS_AS(env->step(Action::discrete(3)), Error);
  CHECK(k.board()[3] != 0);
}

TEST_CASE("property: random kinrow games are zero-sum and bounded") {
  Rng rng(2);
  for (const char* id : {"tictactoe", "gomoku6", "connect4"}) {
    for (int g = 0; g < 100; ++g) {
      auto env = make_env(id, {});
      env->reset(g);
      double ret[2] = {0.0, 0.0};
      int steps = 0;
      while (!env->done()) {
        const auto legal = env->legal_actions();
        REQUIRE_FALSE(legal.empty());
        std::uniform_int_distribution<std::size_t> d(0, legal.size() - 1);
        const int mover = env->to_play();
        const StepResult r = env->step(Action::discrete(legal[d(rng)]));
        ret[mover] += r.reward;
        ret[1 - mover] -= r.reward;
        ++steps;
      }
      CHECK(steps <= env->spec().max_steps);
      const bool draw = ret[0] == 0.0 && ret[1] == 0.0;
      const bool decisive = std::fabs(ret[0]) == 1.0 && ret[0] + ret[1] == 0.0;
      CHECK((draw || decisive));
    }
  }
}

TEST_CASE("kinrow win rule agrees with an explicit line check") {
  Rng rng(5);
  for (int g = 0; g < 300; ++g) {
    KInRow env(3, 3, 3, false);
    env.reset(0);
    while (!env.done()) {
      const auto legal = env.legal_actions();
      std::uniform_int_distribution<std::size_t> d(0, legal.size() - 1);
      const StepResult r = env.step(Action::discrete(legal[d(rng)]));
      const int w = line_winner(to_array(env.board()));
      CHECK((r.winner.has_value() ? *r.winner + 1 : 0) == w);
    }
  }
}

TEST_CASE("minimax oracle") {
  KInRow env(3, 3, 3, false);
  env.reset(0);
  std::array<int, 9> empty{};
  const int oracle = ttt_negamax(empty, 1);
  CHECK(oracle == 0);
  CHECK(minimax_oracle(env).value == oracle);
  CHECK(minimax_oracle(env).optimal_actions.size() == 9u);

  // Mover owns 0 and 1, cell 2 open.
  env.set_position({1, 1, 0, 2, 2, 0, 0, 0, 0}, 0);
  const MinimaxResult r = minimax_oracle(env);
  CHECK(r.value == 1);
  CHECK(r.optimal_actions.count(2) == 1);
  auto b = to_array(env.board());
  CHECK(ttt_negamax(b, 1) == 1);

  // Already won by the previous mover.
  env.set_position({1, 1, 1, 2, 2, 0, 0, 0, 0}, 1);
  CHECK(env.done());
  CHECK(minimax_oracle(env).value == -1);
  CHECK(minimax_oracle(env).optimal_actions.empty());

  KInRow big(6, 6, 4, false);
  big.reset(0);
  CHECK_THROWS_AS(minimax_oracle(big), Error);
}

TEST_CASE("property: minimax agrees with the independent negamax on random positions") {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    KInRow env(3, 3, 3, false);
    env.reset(0);
    std::uniform_int_distribution<int> plies(0, 6);
    const int n = plies(rng);
    for (int i = 0; i < n && !env.done(); ++i) {
      const auto legal = env.legal_actions();
      std::uniform_int_distribution<std::size_t> d(0, legal.size() - 1);
      env.step(Action::discrete(legal[d(rng)]));
    }
    if (env.done()) continue;
    auto b = to_array(env.board());
    const int mover = env.to_play() + 1;
    CHECK(minimax_oracle(env).value == ttt_negamax(b, mover));
    for (int a : minimax_oracle(env).optimal_actions) {
      auto c = b;
      c[a] = mover;
      const int v = line_winner(c) == mover ? 1 : -ttt_negamax(c, 3 - mover);
      CHECK(v == minimax_oracle(env).value);
    }
  }
}

TEST_CASE("gridmaze: reset, goal reward, step limit") {
  auto env = make_env("gridmaze", {});
  env->reset(0);
  auto& m = dynamic_cast<GridMaze&>(*env);
  CHECK(m.agent_cell() == m.start_cell());
  CHECK_FALSE(m.key_held());
  CHECK_FALSE(m.door_open());
  CHECK(env->spec().max_steps == 300);

  // Scripted solution: fetch the key, open the door, walk to the goal.
  int steps = 0;
  double ret = 0.0;
  auto go = [&](int a, int n) {
    for (int i = 0; i < n; ++i) {
      const StepResult r = env->step(Action::discrete(a));
      ret += r.reward;
      ++steps;
      if (!r.done) CHECK(r.reward == 0.0);
    }
  };
  const int h = m.height();
  go(2, h - 1);  // down to the key
  CHECK(m.key_held());
  const int door_row = m.door_cell() / m.width();
  go(0, h - 1 - door_row);  // up to the door row
  go(1, m.door_cell() % m.width());
  CHECK(m.door_open());
  go(1, m.width() - 1 - m.door_cell() % m.width());
  go(2, h - 1 - door_row);
  CHECK(env->done());
  CHECK(ret == 1.0);
  CHECK(m.agent_cell() == m.goal_cell());
  CHECK_THROWS_AS(env->step(Action::discrete(0)), Error);
}

TEST_CASE("gridmaze: locked door blocks, returns are 0 without the goal") {
  auto env = make_env("gridmaze", {{"max_steps", 40}});
  auto& m = dynamic_cast<GridMaze&>(*env);
  Rng rng(1);
  for (int ep = 0; ep < 50; ++ep) {
    env->reset(ep);
    double ret = 0.0;
    int steps = 0;
    while (!env->done()) {
      std::uniform_int_distribution<int> d(0, 3);
      ret += env->step(Action::discrete(d(rng))).reward;
      ++steps;
      if (!m.key_held()) CHECK(m.agent_cell() % m.width() <= m.door_cell() % m.width() - 1);
    }
    CHECK(steps <= 40);
    CHECK((ret == 0.0 || ret == 1.0));
    CHECK((ret == 1.0) == (m.agent_cell() == m.goal_cell()));
  }
}

TEST_CASE("2048: reset spawns exactly two tiles") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    Game2048 env({});
    env.reset(s);
    const int tiles = static_cast<int>(std::count_if(env.board().begin(), env.board().end(),
                                                     [](int e) { return e != 0; }));
    CHECK(tiles == 2);
  }
}

TEST_CASE("2048: spawned tiles come from the declared set") {
  Game2048::Options o;
  o.num_chances = 5;
  Game2048 env(o);
  CHECK(env.tile_values() == std::vector<int>{2, 4, 8, 16, 32});
  CHECK(env.spec().chance_dim == 80);
  Rng rng(3);
  env.reset(3);
  for (int i = 0; i < 200 && !env.done(); ++i) {
    const auto legal = env.legal_actions();
    std::uniform_int_distribution<std::size_t> d(0, legal.size() - 1);
    const StepResult r = env.step(Action::discrete(legal[d(rng)]));
    REQUIRE(r.chance_outcome.has_value());
    const int cell = *r.chance_outcome / 5;
    const int tile = 1 << env.board()[cell];
    CHECK(std::find(env.tile_values().begin(), env.tile_values().end(), tile) != env.tile_values().end());
    CHECK(tile == env.tile_values()[*r.chance_outcome % 5]);
  }
}

TEST_CASE("2048: legal moves are exactly the ones that change the board") {
  Rng rng(4);
  Game2048 env({});
  for (int g = 0; g < 20; ++g) {
    env.reset(g);
    while (!env.done()) {
      std::vector<int> expected;
      for (int d = 0; d < 4; ++d) {
        // Independent slide: compact and merge each line by hand.
        auto b = env.board();
        bool changed = false;
        for (int line = 0; line < 4; ++line) {
          std::vector<int> cells;
          for (int j = 0; j < 4; ++j) {
            const int r = d == 0 ? j : d == 2 ? 3 - j : line;
            const int c = d == 1 ? 3 - j : d == 3 ? j : line;
            cells.push_back(r * 4 + c);
          }
          std::vector<int> vals;
          for (int c : cells) {
            if (b[c]) vals.push_back(b[c]);
          }
          std::vector<int> merged;
          for (std::size_t i = 0; i < vals.size(); ++i) {
            if (i + 1 < vals.size() && vals[i] == vals[i + 1]) {
              merged.push_back(vals[i] + 1);
              ++i;
            } else {
              merged.push_back(vals[i]);
            }
          }
          merged.resize(4, 0);
          for (int j = 0; j < 4; ++j) changed |= b[cells[j]] != merged[j];
        }
        if (changed) expected.push_back(d);
      }
      CHECK(env.legal_actions() == expected);
      std::uniform_int_distribution<std::size_t> d(0, expected.size() - 1);
      env.step(Action::discrete(expected[d(rng)]));
    }
  }
}

TEST_CASE("2048: merge score and illegal moves") {
  Game2048 env({});
  env.reset(0);
  std::array<int, 16> b{};
  b[0] = 1;
  b[1] = 1;
  b[2] = 2;
  b[3] = 2;
  env.set_board(b);
  const double reward = env.step_afterstate(Action::discrete(3));
  CHECK(reward == 4.0 + 8.0);
  CHECK(env.board()[0] == 2);
  CHECK(env.board()[1] == 3);
  CHECK(env.board()[2] == 0);
  CHECK_THROWS_AS(env.step_afterstate(Action::discrete(3)), Error);  // chance pending
  const StepResult r = env.resolve_chance(15 * 2 + 1);
  CHECK(r.reward == 12.0);
  CHECK(env.board()[15] == 2);
  CHECK(*r.chance_outcome == 31);

  std::array<int, 16> stuck{};
  stuck[0] = 1;
  env.set_board(stuck);
  CHECK_THROWS_AS(env.step(Action::discrete(0)), Error);  // up does nothing
  CHECK_THROWS_AS(env.step(Action::discrete(3)), Error);

  Game2048::Options lo;
  lo.log_reward = true;
  Game2048 lenv(lo);
  lenv.reset(0);
  lenv.set_board(b);
  CHECK(lenv.step_afterstate(Action::discrete(3)) == doctest::Approx(std::log2(13.0)).epsilon(1e-15));
}

TEST_CASE("2048: spawn frequencies follow the chance law") {
  // Sliding left merges two tiles in row 0; the spawn then lands on one of
  // the cells the move leaves empty.
  std::array<int, 16> board{};
  for (int c = 0; c < 16; ++c) board[c] = (c == 3 || c == 12) ? 0 : 1 + (c % 2) + 2 * ((c / 4) % 2);
  board[0] = 1;
  board[1] = 1;
  for (int nc : {2, 5}) {
    Game2048::Options o;
    o.num_chances = nc;
    Game2048 shape(o);
    shape.reset(0);
    shape.set_board(board);
    shape.step_afterstate(Action::discrete(3));
    const Vec law = shape.chance_distribution();

    const int n = 50000;
    std::vector<long> counts(16 * nc, 0);
    Rng seeds(nc);
    for (int i = 0; i < n; ++i) {
      Game2048 g(o);
      g.reset(seeds());
      g.set_board(board);
      ++counts[*g.step(Action::discrete(3)).chance_outcome];
    }
    std::vector<long> obs;
    std::vector<double> exp;
    for (std::size_t i = 0; i < law.size(); ++i) {
      if (law[i] > 0.0) {
        obs.push_back(counts[i]);
        exp.push_back(law[i]);
        CHECK(std::fabs(counts[i] / static_cast<double>(n) - law[i]) <= 0.02);
      } else {
        CHECK(counts[i] == 0);
      }
    }
    const long empty = std::count(shape.board().begin(), shape.board().end(), 0);
    CHECK(empty == 3);
    CHECK(obs.size() == static_cast<std::size_t>(empty * nc));
    const double stat = test::chi_square_stat(obs, exp);
    CHECK(test::chi_square_p(stat, static_cast<int>(obs.size()) - 1) > 0.001);
  }
}

TEST_CASE("clone and restore reproduce behavior, including the chance stream") {
  for (const char* id : {"tictactoe", "gridmaze", "2048", "pendulum"}) {
    auto env = make_env(id, {});
    env->reset(7);
    env->step(Action::discrete(env->legal_actions()[0]));
    const EnvStateToken tok = env->clone_state();
    const int a = env->legal_actions().back();
    const StepResult r1 = env->step(Action::discrete(a));
    env->restore_state(tok);
    const StepResult r2 = env->step(Action::discrete(a));
    CHECK(r1.obs == r2.obs);
    CHECK(r1.reward == r2.reward);
    CHECK(r1.done == r2.done);
    CHECK(r1.chance_outcome == r2.chance_outcome);

    auto copy = env->clone();
    const Vec before = env->observation();
    if (!copy->done()) copy->step(Action::discrete(copy->legal_actions()[0]));
    CHECK(env->observation() == before);
  }
  auto t = make_env("tictactoe", {});
  auto g = make_env("gridmaze", {});
  CHECK_THROWS_AS(t->restore_state(g->clone_state()), Error);
}

TEST_CASE("pendulum: continuous space, bounded non-positive reward") {
  auto env = make_env("pendulum", {});
  CHECK(env->spec().action_space.kind == ActionSpace::Kind::continuous);
  CHECK(env->spec().action_space.joint_size() == 11);
  CHECK(env->spec().max_steps == 200);
  CHECK(env->reset(0).size() == 3u);
  Rng rng(0);
  int steps = 0;
  while (!env->done()) {
    std::uniform_int_distribution<int> d(0, 10);
    const StepResult r = env->step(Action::discrete(d(rng)));
    CHECK(r.reward <= 0.0);
    CHECK(std::isfinite(r.reward));
    CHECK(std::fabs(r.obs[2]) <= 1.0);
    CHECK(r.obs[0] * r.obs[0] + r.obs[1] * r.obs[1] == doctest::Approx(1.0).epsilon(1e-12));
    ++steps;
  }
  CHECK(steps == 200);
  CHECK_THROWS_AS(env->step(Action::discrete(0)), Error);

  PendulumLite p({});
  p.reset(0);
  p.set_state(0.0, 0.0);
  CHECK(p.step(Action::continuous({0.0})).reward == 0.0);
  p.set_state(0.5, 2.0);
  const StepResult r = p.step(Action::continuous({1.0}));
  CHECK(r.reward == doctest::Approx(-(0.25 + 0.1 * 4.0 + 0.001)).epsilon(1e-14));
  CHECK_THROWS_AS(p.step(Action::discrete(11)), Error);
}

TEST_CASE("reset is deterministic for a fixed seed") {
  for (const char* id : {"2048", "pendulum"}) {
    auto a = make_env(id, {});
    auto b = make_env(id, {});
    CHECK(a->reset(42) == b->reset(42));
    auto c = make_env(id, {});
    bool differs = false;
    for (std::uint64_t s = 0; s < 5 && !differs; ++s) differs = c->reset(s) != a->reset(42);
    CHECK(differs);
  }
}

TEST_CASE("make_env rejects unknown ids and parameters") {
  CHECK_THROWS_AS(make_env("chess", {}), ConfigError);
  CHECK_THROWS_AS(make_env("tictactoe", {{"k", 3}}), ConfigError);
  CHECK_THROWS_AS(make_env("2048", {{"num_chances", 3}}), ConfigError);
  CHECK_THROWS_AS(make_env("gridmaze", {{"room_width", 1}}), ConfigError);
  auto k = make_env("kinrow", {{"height", 4}, {"width", 5}, {"k", 3}, {"gravity", 1}});
  CHECK(k->spec().action_space.n == 5);
  CHECK(k->spec().obs_dim == 60);
  CHECK(make_env("gomoku6", {})->spec().action_space.n == 36);
  CHECK(dynamic_cast<KInRow&>(*make_env("gomoku6", {})).k() == 4);
}

}  // TEST_SUITE
