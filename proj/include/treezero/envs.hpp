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

// Built-in environments: KInRow (TicTacToe / Gomoku / Connect4), GridMaze,
// 2048 and PendulumLite, plus the exact negamax oracle for KInRow.

#ifndef TREEZERO_ENVS_HPP_
#define TREEZERO_ENVS_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "treezero/common.hpp"

namespace tz {

struct EnvSpec {
  int obs_dim = 0;
  ActionSpace action_space;
  int num_players = 1;
  int max_steps = 1;
  std::optional<int> chance_dim;
};

struct StepResult {
  Vec obs;
  double reward = 0.0;  // for the player who just moved
  bool done = false;
  std::optional<int> winner;          // two-player: set on a decisive finish
  std::optional<int> chance_outcome;  // set iff the env declares chance_dim
};

class Env;

// Opaque snapshot produced by Env::clone_state.
class EnvStateToken {
 public:
  explicit EnvStateToken(std::shared_ptr<const Env> snapshot)
      : snapshot_(std::move(snapshot)) {}
  const Env& snapshot() const { return *snapshot_; }

 private:
  std::shared_ptr<const Env> snapshot_;
};

class Env {
 public:
  virtual ~Env() = default;

  virtual std::string kind() const = 0;
  virtual const EnvSpec& spec() const = 0;

  virtual Vec reset(std::uint64_t seed) = 0;
  // Throws Error on illegal actions or when the episode is over.
  virtual StepResult step(const Action& action) = 0;
  // Nonempty unless terminal; continuous envs list every joint bin index.
  virtual std::vector<int> legal_actions() const = 0;
  virtual Vec observation() const = 0;
  virtual int to_play() const { return 0; }
  virtual bool done() const = 0;
  virtual int steps_taken() const = 0;
  virtual std::string render() const = 0;
  virtual std::unique_ptr<Env> clone() const = 0;

  EnvStateToken clone_state() const { return EnvStateToken(clone()); }
  // Throws Error if the token was produced by a different env kind.
  virtual void restore_state(const EnvStateToken& token) = 0;

  // Split step for environments with an explicit chance event. step() is
  // equivalent to step_afterstate + a draw from chance_distribution +
  // resolve_chance.
  virtual bool has_chance() const { return false; }
  virtual double step_afterstate(const Action& action);
  virtual Vec chance_distribution() const;
  virtual StepResult resolve_chance(int outcome);

  bool is_legal(int action) const;
};

template <class Derived>
class EnvBase : public Env {
 public:
  std::unique_ptr<Env> clone() const override {
    return std::make_unique<Derived>(static_cast<const Derived&>(*this));
  }
  void restore_state(const EnvStateToken& token) override {
    const auto* other = dynamic_cast<const Derived*>(&token.snapshot());
    if (!other) throw Error("restore_state: token belongs to another env kind");
    static_cast<Derived&>(*this) = *other;
  }
};

// h x w board, k in a row wins; with gravity actions are columns.
class KInRow : public EnvBase<KInRow> {
 public:
  KInRow(int height, int width, int k, bool gravity);

  std::string kind() const override { return "kinrow"; }
  const EnvSpec& spec() const override { return spec_; }
  Vec reset(std::uint64_t seed) override;
  StepResult step(const Action& action) override;
  std::vector<int> legal_actions() const override;
  Vec observation() const override;
  int to_play() const override { return to_play_; }
  bool done() const override { return done_; }
  int steps_taken() const override { return steps_; }
  std::string render() const override;

  int height() const { return h_; }
  int width() const { return w_; }
  int k() const { return k_; }
  bool gravity() const { return gravity_; }
  // 0 empty, 1 first player, 2 second player; row-major.
  const std::vector<int>& board() const { return board_; }
  std::optional<int> winner() const { return winner_; }
  // Installs an arbitrary position; `to_play` is the player to move.
  void set_position(const std::vector<int>& board, int to_play);
  // Cell a legal action would fill.
  int cell_for_action(int action) const;

 private:
  bool wins_through(int cell) const;

  int h_, w_, k_;
  bool gravity_;
  EnvSpec spec_;
  std::vector<int> board_;
  int to_play_ = 0;
  int steps_ = 0;
  bool done_ = false;
  std::optional<int> winner_;
};

struct MinimaxResult {
  int value = 0;  // for the player to move: -1, 0, +1
  std::set<int> optimal_actions;
};

// Exact negamax over a KInRow position. Throws Error when the position has
// more than `max_empty` empty cells.
MinimaxResult minimax_oracle(const KInRow& state, int max_empty = 12);

// Two rooms separated by a wall with a locked door. The key lies in the
// start room and the goal in the other; stepping onto the key picks it up,
// walking into the door while holding it opens it. Reward 1 at the goal.
class GridMaze : public EnvBase<GridMaze> {
 public:
  struct Layout {
    int room_width = 4;   // interior columns per room
    int height = 4;       // interior rows
    int max_steps = 300;
  };
  explicit GridMaze(Layout layout);

  std::string kind() const override { return "gridmaze"; }
  const EnvSpec& spec() const override { return spec_; }
  Vec reset(std::uint64_t seed) override;
  StepResult step(const Action& action) override;
  std::vector<int> legal_actions() const override { return {0, 1, 2, 3}; }
  Vec observation() const override;
  bool done() const override { return done_; }
  int steps_taken() const override { return steps_; }
  std::string render() const override;

  int agent_cell() const { return agent_; }
  bool key_held() const { return key_held_; }
  bool door_open() const { return door_open_; }
  int start_cell() const { return start_; }
  int key_cell() const { return key_; }
  int door_cell() const { return door_; }
  int goal_cell() const { return goal_; }
  int width() const { return width_; }
  int height() const { return layout_.height; }

 private:
  bool is_wall(int x, int y) const;

  Layout layout_;
  int width_;
  EnvSpec spec_;
  int start_, key_, door_, goal_;
  int agent_ = 0;
  bool key_held_ = false;
  bool door_open_ = false;
  int steps_ = 0;
  bool done_ = false;
};

// 4x4 sliding-tile game. num_chances 2 spawns {2,4}, 5 spawns
// {2,4,8,16,32}. Chance outcome index = cell * num_chances + tile choice.
class Game2048 : public EnvBase<Game2048> {
 public:
  struct Options {
    int num_chances = 2;
    int max_steps = 500;
    bool log_reward = false;  // reward log2(1 + merge score) instead of score
  };
  explicit Game2048(Options options);

  std::string kind() const override { return "2048"; }
  const EnvSpec& spec() const override { return spec_; }
  Vec reset(std::uint64_t seed) override;
  StepResult step(const Action& action) override;
  std::vector<int> legal_actions() const override;
  Vec observation() const override;
  bool done() const override { return done_; }
  int steps_taken() const override { return steps_; }
  std::string render() const override;

  bool has_chance() const override { return true; }
  double step_afterstate(const Action& action) override;
  Vec chance_distribution() const override;
  StepResult resolve_chance(int outcome) override;

  // Tile exponents (0 = empty), row-major.
  const std::array<int, 16>& board() const { return board_; }
  void set_board(const std::array<int, 16>& board);
  const std::vector<int>& tile_values() const { return tiles_; }
  const std::vector<double>& tile_probabilities() const { return tile_probs_; }
  int num_chances() const { return opts_.num_chances; }

  // Slides `board` in a direction (0 up, 1 right, 2 down, 3 left) and returns
  // the merge score; `moved` reports whether anything changed.
  static int slide(std::array<int, 16>& board, int direction, bool& moved);

 private:
  int sample_chance();
  void spawn_random();

  Options opts_;
  EnvSpec spec_;
  std::vector<int> tiles_;
  std::vector<double> tile_probs_;
  std::array<int, 16> board_{};
  Rng rng_;
  int steps_ = 0;
  bool done_ = false;
  bool awaiting_chance_ = false;
  double pending_reward_ = 0.0;
};

// Torque-limited pendulum. obs = (cos th, sin th, th_dot), th = 0 upright.
// Reward -(th^2 + 0.1 th_dot^2 + 0.001 u^2) with u in [-1, 1].
class PendulumLite : public EnvBase<PendulumLite> {
 public:
  struct Options {
    int bins = 11;
    int horizon = 200;
    double gravity = 10.0;
    double max_torque = 6.0;  // scales u; enough to lift the pole directly
    double dt = 0.05;
    double max_speed = 8.0;
  };
  explicit PendulumLite(Options options);

  std::string kind() const override { return "pendulum"; }
  const EnvSpec& spec() const override { return spec_; }
  Vec reset(std::uint64_t seed) override;
  StepResult step(const Action& action) override;
  std::vector<int> legal_actions() const override;
  Vec observation() const override;
  bool done() const override { return done_; }
  int steps_taken() const override { return steps_; }
  std::string render() const override;

  double angle() const { return theta_; }
  double velocity() const { return theta_dot_; }
  void set_state(double theta, double theta_dot);

 private:
  Options opts_;
  EnvSpec spec_;
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
  int steps_ = 0;
  bool done_ = false;
};

// Environment construction from a string id plus numeric parameters.
// Ids: kinrow3 / tictactoe, gomoku6, connect4, kinrow, gridmaze, 2048,
// pendulum.
std::unique_ptr<Env> make_env(const std::string& id,
                              const std::map<std::string, double>& params);

}  // namespace tz

#endif  // TREEZERO_ENVS_HPP_
