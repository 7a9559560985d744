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

#include "treezero/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_map>

namespace tz {

double Env::step_afterstate(const Action&) {
  throw Error(kind() + " has no explicit chance event");
}
Vec Env::chance_distribution() const {
  throw Error(kind() + " has no explicit chance event");
}
StepResult Env::resolve_chance(int) {
  throw Error(kind() + " has no explicit chance event");
}

bool Env::is_legal(int action) const {
  const auto legal = legal_actions();
  return std::find(legal.begin(), legal.end(), action) != legal.end();
}

// --- KInRow -----------------------------------------------------------------

KInRow::KInRow(int height, int width, int k, bool gravity)
    : h_(height), w_(width), k_(k), gravity_(gravity) {
  if (h_ < 1 || w_ < 1 || k_ < 2 || k_ > std::max(h_, w_)) {
    throw ConfigError("invalid KInRow dimensions");
  }
  const int cells = h_ * w_;
  spec_.obs_dim = 3 * cells;
  spec_.action_space = ActionSpace::make_discrete(gravity_ ? w_ : cells);
  spec_.num_players = 2;
  spec_.max_steps = cells;
  board_.assign(cells, 0);
}

Vec KInRow::reset(std::uint64_t) {
  std::fill(board_.begin(), board_.end(), 0);
  to_play_ = 0;
  steps_ = 0;
  done_ = false;
  winner_.reset();
  return observation();
}

void KInRow::set_position(const std::vector<int>& board, int to_play) {
  if (static_cast<int>(board.size()) != h_ * w_) throw Error("set_position: wrong board size");
  board_ = board;
  to_play_ = to_play;
  steps_ = static_cast<int>(std::count_if(board_.begin(), board_.end(),
                                          [](int c) { return c != 0; }));
  winner_.reset();
  done_ = false;
  for (int c = 0; c < h_ * w_; ++c) {
    if (board_[c] != 0 && wins_through(c)) {
      winner_ = board_[c] - 1;
      done_ = true;
    }
  }
  if (steps_ == h_ * w_) done_ = true;
}

int KInRow::cell_for_action(int action) const {
  if (!gravity_) return action;
  for (int r = h_ - 1; r >= 0; --r) {
    if (board_[r * w_ + action] == 0) return r * w_ + action;
  }
  return -1;
}

std::vector<int> KInRow::legal_actions() const {
  if (done_) throw Error("legal_actions called on a terminal state");
  std::vector<int> out;
  if (gravity_) {
    for (int c = 0; c < w_; ++c) {
      if (board_[c] == 0) out.push_back(c);
    }
  } else {
    for (int c = 0; c < h_ * w_; ++c) {
      if (board_[c] == 0) out.push_back(c);
    }
  }
  return out;
}

bool KInRow::wins_through(int cell) const {
  const int r0 = cell / w_, c0 = cell % w_;
  const int who = board_[cell];
  static constexpr int kDirs[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  for (const auto& d : kDirs) {
    int count = 1;
    for (int sgn : {1, -1}) {
      int r = r0 + sgn * d[0], c = c0 + sgn * d[1];
      while (r >= 0 && r < h_ && c >= 0 && c < w_ && board_[r * w_ + c] == who) {
        ++count;
        r += sgn * d[0];
        c += sgn * d[1];
      }
    }
    if (count >= k_) return true;
  }
  return false;
}

StepResult KInRow::step(const Action& action) {
  if (done_) throw Error("step called on a finished KInRow episode");
  const int a = action.index;
  if (!action.is_discrete() || a < 0 || a >= spec_.action_space.n) {
    throw Error("KInRow: action out of range");
  }
  const int cell = cell_for_action(a);
  if (cell < 0 || board_[cell] != 0) throw Error("KInRow: illegal action " + std::to_string(a));
  board_[cell] = to_play_ + 1;
  ++steps_;
  StepResult res;
  if (wins_through(cell)) {
    res.reward = 1.0;
    winner_ = to_play_;
    res.winner = to_play_;
    done_ = true;
  } else if (steps_ >= spec_.max_steps) {
    done_ = true;
  }
  res.done = done_;
  to_play_ = 1 - to_play_;
  res.obs = observation();
  return res;
}

Vec KInRow::observation() const {
  const int cells = h_ * w_;
  Vec obs(3 * cells, 0.0);
  for (int c = 0; c < cells; ++c) {
    const int v = board_[c];
    if (v == 0) {
      obs[c] = 1.0;
    } else if (v - 1 == to_play_) {
      obs[cells + c] = 1.0;
    } else {
      obs[2 * cells + c] = 1.0;
    }
  }
  return obs;
}

std::string KInRow::render() const {
  std::ostringstream os;
  for (int r = 0; r < h_; ++r) {
    for (int c = 0; c < w_; ++c) {
      const int v = board_[r * w_ + c];
      os << (v == 0 ? '.' : (v == 1 ? 'X' : 'O'));
      if (c + 1 < w_) os << ' ';
    }
    os << '\n';
  }
  return os.str();
}

// --- minimax oracle ---------------------------------------------------------

namespace {

struct Negamax {
  std::unordered_map<std::string, int> memo;

  static std::string key(const KInRow& s) {
    std::string k(s.board().size() + 1, '0');
    for (std::size_t i = 0; i < s.board().size(); ++i) k[i] = static_cast<char>('0' + s.board()[i]);
    k.back() = static_cast<char>('0' + s.to_play());
    return k;
  }

  int value(const KInRow& s) {
    if (s.done()) {
      // The previous mover either won or drew.
      return s.winner().has_value() ? -1 : 0;
    }
    const std::string k = key(s);
    if (auto it = memo.find(k); it != memo.end()) return it->second;
    int best = -2;
    for (int a : s.legal_actions()) {
      KInRow child = s;
      child.step(Action::discrete(a));
      best = std::max(best, -value(child));
      if (best == 1) break;
    }
    memo.emplace(k, best);
    return best;
  }
};

}  // namespace

MinimaxResult minimax_oracle(const KInRow& state, int max_empty) {
  const int empty = static_cast<int>(
      std::count(state.board().begin(), state.board().end(), 0));
  if (empty > max_empty) {
    throw Error("minimax_oracle: " + std::to_string(empty) +
                " empty cells exceeds the enumeration guard");
  }
  MinimaxResult res;
  Negamax nm;
  if (state.done()) {
    res.value = state.winner().has_value() ? -1 : 0;
    return res;
  }
  res.value = -2;
  std::vector<std::pair<int, int>> scored;
  for (int a : state.legal_actions()) {
    KInRow child = state;
    child.step(Action::discrete(a));
    const int v = -nm.value(child);
    scored.emplace_back(a, v);
    res.value = std::max(res.value, v);
  }
  for (const auto& [a, v] : scored) {
    if (v == res.value) res.optimal_actions.insert(a);
  }
  return res;
}

// --- GridMaze ---------------------------------------------------------------

GridMaze::GridMaze(Layout layout) : layout_(layout) {
  if (layout_.room_width < 2 || layout_.height < 2 || layout_.max_steps < 1) {
    throw ConfigError("invalid GridMaze layout");
  }
  width_ = 2 * layout_.room_width + 1;
  const int cells = width_ * layout_.height;
  spec_.obs_dim = cells + (cells + 1) + 2 + cells;
  spec_.action_space = ActionSpace::make_discrete(4);
  spec_.num_players = 1;
  spec_.max_steps = layout_.max_steps;
  const int h = layout_.height;
  start_ = 0;                                       // top-left
  key_ = (h - 1) * width_;                          // bottom-left
  door_ = (h / 2) * width_ + layout_.room_width;    // middle of the wall
  goal_ = (h - 1) * width_ + (width_ - 1);          // bottom-right
}

Vec GridMaze::reset(std::uint64_t) {
  agent_ = start_;
  key_held_ = false;
  door_open_ = false;
  steps_ = 0;
  done_ = false;
  return observation();
}

bool GridMaze::is_wall(int x, int y) const {
  return x == layout_.room_width && y * width_ + x != door_;
}

StepResult GridMaze::step(const Action& action) {
  if (done_) throw Error("step called on a finished GridMaze episode");
  if (!action.is_discrete() || action.index < 0 || action.index > 3) {
    throw Error("GridMaze: illegal action");
  }
  static constexpr int kDx[4] = {0, 1, 0, -1};
  static constexpr int kDy[4] = {-1, 0, 1, 0};
  const int x = agent_ % width_, y = agent_ / width_;
  const int nx = x + kDx[action.index], ny = y + kDy[action.index];
  if (nx >= 0 && nx < width_ && ny >= 0 && ny < layout_.height && !is_wall(nx, ny)) {
    const int target = ny * width_ + nx;
    if (target == door_ && !door_open_) {
      if (key_held_) {
        door_open_ = true;
        agent_ = target;
      }
    } else {
      agent_ = target;
    }
  }
  if (agent_ == key_ && !key_held_) key_held_ = true;
  ++steps_;
  StepResult res;
  if (agent_ == goal_) {
    res.reward = 1.0;
    done_ = true;
  } else if (steps_ >= layout_.max_steps) {
    done_ = true;
  }
  res.done = done_;
  res.obs = observation();
  return res;
}

Vec GridMaze::observation() const {
  const int cells = width_ * layout_.height;
  Vec obs(spec_.obs_dim, 0.0);
  obs[agent_] = 1.0;
  obs[cells + (key_held_ ? cells : key_)] = 1.0;
  obs[2 * cells + 1 + (door_open_ ? 1 : 0)] = 1.0;
  obs[2 * cells + 3 + goal_] = 1.0;
  return obs;
}

std::string GridMaze::render() const {
  std::ostringstream os;
  for (int y = 0; y < layout_.height; ++y) {
    for (int x = 0; x < width_; ++x) {
      const int c = y * width_ + x;
      char ch = '.';
      if (is_wall(x, y)) ch = '#';
      if (c == door_) ch = door_open_ ? '/' : 'D';
      if (c == key_ && !key_held_) ch = 'K';
      if (c == goal_) ch = 'G';
      if (c == agent_) ch = 'A';
      os << ch;
    }
    os << '\n';
  }
  return os.str();
}

// --- 2048 -------------------------------------------------------------------

Game2048::Game2048(Options options) : opts_(options) {
  if (opts_.num_chances == 2) {
    tiles_ = {2, 4};
    tile_probs_ = {0.9, 0.1};
  } else if (opts_.num_chances == 5) {
    tiles_ = {2, 4, 8, 16, 32};
    tile_probs_ = {0.5, 0.2, 0.1, 0.1, 0.1};
  } else {
    throw ConfigError("2048: num_chances must be 2 or 5");
  }
  if (opts_.max_steps < 1) throw ConfigError("2048: max_steps must be >= 1");
  spec_.obs_dim = 16 * 16;
  spec_.action_space = ActionSpace::make_discrete(4);
  spec_.num_players = 1;
  spec_.max_steps = opts_.max_steps;
  spec_.chance_dim = 16 * opts_.num_chances;
}

int Game2048::slide(std::array<int, 16>& board, int direction, bool& moved) {
  moved = false;
  int score = 0;
  for (int line = 0; line < 4; ++line) {
    int idx[4];
    for (int j = 0; j < 4; ++j) {
      switch (direction) {
        case 0: idx[j] = j * 4 + line; break;          // up: column, top first
        case 1: idx[j] = line * 4 + (3 - j); break;    // right: row, right first
        case 2: idx[j] = (3 - j) * 4 + line; break;    // down
        case 3: idx[j] = line * 4 + j; break;          // left
        default: throw Error("2048: direction out of range");
      }
    }
    int vals[4], n = 0;
    for (int j = 0; j < 4; ++j) {
      if (board[idx[j]] != 0) vals[n++] = board[idx[j]];
    }
    int out[4] = {0, 0, 0, 0}, m = 0;
    for (int j = 0; j < n; ++j) {
      if (j + 1 < n && vals[j] == vals[j + 1]) {
        out[m++] = vals[j] + 1;
        score += 1 << (vals[j] + 1);
        ++j;
      } else {
        out[m++] = vals[j];
      }
    }
    for (int j = 0; j < 4; ++j) {
      if (board[idx[j]] != out[j]) moved = true;
      board[idx[j]] = out[j];
    }
  }
  return score;
}

std::vector<int> Game2048::legal_actions() const {
  if (done_) throw Error("legal_actions called on a terminal state");
  std::vector<int> out;
  for (int d = 0; d < 4; ++d) {
    auto b = board_;
    bool moved = false;
    slide(b, d, moved);
    if (moved) out.push_back(d);
  }
  return out;
}

Vec Game2048::chance_distribution() const {
  Vec p(16 * opts_.num_chances, 0.0);
  const int empty = static_cast<int>(std::count(board_.begin(), board_.end(), 0));
  if (empty == 0) throw Error("2048: no empty cell for a spawn");
  for (int c = 0; c < 16; ++c) {
    if (board_[c] != 0) continue;
    for (int t = 0; t < opts_.num_chances; ++t) {
      p[c * opts_.num_chances + t] = tile_probs_[t] / empty;
    }
  }
  return p;
}

int Game2048::sample_chance() {
  std::vector<int> empty;
  for (int c = 0; c < 16; ++c) {
    if (board_[c] == 0) empty.push_back(c);
  }
  if (empty.empty()) throw Error("2048: no empty cell for a spawn");
  std::uniform_int_distribution<std::size_t> cell_dist(0, empty.size() - 1);
  const int cell = empty[cell_dist(rng_)];
  std::discrete_distribution<int> tile_dist(tile_probs_.begin(), tile_probs_.end());
  return cell * opts_.num_chances + tile_dist(rng_);
}

void Game2048::spawn_random() {
  const int outcome = sample_chance();
  const int cell = outcome / opts_.num_chances;
  board_[cell] = static_cast<int>(std::log2(tiles_[outcome % opts_.num_chances]));
}

Vec Game2048::reset(std::uint64_t seed) {
  rng_.seed(seed);
  board_.fill(0);
  steps_ = 0;
  done_ = false;
  awaiting_chance_ = false;
  pending_reward_ = 0.0;
  spawn_random();
  spawn_random();
  return observation();
}

void Game2048::set_board(const std::array<int, 16>& board) {
  board_ = board;
  awaiting_chance_ = false;
  done_ = false;
  if (legal_actions().empty()) done_ = true;
}

double Game2048::step_afterstate(const Action& action) {
  if (done_) throw Error("step called on a finished 2048 episode");
  if (awaiting_chance_) throw Error("2048: chance event pending");
  if (!action.is_discrete() || action.index < 0 || action.index > 3) {
    throw Error("2048: action out of range");
  }
  auto b = board_;
  bool moved = false;
  const int score = slide(b, action.index, moved);
  if (!moved) throw Error("2048: illegal action " + std::to_string(action.index));
  board_ = b;
  awaiting_chance_ = true;
  pending_reward_ = opts_.log_reward ? std::log2(1.0 + score) : static_cast<double>(score);
  return pending_reward_;
}

StepResult Game2048::resolve_chance(int outcome) {
  if (!awaiting_chance_) throw Error("2048: no pending chance event");
  const int cell = outcome / opts_.num_chances;
  if (outcome < 0 || cell >= 16 || board_[cell] != 0) {
    throw Error("2048: invalid chance outcome " + std::to_string(outcome));
  }
  board_[cell] = static_cast<int>(std::log2(tiles_[outcome % opts_.num_chances]));
  awaiting_chance_ = false;
  ++steps_;
  StepResult res;
  res.reward = pending_reward_;
  res.chance_outcome = outcome;
  if (steps_ >= opts_.max_steps || legal_actions().empty()) done_ = true;
  res.done = done_;
  res.obs = observation();
  return res;
}

StepResult Game2048::step(const Action& action) {
  step_afterstate(action);
  return resolve_chance(sample_chance());
}

Vec Game2048::observation() const {
  Vec obs(16 * 16, 0.0);
  for (int c = 0; c < 16; ++c) obs[std::min(board_[c], 15) * 16 + c] = 1.0;
  return obs;
}

std::string Game2048::render() const {
  std::ostringstream os;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      const int e = board_[r * 4 + c];
      std::string cell = e == 0 ? "." : std::to_string(1 << e);
      os << std::string(6 - cell.size(), ' ') << cell;
    }
    os << '\n';
  }
  return os.str();
}

// --- PendulumLite -----------------------------------------------------------

PendulumLite::PendulumLite(Options options) : opts_(options) {
  if (opts_.horizon < 1) throw ConfigError("pendulum: horizon must be >= 1");
  spec_.obs_dim = 3;
  spec_.action_space = ActionSpace::make_continuous(1, opts_.bins);
  spec_.num_players = 1;
  spec_.max_steps = opts_.horizon;
}

Vec PendulumLite::reset(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> vel(-1.0, 1.0);
  theta_ = angle(rng);
  theta_dot_ = vel(rng);
  steps_ = 0;
  done_ = false;
  return observation();
}

void PendulumLite::set_state(double theta, double theta_dot) {
  theta_ = theta;
  theta_dot_ = theta_dot;
}

std::vector<int> PendulumLite::legal_actions() const {
  if (done_) throw Error("legal_actions called on a terminal state");
  std::vector<int> out(spec_.action_space.joint_size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(i);
  return out;
}

StepResult PendulumLite::step(const Action& action) {
  if (done_) throw Error("step called on a finished pendulum episode");
  if (action.is_discrete() &&
      (action.index < 0 || action.index >= spec_.action_space.joint_size())) {
    throw Error("pendulum: action index out of range");
  }
  const double u = spec_.action_space.encode_action(action)[0];
  const double th = std::remainder(theta_, 2.0 * std::numbers::pi);
  const double cost = th * th + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u;
  const double acc = 1.5 * opts_.gravity * std::sin(theta_) + 3.0 * opts_.max_torque * u;
  theta_dot_ = std::clamp(theta_dot_ + acc * opts_.dt, -opts_.max_speed, opts_.max_speed);
  theta_ = std::remainder(theta_ + theta_dot_ * opts_.dt, 2.0 * std::numbers::pi);
  ++steps_;
  done_ = steps_ >= opts_.horizon;
  StepResult res;
  res.reward = -cost;
  res.done = done_;
  res.obs = observation();
  return res;
}

Vec PendulumLite::observation() const {
  return {std::cos(theta_), std::sin(theta_), theta_dot_ / opts_.max_speed};
}

std::string PendulumLite::render() const {
  std::ostringstream os;
  os << "theta=" << theta_ << " theta_dot=" << theta_dot_ << '\n';
  return os.str();
}

// --- factory ----------------------------------------------------------------

namespace {

double param(const std::map<std::string, double>& params, const std::string& key,
             double fallback) {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

void check_keys(const std::map<std::string, double>& params,
                std::initializer_list<const char*> allowed, const std::string& id) {
  for (const auto& [k, v] : params) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ConfigError("env '" + id + "' has no parameter '" + k + "'");
  }
}

}  // namespace

std::unique_ptr<Env> make_env(const std::string& id,
                              const std::map<std::string, double>& params) {
  if (id == "kinrow3" || id == "tictactoe") {
    check_keys(params, {}, id);
    return std::make_unique<KInRow>(3, 3, 3, false);
  }
  if (id == "gomoku6") {
    check_keys(params, {}, id);
    return std::make_unique<KInRow>(6, 6, 4, false);
  }
  if (id == "connect4") {
    check_keys(params, {}, id);
    return std::make_unique<KInRow>(6, 7, 4, true);
  }
  if (id == "kinrow") {
    check_keys(params, {"height", "width", "k", "gravity"}, id);
    return std::make_unique<KInRow>(static_cast<int>(param(params, "height", 3)),
                                    static_cast<int>(param(params, "width", 3)),
                                    static_cast<int>(param(params, "k", 3)),
                                    param(params, "gravity", 0) != 0);
  }
  if (id == "gridmaze") {
    check_keys(params, {"room_width", "height", "max_steps"}, id);
    GridMaze::Layout l;
    l.room_width = static_cast<int>(param(params, "room_width", l.room_width));
    l.height = static_cast<int>(param(params, "height", l.height));
    l.max_steps = static_cast<int>(param(params, "max_steps", l.max_steps));
    return std::make_unique<GridMaze>(l);
  }
  if (id == "2048") {
    check_keys(params, {"num_chances", "max_steps", "log_reward"}, id);
    Game2048::Options o;
    o.num_chances = static_cast<int>(param(params, "num_chances", o.num_chances));
    o.max_steps = static_cast<int>(param(params, "max_steps", o.max_steps));
    o.log_reward = param(params, "log_reward", 0) != 0;
    return std::make_unique<Game2048>(o);
  }
  if (id == "pendulum") {
    check_keys(params, {"bins", "horizon", "max_torque"}, id);
    PendulumLite::Options o;
    o.bins = static_cast<int>(param(params, "bins", o.bins));
    o.horizon = static_cast<int>(param(params, "horizon", o.horizon));
    o.max_torque = param(params, "max_torque", o.max_torque);
    return std::make_unique<PendulumLite>(o);
  }
  throw ConfigError("unknown env id: " + id);
}

}  // namespace tz
