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

// Replay storage: game segments, a proportional prioritized buffer over
// individual transitions, unroll target assembly, reanalyze and the
// add/sample throughput gate.

#ifndef TREEZERO_REPLAY_HPP_
#define TREEZERO_REPLAY_HPP_

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "treezero/common.hpp"
#include "treezero/model.hpp"
#include "treezero/search.hpp"

namespace tz {

// One played episode. Rewards are for the player who moved at t; root values
// are from the perspective of to_play[t].
struct GameSegment {
  std::vector<Vec> observations;              // T + 1 (last = final observation)
  std::vector<Action> actions;                // T
  Vec rewards_ext;                            // T
  Vec rewards_int;                            // T, normalized to [0, 1]; zeros when off
  std::vector<std::vector<Action>> candidates;  // T; empty = whole joint space
  std::vector<Vec> policy_targets;            // T, over candidates
  Vec root_values;                            // T
  std::vector<int> to_play;                   // T
  std::vector<std::vector<int>> legal;        // T; empty = every action
  std::vector<int> chance_outcomes;           // T; -1 when the env has no chance
  std::vector<std::uint64_t> search_seeds;    // T; seed of the search at t
  bool terminal = true;
  std::optional<int> winner;

  int length() const { return static_cast<int>(actions.size()); }
  double external_return() const;
  // Throws Error when the parallel arrays disagree in length or a policy
  // target is not a distribution.
  void validate() const;
};

struct BufferConfig {
  int capacity = 100000;
  double per_alpha = 0.6;
  double per_beta = 0.4;
  int n_step = 5;
  int unroll_steps = 5;
  double discount = 0.997;
  double reanalyze_ratio = 0.0;
  double replay_ratio = 0.25;
  double intrinsic_beta = 0.0;  // weight of rewards_int in the targets

  void validate() const;
  bool operator==(const BufferConfig&) const = default;
};

// Targets for one unroll step u of a sample.
struct UnrollTarget {
  double value = 0.0;
  double reward = 0.0;  // reward of the transition into step u (0 at u = 0)
  Vec policy;
  std::vector<Action> candidates;  // empty = whole joint space
  bool absorbing = false;          // beyond the episode end; policy loss masked
  Vec observation;                 // o_{t+u}; empty beyond the final observation
  int chance_outcome = -1;         // outcome of the transition into step u
};

struct TransitionSample {
  Vec observation;
  std::vector<Action> actions;  // U actions a_t .. a_{t+U-1}
  std::vector<UnrollTarget> targets;  // U + 1
  double weight = 1.0;
  std::int64_t index = -1;  // global transition id
  int to_play = 0;
};

struct TransitionBatch {
  std::vector<TransitionSample> samples;
};

// Replacement targets produced by reanalyze, keyed by position in a segment.
struct TargetOverrides {
  std::map<int, double> root_values;
  std::map<int, std::pair<std::vector<Action>, Vec>> policies;
};

// Per-step targets for u = 0..U (see UnrollTarget).
std::vector<UnrollTarget> compute_targets(const GameSegment& segment, int pos,
                                          const BufferConfig& cfg,
                                          const TargetOverrides* overrides = nullptr);

// Sum tree over `capacity` leaves holding priorities^alpha.
class SumTree {
 public:
  explicit SumTree(int capacity = 1);
  void set(int slot, double value);
  double get(int slot) const;
  double total() const { return nodes_[1]; }
  // Slot whose prefix interval contains `mass` in [0, total).
  int find(double mass) const;
  int capacity() const { return capacity_; }

 private:
  int capacity_;
  int leaves_;
  std::vector<double> nodes_;
};

struct BufferStats {
  std::int64_t collected = 0;   // transitions ever pushed
  std::int64_t trained = 0;     // samples consumed by the learner
  std::int64_t stale_skips = 0; // priority updates for evicted ids
};

class ReplayBuffer {
 public:
  static constexpr double kPriorityEps = 1e-6;

  explicit ReplayBuffer(BufferConfig cfg);

  void push_segment(GameSegment segment);
  // Throws Error when fewer than batch_size transitions are resident.
  TransitionBatch sample_batch(int batch_size, Rng& rng) const;
  // Raw proportional draws (used by sample_batch and the frequency tests).
  std::vector<std::int64_t> sample_indices(int count, Rng& rng) const;
  void update_priorities(const std::vector<std::int64_t>& ids, const Vec& td_errors);

  // Assembles a sample for a resident transition with optional overrides.
  TransitionSample make_sample(std::int64_t id, const TargetOverrides* overrides) const;

  bool resident(std::int64_t id) const;
  double priority(std::int64_t id) const;
  // Probability that one draw returns `id`.
  double sample_probability(std::int64_t id) const;
  int size() const;
  const BufferConfig& config() const { return cfg_; }
  const BufferStats& stats() const { return stats_; }
  void add_trained(std::int64_t n) { stats_.trained += n; }

  // Segment and position of a resident transition.
  std::pair<const GameSegment*, int> locate(std::int64_t id) const;

  void save(std::ostream& os) const;
  static ReplayBuffer load(std::istream& is);

 private:
  struct Stored {
    std::int64_t first_id;
    GameSegment segment;
  };
  std::int64_t first_resident() const;

  BufferConfig cfg_;
  SumTree tree_;
  Vec raw_priority_;
  double max_priority_ = 1.0;
  std::int64_t next_id_ = 0;
  std::deque<Stored> segments_;
  BufferStats stats_;
  std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
};

// Reruns noise-free search from the stored observations of a transition with
// a fresh model and returns refreshed policy targets and bootstrap values for
// every position the sample's targets read. Each position reuses its stored
// search seed, so the same snapshot reproduces the stored search exactly.
TargetOverrides reanalyze(const GameSegment& segment, int pos, const BufferConfig& cfg,
                          const MuZeroModel& model, const SearchConfig& search_cfg);

// Refreshes a batch in place: the first round(reanalyze_ratio * B) samples
// get reanalyzed targets.
void reanalyze_batch(const ReplayBuffer& buffer, TransitionBatch& batch,
                     const MuZeroModel& model, const SearchConfig& search_cfg);

enum class GateDecision { collect, train };

// train while trained < replay_ratio * collected.
GateDecision throughput_gate(const BufferStats& stats, double replay_ratio);

}  // namespace tz

#endif  // TREEZERO_REPLAY_HPP_
