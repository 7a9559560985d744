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

#include "treezero/replay.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

namespace tz {

// --- GameSegment ------------------------------------------------------------

double GameSegment::external_return() const {
  return std::accumulate(rewards_ext.begin(), rewards_ext.end(), 0.0);
}

void GameSegment::validate() const {
  const std::size_t t = actions.size();
  if (t == 0) throw Error("segment: empty episode");
  if (observations.size() != t + 1) throw Error("segment: observations must have T + 1 entries");
  const bool ok = rewards_ext.size() == t && rewards_int.size() == t && candidates.size() == t &&
                  policy_targets.size() == t && root_values.size() == t && to_play.size() == t &&
                  legal.size() == t && chance_outcomes.size() == t && search_seeds.size() == t;
  if (!ok) throw Error("segment: parallel arrays differ in length");
  for (std::size_t i = 0; i < t; ++i) {
    double sum = 0.0;
    for (double p : policy_targets[i]) {
      if (!(p >= 0.0)) throw Error("segment: negative or NaN policy target");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw Error("segment: policy target is not a distribution");
    if (!candidates[i].empty() && candidates[i].size() != policy_targets[i].size()) {
      throw Error("segment: candidate list and policy target differ in length");
    }
    if (!std::isfinite(rewards_ext[i]) || !std::isfinite(root_values[i])) {
      throw Error("segment: non-finite reward or value");
    }
  }
}

void BufferConfig::validate() const {
  if (capacity <= 0) throw ConfigError("buffer.capacity must be positive");
  if (per_alpha < 0.0) throw ConfigError("buffer.per_alpha must be >= 0");
  if (per_beta < 0.0 || per_beta > 1.0) throw ConfigError("buffer.per_beta must lie in [0, 1]");
  if (n_step < 1) throw ConfigError("buffer.n_step must be >= 1");
  if (unroll_steps < 0) throw ConfigError("buffer.unroll_steps must be >= 0");
  if (!(discount > 0.0 && discount <= 1.0)) throw ConfigError("buffer.discount must lie in (0, 1]");
  if (reanalyze_ratio < 0.0 || reanalyze_ratio > 1.0) {
    throw ConfigError("buffer.reanalyze_ratio must lie in [0, 1]");
  }
  if (replay_ratio <= 0.0) throw ConfigError("buffer.replay_ratio must be positive");
  if (intrinsic_beta < 0.0) throw ConfigError("buffer.intrinsic_beta must be >= 0");
}

// --- targets ----------------------------------------------------------------

namespace {

double step_reward(const GameSegment& s, int t, const BufferConfig& cfg) {
  return s.rewards_ext[t] + cfg.intrinsic_beta * s.rewards_int[t];
}

double perspective(const GameSegment& s, int from, int to) {
  return s.to_play[from] == s.to_play[to] ? 1.0 : -1.0;
}

double bootstrap_value(const GameSegment& s, int k, const TargetOverrides* ov) {
  if (ov) {
    auto it = ov->root_values.find(k);
    if (it != ov->root_values.end()) return it->second;
  }
  return s.root_values[k];
}

Action default_action(const GameSegment& s) {
  const Action& a = s.actions.front();
  if (a.is_discrete()) return Action::discrete(0);
  return Action::continuous(Vec(a.raw.size(), 0.0));
}

}  // namespace

std::vector<UnrollTarget> compute_targets(const GameSegment& s, int pos, const BufferConfig& cfg,
                                          const TargetOverrides* ov) {
  const int T = s.length();
  if (pos < 0 || pos >= T) throw Error("compute_targets: position out of range");
  std::vector<UnrollTarget> out(cfg.unroll_steps + 1);
  for (int u = 0; u <= cfg.unroll_steps; ++u) {
    UnrollTarget& tg = out[u];
    const int k = pos + u;
    if (u >= 1 && k - 1 < T) {
      tg.reward = step_reward(s, k - 1, cfg);
      tg.chance_outcome = s.chance_outcomes[k - 1];
    }
    if (k <= T) tg.observation = s.observations[k];
    if (k < T) {
      double z = 0.0, disc = 1.0;
      for (int j = 0; j < cfg.n_step && k + j < T; ++j) {
        z += disc * perspective(s, k, k + j) * step_reward(s, k + j, cfg);
        disc *= cfg.discount;
      }
      if (k + cfg.n_step < T) {
        z += disc * perspective(s, k, k + cfg.n_step) * bootstrap_value(s, k + cfg.n_step, ov);
      }
      tg.value = z;
      const auto* refreshed = ov && ov->policies.count(k) ? &ov->policies.at(k) : nullptr;
      if (refreshed) {
        tg.candidates = refreshed->first;
        tg.policy = refreshed->second;
      } else {
        tg.candidates = s.candidates[k];
        tg.policy = s.policy_targets[k];
      }
    } else {
      // Absorbing: uniform over the last legal set.
      tg.absorbing = true;
      tg.candidates = s.candidates[T - 1];
      const std::size_t n = s.policy_targets[T - 1].size();
      tg.policy.assign(n, 0.0);
      const auto& legal = s.legal[T - 1];
      if (!tg.candidates.empty() || legal.empty()) {
        for (double& p : tg.policy) p = 1.0 / n;
      } else {
        for (int a : legal) tg.policy[a] = 1.0 / legal.size();
      }
    }
  }
  return out;
}

// --- SumTree ----------------------------------------------------------------

SumTree::SumTree(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw Error("sum tree capacity must be positive");
  leaves_ = 1;
  while (leaves_ < capacity) leaves_ *= 2;
  nodes_.assign(2 * leaves_, 0.0);
}

void SumTree::set(int slot, double value) {
  int i = slot + leaves_;
  nodes_[i] = value;
  for (i /= 2; i >= 1; i /= 2) nodes_[i] = nodes_[2 * i] + nodes_[2 * i + 1];
}

double SumTree::get(int slot) const { return nodes_[slot + leaves_]; }

int SumTree::find(double mass) const {
  int i = 1;
  while (i < leaves_) {
    const double left = nodes_[2 * i];
    if (mass < left || nodes_[2 * i + 1] <= 0.0) {
      i = 2 * i;
    } else {
      mass -= left;
      i = 2 * i + 1;
    }
  }
  return i - leaves_;
}

// --- ReplayBuffer -----------------------------------------------------------

ReplayBuffer::ReplayBuffer(BufferConfig cfg)
    : cfg_(cfg), tree_(cfg.capacity > 0 ? cfg.capacity : 1), raw_priority_(std::max(cfg.capacity, 1), 0.0) {
  cfg_.validate();
}

std::int64_t ReplayBuffer::first_resident() const {
  return std::max<std::int64_t>(0, next_id_ - cfg_.capacity);
}

bool ReplayBuffer::resident(std::int64_t id) const {
  return id >= first_resident() && id < next_id_;
}

int ReplayBuffer::size() const { return static_cast<int>(next_id_ - first_resident()); }

void ReplayBuffer::push_segment(GameSegment segment) {
  segment.validate();
  std::lock_guard<std::mutex> lock(*mu_);
  const std::int64_t first = next_id_;
  const int T = segment.length();
  for (int i = 0; i < T; ++i) {
    const int slot = static_cast<int>((first + i) % cfg_.capacity);
    raw_priority_[slot] = max_priority_;
    tree_.set(slot, std::pow(max_priority_, cfg_.per_alpha));
  }
  next_id_ += T;
  stats_.collected += T;
  segments_.push_back({first, std::move(segment)});
  const std::int64_t lo = first_resident();
  while (!segments_.empty() &&
         segments_.front().first_id + segments_.front().segment.length() <= lo) {
    segments_.pop_front();
  }
}

std::pair<const GameSegment*, int> ReplayBuffer::locate(std::int64_t id) const {
  if (!resident(id)) throw Error("replay: transition " + std::to_string(id) + " is not resident");
  auto it = std::upper_bound(segments_.begin(), segments_.end(), id,
                             [](std::int64_t v, const Stored& s) { return v < s.first_id; });
  --it;
  return {&it->segment, static_cast<int>(id - it->first_id)};
}

double ReplayBuffer::priority(std::int64_t id) const {
  if (!resident(id)) throw Error("replay: transition is not resident");
  return raw_priority_[id % cfg_.capacity];
}

double ReplayBuffer::sample_probability(std::int64_t id) const {
  return tree_.get(static_cast<int>(id % cfg_.capacity)) / tree_.total();
}

std::vector<std::int64_t> ReplayBuffer::sample_indices(int count, Rng& rng) const {
  if (size() == 0) throw Error("replay: buffer is empty");
  std::vector<std::int64_t> ids;
  ids.reserve(count);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double total = tree_.total();
  const std::int64_t lo = first_resident();
  for (int i = 0; i < count; ++i) {
    const int slot = tree_.find(unif(rng) * total);
    // Map the slot back to the unique resident id occupying it.
    std::int64_t id = lo + ((slot - lo % cfg_.capacity) % cfg_.capacity + cfg_.capacity) % cfg_.capacity;
    ids.push_back(id);
  }
  return ids;
}

TransitionSample ReplayBuffer::make_sample(std::int64_t id, const TargetOverrides* ov) const {
  auto [seg, pos] = locate(id);
  TransitionSample s;
  s.index = id;
  s.observation = seg->observations[pos];
  s.to_play = seg->to_play[pos];
  const int T = seg->length();
  for (int u = 0; u < cfg_.unroll_steps; ++u) {
    s.actions.push_back(pos + u < T ? seg->actions[pos + u] : default_action(*seg));
  }
  s.targets = compute_targets(*seg, pos, cfg_, ov);
  return s;
}

TransitionBatch ReplayBuffer::sample_batch(int batch_size, Rng& rng) const {
  std::lock_guard<std::mutex> lock(*mu_);
  if (batch_size < 1) throw Error("replay: batch size must be positive");
  if (size() < batch_size) {
    throw Error("replay: buffer holds " + std::to_string(size()) + " transitions, batch needs " +
                std::to_string(batch_size));
  }
  const auto ids = sample_indices(batch_size, rng);
  TransitionBatch batch;
  const double n = size();
  double max_w = 0.0;
  for (std::int64_t id : ids) {
    TransitionSample s = make_sample(id, nullptr);
    s.weight = std::pow(n * sample_probability(id), -cfg_.per_beta);
    max_w = std::max(max_w, s.weight);
    batch.samples.push_back(std::move(s));
  }
  for (auto& s : batch.samples) s.weight /= max_w;
  return batch;
}

void ReplayBuffer::update_priorities(const std::vector<std::int64_t>& ids, const Vec& td_errors) {
  if (ids.size() != td_errors.size()) throw Error("update_priorities: length mismatch");
  std::lock_guard<std::mutex> lock(*mu_);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!resident(ids[i])) {
      ++stats_.stale_skips;
      continue;
    }
    if (!std::isfinite(td_errors[i])) throw Error("update_priorities: non-finite TD error");
    const double p = std::abs(td_errors[i]) + kPriorityEps;
    const int slot = static_cast<int>(ids[i] % cfg_.capacity);
    raw_priority_[slot] = p;
    tree_.set(slot, std::pow(p, cfg_.per_alpha));
    max_priority_ = std::max(max_priority_, p);
  }
}

// --- snapshot ---------------------------------------------------------------

namespace {

void write_action(std::ostream& os, const Action& a) {
  if (a.is_discrete()) {
    os << "d " << a.index << ' ';
  } else {
    os << "c " << a.raw.size() << ' ';
    nn::write_doubles(os, a.raw);
  }
}

Action read_action(std::istream& is) {
  std::string tag;
  is >> tag;
  if (tag == "d") {
    int i;
    is >> i;
    return Action::discrete(i);
  }
  if (tag != "c") throw Error("replay snapshot: bad action tag");
  std::size_t n;
  is >> n;
  return Action::continuous(nn::read_doubles(is, n));
}

void write_vec(std::ostream& os, const Vec& v) {
  os << v.size() << ' ';
  nn::write_doubles(os, v);
}

Vec read_vec(std::istream& is) {
  std::size_t n;
  is >> n;
  return nn::read_doubles(is, n);
}

template <class T>
void write_ints(std::ostream& os, const std::vector<T>& v) {
  os << v.size();
  for (const T& x : v) os << ' ' << x;
  os << '\n';
}

template <class T>
std::vector<T> read_ints(std::istream& is) {
  std::size_t n;
  is >> n;
  std::vector<T> v(n);
  for (T& x : v) is >> x;
  return v;
}

void write_segment(std::ostream& os, const GameSegment& s) {
  os << "segment " << s.length() << ' ' << (s.terminal ? 1 : 0) << ' ' << s.winner.value_or(-1)
     << '\n';
  for (const Vec& o : s.observations) write_vec(os, o);
  for (const Action& a : s.actions) write_action(os, a);
  os << '\n';
  write_vec(os, s.rewards_ext);
  write_vec(os, s.rewards_int);
  for (int t = 0; t < s.length(); ++t) {
    os << s.candidates[t].size() << ' ';
    for (const Action& a : s.candidates[t]) write_action(os, a);
    write_vec(os, s.policy_targets[t]);
    write_ints(os, s.legal[t]);
  }
  write_vec(os, s.root_values);
  write_ints(os, s.to_play);
  write_ints(os, s.chance_outcomes);
  write_ints(os, s.search_seeds);
}

GameSegment read_segment(std::istream& is) {
  nn::expect_token(is, "segment");
  GameSegment s;
  int T, terminal, winner;
  is >> T >> terminal >> winner;
  if (!is || T < 1) throw Error("replay snapshot: bad segment header");
  s.terminal = terminal != 0;
  if (winner >= 0) s.winner = winner;
  for (int t = 0; t <= T; ++t) s.observations.push_back(read_vec(is));
  for (int t = 0; t < T; ++t) s.actions.push_back(read_action(is));
  s.rewards_ext = read_vec(is);
  s.rewards_int = read_vec(is);
  for (int t = 0; t < T; ++t) {
    std::size_t nc;
    is >> nc;
    std::vector<Action> cands;
    for (std::size_t i = 0; i < nc; ++i) cands.push_back(read_action(is));
    s.candidates.push_back(std::move(cands));
    s.policy_targets.push_back(read_vec(is));
    s.legal.push_back(read_ints<int>(is));
  }
  s.root_values = read_vec(is);
  s.to_play = read_ints<int>(is);
  s.chance_outcomes = read_ints<int>(is);
  s.search_seeds = read_ints<std::uint64_t>(is);
  if (!is) throw Error("replay snapshot: truncated segment");
  s.validate();
  return s;
}

}  // namespace

void ReplayBuffer::save(std::ostream& os) const {
  std::lock_guard<std::mutex> lock(*mu_);
  os << "replay v1\n";
  os << cfg_.capacity << ' ' << nn::hex_double(cfg_.per_alpha) << ' ' << nn::hex_double(cfg_.per_beta)
     << ' ' << cfg_.n_step << ' ' << cfg_.unroll_steps << ' ' << nn::hex_double(cfg_.discount) << ' '
     << nn::hex_double(cfg_.reanalyze_ratio) << ' ' << nn::hex_double(cfg_.replay_ratio) << ' '
     << nn::hex_double(cfg_.intrinsic_beta) << '\n';
  os << next_id_ << ' ' << nn::hex_double(max_priority_) << ' ' << stats_.collected << ' '
     << stats_.trained << ' ' << stats_.stale_skips << '\n';
  write_vec(os, raw_priority_);
  os << segments_.size() << '\n';
  for (const Stored& s : segments_) {
    os << s.first_id << '\n';
    write_segment(os, s.segment);
  }
}

ReplayBuffer ReplayBuffer::load(std::istream& is) {
  nn::expect_token(is, "replay");
  nn::expect_token(is, "v1");
  BufferConfig cfg;
  std::string a, b, d, r1, r2, ib;
  is >> cfg.capacity >> a >> b >> cfg.n_step >> cfg.unroll_steps >> d >> r1 >> r2 >> ib;
  if (!is) throw Error("replay snapshot: truncated header");
  cfg.per_alpha = nn::parse_double(a);
  cfg.per_beta = nn::parse_double(b);
  cfg.discount = nn::parse_double(d);
  cfg.reanalyze_ratio = nn::parse_double(r1);
  cfg.replay_ratio = nn::parse_double(r2);
  cfg.intrinsic_beta = nn::parse_double(ib);
  ReplayBuffer buf(cfg);
  std::string mp;
  is >> buf.next_id_ >> mp >> buf.stats_.collected >> buf.stats_.trained >> buf.stats_.stale_skips;
  buf.max_priority_ = nn::parse_double(mp);
  buf.raw_priority_ = read_vec(is);
  if (static_cast<int>(buf.raw_priority_.size()) != cfg.capacity) {
    throw Error("replay snapshot: priority table size mismatch");
  }
  std::size_t nseg;
  is >> nseg;
  for (std::size_t i = 0; i < nseg; ++i) {
    std::int64_t first;
    is >> first;
    buf.segments_.push_back({first, read_segment(is)});
  }
  for (std::int64_t id = buf.first_resident(); id < buf.next_id_; ++id) {
    const int slot = static_cast<int>(id % cfg.capacity);
    buf.tree_.set(slot, std::pow(buf.raw_priority_[slot], cfg.per_alpha));
  }
  return buf;
}

// --- reanalyze --------------------------------------------------------------

TargetOverrides reanalyze(const GameSegment& s, int pos, const BufferConfig& cfg,
                          const MuZeroModel& model, const SearchConfig& search_cfg) {
  if (static_cast<int>(s.observations.front().size()) != model.obs_dim()) {
    throw ConfigError("reanalyze: model/environment spec mismatch");
  }
  const int T = s.length();
  TargetOverrides ov;
  auto search_at = [&](int k) {
    LearnedModelAdapter world(model, s.observations[k], s.legal[k], s.to_play[k]);
    Rng rng(s.search_seeds[k]);
    return run_mcts(world, search_cfg, rng, SearchOptions{false});
  };
  std::map<int, SearchResult> cache;
  auto get = [&](int k) -> const SearchResult& {
    auto it = cache.find(k);
    if (it == cache.end()) it = cache.emplace(k, search_at(k)).first;
    return it->second;
  };
  for (int u = 0; u <= cfg.unroll_steps; ++u) {
    const int k = pos + u;
    if (k < T) {
      const SearchResult& r = get(k);
      std::vector<Action> cands = r.subset ? r.actions : std::vector<Action>{};
      ov.policies[k] = {std::move(cands), r.improved_policy};
    }
    const int b = k + cfg.n_step;
    if (b < T) ov.root_values[b] = get(b).root_value;
  }
  return ov;
}

void reanalyze_batch(const ReplayBuffer& buffer, TransitionBatch& batch, const MuZeroModel& model,
                     const SearchConfig& search_cfg) {
  const int n = static_cast<int>(std::lround(buffer.config().reanalyze_ratio * batch.samples.size()));
  for (int i = 0; i < n; ++i) {
    TransitionSample& s = batch.samples[i];
    auto [seg, pos] = buffer.locate(s.index);
    const TargetOverrides ov = reanalyze(*seg, pos, buffer.config(), model, search_cfg);
    s.targets = compute_targets(*seg, pos, buffer.config(), &ov);
  }
}

GateDecision throughput_gate(const BufferStats& stats, double replay_ratio) {
  return static_cast<double>(stats.trained) < replay_ratio * static_cast<double>(stats.collected)
             ? GateDecision::train
             : GateDecision::collect;
}

}  // namespace tz
