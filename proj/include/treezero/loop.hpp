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

// Orchestration: self-play collection, evaluation, the latent alignment probe
// and the gate-driven collect/train loop with checkpoints and CSV metrics.

#ifndef TREEZERO_LOOP_HPP_
#define TREEZERO_LOOP_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "treezero/envs.hpp"
#include "treezero/explore.hpp"
#include "treezero/model.hpp"
#include "treezero/replay.hpp"
#include "treezero/search.hpp"
#include "treezero/trainer.hpp"

namespace tz {

enum class Algorithm { alphazero, muzero, muzero_ssl, sampled, gumbel, stochastic };

const char* to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

struct EnvConfig {
  std::string id = "tictactoe";
  std::map<std::string, double> params;

  bool operator==(const EnvConfig&) const = default;
};

struct EvalConfig {
  int episodes = 20;
  std::int64_t every = 2000;
  std::string opponent = "random";  // two-player envs: random or minimax
  int num_simulations = 0;          // 0 = same as collection

  bool operator==(const EvalConfig&) const = default;
};

struct RunConfig {
  EnvConfig env;
  Algorithm algorithm = Algorithm::muzero;
  ModelConfig model;
  SearchConfig search;
  BufferConfig buffer;
  LossWeights loss;
  nn::OptimizerConfig optimizer;
  ExploreConfig explore;
  int batch_size = 64;
  double grad_clip = 10.0;
  int min_transitions = 0;  // 0 = 2 * batch_size
  std::int64_t total_env_steps = 20000;
  EvalConfig eval;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  int probe_size = 512;
  bool checkpoints = true;
  int keep_checkpoints = 2;

  bool operator==(const RunConfig&) const = default;
};

// Fully resolved settings of one run: the algorithm preset and the
// exploration preset applied, environment-dependent fields filled in.
struct ResolvedRun {
  RunConfig cfg;
  EnvSpec env_spec;
  bool perfect_simulator = false;
  ModelConfig model;
  SearchConfig search;       // collection search
  SearchConfig eval_search;  // evaluation search
  BufferConfig buffer;
  TrainerConfig trainer;
  ExploreConfig explore;     // resolved knobs
  int min_transitions = 0;
};

// Validates the configuration (ConfigError on failure) and resolves presets.
ResolvedRun resolve(const RunConfig& cfg);

std::unique_ptr<Env> make_env(const EnvConfig& cfg);

// Per-move acting settings for one collected episode.
struct CollectSettings {
  double temperature = 1.0;
  double eps = 0.0;
  bool add_noise = true;
};

// Plays one episode with search at every move. Two-player games use the same
// snapshot for both seats. With `rnd` set, rewards_int holds the RND error of
// each reached observation, min-max normalized over the episode.
GameSegment collect_episode(Env& env, std::uint64_t env_seed, const MuZeroModel& model,
                            const ResolvedRun& run, const CollectSettings& settings,
                            const RndModule* rnd, Rng& rng);

// Picks an action for the current env state with evaluation settings (no
// noise, most visited root action; the sequential-halving winner for gumbel).
Action select_action_for_eval(const Env& env, const MuZeroModel& model, const ResolvedRun& run,
                              Rng& rng);

struct EvalReport {
  double mean_return = 0.0;
  double std_return = 0.0;
  Vec returns;
  std::int64_t env_steps = 0;
  double wall_time = 0.0;
  // Two-player only: outcome rates of the agent against the opponent.
  std::optional<double> win_rate, draw_rate, loss_rate;

  double non_loss_rate() const { return 1.0 - loss_rate.value_or(0.0); }
};

// Runs run.cfg.eval.episodes episodes. Single-player: external return.
// Two-player: the agent alternates seats against the configured opponent and
// each episode scores +1 / 0 / -1.
EvalReport evaluate(const MuZeroModel& model, const ResolvedRun& run, std::uint64_t seed,
                    int episodes);

struct ProbeTransition {
  Vec obs;
  Action action;
  Vec next_obs;
  int chance_outcome = -1;
};

struct ProbeStats {
  double mean = 0.0;
  double std = 0.0;
  int count = 0;
};

// Mean cosine between the dynamics-predicted latent g(h(o_t), a_t) and the
// encoded next observation h(o_{t+1}). Read-only on the model.
ProbeStats alignment_probe(const MuZeroModel& model, const std::vector<ProbeTransition>& transitions);

std::vector<ProbeTransition> probe_transitions(const GameSegment& segment);
void save_probe_set(std::ostream& os, const std::vector<ProbeTransition>& transitions);
std::vector<ProbeTransition> load_probe_set(std::istream& is);

struct EvalPoint {
  std::int64_t scheduled_step = 0;
  std::int64_t env_steps = 0;
  EvalReport report;
  double cosine = 0.0;
  bool has_cosine = false;
  double temperature = 1.0;
  LossBreakdown mean_loss;
  std::int64_t train_steps = 0;
  int buffer_size = 0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<EvalPoint> evals;
  std::int64_t env_steps = 0;
  std::int64_t collected = 0;  // transitions pushed to the buffer
  std::int64_t trained = 0;    // samples consumed by the learner
  std::int64_t episodes = 0;
  std::int64_t segment_steps = 0;  // sum of collected segment lengths
};

struct OrchestrateOptions {
  std::filesystem::path run_dir;  // empty = no files written
  bool resume = false;            // continue from the latest checkpoint per seed
  // Stop after this many env steps even if total_env_steps is larger (used to
  // produce a checkpoint mid-run). <0 = no limit.
  std::int64_t stop_after = -1;
  bool quiet = true;
  std::function<void(const std::string&)> log;
};

// Runs one seed end to end.
SeedResult run_seed(const ResolvedRun& run, std::uint64_t seed, const OrchestrateOptions& opts);

// Runs every seed, writes the aggregate CSV and the top-level manifest.
std::vector<SeedResult> orchestrate(const RunConfig& cfg, const OrchestrateOptions& opts);

// Columns of metrics.csv / the export CSV, in order.
const std::vector<std::string>& metrics_columns();

// Version string recorded in manifests.
std::string version_string();

// Loads the model stored in a checkpoint file together with its run config.
struct CheckpointInfo {
  RunConfig cfg;
  MuZeroModel model;
  std::uint64_t seed = 0;
  std::int64_t env_steps = 0;
};
CheckpointInfo load_checkpoint_model(const std::filesystem::path& path);

}  // namespace tz

#endif  // TREEZERO_LOOP_HPP_
