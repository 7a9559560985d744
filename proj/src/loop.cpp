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

#include "treezero/loop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "treezero/config.hpp"

#ifndef TREEZERO_VERSION
#define TREEZERO_VERSION "unknown"
#endif

namespace tz {

namespace fs = std::filesystem;

const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::alphazero: return "alphazero";
    case Algorithm::muzero: return "muzero";
    case Algorithm::muzero_ssl: return "muzero_ssl";
    case Algorithm::sampled: return "sampled";
    case Algorithm::gumbel: return "gumbel";
    case Algorithm::stochastic: return "stochastic";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "alphazero") return Algorithm::alphazero;
  if (s == "muzero") return Algorithm::muzero;
  if (s == "muzero_ssl") return Algorithm::muzero_ssl;
  if (s == "sampled") return Algorithm::sampled;
  if (s == "gumbel") return Algorithm::gumbel;
  if (s == "stochastic") return Algorithm::stochastic;
  throw ConfigError("unknown algorithm: " + s);
}

std::string version_string() { return TREEZERO_VERSION; }

std::unique_ptr<Env> make_env(const EnvConfig& cfg) { return make_env(cfg.id, cfg.params); }

// --- resolve ----------------------------------------------------------------

ResolvedRun resolve(const RunConfig& cfg) {
  ResolvedRun r;
  r.cfg = cfg;
  if (cfg.total_env_steps < 0) throw ConfigError("total_env_steps must be >= 0");
  if (cfg.eval.episodes < 1) throw ConfigError("eval.episodes must be >= 1");
  if (cfg.eval.every < 1) throw ConfigError("eval.every must be >= 1");
  if (cfg.eval.num_simulations < 0) throw ConfigError("eval.num_simulations must be >= 0");
  if (cfg.eval.opponent != "random" && cfg.eval.opponent != "minimax") {
    throw ConfigError("eval.opponent must be random or minimax");
  }
  if (cfg.seeds.empty()) throw ConfigError("seeds must not be empty");
  if (cfg.probe_size < 0) throw ConfigError("probe_size must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("trainer.batch_size must be >= 1");
  if (!(cfg.grad_clip > 0.0)) throw ConfigError("trainer.grad_clip must be positive");
  if (cfg.min_transitions < 0) throw ConfigError("trainer.min_transitions must be >= 0");
  if (cfg.keep_checkpoints < 1) throw ConfigError("keep_checkpoints must be >= 1");
  if (cfg.search.num_simulations < 1) throw ConfigError("search.num_simulations must be >= 1");
  if (!(cfg.search.discount > 0.0 && cfg.search.discount <= 1.0)) {
    throw ConfigError("search.discount must lie in (0, 1]");
  }
  if (cfg.search.sampled_k < 1) throw ConfigError("search.sampled.K must be >= 1");
  if (cfg.search.gumbel_m_top < 1) throw ConfigError("search.gumbel.m_top must be >= 1");
  if (cfg.model.latent_dim < 1 || cfg.model.hidden_dim < 1 || cfg.model.embed_dim < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  cfg.loss.validate();
  if (!(cfg.optimizer.lr >= 0.0)) throw ConfigError("optimizer.lr must be >= 0");

  const auto env = make_env(cfg.env);
  r.env_spec = env->spec();
  const bool two_player = r.env_spec.num_players == 2;
  const bool continuous = r.env_spec.action_space.kind == ActionSpace::Kind::continuous;
  r.explore = cfg.explore.resolved();
  r.perfect_simulator = cfg.algorithm == Algorithm::alphazero;

  r.model = cfg.model;
  r.model.stochastic = cfg.algorithm == Algorithm::stochastic;
  if (two_player) r.model.value_head = ValueHeadKind::tanh_bounded;
  if (cfg.algorithm == Algorithm::sampled && continuous && r.model.policy == PolicyKind::categorical) {
    r.model.policy = PolicyKind::factored;
  }
  if (r.model.policy != PolicyKind::categorical && !continuous) {
    throw ConfigError("model.policy " + std::string(to_string(r.model.policy)) +
                      " needs a continuous action space");
  }
  if (r.model.policy == PolicyKind::gaussian && cfg.algorithm != Algorithm::sampled) {
    throw ConfigError("model.policy gaussian needs algorithm sampled");
  }
  if (r.model.stochastic && !r.env_spec.chance_dim) {
    throw ConfigError("algorithm stochastic needs an environment with chance events");
  }

  r.search = cfg.search;
  r.search.two_player = two_player;
  if (two_player) r.search.discount = 1.0;
  switch (cfg.algorithm) {
    case Algorithm::gumbel: r.search.variant = SearchVariant::gumbel; break;
    case Algorithm::sampled: r.search.variant = SearchVariant::sampled; break;
    case Algorithm::stochastic: r.search.variant = SearchVariant::stochastic; break;
    default: r.search.variant = SearchVariant::puct; break;
  }
  if (r.explore.double_simulations) r.search.num_simulations *= 2;
  r.eval_search = r.search;
  if (cfg.eval.num_simulations > 0) r.eval_search.num_simulations = cfg.eval.num_simulations;

  r.buffer = cfg.buffer;
  r.buffer.discount = r.search.discount;
  r.buffer.intrinsic_beta = r.explore.intrinsic ? r.explore.rnd.beta : 0.0;
  if (r.perfect_simulator) {
    // Policy + value on the Monte Carlo outcome only.
    r.buffer.unroll_steps = 0;
    r.buffer.n_step = r.env_spec.max_steps;
    if (r.buffer.reanalyze_ratio > 0.0) {
      throw ConfigError("buffer.reanalyze_ratio needs a learned model (not alphazero)");
    }
  }
  r.buffer.validate();

  r.trainer.batch_size = cfg.batch_size;
  r.trainer.grad_clip = cfg.grad_clip;
  r.trainer.weights = cfg.loss;
  if (cfg.algorithm == Algorithm::muzero_ssl && r.trainer.weights.consistency == 0.0) {
    r.trainer.weights.consistency = 2.0;
  }
  if (r.explore.entropy_weight > 0.0) r.trainer.weights.entropy = r.explore.entropy_weight;
  if (r.perfect_simulator) {
    r.trainer.weights.reward = 0.0;
    r.trainer.weights.consistency = 0.0;
  }
  r.trainer.unroll_steps = r.buffer.unroll_steps;
  r.trainer.reanalyze = !r.perfect_simulator;
  r.trainer.search = r.search;
  r.min_transitions = cfg.min_transitions > 0 ? cfg.min_transitions : 2 * cfg.batch_size;
  return r;
}

// --- collection -------------------------------------------------------------

namespace {

std::unique_ptr<WorldAdapter> make_world(const Env& env, const MuZeroModel& model,
                                         const ResolvedRun& run, std::uint64_t seed) {
  if (run.perfect_simulator) {
    return std::make_unique<PerfectSimulatorAdapter>(env, model.policy_layout(), model_evaluator(model),
                                                     run.search.discount, mix_seed(seed, 17));
  }
  return std::make_unique<LearnedModelAdapter>(model, env.observation(), env.legal_actions(),
                                               env.to_play());
}

}  // namespace

GameSegment collect_episode(Env& env, std::uint64_t env_seed, const MuZeroModel& model,
                            const ResolvedRun& run, const CollectSettings& settings,
                            const RndModule* rnd, Rng& rng) {
  GameSegment seg;
  seg.observations.push_back(env.reset(env_seed));
  const auto& space = env.spec().action_space;
  while (!env.done()) {
    const std::uint64_t search_seed = rng();
    const std::vector<int> legal = env.legal_actions();
    auto world = make_world(env, model, run, search_seed);
    Rng search_rng(search_seed);
    const SearchResult res = run_mcts(*world, run.search, search_rng, SearchOptions{settings.add_noise});

    int chosen = res.selected_index;
    if (run.search.variant != SearchVariant::gumbel) {
      chosen = sample_action_from_visits(res.visit_counts, settings.temperature, rng);
    }
    Action action = res.actions[chosen];
    if (settings.eps > 0.0) {
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      if (unif(rng) < settings.eps) {
        const int a = eps_greedy_mix(-1, legal, 1.0, rng);
        action = action.is_discrete() ? Action::discrete(a) : Action::continuous(space.to_raw(a));
      }
    }

    seg.actions.push_back(action);
    seg.candidates.push_back(res.subset ? res.actions : std::vector<Action>{});
    seg.policy_targets.push_back(res.improved_policy);
    seg.root_values.push_back(res.root_value);
    seg.to_play.push_back(env.to_play());
    seg.legal.push_back(space.kind == ActionSpace::Kind::continuous ? std::vector<int>{} : legal);
    seg.search_seeds.push_back(search_seed);
    const StepResult step = env.step(action);
    seg.observations.push_back(step.obs);
    seg.rewards_ext.push_back(step.reward);
    seg.chance_outcomes.push_back(step.chance_outcome.value_or(-1));
    if (step.winner) seg.winner = step.winner;
  }
  seg.terminal = true;
  if (rnd) {
    const std::vector<Vec> reached(seg.observations.begin() + 1, seg.observations.end());
    seg.rewards_int = rnd_intrinsic_batch(*rnd, reached);
  } else {
    seg.rewards_int.assign(seg.actions.size(), 0.0);
  }
  seg.validate();
  return seg;
}

Action select_action_for_eval(const Env& env, const MuZeroModel& model, const ResolvedRun& run,
                              Rng& rng) {
  const std::uint64_t seed = rng();
  std::unique_ptr<WorldAdapter> world;
  if (run.perfect_simulator) {
    world = std::make_unique<PerfectSimulatorAdapter>(env, model.policy_layout(), model_evaluator(model),
                                                      run.eval_search.discount, mix_seed(seed, 17));
  } else {
    world = std::make_unique<LearnedModelAdapter>(model, env.observation(), env.legal_actions(),
                                                  env.to_play());
  }
  Rng search_rng(seed);
  const SearchResult res = run_mcts(*world, run.eval_search, search_rng, SearchOptions{false});
  return res.actions[res.selected_index];
}

// --- evaluation -------------------------------------------------------------

namespace {

int opponent_action(const Env& env, const std::string& opponent, Rng& rng) {
  const auto legal = env.legal_actions();
  if (opponent == "minimax") {
    const auto* board = dynamic_cast<const KInRow*>(&env);
    if (!board) throw ConfigError("the minimax opponent needs a KInRow environment");
    const MinimaxResult m = minimax_oracle(*board);
    std::vector<int> best(m.optimal_actions.begin(), m.optimal_actions.end());
    std::uniform_int_distribution<std::size_t> pick(0, best.size() - 1);
    return best[pick(rng)];
  }
  std::uniform_int_distribution<std::size_t> pick(0, legal.size() - 1);
  return legal[pick(rng)];
}

void finish_report(EvalReport& rep) {
  const double n = static_cast<double>(rep.returns.size());
  double sum = 0.0;
  for (double x : rep.returns) sum += x;
  rep.mean_return = sum / n;
  double var = 0.0;
  for (double x : rep.returns) var += (x - rep.mean_return) * (x - rep.mean_return);
  rep.std_return = std::sqrt(var / n);
}

}  // namespace

EvalReport evaluate(const MuZeroModel& model, const ResolvedRun& run, std::uint64_t seed, int episodes) {
  const auto start = std::chrono::steady_clock::now();
  EvalReport rep;
  auto env = make_env(run.cfg.env);
  const bool two_player = env->spec().num_players == 2;
  int wins = 0, draws = 0, losses = 0;
  for (int e = 0; e < episodes; ++e) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(e)));
    env->reset(mix_seed(seed, 100000 + static_cast<std::uint64_t>(e)));
    const int agent_seat = e % 2;
    double ret = 0.0;
    std::optional<int> winner;
    while (!env->done()) {
      Action a;
      if (two_player && env->to_play() != agent_seat) {
        a = Action::discrete(opponent_action(*env, run.cfg.eval.opponent, rng));
      } else {
        a = select_action_for_eval(*env, model, run, rng);
      }
      const StepResult step = env->step(a);
      if (!two_player) ret += step.reward;
      if (step.winner) winner = step.winner;
      ++rep.env_steps;
    }
    if (two_player) {
      if (!winner) {
        ++draws;
        ret = 0.0;
      } else if (*winner == agent_seat) {
        ++wins;
        ret = 1.0;
      } else {
        ++losses;
        ret = -1.0;
      }
    }
    rep.returns.push_back(ret);
  }
  finish_report(rep);
  if (two_player) {
    rep.win_rate = static_cast<double>(wins) / episodes;
    rep.draw_rate = static_cast<double>(draws) / episodes;
    rep.loss_rate = static_cast<double>(losses) / episodes;
  }
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

// --- alignment probe --------------------------------------------------------

std::vector<ProbeTransition> probe_transitions(const GameSegment& s) {
  std::vector<ProbeTransition> out;
  for (int t = 0; t < s.length(); ++t) {
    out.push_back({s.observations[t], s.actions[t], s.observations[t + 1], s.chance_outcomes[t]});
  }
  return out;
}

ProbeStats alignment_probe(const MuZeroModel& model, const std::vector<ProbeTransition>& transitions) {
  if (transitions.empty()) throw Error("alignment_probe: empty probe set");
  Vec cos;
  for (const ProbeTransition& tr : transitions) {
    const NetworkOutput root = model.initial_inference(tr.obs);
    Vec predicted;
    if (model.config().stochastic && tr.chance_outcome >= 0) {
      const AfterstateOutput as = model.afterstate_inference(root.latent, tr.action);
      Vec code(model.chance_dim(), 0.0);
      code[tr.chance_outcome] = 1.0;
      predicted = model.chance_recurrent_inference(as.afterstate, code).latent;
    } else {
      predicted = model.recurrent_inference(root.latent, tr.action).latent;
    }
    const Vec actual = model.initial_inference(tr.next_obs).latent;
    double nu = 0.0, nv = 0.0;
    for (double x : predicted) nu += x * x;
    for (double x : actual) nv += x * x;
    if (nu == 0.0 || nv == 0.0) continue;
    cos.push_back(nn::cosine_similarity(predicted, actual));
  }
  ProbeStats st;
  st.count = static_cast<int>(cos.size());
  if (cos.empty()) return st;
  for (double c : cos) st.mean += c;
  st.mean /= cos.size();
  for (double c : cos) st.std += (c - st.mean) * (c - st.mean);
  st.std = std::sqrt(st.std / cos.size());
  return st;
}

namespace {

void write_action(std::ostream& os, const Action& a) {
  if (a.is_discrete()) {
    os << "d " << a.index;
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
  if (tag != "c") throw Error("probe set: bad action tag");
  std::size_t n;
  is >> n;
  return Action::continuous(nn::read_doubles(is, n));
}

}  // namespace

void save_probe_set(std::ostream& os, const std::vector<ProbeTransition>& ts) {
  os << "probe v1 " << ts.size() << '\n';
  for (const auto& t : ts) {
    os << t.obs.size() << ' ';
    nn::write_doubles(os, t.obs);
    write_action(os, t.action);
    os << ' ';
    nn::write_doubles(os, t.next_obs);
    os << t.chance_outcome << '\n';
  }
}

std::vector<ProbeTransition> load_probe_set(std::istream& is) {
  nn::expect_token(is, "probe");
  nn::expect_token(is, "v1");
  std::size_t n;
  is >> n;
  if (!is) throw Error("probe set: truncated header");
  std::vector<ProbeTransition> out(n);
  for (auto& t : out) {
    std::size_t d;
    is >> d;
    t.obs = nn::read_doubles(is, d);
    t.action = read_action(is);
    t.next_obs = nn::read_doubles(is, d);
    is >> t.chance_outcome;
    if (!is) throw Error("probe set: truncated entry");
  }
  return out;
}

// --- metrics ----------------------------------------------------------------

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols = {
      "scheduled_step", "env_steps",   "seed",         "mean_return",   "std_return",
      "win_rate",       "draw_rate",   "loss_rate",    "cosine",        "temperature",
      "loss_total",     "loss_policy", "loss_value",   "loss_reward",   "loss_consistency",
      "loss_entropy",   "train_steps", "buffer_size",  "wall_time"};
  return cols;
}

namespace {

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  std::ostringstream os;
  os << std::setprecision(10) << x;
  return os.str();
}

std::string opt_fmt(const std::optional<double>& x) { return x ? fmt(*x) : ""; }

std::string metrics_row(const EvalPoint& p, std::uint64_t seed) {
  std::ostringstream os;
  os << p.scheduled_step << ',' << p.env_steps << ',' << seed << ',' << fmt(p.report.mean_return)
     << ',' << fmt(p.report.std_return) << ',' << opt_fmt(p.report.win_rate) << ','
     << opt_fmt(p.report.draw_rate) << ',' << opt_fmt(p.report.loss_rate) << ','
     << (p.has_cosine ? fmt(p.cosine) : "") << ',' << fmt(p.temperature) << ','
     << fmt(p.mean_loss.total) << ',' << fmt(p.mean_loss.policy) << ',' << fmt(p.mean_loss.value)
     << ',' << fmt(p.mean_loss.reward) << ',' << fmt(p.mean_loss.consistency) << ','
     << fmt(p.mean_loss.entropy) << ',' << p.train_steps << ',' << p.buffer_size << ','
     << fmt(p.report.wall_time);
  return os.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double cell_double(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::stod(s);
}

EvalPoint parse_metrics_row(const std::string& line) {
  const auto c = split_csv(line);
  if (c.size() != metrics_columns().size()) throw Error("metrics row has the wrong column count");
  EvalPoint p;
  p.scheduled_step = std::stoll(c[0]);
  p.env_steps = std::stoll(c[1]);
  p.report.mean_return = cell_double(c[3]);
  p.report.std_return = cell_double(c[4]);
  if (!c[5].empty()) p.report.win_rate = cell_double(c[5]);
  if (!c[6].empty()) p.report.draw_rate = cell_double(c[6]);
  if (!c[7].empty()) p.report.loss_rate = cell_double(c[7]);
  p.has_cosine = !c[8].empty();
  if (p.has_cosine) p.cosine = cell_double(c[8]);
  p.temperature = cell_double(c[9]);
  p.mean_loss.total = cell_double(c[10]);
  p.mean_loss.policy = cell_double(c[11]);
  p.mean_loss.value = cell_double(c[12]);
  p.mean_loss.reward = cell_double(c[13]);
  p.mean_loss.consistency = cell_double(c[14]);
  p.mean_loss.entropy = cell_double(c[15]);
  p.train_steps = std::stoll(c[16]);
  p.buffer_size = std::stoi(c[17]);
  p.report.wall_time = cell_double(c[18]);
  return p;
}

std::string join_columns() {
  std::string s;
  for (const auto& c : metrics_columns()) s += (s.empty() ? "" : ",") + c;
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

// --- per-seed state ---------------------------------------------------------

struct LossAccumulator {
  LossBreakdown sum;
  std::int64_t count = 0;

  void add(const LossBreakdown& l) {
    sum.total += l.total;
    sum.policy += l.policy;
    sum.value += l.value;
    sum.reward += l.reward;
    sum.consistency += l.consistency;
    sum.entropy += l.entropy;
    ++count;
  }
  LossBreakdown mean() const {
    LossBreakdown m;
    if (count == 0) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      m.total = m.policy = m.value = m.reward = m.consistency = m.entropy = nan;
      return m;
    }
    m.total = sum.total / count;
    m.policy = sum.policy / count;
    m.value = sum.value / count;
    m.reward = sum.reward / count;
    m.consistency = sum.consistency / count;
    m.entropy = sum.entropy / count;
    return m;
  }
};

struct SeedState {
  MuZeroModel model;
  Learner learner;
  std::optional<RndModule> rnd;
  std::unique_ptr<ReplayBuffer> buffer;
  Rng collect_rng;
  Rng train_rng;
  std::vector<ProbeTransition> probe;
  std::int64_t env_steps = 0;
  std::int64_t episodes = 0;
  std::int64_t segment_steps = 0;
  std::int64_t next_eval = 0;
  bool initial_eval_done = false;
  LossAccumulator losses;
  std::vector<EvalPoint> evals;
};

void save_state(const fs::path& path, const ResolvedRun& run, std::uint64_t seed, const SeedState& s) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw Error("cannot write checkpoint " + tmp.string());
    const std::string cfg = serialize_config(run.cfg);
    os << "treezero-checkpoint v1\n";
    os << "config " << cfg.size() << '\n' << cfg;
    os << "seed " << seed << '\n';
    os << "counters " << s.env_steps << ' ' << s.episodes << ' ' << s.segment_steps << ' '
       << s.next_eval << ' ' << (s.initial_eval_done ? 1 : 0) << ' ' << s.learner.steps() << '\n';
    os << "rng " << s.collect_rng << '\n' << "rng " << s.train_rng << '\n';
    os << "losses " << s.losses.count << ' ';
    nn::write_doubles(os, Vec{s.losses.sum.total, s.losses.sum.policy, s.losses.sum.value,
                              s.losses.sum.reward, s.losses.sum.consistency, s.losses.sum.entropy});
    s.model.save(os);
    s.learner.optimizer().save(os);
    os << "rnd " << (s.rnd ? 1 : 0) << '\n';
    if (s.rnd) s.rnd->save(os);
    s.buffer->save(os);
    save_probe_set(os, s.probe);
    os << "evals " << s.evals.size() << '\n';
    for (const auto& e : s.evals) os << metrics_row(e, seed) << '\n';
    os << "end\n";
    if (!os) throw Error("failed writing checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

RunConfig read_checkpoint_config(std::istream& is) {
  nn::expect_token(is, "treezero-checkpoint");
  nn::expect_token(is, "v1");
  nn::expect_token(is, "config");
  std::size_t n;
  is >> n;
  is.get();
  std::string text(n, '\0');
  is.read(text.data(), static_cast<std::streamsize>(n));
  if (!is) throw Error("checkpoint: truncated config");
  return parse_config(text);
}

void load_state(const fs::path& path, const ResolvedRun& run, SeedState& s) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read checkpoint " + path.string());
  read_checkpoint_config(is);
  nn::expect_token(is, "seed");
  std::uint64_t seed;
  is >> seed;
  nn::expect_token(is, "counters");
  int initial = 0;
  std::int64_t learner_steps = 0;
  is >> s.env_steps >> s.episodes >> s.segment_steps >> s.next_eval >> initial >> learner_steps;
  s.initial_eval_done = initial != 0;
  nn::expect_token(is, "rng");
  is >> s.collect_rng;
  nn::expect_token(is, "rng");
  is >> s.train_rng;
  nn::expect_token(is, "losses");
  is >> s.losses.count;
  const Vec ls = nn::read_doubles(is, 6);
  s.losses.sum.total = ls[0];
  s.losses.sum.policy = ls[1];
  s.losses.sum.value = ls[2];
  s.losses.sum.reward = ls[3];
  s.losses.sum.consistency = ls[4];
  s.losses.sum.entropy = ls[5];
  s.model = MuZeroModel::load(is);
  s.model.check_compatible(run.env_spec);
  s.learner = Learner(run.trainer, run.cfg.optimizer);
  s.learner.optimizer() = nn::Optimizer::load(is);
  s.learner.set_steps(learner_steps);
  nn::expect_token(is, "rnd");
  int has_rnd = 0;
  is >> has_rnd;
  if (has_rnd) s.rnd = RndModule::load(is);
  s.buffer = std::make_unique<ReplayBuffer>(ReplayBuffer::load(is));
  s.probe = load_probe_set(is);
  nn::expect_token(is, "evals");
  std::size_t ne;
  is >> ne;
  is.get();
  for (std::size_t i = 0; i < ne; ++i) {
    std::string line;
    std::getline(is, line);
    s.evals.push_back(parse_metrics_row(line));
  }
  nn::expect_token(is, "end");
}

std::vector<fs::path> list_checkpoints(const fs::path& dir) {
  std::vector<std::pair<std::int64_t, fs::path>> found;
  if (!fs::exists(dir)) return {};
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("checkpoint_", 0) != 0 || name.find(".tmp") != std::string::npos) continue;
    try {
      found.emplace_back(std::stoll(name.substr(11)), entry.path());
    } catch (const std::exception&) {
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& f : found) out.push_back(f.second);
  return out;
}

void write_manifest(const fs::path& path, const std::string& status, const std::string& detail,
                    const std::vector<std::uint64_t>& seeds, std::int64_t env_steps) {
  std::ostringstream os;
  os << "schema 1\n"
     << "version " << version_string() << '\n'
     << "status " << status << '\n'
     << "seeds";
  for (auto s : seeds) os << ' ' << s;
  os << "\nenv_steps " << env_steps << '\n';
  if (!detail.empty()) os << "detail " << detail << '\n';
  write_text(path, os.str());
}

}  // namespace

// --- run_seed ---------------------------------------------------------------

SeedResult run_seed(const ResolvedRun& run, std::uint64_t seed, const OrchestrateOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  const RunConfig& cfg = run.cfg;
  const bool write = !opts.run_dir.empty();
  const fs::path dir = opts.run_dir / ("seed_" + std::to_string(seed));
  if (write) fs::create_directories(dir);
  auto log = [&](const std::string& msg) {
    if (opts.log) opts.log("[seed " + std::to_string(seed) + "] " + msg);
  };

  SeedState s;
  bool resumed = false;
  if (write && opts.resume) {
    const auto cps = list_checkpoints(dir);
    if (!cps.empty()) {
      load_state(cps.back(), run, s);
      resumed = true;
      log("resumed from " + cps.back().filename().string());
    }
  }
  if (!resumed) {
    s.model = MuZeroModel(run.env_spec, run.model, mix_seed(seed, 3));
    s.learner = Learner(run.trainer, cfg.optimizer);
    if (run.explore.intrinsic) s.rnd = RndModule(run.env_spec.obs_dim, run.explore.rnd, mix_seed(seed, 4));
    s.buffer = std::make_unique<ReplayBuffer>(run.buffer);
    s.collect_rng = Rng(mix_seed(seed, 1));
    s.train_rng = Rng(mix_seed(seed, 2));
  }

  // Metrics files are rebuilt from the evaluation history on every start.
  std::ofstream metrics, train_metrics;
  if (write) {
    metrics.open(dir / "metrics.csv");
    metrics << join_columns() << '\n';
    for (const auto& e : s.evals) metrics << metrics_row(e, seed) << '\n';
    metrics.flush();
    // Rows past the checkpoint's learner step are dropped on resume.
    std::vector<std::string> kept;
    if (resumed) {
      std::ifstream old(dir / "train_metrics.csv");
      std::string line;
      std::getline(old, line);
      while (std::getline(old, line)) {
        if (!line.empty() && std::stoll(line.substr(0, line.find(','))) <= s.learner.steps()) {
          kept.push_back(line);
        }
      }
    }
    train_metrics.open(dir / "train_metrics.csv", std::ios::trunc);
    train_metrics << "step,loss_total,loss_policy,loss_value,loss_reward,loss_consistency,"
                     "loss_entropy,grad_norm,buffer_size,temperature,eps\n";
    for (const auto& line : kept) train_metrics << line << '\n';
  }

  const TemperatureSchedule schedule = run.explore.schedule(cfg.total_env_steps);
  auto env = make_env(cfg.env);
  // Progress log only: external return of episodes collected since the last eval.
  double collect_return = 0.0;
  int collect_count = 0;

  auto checkpoint = [&]() {
    if (!write || !cfg.checkpoints) return;
    save_state(dir / ("checkpoint_" + std::to_string(s.env_steps)), run, seed, s);
    auto cps = list_checkpoints(dir);
    while (static_cast<int>(cps.size()) > cfg.keep_checkpoints) {
      fs::remove(cps.front());
      cps.erase(cps.begin());
    }
  };

  auto do_eval = [&](std::int64_t scheduled) {
    EvalPoint p;
    p.scheduled_step = scheduled;
    const EvalReport rep = evaluate(s.model, run, mix_seed(seed, 5000000 + static_cast<std::uint64_t>(scheduled)),
                                    cfg.eval.episodes);
    p.report = rep;
    p.env_steps = s.env_steps;
    if (s.probe.size() >= 100) {
      const ProbeStats ps = alignment_probe(s.model, s.probe);
      p.has_cosine = ps.count > 0;
      p.cosine = ps.mean;
    }
    p.temperature = temperature_at(schedule, s.env_steps);
    p.mean_loss = s.losses.mean();
    s.losses = LossAccumulator{};
    p.train_steps = s.learner.steps();
    p.buffer_size = s.buffer->size();
    p.report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    s.evals.push_back(p);
    if (write) {
      metrics << metrics_row(p, seed) << '\n';
      metrics.flush();
    }
    std::ostringstream msg;
    msg << "eval @" << s.env_steps << " return " << fmt(p.report.mean_return);
    if (p.report.loss_rate) msg << " non-loss " << fmt(p.report.non_loss_rate());
    if (p.has_cosine) msg << " cosine " << fmt(p.cosine);
    if (collect_count > 0) msg << " collect_return " << fmt(collect_return / collect_count);
    collect_return = 0.0;
    collect_count = 0;
    log(msg.str());
  };

  auto collect = [&](bool to_probe) {
    const std::uint64_t env_seed = mix_seed(seed, 1000 + static_cast<std::uint64_t>(s.episodes));
    CollectSettings settings;
    settings.temperature = temperature_at(schedule, s.env_steps);
    settings.eps = run.explore.eps;
    settings.add_noise = true;
    GameSegment seg = collect_episode(*env, env_seed, s.model, run, settings,
                                      s.rnd ? &*s.rnd : nullptr, s.collect_rng);
    s.env_steps += seg.length();
    s.segment_steps += seg.length();
    collect_return += seg.external_return();
    ++collect_count;
    ++s.episodes;
    if (to_probe) {
      for (auto& t : probe_transitions(seg)) {
        if (static_cast<int>(s.probe.size()) < cfg.probe_size) s.probe.push_back(std::move(t));
      }
    } else {
      s.buffer->push_segment(std::move(seg));
    }
  };

  if (!s.initial_eval_done) {
    // The probe set is reserved from the first episodes, played by the
    // initial snapshot and held out of the replay buffer.
    const std::int64_t probe_target = std::min<std::int64_t>(cfg.probe_size, cfg.total_env_steps);
    while (static_cast<std::int64_t>(s.probe.size()) < probe_target) collect(true);
    do_eval(0);
    s.initial_eval_done = true;
    s.next_eval = cfg.eval.every;
  }

  auto stop_reached = [&]() { return opts.stop_after >= 0 && s.env_steps >= opts.stop_after; };
  while (s.env_steps < cfg.total_env_steps && !stop_reached()) {
    const bool train = throughput_gate(s.buffer->stats(), run.buffer.replay_ratio) == GateDecision::train &&
                       s.buffer->size() >= run.min_transitions;
    if (train) {
      const TrainMetrics m = s.learner.train_iteration(*s.buffer, s.model, s.rnd ? &*s.rnd : nullptr, s.train_rng);
      s.losses.add(m.loss);
      if (write) {
        train_metrics << m.step << ',' << fmt(m.loss.total) << ',' << fmt(m.loss.policy) << ','
                      << fmt(m.loss.value) << ',' << fmt(m.loss.reward) << ',' << fmt(m.loss.consistency)
                      << ',' << fmt(m.loss.entropy) << ',' << fmt(m.loss.grad_norm) << ','
                      << s.buffer->size() << ',' << fmt(temperature_at(schedule, s.env_steps)) << ','
                      << fmt(run.explore.eps) << '\n';
      }
      continue;
    }
    collect(false);
    while (s.next_eval <= cfg.total_env_steps && s.env_steps >= s.next_eval) {
      do_eval(s.next_eval);
      s.next_eval += cfg.eval.every;
      checkpoint();
    }
  }
  if (stop_reached() && s.env_steps < cfg.total_env_steps) {
    checkpoint();
  } else if (s.evals.back().scheduled_step < cfg.total_env_steps) {
    do_eval(cfg.total_env_steps);
    checkpoint();
  }

  SeedResult out;
  out.seed = seed;
  out.evals = s.evals;
  out.env_steps = s.env_steps;
  out.collected = s.buffer->stats().collected;
  out.trained = s.buffer->stats().trained;
  out.episodes = s.episodes;
  out.segment_steps = s.segment_steps;
  if (write) {
    const bool done = s.env_steps >= cfg.total_env_steps;
    write_manifest(dir / "manifest", done ? "completed" : "stopped", "", {seed}, s.env_steps);
  }
  return out;
}

std::vector<SeedResult> orchestrate(const RunConfig& cfg, const OrchestrateOptions& opts) {
  const ResolvedRun run = resolve(cfg);
  const bool write = !opts.run_dir.empty();
  if (write) {
    fs::create_directories(opts.run_dir);
    write_text(opts.run_dir / "config.json", serialize_config(cfg));
    write_manifest(opts.run_dir / "manifest", "running", "", cfg.seeds, 0);
  }
  std::vector<SeedResult> results;
  for (std::uint64_t seed : cfg.seeds) {
    try {
      results.push_back(run_seed(run, seed, opts));
    } catch (const std::exception& e) {
      if (write) {
        const fs::path dir = opts.run_dir / ("seed_" + std::to_string(seed));
        fs::create_directories(dir);
        write_manifest(dir / "manifest", "failed", e.what(), {seed}, 0);
        write_manifest(opts.run_dir / "manifest", "failed", e.what(), cfg.seeds, 0);
        throw Error(std::string(e.what()) + " (manifest: " + (opts.run_dir / "manifest").string() + ")");
      }
      throw;
    }
  }
  if (write) {
    // Mean and std across seeds per scheduled evaluation step.
    std::map<std::int64_t, std::vector<const EvalPoint*>> by_step;
    for (const auto& r : results) {
      for (const auto& e : r.evals) by_step[e.scheduled_step].push_back(&e);
    }
    std::ostringstream os;
    os << "scheduled_step,num_seeds,mean_return_mean,mean_return_std,cosine_mean,cosine_std\n";
    for (const auto& [step, points] : by_step) {
      Vec ret, cos;
      for (const auto* p : points) {
        ret.push_back(p->report.mean_return);
        if (p->has_cosine) cos.push_back(p->cosine);
      }
      auto stats = [](const Vec& v) -> std::pair<std::string, std::string> {
        if (v.empty()) return {"", ""};
        double m = 0.0, sd = 0.0;
        for (double x : v) m += x;
        m /= v.size();
        for (double x : v) sd += (x - m) * (x - m);
        return {fmt(m), fmt(std::sqrt(sd / v.size()))};
      };
      const auto [rm, rs] = stats(ret);
      const auto [cm, cs] = stats(cos);
      os << step << ',' << points.size() << ',' << rm << ',' << rs << ',' << cm << ',' << cs << '\n';
    }
    write_text(opts.run_dir / "aggregate.csv", os.str());
    std::int64_t steps = 0;
    for (const auto& r : results) steps += r.env_steps;
    write_manifest(opts.run_dir / "manifest", "completed", "", cfg.seeds, steps);
  }
  return results;
}

CheckpointInfo load_checkpoint_model(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read checkpoint " + path.string());
  CheckpointInfo info;
  info.cfg = read_checkpoint_config(is);
  nn::expect_token(is, "seed");
  is >> info.seed;
  nn::expect_token(is, "counters");
  std::int64_t rest;
  is >> info.env_steps >> rest >> rest >> rest >> rest >> rest;
  std::string line;
  std::getline(is, line);
  for (int i = 0; i < 3; ++i) std::getline(is, line);  // two rng lines, loss line
  info.model = MuZeroModel::load(is);
  return info;
}

}  // namespace tz
