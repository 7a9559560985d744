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

#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "treezero/config.hpp"
#include "treezero/loop.hpp"

namespace tz::cli {

namespace fs = std::filesystem;

namespace {

struct TrainArgs {
  std::string config;
  std::vector<std::string> sets;
  std::vector<std::uint64_t> seeds;
  std::string env;
  std::int64_t steps = -1;
  std::string run_dir;
  bool resume = false;
  bool quiet = false;
};

struct EvalArgs {
  std::string checkpoint;
  int episodes = 20;
  std::uint64_t seed = 0;
  std::string opponent;
  int sims = 0;
  std::string env;
  std::string csv;
};

struct PlayArgs {
  std::string checkpoint;
  int human_seat = 0;
  std::uint64_t seed = 0;
};

struct ProbeArgs {
  std::string checkpoint;
  std::string transitions;
  int generate = 0;
  std::uint64_t seed = 0;
};

struct ExportArgs {
  std::string run_dir;
  std::string out;
};

struct ConfigArgs {
  std::string config;
  std::vector<std::string> sets;
};

std::string num(double x) {
  std::ostringstream os;
  os << std::setprecision(10) << x;
  return os.str();
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_config_file(a.config);
  if (!a.env.empty()) {
    cfg.env.id = a.env;
    cfg.env.params.clear();
  }
  if (!a.seeds.empty()) cfg.seeds = a.seeds;
  if (a.steps >= 0) cfg.total_env_steps = a.steps;
  for (const auto& s : a.sets) cfg = apply_override(cfg, s);
  resolve(cfg);

  fs::path dir = a.run_dir;
  if (dir.empty()) {
    if (const char* env_dir = std::getenv("RUN_DIR"); env_dir && *env_dir) {
      dir = env_dir;
    } else {
      dir = fs::path("runs") / (cfg.env.id + "-" + to_string(cfg.algorithm));
    }
  }
  OrchestrateOptions opts;
  opts.run_dir = dir;
  opts.resume = a.resume;
  opts.quiet = a.quiet;
  if (!a.quiet) opts.log = [&err](const std::string& m) { err << m << '\n'; };
  const auto results = orchestrate(cfg, opts);
  out << "run dir " << dir.string() << '\n';
  for (const auto& r : results) {
    const EvalPoint& last = r.evals.back();
    out << "seed " << r.seed << " env_steps " << r.env_steps << " final_return "
        << num(last.report.mean_return);
    if (last.report.loss_rate) out << " non_loss " << num(last.report.non_loss_rate());
    out << '\n';
  }
  return kExitOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  CheckpointInfo info = load_checkpoint_model(a.checkpoint);
  RunConfig cfg = info.cfg;
  if (!a.env.empty()) {
    cfg.env.id = a.env;
    cfg.env.params.clear();
  }
  if (!a.opponent.empty()) cfg.eval.opponent = a.opponent;
  if (a.sims > 0) cfg.eval.num_simulations = a.sims;
  if (a.episodes < 1) throw ConfigError("--episodes must be >= 1");
  const ResolvedRun run = resolve(cfg);
  info.model.check_compatible(run.env_spec);
  const EvalReport rep = evaluate(info.model, run, a.seed, a.episodes);
  out << "episode,return\n";
  for (std::size_t i = 0; i < rep.returns.size(); ++i) out << i << ',' << num(rep.returns[i]) << '\n';
  out << "mean_return " << num(rep.mean_return) << " +- " << num(rep.std_return) << '\n';
  if (rep.loss_rate) {
    out << "win_rate " << num(*rep.win_rate) << " draw_rate " << num(*rep.draw_rate) << " loss_rate "
        << num(*rep.loss_rate) << '\n';
  }
  if (!a.csv.empty()) {
    const bool fresh = !fs::exists(a.csv);
    std::ofstream csv(a.csv, std::ios::app);
    if (!csv) throw Error("cannot write " + a.csv);
    if (fresh) csv << "checkpoint,seed,episodes,mean_return,std_return,win_rate,draw_rate,loss_rate\n";
    csv << a.checkpoint << ',' << a.seed << ',' << a.episodes << ',' << num(rep.mean_return) << ','
        << num(rep.std_return) << ',' << (rep.win_rate ? num(*rep.win_rate) : "") << ','
        << (rep.draw_rate ? num(*rep.draw_rate) : "") << ',' << (rep.loss_rate ? num(*rep.loss_rate) : "")
        << '\n';
  }
  return kExitOk;
}

int cmd_play(const PlayArgs& a, std::istream& in, std::ostream& out) {
  const CheckpointInfo info = load_checkpoint_model(a.checkpoint);
  const ResolvedRun run = resolve(info.cfg);
  info.model.check_compatible(run.env_spec);
  if (run.env_spec.num_players != 2) throw ConfigError("play needs a two-player environment");
  if (a.human_seat != 0 && a.human_seat != 1) throw ConfigError("--human-seat must be 0 or 1");
  auto env = make_env(run.cfg.env);
  env->reset(a.seed);
  Rng rng(mix_seed(a.seed, 7));
  std::optional<int> winner;
  while (!env->done()) {
    out << env->render();
    int action = -1;
    if (env->to_play() == a.human_seat) {
      const auto legal = env->legal_actions();
      while (true) {
        out << "your move (legal:";
        for (int l : legal) out << ' ' << l;
        out << ")> " << std::flush;
        std::string line;
        if (!std::getline(in, line)) {
          out << "\nend of input, leaving the game\n";
          return kExitOk;
        }
        std::istringstream ls(line);
        int v;
        std::string rest;
        if (ls >> v && !(ls >> rest) && std::find(legal.begin(), legal.end(), v) != legal.end()) {
          action = v;
          break;
        }
        out << "illegal move: " << line << '\n';
      }
    } else {
      action = select_action_for_eval(*env, info.model, run, rng).index;
      out << "agent plays " << action << '\n';
    }
    const StepResult step = env->step(Action::discrete(action));
    if (step.winner) winner = step.winner;
  }
  out << env->render();
  if (!winner) {
    out << "result: draw\n";
  } else {
    out << "result: " << (*winner == a.human_seat ? "you win" : "agent wins") << '\n';
  }
  return kExitOk;
}

int cmd_probe(const ProbeArgs& a, std::ostream& out) {
  const CheckpointInfo info = load_checkpoint_model(a.checkpoint);
  const ResolvedRun run = resolve(info.cfg);
  info.model.check_compatible(run.env_spec);
  std::vector<ProbeTransition> set;
  if (a.generate > 0) {
    // Uniform random rollouts in the checkpoint's environment.
    auto env = make_env(run.cfg.env);
    Rng rng(a.seed);
    const auto& space = run.env_spec.action_space;
    std::uint64_t episode = 0;
    while (static_cast<int>(set.size()) < a.generate) {
      Vec obs = env->reset(mix_seed(a.seed, episode++));
      while (!env->done() && static_cast<int>(set.size()) < a.generate) {
        const auto legal = env->legal_actions();
        std::uniform_int_distribution<std::size_t> pick(0, legal.size() - 1);
        const int j = legal[pick(rng)];
        const Action act = space.kind == ActionSpace::Kind::continuous ? Action::continuous(space.to_raw(j))
                                                                       : Action::discrete(j);
        const StepResult step = env->step(act);
        set.push_back({obs, act, step.obs, step.chance_outcome.value_or(-1)});
        obs = step.obs;
      }
    }
    std::ofstream os(a.transitions);
    if (!os) throw Error("cannot write " + a.transitions);
    save_probe_set(os, set);
  } else {
    std::ifstream is(a.transitions);
    if (!is) throw Error("cannot read " + a.transitions);
    set = load_probe_set(is);
  }
  const ProbeStats st = alignment_probe(info.model, set);
  out << "cosine_mean " << num(st.mean) << " cosine_std " << num(st.std) << " count " << st.count << '\n';
  return kExitOk;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

int cmd_export(const ExportArgs& a, std::ostream& out) {
  const fs::path dir = a.run_dir;
  if (!fs::is_directory(dir)) throw ConfigError("not a run directory: " + a.run_dir);
  std::vector<std::pair<std::uint64_t, fs::path>> seeds;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || name.rfind("seed_", 0) != 0) continue;
    if (!fs::exists(entry.path() / "metrics.csv")) continue;
    try {
      seeds.emplace_back(std::stoull(name.substr(5)), entry.path() / "metrics.csv");
    } catch (const std::exception&) {
      throw ConfigError("malformed run directory entry: " + name);
    }
  }
  if (seeds.empty()) throw ConfigError("malformed run directory (no seed metrics): " + a.run_dir);
  std::sort(seeds.begin(), seeds.end());

  std::ostringstream csv;
  const auto& cols = export_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) csv << (i ? "," : "") << cols[i];
  csv << '\n';
  std::size_t rows = 0;
  for (const auto& [seed, path] : seeds) {
    std::ifstream is(path);
    std::string header;
    std::getline(is, header);
    const auto names = split(header);
    if (names != metrics_columns()) throw ConfigError("malformed metrics header in " + path.string());
    std::vector<std::size_t> pick;
    for (const auto& c : cols) {
      pick.push_back(static_cast<std::size_t>(std::find(names.begin(), names.end(), c) - names.begin()));
    }
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto cells = split(line);
      if (cells.size() != names.size()) throw ConfigError("malformed metrics row in " + path.string());
      for (std::size_t i = 0; i < pick.size(); ++i) csv << (i ? "," : "") << cells[pick[i]];
      csv << '\n';
      ++rows;
    }
  }
  const std::string target = a.out.empty() ? (dir / "export.csv").string() : a.out;
  if (target == "-") {
    out << csv.str();
  } else {
    std::ofstream os(target);
    if (!os) throw Error("cannot write " + target);
    os << csv.str();
    out << "wrote " << rows << " rows to " << target << '\n';
  }
  return kExitOk;
}

int cmd_config(const ConfigArgs& a, std::ostream& out) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : load_config_file(a.config);
  for (const auto& s : a.sets) cfg = apply_override(cfg, s);
  resolve(cfg);
  out << serialize_config(cfg) << '\n';
  return kExitOk;
}

}  // namespace

const std::vector<std::string>& export_columns() {
  static const std::vector<std::string> cols = {
      "env_steps",   "seed",       "mean_return", "std_return",       "cosine",      "loss_total",
      "loss_policy", "loss_value", "loss_reward", "loss_consistency", "loss_entropy"};
  return cols;
}

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"treezero: tree-search reinforcement learning at desk scale"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* tr = app.add_subcommand("train", "Run training for every configured seed");
  tr->add_option("config", train.config, "Run config (JSON)")->required();
  tr->add_option("--set", train.sets, "Override a config key: dotted.key=value");
  tr->add_option("--seed", train.seeds, "Seed(s) to run, replacing the configured list");
  tr->add_option("--env", train.env, "Environment id, replacing env.id and clearing env.params");
  tr->add_option("--steps", train.steps, "Total environment steps per seed");
  tr->add_option("--run-dir", train.run_dir, "Output directory (default: $RUN_DIR or runs/<env>-<algorithm>)");
  tr->add_flag("--resume", train.resume, "Continue from the latest checkpoint of each seed");
  tr->add_flag("--quiet", train.quiet, "No progress lines");

  EvalArgs ev;
  auto* evc = app.add_subcommand("eval", "Evaluate a checkpoint");
  evc->add_option("checkpoint", ev.checkpoint, "Checkpoint file")->required();
  evc->add_option("--episodes", ev.episodes, "Episodes to play")->capture_default_str();
  evc->add_option("--seed", ev.seed, "Evaluation seed")->capture_default_str();
  evc->add_option("--opponent", ev.opponent, "Two-player opponent: random or minimax");
  evc->add_option("--sims", ev.sims, "Search simulations per move (default: from the run config)");
  evc->add_option("--env", ev.env, "Environment id override");
  evc->add_option("--csv", ev.csv, "Append a summary row to this CSV file");

  PlayArgs pl;
  auto* plc = app.add_subcommand("play", "Play against a checkpoint in the terminal");
  plc->add_option("checkpoint", pl.checkpoint, "Checkpoint file")->required();
  plc->add_option("--human-seat", pl.human_seat, "0 moves first, 1 moves second")->capture_default_str();
  plc->add_option("--seed", pl.seed, "Session seed")->capture_default_str();

  ProbeArgs pr;
  auto* prc = app.add_subcommand("probe", "Latent alignment probe of a checkpoint");
  prc->add_option("checkpoint", pr.checkpoint, "Checkpoint file")->required();
  prc->add_option("transitions", pr.transitions, "Probe set file")->required();
  prc->add_option("--generate", pr.generate, "Write this many random-play transitions to the file first");
  prc->add_option("--seed", pr.seed, "Seed for --generate")->capture_default_str();

  ExportArgs ex;
  auto* exc = app.add_subcommand("export", "Tidy CSV of every eval point of every seed");
  exc->add_option("run_dir", ex.run_dir, "Run directory")->required();
  exc->add_option("--out", ex.out, "Output file, '-' for stdout (default: <run_dir>/export.csv)");

  ConfigArgs cf;
  auto* cfc = app.add_subcommand("config", "Print a config with defaults filled in");
  cfc->add_option("config", cf.config, "Run config (JSON); omitted = all defaults");
  cfc->add_option("--set", cf.sets, "Override a config key: dotted.key=value");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*tr) return cmd_train(train, out, err);
    if (*evc) return cmd_eval(ev, out);
    if (*plc) return cmd_play(pl, in, out);
    if (*prc) return cmd_probe(pr, out);
    if (*exc) return cmd_export(ex, out);
    if (*cfc) return cmd_config(cf, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace tz::cli
