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

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "test_util.hpp"
#include "treezero/config.hpp"

using namespace tz;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run_cli(const std::vector<std::string>& args, const std::string& input = "") {
  std::istringstream in(input);
  std::ostringstream out, err;
  const int code = cli::run(args, in, out, err);
  return {code, out.str(), err.str()};
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Small config written to `dir`/cfg.json.
fs::path write_quick_config(const fs::path& dir, const std::string& env = "tictactoe", int seeds = 1) {
  RunConfig c;
  c.env.id = env;
  c.model.latent_dim = 8;
  c.model.hidden_dim = 16;
  c.model.embed_dim = 8;
  c.search.num_simulations = 4;
  c.batch_size = 8;
  c.total_env_steps = 60;
  c.eval.every = 30;
  c.eval.episodes = 2;
  c.probe_size = 0;
  c.seeds.clear();
  for (int s = 0; s < seeds; ++s) c.seeds.push_back(s);
  const fs::path p = dir / "cfg.json";
  std::ofstream os(p);
  os << serialize_config(c);
  return p;
}

fs::path latest_checkpoint(const fs::path& seed_dir) {
  fs::path best;
  long steps = -1;
  for (const auto& e : fs::directory_iterator(seed_dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("checkpoint_", 0) != 0) continue;
    const long s = std::stol(name.substr(11));
    if (s > steps) {
      steps = s;
      best = e.path();
    }
  }
  return best;
}

// Trains a tiny tictactoe run once and returns its checkpoint.
const fs::path& shared_checkpoint() {
  static const fs::path ckpt = [] {
    const auto dir = test::temp_dir("cli_shared");
    const auto cfg = write_quick_config(dir);
    const auto r = run_cli({"train", cfg.string(), "--run-dir", (dir / "run").string(), "--quiet"});
    REQUIRE(r.code == 0);
    return latest_checkpoint(dir / "run" / "seed_0");
  }();
  return ckpt;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 2") {
  CHECK(run_cli({}).code == cli::kExitUsage);
  CHECK(run_cli({"fly"}).code == cli::kExitUsage);
  CHECK(run_cli({"train"}).code == cli::kExitUsage);
  CHECK(run_cli({"--help"}).code == cli::kExitOk);
  const auto dir = test::temp_dir("cli_usage");
  const auto cfg = write_quick_config(dir);
  const auto bad = run_cli({"train", cfg.string(), "--set", "serch.sims=5", "--run-dir", (dir / "r").string()});
  CHECK(bad.code == cli::kExitUsage);
  CHECK(bad.err.find("serch.sims") != std::string::npos);
  CHECK(!fs::exists(dir / "r"));
  CHECK(run_cli({"train", (dir / "missing.json").string()}).code == cli::kExitUsage);
  CHECK(run_cli({"eval", (dir / "missing_ckpt").string()}).code == cli::kExitRuntime);
}

TEST_CASE("train: seed and env flags, metrics written") {
  const auto dir = test::temp_dir("cli_train");
  const auto cfg = write_quick_config(dir, "gridmaze", 2);
  const auto r = run_cli({"train", cfg.string(), "--seed", "0", "--env", "kinrow3", "--set",
                          "search.num_simulations=5", "--run-dir", (dir / "run").string(), "--quiet"});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(fs::exists(dir / "run" / "seed_0" / "metrics.csv"));
  CHECK(!fs::exists(dir / "run" / "seed_1"));
  const RunConfig saved = load_config_file((dir / "run" / "config.json").string());
  CHECK(saved.env.id == "kinrow3");
  CHECK(saved.search.num_simulations == 5);
  CHECK(saved.seeds == std::vector<std::uint64_t>{0});
  CHECK(r.out.find("seed 0 env_steps") != std::string::npos);
}

TEST_CASE("train: RUN_DIR environment variable") {
  const auto dir = test::temp_dir("cli_run_dir");
  const auto cfg = write_quick_config(dir);
  ::setenv("RUN_DIR", (dir / "from_env").string().c_str(), 1);
  const auto r = run_cli({"train", cfg.string(), "--quiet"});
  ::unsetenv("RUN_DIR");
  CHECK(r.code == cli::kExitOk);
  CHECK(fs::exists(dir / "from_env" / "seed_0" / "metrics.csv"));
}

TEST_CASE("train: runtime failure exits 1 and names the manifest") {
  const auto dir = test::temp_dir("cli_fail");
  const auto cfg = write_quick_config(dir);
  const auto r = run_cli({"train", cfg.string(), "--set", "optimizer.lr=1e300", "--set", "optimizer.kind=sgd_momentum",
                          "--run-dir", (dir / "run").string(), "--quiet"});
  CHECK(r.code == cli::kExitRuntime);
  CHECK(r.err.find("manifest") != std::string::npos);
}

TEST_CASE("eval: default 20 episodes, episode flag, determinism, CSV row") {
  const auto& ckpt = shared_checkpoint();
  const auto a = run_cli({"eval", ckpt.string(), "--seed", "3"});
  REQUIRE(a.code == cli::kExitOk);
  int rows = 0;
  std::istringstream is(a.out);
  std::string line;
  std::getline(is, line);
  CHECK(line == "episode,return");
  while (std::getline(is, line) && line.rfind("mean_return", 0) != 0) ++rows;
  CHECK(rows == 20);
  CHECK(a.out.find("win_rate") != std::string::npos);
  CHECK(run_cli({"eval", ckpt.string(), "--seed", "3"}).out == a.out);
  const auto dir = test::temp_dir("cli_eval");
  const auto five = run_cli({"eval", ckpt.string(), "--episodes", "5", "--csv", (dir / "e.csv").string()});
  CHECK(five.out.find("\n4,") != std::string::npos);
  CHECK(five.out.find("\n5,") == std::string::npos);
  const std::string csv = read_file(dir / "e.csv");
  CHECK(csv.rfind("checkpoint,seed,episodes,mean_return", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  // A checkpoint trained on one board size does not fit another.
  CHECK(run_cli({"eval", ckpt.string(), "--env", "connect4"}).code == cli::kExitUsage);
  CHECK(run_cli({"eval", ckpt.string(), "--episodes", "0"}).code == cli::kExitUsage);
}

TEST_CASE("play: scripted session, illegal input re-prompts, reproducible") {
  const auto& ckpt = shared_checkpoint();
  const std::string script = "9\nabc\n0\n1\n2\n3\n4\n5\n6\n7\n8\n";
  const auto a = run_cli({"play", ckpt.string(), "--seed", "1"}, script);
  REQUIRE(a.code == cli::kExitOk);
  CHECK(a.out.find("illegal move: 9") != std::string::npos);
  CHECK(a.out.find("illegal move: abc") != std::string::npos);
  CHECK(a.out.find("result: ") != std::string::npos);
  CHECK(run_cli({"play", ckpt.string(), "--seed", "1"}, script).out == a.out);
  // Agent moves are always among the listed legal cells.
  std::istringstream is(a.out);
  std::string line, legal;
  for (std::string l; std::getline(is, l);) {
    if (l.rfind("your move (legal:", 0) == 0) legal = l;
    if (l.rfind("agent plays ", 0) == 0 && !legal.empty()) {
      CHECK(l.size() == 13u);
    }
  }
  const auto second = run_cli({"play", ckpt.string(), "--human-seat", "1", "--seed", "1"}, script);
  CHECK(second.code == cli::kExitOk);
  CHECK(second.out.rfind("agent plays", second.out.find("your move")) != std::string::npos);
  const auto eof = run_cli({"play", ckpt.string()}, "");
  CHECK(eof.code == cli::kExitOk);
  CHECK(eof.out.find("end of input") != std::string::npos);
  CHECK(run_cli({"play", ckpt.string(), "--human-seat", "2"}).code == cli::kExitUsage);
}

TEST_CASE("probe: generate, reload, empty set") {
  const auto& ckpt = shared_checkpoint();
  const auto dir = test::temp_dir("cli_probe");
  const auto set = (dir / "probe.txt").string();
  const auto a = run_cli({"probe", ckpt.string(), set, "--generate", "120", "--seed", "2"});
  REQUIRE(a.code == cli::kExitOk);
  CHECK(a.out.find("count 120") != std::string::npos);
  const auto b = run_cli({"probe", ckpt.string(), set});
  CHECK(b.out == a.out);
  { std::ofstream os(dir / "empty.txt"); }
  CHECK(run_cli({"probe", ckpt.string(), (dir / "empty.txt").string()}).code != cli::kExitOk);
}

TEST_CASE("export: rows per seed and eval point, fixed columns, idempotent") {
  const auto dir = test::temp_dir("cli_export");
  const auto cfg = write_quick_config(dir, "tictactoe", 5);
  REQUIRE(run_cli({"train", cfg.string(), "--run-dir", (dir / "run").string(), "--quiet"}).code == 0);
  const auto r = run_cli({"export", (dir / "run").string()});
  REQUIRE(r.code == cli::kExitOk);
  const std::string first = read_file(dir / "run" / "export.csv");
  CHECK(run_cli({"export", (dir / "run").string()}).code == cli::kExitOk);
  CHECK(read_file(dir / "run" / "export.csv") == first);
  std::istringstream is(first);
  std::string line;
  std::getline(is, line);
  CHECK(line == "env_steps,seed,mean_return,std_return,cosine,loss_total,loss_policy,loss_value,loss_reward,"
                "loss_consistency,loss_entropy");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 5 * 3);  // evals at 0, 30, 60
  CHECK(run_cli({"export", (dir / "run").string(), "--out", "-"}).out == first);
  CHECK(run_cli({"export", (dir / "nowhere").string()}).code == cli::kExitUsage);
  fs::create_directories(dir / "empty_run");
  CHECK(run_cli({"export", (dir / "empty_run").string()}).code == cli::kExitUsage);
}

TEST_CASE("config command prints a round-trippable document") {
  const auto r = run_cli({"config", "--set", "search.num_simulations=50"});
  REQUIRE(r.code == cli::kExitOk);
  const RunConfig c = parse_config(r.out);
  CHECK(c.search.num_simulations == 50);
  CHECK(serialize_config(c) + "\n" == r.out);
}

TEST_CASE("binary exit codes") {
  const std::string bin = TREEZERO_CLI_PATH;
  CHECK(std::system((bin + " config > /dev/null").c_str()) == 0);
  const int bad = std::system((bin + " config --set serch.sims=5 > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(bad) == 2);
  const int missing = std::system((bin + " eval /nonexistent > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(missing) == 1);
}

}  // TEST_SUITE
