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

#include "treezero/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace tz {

using nlohmann::json;

nlohmann::json config_to_json(const RunConfig& c) {
  json j;
  j["schema"] = kConfigSchema;
  j["env"] = {{"id", c.env.id}, {"params", json::object()}};
  for (const auto& [k, v] : c.env.params) j["env"]["params"][k] = v;
  j["algorithm"] = to_string(c.algorithm);
  j["model"] = {{"latent_dim", c.model.latent_dim},
                {"hidden_dim", c.model.hidden_dim},
                {"embed_dim", c.model.embed_dim},
                {"policy", to_string(c.model.policy)},
                {"value_head", to_string(c.model.value_head)}};
  j["search"] = {{"num_simulations", c.search.num_simulations},
                 {"c1", c.search.c1},
                 {"c2", c.search.c2},
                 {"dirichlet_alpha", c.search.dirichlet_alpha},
                 {"noise_weight", c.search.noise_weight},
                 {"discount", c.search.discount},
                 {"gumbel",
                  {{"m_top", c.search.gumbel_m_top},
                   {"c_visit", c.search.gumbel_c_visit},
                   {"c_scale", c.search.gumbel_c_scale}}},
                 {"sampled", {{"K", c.search.sampled_k}}}};
  j["buffer"] = {{"capacity", c.buffer.capacity},
                 {"per_alpha", c.buffer.per_alpha},
                 {"per_beta", c.buffer.per_beta},
                 {"n_step", c.buffer.n_step},
                 {"unroll_steps", c.buffer.unroll_steps},
                 {"reanalyze_ratio", c.buffer.reanalyze_ratio},
                 {"replay_ratio", c.buffer.replay_ratio}};
  j["loss"] = {{"policy", c.loss.policy},
               {"value", c.loss.value},
               {"reward", c.loss.reward},
               {"consistency", c.loss.consistency},
               {"entropy", c.loss.entropy}};
  j["optimizer"] = {{"kind", nn::to_string(c.optimizer.kind)},
                    {"lr", c.optimizer.lr},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps},
                    {"momentum", c.optimizer.momentum},
                    {"weight_decay", c.optimizer.weight_decay}};
  j["explore"] = {{"strategy", c.explore.strategy},
                  {"fixed_mode", c.explore.fixed_mode},
                  {"fixed_temperature", c.explore.fixed_temperature},
                  {"eps", c.explore.eps},
                  {"entropy_weight", c.explore.entropy_weight},
                  {"intrinsic", c.explore.intrinsic},
                  {"double_simulations", c.explore.double_simulations},
                  {"temperature_threshold", c.explore.temperature_threshold},
                  {"rnd",
                   {{"hidden_dim", c.explore.rnd.hidden_dim},
                    {"output_dim", c.explore.rnd.output_dim},
                    {"lr", c.explore.rnd.lr},
                    {"optimizer", nn::to_string(c.explore.rnd.optimizer)},
                    {"beta", c.explore.rnd.beta}}}};
  j["trainer"] = {{"batch_size", c.batch_size},
                  {"grad_clip", c.grad_clip},
                  {"min_transitions", c.min_transitions}};
  j["total_env_steps"] = c.total_env_steps;
  j["eval"] = {{"episodes", c.eval.episodes},
               {"every", c.eval.every},
               {"opponent", c.eval.opponent},
               {"num_simulations", c.eval.num_simulations}};
  j["seeds"] = c.seeds;
  j["probe_size"] = c.probe_size;
  j["checkpoints"] = c.checkpoints;
  j["keep_checkpoints"] = c.keep_checkpoints;
  return j;
}

namespace {

// Reads members of one JSON object, remembering which keys were consumed so
// leftovers can be reported.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("bad value for " + full(key));
    }
  }

  Reader child(const char* key) {
    seen_.insert(key);
    static const json kEmpty = json::object();
    return Reader(j_.contains(key) ? j_.at(key) : kEmpty, full(key));
  }

  bool has(const char* key) const { return j_.contains(key); }
  std::string full(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key: " + full(it.key()));
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config " : path_ + " "; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class E, class F>
void get_enum(Reader& r, const char* key, E& out, F parse, const char* (*print)(E)) {
  std::string s = print(out);
  r.get(key, s);
  try {
    out = parse(s);
  } catch (const Error& e) {
    throw ConfigError("bad value for " + r.full(key) + ": " + e.what());
  }
}

}  // namespace

RunConfig config_from_json(const json& j) {
  RunConfig c;
  Reader root(j, "");
  int schema = kConfigSchema;
  root.get("schema", schema);
  if (schema != kConfigSchema) throw ConfigError("unsupported config schema " + std::to_string(schema));

  {
    Reader r = root.child("env");
    r.get("id", c.env.id);
    r.get("params", c.env.params);
    r.finish();
  }
  {
    std::string algo = to_string(c.algorithm);
    root.get("algorithm", algo);
    try {
      c.algorithm = algorithm_from_string(algo);
    } catch (const Error& e) {
      throw ConfigError(std::string("bad value for algorithm: ") + e.what());
    }
  }
  {
    Reader r = root.child("model");
    r.get("latent_dim", c.model.latent_dim);
    r.get("hidden_dim", c.model.hidden_dim);
    r.get("embed_dim", c.model.embed_dim);
    get_enum(r, "policy", c.model.policy, policy_kind_from_string,
             static_cast<const char* (*)(PolicyKind)>(to_string));
    get_enum(r, "value_head", c.model.value_head, value_head_from_string,
             static_cast<const char* (*)(ValueHeadKind)>(to_string));
    r.finish();
  }
  {
    Reader r = root.child("search");
    r.get("num_simulations", c.search.num_simulations);
    r.get("c1", c.search.c1);
    r.get("c2", c.search.c2);
    r.get("dirichlet_alpha", c.search.dirichlet_alpha);
    r.get("noise_weight", c.search.noise_weight);
    r.get("discount", c.search.discount);
    Reader g = r.child("gumbel");
    g.get("m_top", c.search.gumbel_m_top);
    g.get("c_visit", c.search.gumbel_c_visit);
    g.get("c_scale", c.search.gumbel_c_scale);
    g.finish();
    Reader s = r.child("sampled");
    s.get("K", c.search.sampled_k);
    s.finish();
    r.finish();
  }
  {
    Reader r = root.child("buffer");
    r.get("capacity", c.buffer.capacity);
    r.get("per_alpha", c.buffer.per_alpha);
    r.get("per_beta", c.buffer.per_beta);
    r.get("n_step", c.buffer.n_step);
    r.get("unroll_steps", c.buffer.unroll_steps);
    r.get("reanalyze_ratio", c.buffer.reanalyze_ratio);
    r.get("replay_ratio", c.buffer.replay_ratio);
    r.finish();
  }
  {
    Reader r = root.child("loss");
    r.get("policy", c.loss.policy);
    r.get("value", c.loss.value);
    r.get("reward", c.loss.reward);
    r.get("consistency", c.loss.consistency);
    r.get("entropy", c.loss.entropy);
    r.finish();
  }
  {
    Reader r = root.child("optimizer");
    get_enum(r, "kind", c.optimizer.kind, nn::optimizer_from_string,
             static_cast<const char* (*)(nn::OptimizerKind)>(nn::to_string));
    r.get("lr", c.optimizer.lr);
    r.get("beta1", c.optimizer.beta1);
    r.get("beta2", c.optimizer.beta2);
    r.get("eps", c.optimizer.eps);
    r.get("momentum", c.optimizer.momentum);
    r.get("weight_decay", c.optimizer.weight_decay);
    r.finish();
  }
  {
    Reader r = root.child("explore");
    r.get("strategy", c.explore.strategy);
    r.get("fixed_mode", c.explore.fixed_mode);
    r.get("fixed_temperature", c.explore.fixed_temperature);
    r.get("eps", c.explore.eps);
    r.get("entropy_weight", c.explore.entropy_weight);
    r.get("intrinsic", c.explore.intrinsic);
    r.get("double_simulations", c.explore.double_simulations);
    r.get("temperature_threshold", c.explore.temperature_threshold);
    Reader d = r.child("rnd");
    d.get("hidden_dim", c.explore.rnd.hidden_dim);
    d.get("output_dim", c.explore.rnd.output_dim);
    d.get("lr", c.explore.rnd.lr);
    get_enum(d, "optimizer", c.explore.rnd.optimizer, nn::optimizer_from_string,
             static_cast<const char* (*)(nn::OptimizerKind)>(nn::to_string));
    d.get("beta", c.explore.rnd.beta);
    d.finish();
    r.finish();
  }
  {
    Reader r = root.child("trainer");
    r.get("batch_size", c.batch_size);
    r.get("grad_clip", c.grad_clip);
    r.get("min_transitions", c.min_transitions);
    r.finish();
  }
  root.get("total_env_steps", c.total_env_steps);
  {
    Reader r = root.child("eval");
    r.get("episodes", c.eval.episodes);
    r.get("every", c.eval.every);
    r.get("opponent", c.eval.opponent);
    r.get("num_simulations", c.eval.num_simulations);
    r.finish();
  }
  root.get("seeds", c.seeds);
  root.get("probe_size", c.probe_size);
  root.get("checkpoints", c.checkpoints);
  root.get("keep_checkpoints", c.keep_checkpoints);
  root.finish();
  return c;
}

std::string serialize_config(const RunConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

RunConfig apply_override(const RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key=value: " + assignment);
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json j = config_to_json(cfg);
  json* node = &j;
  std::size_t start = 0;
  std::string walked;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    walked = walked.empty() ? part : walked + "." + part;
    if (!node->is_object()) throw ConfigError("unknown key: " + key);
    // env.params is an open map; every other level must already exist.
    const bool open_map = walked.rfind("env.params.", 0) == 0;
    if (!node->contains(part) && !open_map) throw ConfigError("unknown key: " + key);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
  return config_from_json(j);
}

}  // namespace tz
