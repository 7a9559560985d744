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

#ifndef TREEZERO_COMMON_HPP_
#define TREEZERO_COMMON_HPP_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tz {

using Vec = std::vector<double>;
using Rng = std::mt19937_64;

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or usage; the CLI maps it to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An action is either a discrete index (plain or factored joint index) or a
// raw continuous vector. Exactly one of the two is meaningful.
struct Action {
  int index = -1;
  Vec raw;

  static Action discrete(int i) { return Action{i, {}}; }
  static Action continuous(Vec v) { return Action{-1, std::move(v)}; }
  bool is_discrete() const { return raw.empty(); }
  bool operator==(const Action&) const = default;
};

// Discrete(n) or continuous(dim) discretized into `bins` per dimension.
struct ActionSpace {
  enum class Kind { discrete, continuous };

  Kind kind = Kind::discrete;
  int n = 0;     // discrete only
  int dim = 0;   // continuous only
  int bins = 0;  // continuous only; bins per dimension

  static ActionSpace make_discrete(int n);
  static ActionSpace make_continuous(int dim, int bins);

  // Number of joint discrete actions (n, or bins^dim).
  int joint_size() const;
  // Length of the action encoding fed to the dynamics network.
  int encoding_dim() const;
  // Per-dimension bin indices of a joint index (mixed radix, dim 0 fastest).
  std::vector<int> decode(int joint) const;
  int encode(const std::vector<int>& bin_indices) const;
  // Bin centers in [-1, 1] for a joint index.
  Vec to_raw(int joint) const;
  // Dynamics-network encoding: one-hot for discrete, raw components otherwise.
  Vec encode_action(const Action& a) const;
};

// Deterministic 64-bit seed mixing (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace tz

#endif  // TREEZERO_COMMON_HPP_
