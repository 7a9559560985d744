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

#include "treezero/common.hpp"

#include <algorithm>

namespace tz {

ActionSpace ActionSpace::make_discrete(int n) {
  if (n < 2) throw ConfigError("discrete action space needs n >= 2");
  return ActionSpace{Kind::discrete, n, 0, 0};
}

ActionSpace ActionSpace::make_continuous(int dim, int bins) {
  if (dim < 1 || bins < 2) {
    throw ConfigError("continuous action space needs dim >= 1, bins >= 2");
  }
  return ActionSpace{Kind::continuous, 0, dim, bins};
}

int ActionSpace::joint_size() const {
  if (kind == Kind::discrete) return n;
  int size = 1;
  for (int d = 0; d < dim; ++d) size *= bins;
  return size;
}

int ActionSpace::encoding_dim() const {
  return kind == Kind::discrete ? n : dim;
}

std::vector<int> ActionSpace::decode(int joint) const {
  if (kind == Kind::discrete) return {joint};
  if (joint < 0 || joint >= joint_size()) {
    throw Error("joint action index out of range: " + std::to_string(joint));
  }
  std::vector<int> out(dim);
  for (int d = 0; d < dim; ++d) {
    out[d] = joint % bins;
    joint /= bins;
  }
  return out;
}

int ActionSpace::encode(const std::vector<int>& bin_indices) const {
  if (kind == Kind::discrete) return bin_indices.at(0);
  int joint = 0;
  for (int d = dim - 1; d >= 0; --d) joint = joint * bins + bin_indices.at(d);
  return joint;
}

Vec ActionSpace::to_raw(int joint) const {
  auto idx = decode(joint);
  Vec raw(dim);
  for (int d = 0; d < dim; ++d) {
    raw[d] = -1.0 + 2.0 * idx[d] / static_cast<double>(bins - 1);
  }
  return raw;
}

Vec ActionSpace::encode_action(const Action& a) const {
  if (kind == Kind::discrete) {
    if (!a.is_discrete() || a.index < 0 || a.index >= n) {
      throw Error("cannot encode action for discrete(" + std::to_string(n) +
                  ") space");
    }
    Vec v(n, 0.0);
    v[a.index] = 1.0;
    return v;
  }
  if (a.is_discrete()) {
    if (a.index < 0) throw Error("unset action");
    return to_raw(a.index);
  }
  if (static_cast<int>(a.raw.size()) != dim) {
    throw Error("continuous action has wrong dimension");
  }
  Vec v = a.raw;
  for (double& x : v) x = std::clamp(x, -1.0, 1.0);
  return v;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace tz
