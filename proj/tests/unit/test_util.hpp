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

// Shared helpers for the unit tests.

#ifndef TREEZERO_TESTS_TEST_UTIL_HPP_
#define TREEZERO_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "treezero/common.hpp"

namespace tz::test {

// Upper-tail probability of the chi-square distribution (regularized upper
// incomplete gamma Q(k/2, x/2)), series / continued fraction.
inline double chi_square_p(double x, int dof) {
  const double a = dof / 2.0;
  const double z = x / 2.0;
  if (z <= 0.0) return 1.0;
  const double lg = std::lgamma(a);
  if (z < a + 1.0) {
    double sum = 1.0 / a, term = sum;
    for (int n = 1; n < 1000; ++n) {
      term *= z / (a + n);
      sum += term;
      if (term < sum * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-z + a * std::log(z) - lg);
  }
  double b = z + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::fabs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-z + a * std::log(z) - lg) * h;
}

// Pearson statistic of observed counts against expected probabilities.
inline double chi_square_stat(const std::vector<long>& counts, const std::vector<double>& probs) {
  long n = 0;
  for (long c : counts) n += c;
  double stat = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = probs[i] * n;
    stat += (counts[i] - e) * (counts[i] - e) / e;
  }
  return stat;
}

inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max(1e-8, std::max(std::fabs(a), std::fabs(b)));
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("treezero_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace tz::test

#endif  // TREEZERO_TESTS_TEST_UTIL_HPP_
