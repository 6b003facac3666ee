// Copyright 2026 The shopgraph Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reference Box-Cox likelihood maximiser: exhaustive grid, long double,
// straight power form.

#ifndef SHOPGRAPH_TESTS_ORACLES_BOXCOX_GRID_HPP
#define SHOPGRAPH_TESTS_ORACLES_BOXCOX_GRID_HPP

#include <cmath>
#include <vector>

namespace shopgraph::oracle {

inline long double boxcox_llf(const std::vector<double>& x, long double lambda) {
  const long double n = static_cast<long double>(x.size());
  std::vector<long double> y;
  long double sum_log = 0;
  for (double v : x) {
    const long double lv = std::log(static_cast<long double>(v));
    sum_log += lv;
    y.push_back(lambda == 0 ? lv : (std::pow(static_cast<long double>(v), lambda) - 1) / lambda);
  }
  long double mean = 0;
  for (auto v : y) mean += v;
  mean /= n;
  long double ss = 0;
  for (auto v : y) ss += (v - mean) * (v - mean);
  return (lambda - 1) * sum_log - n / 2 * std::log(ss / n);
}

struct GridMax {
  double lambda;
  long double llf;
};

inline GridMax boxcox_grid_max(const std::vector<double>& x, double lo, double hi, double step) {
  GridMax best{lo, -INFINITY};
  const auto steps = static_cast<long>(std::llround((hi - lo) / step));
  for (long i = 0; i <= steps; ++i) {
    const double l = lo + static_cast<double>(i) * step;
    const long double v = boxcox_llf(x, std::abs(l) < 1e-12 ? 0.0L : static_cast<long double>(l));
    if (v > best.llf) best = {l, v};
  }
  return best;
}

}  // namespace shopgraph::oracle

#endif  // SHOPGRAPH_TESTS_ORACLES_BOXCOX_GRID_HPP
