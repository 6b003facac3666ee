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

// Customer value: recency / frequency / monetary attributes, the weighted
// RFM score and its Box-Cox normalisation.

#ifndef SHOPGRAPH_RFM_HPP
#define SHOPGRAPH_RFM_HPP

#include <boost/math/tools/minima.hpp>
#include <map>
#include <span>

#include "shopgraph/ingest.hpp"

namespace shopgraph {

/// Min-max normalised attributes, all in [0, 1] and "higher is better".
struct RfmAttributes {
  std::string customer_id;
  double recency = 0.0;
  double frequency = 0.0;
  double monetary = 0.0;
};

struct RfmWeights {
  double recency = 0.15;
  double frequency = 0.15;
  double monetary = 0.7;

  void validate() const {
    if (recency < 0 || frequency < 0 || monetary < 0)
      throw Error("RfmWeights: weights must be non-negative");
    if (std::abs(recency + frequency + monetary - 1.0) > 1e-9)
      throw Error("RfmWeights: weights must sum to 1");
  }
};

struct BoxCoxParams {
  double lambda = 1.0;
  double shift = 0.0;  // added to every input before transforming
  double log_likelihood = 0.0;
};

struct RfmScore {
  std::string customer_id;
  double gamma = 0.0;
  double gamma_prime = 0.0;
};

struct LambdaSearch {
  double lo = -5.0;
  double hi = 5.0;
  double tol = 1e-6;
};

inline constexpr double kBoxCoxLogThreshold = 1e-8;
inline constexpr double kBoxCoxEpsilon = 1e-6;

namespace detail {

inline void min_max(std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double a = *lo, b = *hi;
  for (double& x : v) x = (b > a) ? (x - a) / (b - a) : 1.0;
}

}  // namespace detail

/// Per-customer attributes, normalised over the given population. Raw recency is
/// days between the last purchase and `as_of`; it is flipped so larger = more recent.
/// When every customer shares a raw value the attribute is 1.0 for all.
inline std::vector<RfmAttributes> compute_rfm_attributes(const std::vector<CleanedTransaction>& txns,
                                                         Timestamp as_of) {
  if (txns.empty()) throw Error("compute_rfm_attributes: no transactions");
  struct Raw {
    Timestamp last{};
    std::set<std::string> invoices;
    double spend = 0.0;
  };
  std::map<std::string, Raw> raw;
  for (const auto& t : txns) {
    if (t.invoice_date > as_of)
      throw Error("compute_rfm_attributes: transaction after as-of date (invoice " + t.invoice_id + ")");
    auto& r = raw[t.customer_id];
    if (r.invoices.empty() || t.invoice_date > r.last) r.last = t.invoice_date;
    r.invoices.insert(t.invoice_id);
    r.spend += t.spend;
  }
  std::vector<double> rec, freq, mon;
  for (const auto& [id, r] : raw) {
    // negated days since last purchase, so min-max yields 1 - normalised(days)
    rec.push_back(-static_cast<double>((as_of - r.last).count()) / 86400.0);
    freq.push_back(static_cast<double>(r.invoices.size()));
    mon.push_back(r.spend);
  }
  detail::min_max(rec);
  detail::min_max(freq);
  detail::min_max(mon);
  std::vector<RfmAttributes> out;
  out.reserve(raw.size());
  std::size_t i = 0;
  for (const auto& [id, r] : raw) {
    out.push_back({id, rec[i], freq[i], mon[i]});
    ++i;
  }
  return out;
}

inline double weighted_rfm_score(const RfmAttributes& a, const RfmWeights& w) {
  return w.recency * a.recency + w.frequency * a.frequency + w.monetary * a.monetary;
}

/// Box-Cox with the transform's own shift. |lambda| < 1e-8 takes the log branch.
inline double boxcox_transform(double value, const BoxCoxParams& p) {
  const double x = value + p.shift;
  if (!(x > 0.0)) throw Error("boxcox_transform: shifted value must be positive");
  if (std::abs(p.lambda) < kBoxCoxLogThreshold) return std::log(x);
  return (std::pow(x, p.lambda) - 1.0) / p.lambda;
}

/// Profile log-likelihood of the Box-Cox model at `lambda` for positive data
/// (normal errors, variance profiled out).
inline double boxcox_log_likelihood(std::span<const double> x, double lambda) {
  const auto n = static_cast<double>(x.size());
  double sum_log = 0.0;
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    sum_log += lx;
    y[i] = std::abs(lambda) < kBoxCoxLogThreshold ? lx : std::expm1(lambda * lx) / lambda;
  }
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= n;
  if (!std::isfinite(var) || var <= 0.0) return -std::numeric_limits<double>::infinity();
  return (lambda - 1.0) * sum_log - 0.5 * n * std::log(var);
}

/// Shift that makes every value at least kBoxCoxEpsilon.
inline double boxcox_shift(std::span<const double> values) {
  const double lo = *std::min_element(values.begin(), values.end());
  return std::max(0.0, kBoxCoxEpsilon - lo);
}

/// Maximum-likelihood lambda over `search`: a coarse scan to bracket the best
/// region, then Brent refinement inside the bracket.
inline BoxCoxParams boxcox_lambda_mle(std::span<const double> values, const LambdaSearch& search = {}) {
  if (values.size() < 3) throw Error("boxcox_lambda_mle: need at least 3 values");
  if (!(search.lo < search.hi)) throw Error("boxcox_lambda_mle: empty search interval");
  for (double v : values)
    if (!std::isfinite(v)) throw Error("boxcox_lambda_mle: non-finite value");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  if (*lo_it == *hi_it) throw Error("boxcox_lambda_mle: all values identical");

  BoxCoxParams p;
  p.shift = boxcox_shift(values);
  std::vector<double> x(values.begin(), values.end());
  for (double& v : x) v += p.shift;

  auto neg_llf = [&](double lambda) {
    const double l = boxcox_log_likelihood(x, lambda);
    return std::isfinite(l) ? -l : std::numeric_limits<double>::max();
  };
  constexpr int kScan = 200;
  const double step = (search.hi - search.lo) / kScan;
  int best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kScan; ++i) {
    const double v = neg_llf(search.lo + i * step);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  const double a = search.lo + std::max(0, best - 1) * step;
  const double b = search.lo + std::min(kScan, best + 1) * step;
  // Brent precision is 2^(1-bits), capped at half the mantissa.
  const int bits = std::clamp(static_cast<int>(std::ceil(1.0 - std::log2(search.tol))), 8, 26);
  std::uintmax_t max_iter = 500;
  auto [lambda, fmin] = boost::math::tools::brent_find_minima(neg_llf, a, b, bits, max_iter);
  if (fmin > best_val) {
    lambda = search.lo + best * step;
    fmin = best_val;
  }
  p.lambda = lambda;
  p.log_likelihood = -fmin;
  return p;
}

/// Scores every customer and fits the Box-Cox transform on the resulting scores.
struct ScoredPopulation {
  std::vector<RfmScore> scores;
  BoxCoxParams boxcox;
};

inline ScoredPopulation score_customers(const std::vector<RfmAttributes>& attrs, const RfmWeights& w,
                                        const LambdaSearch& search = {}) {
  w.validate();
  ScoredPopulation out;
  std::vector<double> gammas;
  gammas.reserve(attrs.size());
  for (const auto& a : attrs) gammas.push_back(weighted_rfm_score(a, w));
  out.boxcox = boxcox_lambda_mle(gammas, search);
  for (std::size_t i = 0; i < attrs.size(); ++i)
    out.scores.push_back({attrs[i].customer_id, gammas[i], boxcox_transform(gammas[i], out.boxcox)});
  return out;
}

/// Sample skewness (population moments).
inline double skewness(std::span<const double> v) {
  const auto n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (double x : v) {
    const double d = x - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  return m2 > 0 ? m3 / std::pow(m2, 1.5) : 0.0;
}

}  // namespace shopgraph

#endif  // SHOPGRAPH_RFM_HPP
