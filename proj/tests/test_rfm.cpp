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

#include <gtest/gtest.h>

#include <numbers>

#include "oracles/boxcox_grid.hpp"
#include "shopgraph/rfm.hpp"

namespace shopgraph {
namespace {

Timestamp ts(const char* s) { return *parse_timestamp(s); }

/// `n` invoices spread backwards a week apart from `last`, total spend split evenly.
void add_customer(std::vector<CleanedTransaction>& out, const std::string& id, const char* last, int n, double spend) {
  for (int i = 0; i < n; ++i)
    out.push_back({id, "X", id + "-" + std::to_string(i), ts(last) - std::chrono::days(7 * i), 1, spend / n, spend / n});
}

TEST(RfmAttributes, SingleCustomerIsDegenerate) {
  std::vector<CleanedTransaction> t;
  add_customer(t, "A", "2011-12-01", 3, 10.0);
  const auto a = compute_rfm_attributes(t, ts("2011-12-10"));
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].recency, 1.0);
  EXPECT_EQ(a[0].frequency, 1.0);
  EXPECT_EQ(a[0].monetary, 1.0);
}

TEST(RfmAttributes, DominatingCustomerHitsEndpoints) {
  std::vector<CleanedTransaction> t;
  add_customer(t, "A", "2011-12-09", 4, 100.0);
  add_customer(t, "B", "2011-11-01", 2, 10.0);
  const auto a = compute_rfm_attributes(t, ts("2011-12-10"));
  EXPECT_EQ(a[0].recency, 1.0);
  EXPECT_EQ(a[0].frequency, 1.0);
  EXPECT_EQ(a[0].monetary, 1.0);
  EXPECT_EQ(a[1].recency, 0.0);
  EXPECT_EQ(a[1].frequency, 0.0);
  EXPECT_EQ(a[1].monetary, 0.0);
}

TEST(RfmAttributes, FiveCustomerHandTable) {
  // raw (days since last purchase, invoices, spend):
  // A (1, 2, 100)  B (9, 5, 300)  C (20, 1, 50)  D (5, 3, 550)  E (10, 4, 200)
  std::vector<CleanedTransaction> t;
  add_customer(t, "A", "2011-12-09", 2, 100.0);
  add_customer(t, "B", "2011-12-01", 5, 300.0);
  add_customer(t, "C", "2011-11-20", 1, 50.0);
  add_customer(t, "D", "2011-12-05", 3, 550.0);
  add_customer(t, "E", "2011-11-30", 4, 200.0);
  const auto a = compute_rfm_attributes(t, ts("2011-12-10"));
  ASSERT_EQ(a.size(), 5u);
  const double expect[5][3] = {{1.0, 0.25, 0.1},
                               {11.0 / 19.0, 1.0, 0.5},
                               {0.0, 0.0, 0.0},
                               {15.0 / 19.0, 0.5, 1.0},
                               {10.0 / 19.0, 0.75, 0.3}};
  for (int i = 0; i < 5; ++i) {
    EXPECT_NEAR(a[i].recency, expect[i][0], 1e-12) << a[i].customer_id;
    EXPECT_NEAR(a[i].frequency, expect[i][1], 1e-12) << a[i].customer_id;
    EXPECT_NEAR(a[i].monetary, expect[i][2], 1e-12) << a[i].customer_id;
  }
}

TEST(RfmAttributes, Errors) {
  EXPECT_THROW(compute_rfm_attributes({}, ts("2011-12-10")), Error);
  std::vector<CleanedTransaction> t;
  add_customer(t, "A", "2011-12-11", 1, 1.0);
  EXPECT_THROW(compute_rfm_attributes(t, ts("2011-12-10")), Error);
}

TEST(WeightedScore, Examples) {
  const RfmWeights w;
  EXPECT_DOUBLE_EQ(weighted_rfm_score({"a", 1, 1, 1}, w), 1.0);
  EXPECT_EQ(weighted_rfm_score({"a", 0, 0, 0}, {0.2, 0.3, 0.5}), 0.0);
  EXPECT_NEAR(weighted_rfm_score({"a", 0.5, 0.2, 0.8}, w), 0.665, 1e-12);
}

TEST(WeightedScore, AffineAndBounded) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    double w0 = rng.uniform(), w1 = rng.uniform(), w2 = rng.uniform();
    const double s = w0 + w1 + w2;
    const RfmWeights w{w0 / s, w1 / s, w2 / s};
    RfmAttributes a{"a", rng.uniform(), rng.uniform(), rng.uniform()};
    const double g = weighted_rfm_score(a, w);
    EXPECT_GE(g, 0.0);
    EXPECT_LE(g, 1.0 + 1e-15);
    // affine in recency: g(r + d) - g(r) = w_r * d
    RfmAttributes b = a;
    b.recency = rng.uniform();
    EXPECT_NEAR(weighted_rfm_score(b, w) - g, w.recency * (b.recency - a.recency), 1e-14);
  }
}

TEST(WeightedScore, WeightValidation) {
  EXPECT_NO_THROW(RfmWeights{}.validate());
  EXPECT_THROW((RfmWeights{0.5, 0.5, 0.5}.validate()), Error);
  EXPECT_THROW((RfmWeights{-0.1, 0.4, 0.7}.validate()), Error);
}

TEST(BoxCoxTransform, ExactBranches) {
  EXPECT_NEAR(boxcox_transform(std::numbers::e, {0.0, 0.0, 0.0}), 1.0, 1e-12);
  EXPECT_NEAR(boxcox_transform(3.0, {1.0, 0.0, 0.0}), 2.0, 1e-12);
  EXPECT_NEAR(boxcox_transform(4.0, {2.0, 0.0, 0.0}), 7.5, 1e-12);
  EXPECT_NEAR(boxcox_transform(std::numbers::e, {5e-9, 0.0, 0.0}), 1.0, 1e-12);
  EXPECT_NEAR(boxcox_transform(1.0, {0.5, 1.0, 0.0}), (std::sqrt(2.0) - 1.0) / 0.5, 1e-12);
  EXPECT_THROW(boxcox_transform(0.0, {0.5, 0.0, 0.0}), Error);
  EXPECT_THROW(boxcox_transform(-2.0, {0.5, 1.0, 0.0}), Error);
}

TEST(BoxCoxTransform, StrictlyIncreasing) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const BoxCoxParams p{rng.uniform(-3, 3), 0.0, 0.0};
    std::vector<double> v;
    for (int i = 0; i < 40; ++i) v.push_back(rng.uniform(0.01, 50));
    std::sort(v.begin(), v.end());
    for (std::size_t i = 1; i < v.size(); ++i)
      if (v[i] > v[i - 1]) {
        EXPECT_LT(boxcox_transform(v[i - 1], p), boxcox_transform(v[i], p)) << p.lambda;
      }
  }
}

TEST(BoxCoxTransform, ContinuousAtZero) {
  for (double x = 0.1; x <= 100.0; x *= 1.3)
    EXPECT_LT(std::abs(boxcox_transform(x, {1e-6, 0.0, 0.0}) - std::log(x)), 1e-4) << x;
}

std::vector<double> lognormal(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = std::exp(rng.normal());
  return v;
}

TEST(BoxCoxMle, LognormalGivesLambdaNearZero) {
  const auto v = lognormal(10000, 2024);
  const auto p = boxcox_lambda_mle(v);
  EXPECT_NEAR(p.lambda, 0.0, 0.15);
  const auto ref = oracle::boxcox_grid_max(v, -5, 5, 1e-3);
  EXPECT_NEAR(p.lambda, ref.lambda, 1e-3);
  EXPECT_GE(static_cast<long double>(p.log_likelihood), ref.llf - 1e-6L * std::abs(ref.llf));
}

TEST(BoxCoxMle, NormalGivesLambdaNearOne) {
  Rng rng(77);
  std::vector<double> v(10000);
  for (auto& x : v) x = rng.normal(10.0, 2.0);
  const auto p = boxcox_lambda_mle(v);
  EXPECT_NEAR(p.lambda, 1.0, 0.25);
  EXPECT_NEAR(p.lambda, oracle::boxcox_grid_max(v, -5, 5, 1e-3).lambda, 1e-3);
}

TEST(BoxCoxMle, TwoDistinctValuesStayFinite) {
  std::vector<double> v;
  for (int i = 0; i < 20; ++i) v.push_back(i % 2 ? 2.0 : 5.0);
  const auto p = boxcox_lambda_mle(v);
  EXPECT_TRUE(std::isfinite(p.lambda));
  EXPECT_GE(p.lambda, -5.0);
  EXPECT_LE(p.lambda, 5.0);
}

TEST(BoxCoxMle, ShiftsNonPositiveValues) {
  const std::vector<double> v{0.0, 0.2, 0.5, 0.9, 1.0, 0.3};
  const auto p = boxcox_lambda_mle(v);
  EXPECT_DOUBLE_EQ(p.shift, kBoxCoxEpsilon);
  for (double x : v) EXPECT_TRUE(std::isfinite(boxcox_transform(x, p)));
  EXPECT_EQ(boxcox_lambda_mle(std::vector<double>{1, 2, 3}).shift, 0.0);
}

TEST(BoxCoxMle, Errors) {
  EXPECT_THROW(boxcox_lambda_mle(std::vector<double>{1.0, 2.0}), Error);
  EXPECT_THROW(boxcox_lambda_mle(std::vector<double>(10, 4.2)), Error);
  EXPECT_THROW(boxcox_lambda_mle(std::vector<double>{1, 2, 3}, {1.0, -1.0, 1e-6}), Error);
}

TEST(BoxCoxMle, SkewnessDoesNotGrow) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto v = lognormal(2000, seed);
    const auto p = boxcox_lambda_mle(v);
    std::vector<double> t;
    for (double x : v) t.push_back(boxcox_transform(x, p));
    EXPECT_LE(std::abs(skewness(t)), std::abs(skewness(v)));
  }
}

TEST(ScoreCustomers, GammaIsWeightedSumAndTransformIsShared) {
  std::vector<RfmAttributes> a;
  Rng rng(5);
  for (int i = 0; i < 30; ++i) a.push_back({std::to_string(i), rng.uniform(), rng.uniform(), rng.uniform()});
  const RfmWeights w{0.2, 0.3, 0.5};
  const auto pop = score_customers(a, w);
  ASSERT_EQ(pop.scores.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_DOUBLE_EQ(pop.scores[i].gamma, weighted_rfm_score(a[i], w));
    EXPECT_DOUBLE_EQ(pop.scores[i].gamma_prime, boxcox_transform(pop.scores[i].gamma, pop.boxcox));
  }
  EXPECT_THROW(score_customers(a, {0.5, 0.5, 0.5}), Error);
}

}  // namespace
}  // namespace shopgraph
