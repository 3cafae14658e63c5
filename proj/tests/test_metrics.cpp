/*
 * Copyright 2026 The tgnrec Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "tgnrec/metrics.hpp"

namespace tgnrec {
namespace {

TEST(Mrr, Examples) {
  std::vector<std::size_t> ones{1, 1, 1, 1};
  EXPECT_EQ(mrr(ones), 1.0);
  std::vector<std::size_t> r{1, 2, 4};
  EXPECT_NEAR(mrr(r), 0.583333333333, 1e-9);
  EXPECT_DOUBLE_EQ(mrr(r), (1.0 + 0.5 + 0.25) / 3.0);
  std::vector<std::size_t> single{7};
  EXPECT_DOUBLE_EQ(mrr(single), 1.0 / 7.0);
  EXPECT_THROW(mrr(std::vector<std::size_t>{}), std::invalid_argument);
  EXPECT_THROW(mrr(std::vector<std::size_t>{0}), std::invalid_argument);
}

TEST(PrecisionRecall, Examples) {
  EXPECT_EQ(precision_at_k(3, 10), 0.3);
  EXPECT_EQ(*recall_at_k(3, 12), 0.25);
  EXPECT_EQ(precision_at_k(20, 20), 1.0);
  EXPECT_FALSE(recall_at_k(0, 0).has_value());
  EXPECT_THROW(precision_at_k(11, 10), std::invalid_argument);
  EXPECT_THROW(recall_at_k(3, 2), std::invalid_argument);
}

TEST(AveragePrecision, Examples) {
  std::vector<int> labels{1, 0, 1};
  EXPECT_NEAR(average_precision(labels), 0.833333333333, 1e-9);
  std::vector<double> pos{0.9, 0.8}, neg{0.1, 0.2, 0.3};
  EXPECT_EQ(average_precision(pos, neg), 1.0);
  EXPECT_THROW(average_precision(std::vector<int>{1, 1}), std::invalid_argument);
  EXPECT_THROW(average_precision(std::vector<int>{0, 0}), std::invalid_argument);
}

TEST(Auc, Examples) {
  std::vector<double> pos{0.9, 0.8}, neg{0.1, 0.2};
  EXPECT_EQ(auc(pos, neg), 1.0);
  std::vector<double> same{0.4, 0.4, 0.4};
  EXPECT_EQ(auc(same, same), 0.5);
  EXPECT_THROW(auc(std::vector<double>{}, neg), std::invalid_argument);
}

// Brute-force references.

double brute_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0;
  for (double p : pos)
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return wins / static_cast<double>(pos.size() * neg.size());
}

double brute_ap(const std::vector<int>& labels) {
  double total = 0;
  int positives = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (!labels[k]) continue;
    ++positives;
    int hits = 0;
    for (std::size_t i = 0; i <= k; ++i) hits += labels[i];
    total += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return total / positives;
}

TEST(Metrics, MatchBruteForceOnRandomInputs) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> size(1, 10), grid(0, 6), bit(0, 1), rank(1, 20);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> pos(size(rng)), neg(size(rng));
    for (auto& x : pos) x = 0.25 * grid(rng);  // coarse grid forces ties
    for (auto& x : neg) x = 0.25 * grid(rng);
    EXPECT_NEAR(auc(pos, neg), brute_auc(pos, neg), 1e-12);

    std::vector<int> labels(size(rng) + 1);
    for (auto& l : labels) l = bit(rng);
    labels[0] = 1;
    labels[1 + trial % (labels.size() - 1)] = 0;
    EXPECT_NEAR(average_precision(labels), brute_ap(labels), 1e-12);

    std::vector<std::size_t> ranks(size(rng));
    double total = 0;
    for (auto& r : ranks) {
      r = static_cast<std::size_t>(rank(rng));
      total += 1.0 / static_cast<double>(r);
    }
    EXPECT_NEAR(mrr(ranks), total / static_cast<double>(ranks.size()), 1e-12);

    const std::size_t k = static_cast<std::size_t>(size(rng) + 5);
    const std::size_t hits = static_cast<std::size_t>(grid(rng));
    EXPECT_NEAR(precision_at_k(hits, k), static_cast<double>(hits) / static_cast<double>(k), 1e-12);
    const std::size_t relevant = hits + static_cast<std::size_t>(size(rng));
    EXPECT_NEAR(*recall_at_k(hits, relevant), static_cast<double>(hits) / static_cast<double>(relevant), 1e-12);
  }
}

TEST(Metrics, ScoredApRanksTiedNegativesFirst) {
  std::vector<double> pos{0.5}, neg{0.5, 0.1};
  // order: neg(0.5), pos(0.5), neg(0.1)
  EXPECT_DOUBLE_EQ(average_precision(pos, neg), 0.5);
}

TEST(Report, FormatListsEveryMetric) {
  MetricsReport r;
  r.mrr = 0.5;
  r.recall_at = {{10, 0.25}, {20, 0.5}};
  r.precision_at = {{10, 0.025}, {20, 0.025}};
  r.ap = 0.7;
  r.auc = 0.8;
  r.queries = 4;
  r.negatives = 49;
  const auto text = format_report(r);
  for (const char* key : {"protocol=single-positive", "negatives=49", "queries=4", "mrr=0.5",
                          "recall@10=0.25", "recall@20=0.5", "precision@10=0.025", "ap=0.7",
                          "auc=0.8"})
    EXPECT_NE(text.find(key), std::string::npos) << key;
}

}  // namespace
}  // namespace tgnrec
