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

#include <cmath>
#include <set>
#include <tuple>

#include "tgnrec/config.hpp"
#include "tgnrec/data_io.hpp"
#include "tgnrec/train.hpp"

namespace tgnrec {
namespace {

TrainConfig quick_config() {
  TrainConfig c;
  c.batch_size = 100;
  c.epochs = 2;
  c.lr = 1e-2;
  c.d_mem = c.d_time = c.d_out = c.d_dec = 8;
  c.neighbors = 5;
  c.eval_negatives = 9;
  c.k_list = {1, 5};
  return c;
}

const CitationDataset& small_data() {
  static const CitationDataset data = [] {
    SyntheticConfig s;
    s.nodes = 200;
    s.mean_out_degree = 5;
    s.feature_dim = 6;
    s.seed = 3;
    return generate_synthetic(s);
  }();
  return data;
}

TEST(Config, CheckRejectsBadValues) {
  const std::vector<std::function<void(TrainConfig&)>> breakers{
      [](TrainConfig& c) { c.batch_size = 0; },  [](TrainConfig& c) { c.d_mem = 0; },
      [](TrainConfig& c) { c.heads = 0; },       [](TrainConfig& c) { c.d_mem = 1; },
      [](TrainConfig& c) { c.lr = 0; },          [](TrainConfig& c) { c.lr = -1; },
      [](TrainConfig& c) { c.k_list = {}; },     [](TrainConfig& c) { c.k_list = {5, 5}; },
      [](TrainConfig& c) { c.k_list = {0}; },    [](TrainConfig& c) { c.negatives = 0; },
      [](TrainConfig& c) { c.val_fraction = 0.2; },
      [](TrainConfig& c) { c.train_fraction = 0; c.val_fraction = 0.85; },
  };
  for (const auto& f : breakers) {
    TrainConfig c;
    f(c);
    EXPECT_THROW(c.check(), ConfigError);
  }
  EXPECT_NO_THROW(TrainConfig{}.check());
}

TEST(Config, TextRoundTrip) {
  TrainConfig c = quick_config();
  c.message = MessageVariant::kIdentity;
  c.aggregator = Aggregator::kMean;
  c.memory_init = MemoryInit::kZeros;
  c.protocol = EvalProtocol::kAllReferences;
  c.lr = 0.1 + 0.2;
  c.train_fraction = 0.6;
  c.val_fraction = 0.3;
  c.test_fraction = 0.1;
  c.validate = false;
  c.seed = 123456789012345ull;
  EXPECT_EQ(parse_config(config_to_text(c)), c);
  EXPECT_EQ(parse_config(config_to_text(TrainConfig{})), TrainConfig{});
}

TEST(Config, ParseErrors) {
  EXPECT_THROW(parse_config("bogus = 1"), ConfigError);
  EXPECT_THROW(parse_config("epochs = ten"), ConfigError);
  EXPECT_THROW(parse_config("epochs"), ConfigError);
  EXPECT_THROW(parse_config("message = sometimes"), ConfigError);
  EXPECT_THROW(parse_config("batch_size = 0"), ConfigError);
  auto c = parse_config("# comment\n  epochs = 3 \n\nk_list = 1, 2,3\nprotocol = all\n");
  EXPECT_EQ(c.epochs, 3u);
  EXPECT_EQ(c.k_list, (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_EQ(c.protocol, EvalProtocol::kAllReferences);
}

TEST(Trainer, ZeroEpochsIsANoOp) {
  auto cfg = quick_config();
  cfg.epochs = 0;
  Trainer<float> t(small_data().graph, cfg);
  const auto before = t.model().params().tensors();
  std::vector<std::vector<float>> snap;
  for (const auto& p : before) snap.emplace_back(p.data().begin(), p.data().end());
  EXPECT_TRUE(t.run());
  EXPECT_TRUE(t.history().empty());
  const auto after = t.model().params().tensors();
  for (std::size_t i = 0; i < after.size(); ++i)
    EXPECT_EQ(std::vector<float>(after[i].data().begin(), after[i].data().end()), snap[i]);
}

TEST(Trainer, Deterministic) {
  Trainer<float> a(small_data().graph, quick_config()), b(small_data().graph, quick_config());
  a.run();
  b.run();
  EXPECT_EQ(a.history(), b.history());
  EXPECT_EQ(a.evaluate_range(a.split().test), b.evaluate_range(b.split().test));
}

TEST(Trainer, ValidationDoesNotPerturbTraining) {
  auto cfg = quick_config();
  cfg.epochs = 3;
  Trainer<float> with(small_data().graph, cfg);
  cfg.validate = false;
  Trainer<float> without(small_data().graph, cfg);
  with.run();
  without.run();
  ASSERT_EQ(with.history().size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(with.history()[e].loss, without.history()[e].loss);
    EXPECT_GT(with.history()[e].val_mrr, 0.0);
    EXPECT_EQ(without.history()[e].val_mrr, 0.0);
  }
}

TEST(Trainer, LossDecreases) {
  auto cfg = quick_config();
  cfg.epochs = 10;
  cfg.validate = false;
  Trainer<float> t(small_data().graph, cfg);
  t.run();
  const auto& h = t.history();
  ASSERT_EQ(h.size(), 10u);
  for (const auto& r : h) EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_LT(smoothed_loss(h, 10), smoothed_loss(h, 3));
  EXPECT_LT(h.back().loss, h.front().loss);
}

TEST(Trainer, SmoothedLossIsTrailingMean) {
  std::vector<EpochRecord> h{{1, 4.0}, {2, 2.0}, {3, 3.0}, {4, 1.0}};
  EXPECT_DOUBLE_EQ(smoothed_loss(h, 1), 4.0);
  EXPECT_DOUBLE_EQ(smoothed_loss(h, 2), 3.0);
  EXPECT_DOUBLE_EQ(smoothed_loss(h, 4), 2.0);
  EXPECT_THROW(smoothed_loss(h, 0), std::out_of_range);
  EXPECT_THROW(smoothed_loss(h, 5), std::out_of_range);
}

/// Gives 1 to true citations and 0 to everything else.
class OracleScorer {
 public:
  explicit OracleScorer(const TemporalGraph& g) {
    for (const auto& e : g.events()) cites_.insert({e.src, e.t, e.dst});
  }
  void seek(std::size_t) {}
  void absorb(EventRange) {}
  std::vector<std::vector<double>> score(std::span<const EmbeddingQuery> q,
                                         const std::vector<std::vector<NodeId>>& cands) {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < q.size(); ++i) {
      auto& row = out.emplace_back();
      for (NodeId c : cands[i]) row.push_back(cites_.count({q[i].node, q[i].t, c}) ? 1.0 : 0.0);
    }
    return out;
  }

 private:
  std::set<std::tuple<NodeId, double, NodeId>> cites_;
};

TEST(Evaluate, PerfectScorer) {
  // one reference per (source, time), so no other true citation can be drawn as a negative
  TemporalGraph chain(60);
  for (NodeId i = 1; i < 60; ++i) chain.add_event(i, (i * 7919) % i, static_cast<double>(i));
  chain.freeze();
  const TemporalGraph* graphs[] = {&chain, &small_data().graph};
  for (const TemporalGraph* g : graphs) {
    const auto split = g->split_chronological(0.7, 0.15, 0.15);
    for (auto protocol : {EvalProtocol::kSinglePositive, EvalProtocol::kAllReferences}) {
      if (g != &chain && protocol == EvalProtocol::kSinglePositive) continue;
      EvalConfig cfg{9, {1, 5}, protocol, 1, 50};
      OracleScorer s(*g);
      const auto r = evaluate(s, *g, split.test, cfg);
      EXPECT_DOUBLE_EQ(r.mrr, 1.0);
      EXPECT_DOUBLE_EQ(r.ap, 1.0);
      EXPECT_DOUBLE_EQ(r.auc, 1.0);
      EXPECT_DOUBLE_EQ(r.precision_at.at(1), 1.0);
      if (g == &chain) {
        EXPECT_EQ(r.queries, split.test.size());
        EXPECT_DOUBLE_EQ(r.recall_at.at(1), 1.0);
        EXPECT_NEAR(r.precision_at.at(5), 0.2, 1e-12);
      } else {
        EXPECT_LT(r.queries, split.test.size());
        EXPECT_GT(r.recall_at.at(5), r.recall_at.at(1) - 1e-12);
      }
    }
  }
}

TEST(Evaluate, RandomScorerMatchesChance) {
  const auto& g = small_data().graph;
  const EventRange all{0, g.event_count()};
  for (std::size_t n : {1u, 9u}) {
    RandomScorer s(11);
    const auto r = evaluate(s, g, all, EvalConfig{n, {1}, EvalProtocol::kSinglePositive, 5, 200});
    // reciprocal rank of a uniform position among n + 1
    double mean = 0, sq = 0;
    for (std::size_t i = 1; i <= n + 1; ++i) {
      mean += 1.0 / i / (n + 1);
      sq += 1.0 / (i * i) / (n + 1);
    }
    const double sigma = std::sqrt((sq - mean * mean) / r.queries);
    EXPECT_NEAR(r.mrr, mean, 3 * sigma) << "n=" << n;
    EXPECT_NEAR(r.auc, 0.5, 0.03);
  }
}

TEST(Evaluate, Errors) {
  const auto& g = small_data().graph;
  RandomScorer s(1);
  EXPECT_THROW(evaluate(s, g, EventRange{5, 5}, EvalConfig{}), std::invalid_argument);
  EvalConfig too_many;
  too_many.negatives = g.node_count();
  EXPECT_THROW(evaluate(s, g, EventRange{0, 10}, too_many), std::invalid_argument);
}

TEST(Evaluate, NegativesAreDistinctAndExcludePositives) {
  Rng rng(4);
  std::vector<NodeId> ex{1, 3, 5};
  for (int rep = 0; rep < 200; ++rep) {
    auto n = sample_distinct_negatives(ex, 6, 10, rng);
    std::set<NodeId> s(n.begin(), n.end());
    EXPECT_EQ(s.size(), 6u);
    for (NodeId x : ex) EXPECT_FALSE(s.count(x));
  }
  EXPECT_THROW(sample_distinct_negatives(ex, 8, 10, rng), std::invalid_argument);
}

TEST(Ablation, TableHasOneRowPerCell) {
  auto cfg = quick_config();
  cfg.epochs = 1;
  cfg.validate = false;
  const auto grid = default_grid();
  ASSERT_EQ(grid.size(), 8u);
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::size_t j = i + 1; j < grid.size(); ++j) EXPECT_FALSE(grid[i] == grid[j]);
  auto rows = run_ablation<float>(small_data().graph, cfg, grid);
  const auto again = run_cell<float>(small_data().graph, cfg, grid[3]);
  EXPECT_EQ(again.test, rows[3].test);
  const auto table = format_ablation_table(rows, cfg.k_list);
  std::istringstream in(table);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "encoder,initialization,message,aggregator,MRR,Recall@1,Recall@5,"
                  "Precision@1,Precision@5,protocol");
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 9);
    EXPECT_EQ(line.rfind("TGN-TRec,", 0), 0u);
  }
  EXPECT_EQ(n, 8u);
}

}  // namespace
}  // namespace tgnrec
