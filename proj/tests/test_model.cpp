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

#include "tgnrec/grad_check.hpp"
#include "tgnrec/model.hpp"

namespace tgnrec {
namespace {

using TD = Tensor<double>;

TemporalGraph make_graph(std::size_t nodes, std::size_t events, std::uint64_t seed,
                         std::size_t feature_dim = 3) {
  Rng rng(seed);
  std::uniform_int_distribution<NodeId> node(0, static_cast<NodeId>(nodes - 1));
  std::uniform_int_distribution<int> gap(0, 2);
  std::vector<TemporalGraph::EventInput> in;
  double t = 0;
  while (in.size() < events) {
    NodeId a = node(rng), b = node(rng);
    if (a == b) continue;
    t += gap(rng);
    in.push_back({a, b, t, {}});
  }
  TemporalGraph g(nodes);
  g.bulk_load(std::move(in));
  std::normal_distribution<double> gauss;
  FeatureMatrix f{nodes, feature_dim, std::vector<double>(nodes * feature_dim)};
  for (auto& x : f.values) x = gauss(rng);
  g.set_node_features(std::move(f));
  g.freeze();
  return g;
}

ModelConfig small_config(MessageVariant msg, Aggregator agg, MemoryInit init) {
  ModelConfig c;
  c.d_mem = 4;
  c.d_time = 3;
  c.d_out = 4;
  c.d_dec = 3;
  c.heads = 2;
  c.neighbors = 3;
  c.batch_size = 4;
  c.message = msg;
  c.aggregator = agg;
  c.memory_init = init;
  c.seed = 17;
  return c;
}

std::vector<ModelConfig> all_variants() {
  std::vector<ModelConfig> out;
  for (auto m : {MessageVariant::kIdentity, MessageVariant::kLearned})
    for (auto a : {Aggregator::kMean, Aggregator::kLast})
      for (auto i : {MemoryInit::kZeros, MemoryInit::kFeatures}) out.push_back(small_config(m, a, i));
  return out;
}

TEST(Model, AbsorbMatchesStepwiseMemoryUpdates) {
  auto g = make_graph(8, 40, 1);
  for (const auto& cfg : all_variants()) {
    TgnModel<double> model(g, cfg);
    auto reference = model.memory();
    const auto& p = model.params();
    for (std::size_t b = 0; b < g.event_count(); b += 6) {
      const std::size_t e = std::min(g.event_count(), b + 6);
      model.absorb({b, e});
      auto slice = g.events().subspan(b, e - b);
      auto msgs = compute_raw_messages<double>(slice, reference, p.time, cfg.message,
                                               p.message ? &*p.message : nullptr);
      update_memory(reference, aggregate<double>(msgs, cfg.aggregator), p.gru);
    }
    model.flush();
    const auto& got = model.memory();
    ASSERT_EQ(got.node_count(), reference.node_count());
    for (NodeId v = 0; v < 8; ++v) {
      EXPECT_EQ(got.last_update(v), reference.last_update(v));
      for (std::size_t k = 0; k < cfg.d_mem; ++k) EXPECT_NEAR(got.row(v)[k], reference.row(v)[k], 1e-13);
    }
  }
}

TEST(Model, EmbeddingsMatchStoredMemoryPath) {
  auto g = make_graph(8, 30, 2);
  for (const auto& cfg : all_variants()) {
    TgnModel<double> model(g, cfg);
    model.absorb({0, 12});
    model.absorb({12, 20});
    std::vector<EmbeddingQuery> q{{0, 100.0}, {3, 100.0}, {7, 50.0}, {0, 100.0}};
    TD emb;
    {
      NoGradGuard<double> ng;
      emb = model.embed_queries(q);
    }
    std::vector<std::vector<TemporalNeighbor>> lists;
    for (const auto& x : q) lists.push_back(g.temporal_neighbors(x.node, x.t, cfg.neighbors));
    NoGradGuard<double> ng;
    auto ref = embed<double>(q, lists, model.memory(), model.params().transformer, model.params().time);
    for (std::size_t i = 0; i < emb.numel(); ++i) EXPECT_NEAR(emb.data()[i], ref.data()[i], 1e-13);
    EXPECT_EQ(emb.at(0, 1), emb.at(3, 1));
  }
}

TEST(Model, FutureEventsDoNotAffectEmbeddings) {
  // identical first 20 events, different tails
  auto a = make_graph(8, 20, 3);
  std::vector<TemporalGraph::EventInput> extra_a, extra_b;
  for (const auto& e : a.events()) {
    extra_a.push_back({e.src, e.dst, e.t, {}});
    extra_b.push_back({e.src, e.dst, e.t, {}});
  }
  const double t_end = a.events().back().t;
  for (int i = 0; i < 10; ++i) {
    extra_a.push_back({static_cast<NodeId>(i % 8), static_cast<NodeId>((i + 1) % 8), t_end + 1 + i, {}});
    extra_b.push_back({static_cast<NodeId>((i + 3) % 8), static_cast<NodeId>((i + 5) % 8), t_end + 1, {}});
  }
  TemporalGraph ga(8), gb(8);
  ga.bulk_load(extra_a);
  gb.bulk_load(extra_b);
  ga.set_node_features(a.node_features());
  gb.set_node_features(a.node_features());
  ga.freeze();
  gb.freeze();
  const auto cfg = small_config(MessageVariant::kLearned, Aggregator::kLast, MemoryInit::kFeatures);
  TgnModel<double> ma(ga, cfg), mb(gb, cfg);
  ma.seek(20);
  mb.seek(20);
  std::vector<EmbeddingQuery> q{{0, t_end + 1}, {5, t_end + 1}};
  NoGradGuard<double> ng;
  auto ea = ma.embed_queries(q), eb = mb.embed_queries(q);
  for (std::size_t i = 0; i < ea.numel(); ++i) EXPECT_EQ(ea.data()[i], eb.data()[i]);
}

TEST(Model, SeekReplaysOrRestarts) {
  auto g = make_graph(8, 40, 4);
  const auto cfg = small_config(MessageVariant::kLearned, Aggregator::kMean, MemoryInit::kFeatures);
  TgnModel<double> a(g, cfg), b(g, cfg);
  a.seek(23);
  for (std::size_t s = 0; s < 23; s += cfg.batch_size) b.absorb({s, std::min<std::size_t>(23, s + cfg.batch_size)});
  b.flush();
  EXPECT_EQ(a.memory(), b.memory());
  a.seek(40);
  a.seek(23);
  EXPECT_EQ(a.memory(), b.memory());
  EXPECT_EQ(a.absorbed_until(), 23u);
  EXPECT_THROW(a.absorb({30, 35}), std::logic_error);
}

TEST(Model, CheckpointRestore) {
  auto g = make_graph(8, 40, 5);
  TgnModel<double> m(g, small_config(MessageVariant::kIdentity, Aggregator::kLast, MemoryInit::kZeros));
  m.absorb({0, 10});
  auto saved = m.checkpoint();
  m.absorb({10, 30});
  m.flush();
  EXPECT_NE(m.memory(), saved.memory);
  m.restore(saved);
  EXPECT_EQ(m.checkpoint(), saved);
}

TEST(Model, FeatureInitNeedsFeatures) {
  TemporalGraph g(3);
  g.add_event(0, 1, 1.0);
  g.freeze();
  EXPECT_THROW(TgnModel<double>(g, small_config(MessageVariant::kLearned, Aggregator::kLast,
                                                MemoryInit::kFeatures)),
               std::invalid_argument);
  TemporalGraph open(3);
  EXPECT_THROW(TgnModel<double>(open, small_config(MessageVariant::kLearned, Aggregator::kLast,
                                                   MemoryInit::kZeros)),
               std::logic_error);
}

TEST(Model, FullScorePathGradientCheck) {
  // 5-node toy graph; the loss runs through memory update, attention and decoder
  TemporalGraph g(5);
  g.bulk_load({{0, 1, 1.0, {}}, {2, 0, 2.0, {}}, {3, 1, 2.0, {}}, {1, 2, 4.0, {}},
               {4, 0, 5.0, {}}, {3, 2, 6.0, {}}, {4, 1, 7.0, {}}, {0, 3, 8.0, {}}});
  FeatureMatrix f{5, 3, {0.2, -0.1, 0.4, 0.7, 0.3, -0.5, -0.2, 0.9, 0.1, 0.5, -0.6, 0.3, 0.1, 0.1, -0.8}};
  g.set_node_features(f);
  g.freeze();
  for (const auto& cfg : all_variants()) {
    TgnModel<double> model(g, cfg);
    model.absorb({0, 3});
    model.absorb({3, 5});  // pending: applied inside the loss
    const auto saved = model.checkpoint();
    const std::vector<EmbeddingQuery> q{{4, 7.0}, {1, 7.0}, {2, 7.0}, {3, 8.0}, {0, 8.0}};
    const auto loss = [&] {
      model.restore(saved);
      auto emb = model.embed_queries(q);
      std::vector<std::size_t> s{0, 3}, d{1, 4}, n{2, 2};
      const auto& dec = model.params().decoder;
      auto pos = score_rows(gather_rows(emb, s), gather_rows(emb, d), dec);
      auto neg = score_rows(gather_rows(emb, s), gather_rows(emb, n), dec);
      return bce_loss(pos, neg);
    };
    const double err = grad_check_params(loss, model.params().tensors());
    EXPECT_LT(err, 1e-4) << "message=" << static_cast<int>(cfg.message)
                         << " aggregator=" << static_cast<int>(cfg.aggregator)
                         << " init=" << static_cast<int>(cfg.memory_init);
  }
}

TEST(Model, RecommendMatchesExhaustiveOracle) {
  auto g = make_graph(12, 50, 6);
  TgnModel<double> model(g, small_config(MessageVariant::kLearned, Aggregator::kLast, MemoryInit::kFeatures));
  model.seek(50);
  const double t = g.events().back().t + 1;
  std::vector<NodeId> pool{11, 2, 5, 7, 0, 9, 4, 1};
  for (std::size_t k : {1u, 3u, 8u, 20u}) {
    auto got = model.recommend(3, t, pool, k);
    // oracle: score each candidate alone, then sort by (logit desc, id asc)
    std::vector<std::pair<double, NodeId>> all;
    for (NodeId c : pool) {
      const EmbeddingQuery q{3, t};
      all.push_back({-model.score_candidates(std::span(&q, 1), {{c}})[0][0], c});
    }
    std::sort(all.begin(), all.end());
    ASSERT_EQ(got.size(), std::min<std::size_t>(k, pool.size()));
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].node, all[i].second);
      EXPECT_NEAR(got[i].logit, -all[i].first, 1e-12);
    }
  }
  EXPECT_THROW(model.recommend(3, t, pool, 0), std::invalid_argument);
  EXPECT_THROW(model.recommend(99, t, pool, 3), std::out_of_range);
  std::vector<NodeId> bad{1, 42};
  EXPECT_THROW(model.recommend(3, t, bad, 3), std::out_of_range);
  EXPECT_THROW(model.recommend(3, 0.5, pool, 3), std::invalid_argument);
}

TEST(Model, ObserverSeesEveryAccess) {
  auto g = make_graph(6, 20, 7);
  TgnModel<double> model(g, small_config(MessageVariant::kLearned, Aggregator::kLast, MemoryInit::kZeros));
  std::vector<std::size_t> messages, neighbors;
  model.set_observer([&](EventAccess a, std::size_t i) {
    (a == EventAccess::kMessage ? messages : neighbors).push_back(i);
  });
  model.absorb({0, 8});
  const std::vector<EmbeddingQuery> q{{0, g.event(10).t}};
  {
    NoGradGuard<double> ng;
    model.embed_queries(q);
  }
  EXPECT_EQ(messages.size(), 8u);
  for (std::size_t i : neighbors) EXPECT_LT(g.event(i).t, g.event(10).t);
}

}  // namespace
}  // namespace tgnrec
