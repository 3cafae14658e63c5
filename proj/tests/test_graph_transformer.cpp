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
#include <cmath>
#include <random>
#include <vector>

#include "tgnrec/grad_check.hpp"
#include "tgnrec/graph_transformer.hpp"

namespace tgnrec {
namespace {

using TD = Tensor<double>;

struct Instance {
  MemoryState<double> memory;
  TransformerParams<double> params;
  TimeEncoder<double> time;
  EmbeddingQuery query;
  std::vector<TemporalNeighbor> neighbors;
};

Instance random_instance(Rng& rng, std::size_t nodes, std::size_t d_mem, std::size_t d_time,
                         std::size_t heads, std::size_t d_head, std::size_t d_out,
                         std::size_t n_neighbors) {
  std::uniform_real_distribution<double> u(-1, 1);
  Instance in{MemoryState<double>(nodes, d_mem),
              TransformerParams<double>::init(d_mem, d_time, heads, d_head, d_out, rng),
              TimeEncoder<double>::init(d_time),
              {0, 50.0},
              {}};
  for (NodeId v = 0; v < nodes; ++v) {
    std::vector<double> row(d_mem);
    for (auto& x : row) x = u(rng);
    in.memory.set_initial_row(v, row);
  }
  for (auto& x : in.params.b_comb.mutable_data()) x = u(rng);
  for (auto& x : in.time.phase.mutable_data()) x = u(rng);
  std::uniform_int_distribution<NodeId> pick(0, static_cast<NodeId>(nodes - 1));
  std::uniform_real_distribution<double> when(0, 49);
  in.query.node = pick(rng);
  for (std::size_t k = 0; k < n_neighbors; ++k) {
    const double t = std::floor(when(rng));
    in.neighbors.push_back({pick(rng), t, in.query.t - t, k});
  }
  return in;
}

struct Reference {
  std::vector<double> out;
  std::vector<std::vector<double>> alpha;
};

// Scalar loops over the attention definition.
Reference reference_embed(const Instance& in) {
  const auto& p = in.params;
  const std::size_t dm = in.memory.dim(), dh = p.head_dim(), dt = in.time.dim();
  const auto s_i = in.memory.row(in.query.node);
  const auto phi = [&](double delta) {
    std::vector<double> f(dt);
    for (std::size_t k = 0; k < dt; ++k)
      f[k] = std::cos(delta * in.time.omega.data()[k] + in.time.phase.data()[k]);
    return f;
  };
  const auto project = [&](std::span<const double> x, const TD& w) {
    std::vector<double> y(w.dim(1), 0.0);
    for (std::size_t c = 0; c < w.dim(1); ++c)
      for (std::size_t r = 0; r < w.dim(0); ++r) y[c] += x[r] * w.at(r, c);
    return y;
  };
  Reference ref;
  std::vector<double> merged;
  for (const auto& head : p.heads) {
    auto q = project(s_i, head.W3);
    auto h = project(s_i, head.W1);
    std::vector<double> logits, alpha;
    std::vector<std::vector<double>> values;
    for (const auto& nb : in.neighbors) {
      const auto f = phi(nb.delta);
      auto key = project(in.memory.row(nb.node), head.W4);
      auto val = project(in.memory.row(nb.node), head.W2);
      auto tk = project(f, head.W6);
      double dot = 0;
      for (std::size_t k = 0; k < dh; ++k) {
        key[k] += tk[k];
        val[k] += tk[k];
        dot += q[k] * key[k];
      }
      logits.push_back(dot / std::sqrt(static_cast<double>(dh)));
      values.push_back(val);
    }
    if (!logits.empty()) {
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0;
      for (double l : logits) z += std::exp(l - mx);
      for (double l : logits) alpha.push_back(std::exp(l - mx) / z);
      for (std::size_t j = 0; j < values.size(); ++j)
        for (std::size_t k = 0; k < dh; ++k) h[k] += alpha[j] * values[j][k];
      ref.alpha.push_back(alpha);
    }
    merged.insert(merged.end(), h.begin(), h.end());
  }
  ref.out = project(merged, p.W_comb);
  for (std::size_t k = 0; k < ref.out.size(); ++k) ref.out[k] += p.b_comb.data()[k];
  (void)dm;
  return ref;
}

std::vector<double> embed_one(const Instance& in, std::vector<TemporalNeighbor> nb) {
  NoGradGuard<double> ng;
  auto e = embed<double>(std::span(&in.query, 1), {std::move(nb)}, in.memory, in.params, in.time);
  return {e.data().begin(), e.data().end()};
}

TEST(Transformer, ScalarExample) {
  // 1 head, d = 1, unit weights, zero time term
  const auto one = [] { return TD({1, 1}, {1.0}, true); };
  TransformerParams<double> p;
  p.heads.push_back({one(), one(), one(), one(), TD({1, 1}, {0.0}, true)});
  p.W_comb = one();
  p.b_comb = TD({1}, {0.0}, true);
  auto time = TimeEncoder<double>::init(1);
  MemoryState<double> mem(3, 1);
  mem.set_initial_row(0, std::vector<double>{1.0});
  mem.set_initial_row(1, std::vector<double>{1.0});
  mem.set_initial_row(2, std::vector<double>{2.0});
  EmbeddingQuery q{0, 10.0};
  std::vector<TemporalNeighbor> nb{{1, 3.0, 7.0, 0}, {2, 4.0, 6.0, 1}};
  auto alpha = attention_weights<double>(q, nb, mem, p, time);
  ASSERT_EQ(alpha.size(), 1u);
  const double a0 = 1.0 / (1.0 + std::exp(1.0));
  EXPECT_NEAR(alpha[0][0], a0, 1e-15);
  EXPECT_NEAR(alpha[0][1], 1.0 - a0, 1e-15);
  EXPECT_NEAR(alpha[0][0], 0.268941, 1e-6);
  NoGradGuard<double> ng;
  auto out = embed<double>(std::span(&q, 1), {nb}, mem, p, time);
  EXPECT_NEAR(out.item(), 1.0 + a0 * 1.0 + (1.0 - a0) * 2.0, 1e-14);
  EXPECT_NEAR(out.item(), 2.731059, 1e-6);
}

TEST(Transformer, SingleNeighborGetsFullWeight) {
  Rng rng(1);
  auto in = random_instance(rng, 5, 4, 3, 2, 2, 3, 1);
  auto alpha = attention_weights<double>(in.query, in.neighbors, in.memory, in.params, in.time);
  ASSERT_EQ(alpha.size(), 2u);
  for (const auto& a : alpha) EXPECT_EQ(a, (std::vector<double>{1.0}));
}

TEST(Transformer, IdenticalNeighborsShareWeight) {
  Rng rng(2);
  auto in = random_instance(rng, 5, 4, 3, 2, 2, 3, 1);
  in.neighbors.push_back(in.neighbors.front());
  for (const auto& a : attention_weights<double>(in.query, in.neighbors, in.memory, in.params, in.time)) {
    EXPECT_NEAR(a[0], 0.5, 1e-15);
    EXPECT_NEAR(a[1], 0.5, 1e-15);
  }
}

TEST(Transformer, EmptyNeighborhoodUsesSkipPathOnly) {
  Rng rng(3);
  auto in = random_instance(rng, 5, 4, 3, 2, 2, 3, 0);
  EXPECT_TRUE(attention_weights<double>(in.query, {}, in.memory, in.params, in.time).empty());
  auto got = embed_one(in, {});
  auto ref = reference_embed(in);
  for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], ref.out[k], 1e-13);
}

TEST(Transformer, MatchesBruteForceOnRandomInstances) {
  Rng rng(4);
  std::uniform_int_distribution<std::size_t> small(1, 4);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t heads = small(rng), d_head = small(rng);
    auto in = random_instance(rng, 6, small(rng) + 1, small(rng), heads, d_head, small(rng),
                              small(rng) + trial % 3);
    auto ref = reference_embed(in);
    auto got = embed_one(in, in.neighbors);
    ASSERT_EQ(got.size(), ref.out.size());
    for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], ref.out[k], 1e-12);
    auto alpha = attention_weights<double>(in.query, in.neighbors, in.memory, in.params, in.time);
    ASSERT_EQ(alpha.size(), heads);
    for (std::size_t h = 0; h < heads; ++h) {
      double total = 0;
      for (std::size_t j = 0; j < alpha[h].size(); ++j) {
        EXPECT_NEAR(alpha[h][j], ref.alpha[h][j], 1e-12);
        EXPECT_GE(alpha[h][j], 0.0);
        total += alpha[h][j];
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Transformer, BatchedQueriesWithMixedNeighborCounts) {
  Rng rng(5);
  auto base = random_instance(rng, 8, 4, 3, 2, 2, 3, 0);
  std::vector<EmbeddingQuery> queries;
  std::vector<std::vector<TemporalNeighbor>> lists;
  std::vector<std::vector<double>> expected;
  for (std::size_t n : {0u, 3u, 1u, 5u}) {
    auto in = random_instance(rng, 8, 4, 3, 2, 2, 3, n);
    in.memory = base.memory;
    in.params = base.params;
    in.time = base.time;
    queries.push_back(in.query);
    lists.push_back(in.neighbors);
    expected.push_back(reference_embed(in).out);
  }
  NoGradGuard<double> ng;
  auto e = embed<double>(queries, lists, base.memory, base.params, base.time);
  for (std::size_t q = 0; q < queries.size(); ++q)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(e.at(q, k), expected[q][k], 1e-12);
}

TEST(Transformer, NeighborPermutationInvariance) {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    auto in = random_instance(rng, 7, 4, 3, 2, 2, 4, 6);
    auto a = embed_one(in, in.neighbors);
    auto shuffled = in.neighbors;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto b = embed_one(in, shuffled);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
  }
}

TEST(Transformer, LogitsAreScaledByRootHeadDim) {
  Rng rng(7);
  auto in = random_instance(rng, 6, 6, 3, 1, 4, 2, 3);
  // unscaled softmax of (q . k) / 2 for d_head = 4
  auto ref = reference_embed(in);
  auto alpha = attention_weights<double>(in.query, in.neighbors, in.memory, in.params, in.time);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(alpha[0][j], ref.alpha[0][j], 1e-13);
  // the same instance with W3 doubled would be the unscaled version; check it differs
  for (auto& x : in.params.heads[0].W3.mutable_data()) x *= 2.0;
  auto doubled = attention_weights<double>(in.query, in.neighbors, in.memory, in.params, in.time);
  double diff = 0;
  for (std::size_t j = 0; j < 3; ++j) diff += std::abs(doubled[0][j] - alpha[0][j]);
  EXPECT_GT(diff, 1e-6);
}

TEST(Transformer, StrongAlignmentDominatesMonotonically) {
  // neighbor 1 gets a key aligned with the query; its weight grows with scale
  const auto mat = [](std::size_t r, std::size_t c, double v) {
    return TD({r, c}, std::vector<double>(r * c, v), true);
  };
  TransformerParams<double> p;
  p.heads.push_back({mat(2, 2, 0.1), mat(2, 2, 0.1), mat(2, 2, 1.0), mat(2, 2, 1.0), mat(2, 2, 0.0)});
  p.W_comb = mat(2, 2, 1.0);
  p.b_comb = TD({2}, {0.0, 0.0});
  auto time = TimeEncoder<double>::init(2);
  double previous = 0.0;
  for (double scale : {0.5, 1.0, 2.0, 4.0, 8.0}) {
    MemoryState<double> mem(3, 2);
    mem.set_initial_row(0, std::vector<double>{1.0, 1.0});
    mem.set_initial_row(1, std::vector<double>{scale, scale});
    mem.set_initial_row(2, std::vector<double>{0.1, 0.1});
    EmbeddingQuery q{0, 5.0};
    std::vector<TemporalNeighbor> nb{{1, 1.0, 4.0, 0}, {2, 2.0, 3.0, 1}};
    auto a = attention_weights<double>(q, nb, mem, p, time)[0][0];
    EXPECT_GT(a, previous);
    previous = a;
  }
  EXPECT_GT(previous, 0.999);
}

TEST(Transformer, RejectsNeighborsAtOrAfterQueryTime) {
  Rng rng(8);
  auto in = random_instance(rng, 4, 2, 2, 1, 2, 2, 1);
  in.neighbors[0].time = in.query.t;
  in.neighbors[0].delta = 0.0;
  EXPECT_THROW(embed_one(in, in.neighbors), std::invalid_argument);
}

TEST(Transformer, OutputIsFinite) {
  Rng rng(9);
  auto in = random_instance(rng, 6, 4, 3, 2, 2, 3, 4);
  for (auto& nb : in.neighbors) nb.delta = 1e6;
  for (double v : embed_one(in, in.neighbors)) EXPECT_TRUE(std::isfinite(v));
}

TEST(Transformer, GradientCheck) {
  Rng rng(10);
  auto in = random_instance(rng, 5, 3, 2, 2, 2, 2, 3);
  std::vector<std::vector<TemporalNeighbor>> lists{in.neighbors, {}, {in.neighbors[0]}};
  std::vector<EmbeddingQuery> queries{in.query, {1, 20.0}, {2, 50.0}};
  const auto plan = make_neighborhood_plan(queries, lists);
  std::vector<TD> inputs{memory_rows(in.memory, plan.nodes)};
  for (const auto& h : in.params.heads)
    for (const TD* w : {&h.W1, &h.W2, &h.W3, &h.W4, &h.W6}) inputs.push_back(w->detach());
  inputs.push_back(in.params.W_comb.detach());
  inputs.push_back(in.params.b_comb.detach());
  inputs.push_back(in.time.omega.detach());
  inputs.push_back(in.time.phase.detach());
  const std::size_t heads = in.params.heads.size();
  const ScalarFunction f = [&](const std::vector<TD>& v) {
    TransformerParams<double> p;
    for (std::size_t h = 0; h < heads; ++h)
      p.heads.push_back({v[1 + 5 * h], v[2 + 5 * h], v[3 + 5 * h], v[4 + 5 * h], v[5 + 5 * h]});
    const std::size_t base = 1 + 5 * heads;
    p.W_comb = v[base];
    p.b_comb = v[base + 1];
    TimeEncoder<double> time{v[base + 2], v[base + 3]};
    auto out = transformer_embed(v[0], plan, p, time);
    std::vector<double> w(out.numel());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::cos(0.9 * i + 0.2);
    return sum(mul(out, TD(out.shape(), w)));
  };
  EXPECT_LT(grad_check(f, inputs), 1e-5);
}

}  // namespace
}  // namespace tgnrec
