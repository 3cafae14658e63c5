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


// Single-layer multi-head graph transformer convolution over temporal
// neighbors. Per head, with query node i and neighbors j:
//   q   = W3 s_i
//   k_j = W4 s_j + W6 phi(dt_j)
//   v_j = W2 s_j + W6 phi(dt_j)
//   a_j = softmax_j(q . k_j / sqrt(d_head))
//   h   = W1 s_i + sum_j a_j v_j
// Head outputs are concatenated and mapped to d_out by an affine combiner.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "tgnrec/init.hpp"
#include "tgnrec/memory.hpp"
#include "tgnrec/temporal_graph.hpp"
#include "tgnrec/tensor.hpp"

namespace tgnrec {

template <typename T>
struct AttentionHead {
  Tensor<T> W1;  // skip path   [d_mem, d_head]
  Tensor<T> W2;  // value       [d_mem, d_head]
  Tensor<T> W3;  // query       [d_mem, d_head]
  Tensor<T> W4;  // key         [d_mem, d_head]
  Tensor<T> W6;  // time term   [d_time, d_head], shared by key and value
};

template <typename T>
struct TransformerParams {
  std::vector<AttentionHead<T>> heads;
  Tensor<T> W_comb;  // [heads * d_head, d_out]
  Tensor<T> b_comb;  // [d_out]

  static TransformerParams init(std::size_t d_mem, std::size_t d_time,
                                std::size_t n_heads, std::size_t d_head,
                                std::size_t d_out, Rng& rng) {
    if (n_heads == 0 || d_head == 0) {
      throw std::invalid_argument("TransformerParams: heads and d_head must be >= 1");
    }
    TransformerParams p;
    for (std::size_t h = 0; h < n_heads; ++h) {
      AttentionHead<T> head;
      head.W1 = uniform_weight<T>(rng, d_mem, d_head);
      head.W2 = uniform_weight<T>(rng, d_mem, d_head);
      head.W3 = uniform_weight<T>(rng, d_mem, d_head);
      head.W4 = uniform_weight<T>(rng, d_mem, d_head);
      head.W6 = uniform_weight<T>(rng, d_time, d_head);
      p.heads.push_back(std::move(head));
    }
    p.W_comb = uniform_weight<T>(rng, n_heads * d_head, d_out);
    p.b_comb = zero_bias<T>(d_out);
    return p;
  }

  std::size_t head_dim() const { return heads.front().W3.dim(1); }
  std::size_t out_dim() const { return W_comb.dim(1); }
};

struct EmbeddingQuery {
  NodeId node = 0;
  double t = 0.0;
};

/// Padded neighborhood layout for a batch of embedding queries. Rows refer to
/// `nodes`; each query owns `slots` consecutive neighbor positions.
struct NeighborhoodPlan {
  NodeRows nodes;
  std::size_t slots = 0;
  std::vector<std::size_t> query_row;
  std::vector<std::size_t> neighbor_row;
  std::vector<double> deltas;
  std::vector<unsigned char> mask;
  std::vector<std::vector<TemporalNeighbor>> neighbors;
};

inline NeighborhoodPlan make_neighborhood_plan(
    std::span<const EmbeddingQuery> queries,
    std::vector<std::vector<TemporalNeighbor>> neighbors) {
  if (neighbors.size() != queries.size()) {
    throw std::invalid_argument("neighborhood plan: one neighbor list per query required");
  }
  NeighborhoodPlan plan;
  std::vector<NodeId> ids;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    ids.push_back(queries[q].node);
    plan.slots = std::max(plan.slots, neighbors[q].size());
    for (const auto& nb : neighbors[q]) {
      if (!(nb.time < queries[q].t)) {
        throw std::invalid_argument("neighborhood plan: neighbor at time " +
                                    std::to_string(nb.time) +
                                    " is not before query time " +
                                    std::to_string(queries[q].t));
      }
      ids.push_back(nb.node);
    }
  }
  plan.nodes = NodeRows(std::move(ids));
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const std::size_t self = plan.nodes.index_of(queries[q].node);
    plan.query_row.push_back(self);
    for (std::size_t s = 0; s < plan.slots; ++s) {
      if (s < neighbors[q].size()) {
        const auto& nb = neighbors[q][s];
        plan.neighbor_row.push_back(plan.nodes.index_of(nb.node));
        plan.deltas.push_back(queries[q].t - nb.time);
        plan.mask.push_back(1);
      } else {
        plan.neighbor_row.push_back(self);
        plan.deltas.push_back(0.0);
        plan.mask.push_back(0);
      }
    }
  }
  plan.neighbors = std::move(neighbors);
  return plan;
}

inline NeighborhoodPlan plan_neighborhoods(std::span<const EmbeddingQuery> queries,
                                           const TemporalGraph& graph,
                                           std::size_t n_neighbors) {
  std::vector<std::vector<TemporalNeighbor>> lists;
  lists.reserve(queries.size());
  for (const auto& q : queries)
    lists.push_back(graph.temporal_neighbors(q.node, q.t, n_neighbors));
  return make_neighborhood_plan(queries, std::move(lists));
}

/// Embeds every query of `plan`. `rows` holds the [|plan.nodes|, d_mem]
/// memory states; the result is [queries, d_out]. When `attention` is given
/// it receives one [queries, 1, slots] coefficient tensor per head.
template <typename T>
Tensor<T> transformer_embed(const Tensor<T>& rows, const NeighborhoodPlan& plan,
                            const TransformerParams<T>& params,
                            const TimeEncoder<T>& time_encoder,
                            std::vector<Tensor<T>>* attention = nullptr) {
  if (rows.rank() != 2 || rows.dim(0) != plan.nodes.size() ||
      rows.dim(1) != params.heads.front().W3.dim(0)) {
    throw ShapeError("transformer_embed: memory rows " + shape_string(rows.shape()) +
                     " vs query weights " +
                     shape_string(params.heads.front().W3.shape()));
  }
  const std::size_t nq = plan.query_row.size();
  const std::size_t slots = plan.slots;
  const std::size_t dh = params.head_dim();
  const T inv_sqrt_d = T{1} / std::sqrt(static_cast<T>(dh));

  const Tensor<T> s_q = gather_rows(rows, plan.query_row);
  Tensor<T> s_nb, phi;
  if (slots > 0) {
    s_nb = gather_rows(rows, plan.neighbor_row);
    phi = time_encoder.encode(plan.deltas);
  }
  std::vector<Tensor<T>> head_out;
  for (const auto& head : params.heads) {
    Tensor<T> h = matmul(s_q, head.W1);
    if (slots > 0) {
      const Tensor<T> t_proj = matmul(phi, head.W6);
      const Tensor<T> keys = add(matmul(s_nb, head.W4), t_proj);
      const Tensor<T> values = add(matmul(s_nb, head.W2), t_proj);
      const Tensor<T> q3 = reshape(matmul(s_q, head.W3), {nq, 1, dh});
      const Tensor<T> logits =
          scale(matmul(q3, transpose(reshape(keys, {nq, slots, dh}))), inv_sqrt_d);
      const Tensor<T> alpha = softmax(logits, 2, plan.mask);
      if (attention) attention->push_back(alpha);
      const Tensor<T> mixed =
          reshape(matmul(alpha, reshape(values, {nq, slots, dh})), {nq, dh});
      h = add(h, mixed);
    }
    head_out.push_back(std::move(h));
  }
  const Tensor<T> merged = head_out.size() == 1 ? head_out.front() : concat(head_out, 1);
  return add(matmul(merged, params.W_comb), params.b_comb);
}

/// Embeddings straight from stored memory, one row per query.
template <typename T>
Tensor<T> embed(std::span<const EmbeddingQuery> queries,
                std::vector<std::vector<TemporalNeighbor>> neighbors,
                const MemoryState<T>& memory, const TransformerParams<T>& params,
                const TimeEncoder<T>& time_encoder) {
  const auto plan = make_neighborhood_plan(queries, std::move(neighbors));
  return transformer_embed(memory_rows(memory, plan.nodes), plan, params, time_encoder);
}

/// Per-head attention coefficients for one query; empty when the node has
/// no neighbors.
template <typename T>
std::vector<std::vector<T>> attention_weights(const EmbeddingQuery& query,
                                              std::vector<TemporalNeighbor> neighbors,
                                              const MemoryState<T>& memory,
                                              const TransformerParams<T>& params,
                                              const TimeEncoder<T>& time_encoder) {
  NoGradGuard<T> no_grad;
  std::vector<std::vector<TemporalNeighbor>> lists{std::move(neighbors)};
  const auto plan = make_neighborhood_plan(std::span(&query, 1), std::move(lists));
  std::vector<Tensor<T>> alphas;
  transformer_embed(memory_rows(memory, plan.nodes), plan, params, time_encoder, &alphas);
  std::vector<std::vector<T>> out;
  for (const auto& a : alphas) out.emplace_back(a.data().begin(), a.data().end());
  return out;
}

}  // namespace tgnrec
