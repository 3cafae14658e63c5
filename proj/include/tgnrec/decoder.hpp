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


// Link scoring head, negative sampling and the training criterion.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgnrec/init.hpp"
#include "tgnrec/temporal_graph.hpp"
#include "tgnrec/tensor.hpp"

namespace tgnrec {

template <typename T>
struct DecoderParams {
  Tensor<T> W_i;    // source tower       [d_out, d_dec]
  Tensor<T> b_i;    // [d_dec]
  Tensor<T> W_j;    // destination tower  [d_out, d_dec]
  Tensor<T> b_j;    // [d_dec]
  Tensor<T> W_out;  // [2 * d_dec, 1]
  Tensor<T> b_out;  // [1]

  static DecoderParams init(std::size_t d_out, std::size_t d_dec, Rng& rng) {
    return {uniform_weight<T>(rng, d_out, d_dec), zero_bias<T>(d_dec),
            uniform_weight<T>(rng, d_out, d_dec), zero_bias<T>(d_dec),
            uniform_weight<T>(rng, 2 * d_dec, 1), zero_bias<T>(1)};
  }
};

/// Logits for aligned rows of source and destination embeddings:
/// W_out . relu([W_i src + b_i || W_j dst + b_j]) + b_out, shape [B, 1].
template <typename T>
Tensor<T> score_rows(const Tensor<T>& src, const Tensor<T>& dst,
                     const DecoderParams<T>& p) {
  if (src.shape() != dst.shape() || src.rank() != 2 || src.dim(1) != p.W_i.dim(0)) {
    throw ShapeError("score: source " + shape_string(src.shape()) +
                     " / destination " + shape_string(dst.shape()) +
                     " vs tower input " + shape_string(p.W_i.shape()));
  }
  const Tensor<T> hidden = relu(concat(add(matmul(src, p.W_i), p.b_i),
                                       add(matmul(dst, p.W_j), p.b_j), 1));
  return add(matmul(hidden, p.W_out), p.b_out);
}

template <typename T>
T score(std::span<const T> src, std::span<const T> dst, const DecoderParams<T>& p) {
  NoGradGuard<T> no_grad;
  const Tensor<T> s({1, src.size()}, {src.begin(), src.end()});
  const Tensor<T> d({1, dst.size()}, {dst.begin(), dst.end()});
  return score_rows(s, d, p).item();
}

/// Uniform negative destinations, `k` per positive, never equal to the
/// positive destination of the same event.
inline std::vector<NodeId> sample_negatives(std::span<const NodeId> positive_dst,
                                            std::size_t k, std::size_t universe,
                                            Rng& rng) {
  if (universe <= 1) {
    throw std::invalid_argument("sample_negatives: node universe of size " +
                                std::to_string(universe) + " is too small");
  }
  std::uniform_int_distribution<std::size_t> pick(0, universe - 1);
  std::vector<NodeId> out;
  out.reserve(positive_dst.size() * k);
  for (NodeId pos : positive_dst) {
    for (std::size_t r = 0; r < k; ++r) {
      NodeId v;
      do {
        v = static_cast<NodeId>(pick(rng));
      } while (v == pos);
      out.push_back(v);
    }
  }
  return out;
}

/// mean(-log sigmoid(pos)) + mean(-log(1 - sigmoid(neg))), both written as
/// softplus terms so large logits stay finite.
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& pos_logits, const Tensor<T>& neg_logits) {
  if (pos_logits.numel() == 0 || neg_logits.numel() == 0) {
    throw std::invalid_argument("bce_loss: empty logit list");
  }
  return add(mean(softplus(scale(pos_logits, T{-1}))), mean(softplus(neg_logits)));
}

struct ScoredCandidate {
  NodeId node = 0;
  double logit = 0.0;
  double probability = 0.5;
};

inline double logistic(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Orders by logit descending, then node id ascending.
inline bool ranks_before(const ScoredCandidate& a, const ScoredCandidate& b) {
  if (a.logit != b.logit) return a.logit > b.logit;
  return a.node < b.node;
}

/// Top-`k` candidates under the ranking total order.
inline std::vector<ScoredCandidate> top_k(std::span<const NodeId> nodes,
                                          std::span<const double> logits,
                                          std::size_t k) {
  if (k == 0) throw std::invalid_argument("top_k: K must be positive");
  if (nodes.size() != logits.size()) {
    throw std::invalid_argument("top_k: node and logit counts differ");
  }
  std::vector<ScoredCandidate> all;
  all.reserve(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i)
    all.push_back({nodes[i], logits[i], logistic(logits[i])});
  const std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep),
                    all.end(), ranks_before);
  all.resize(keep);
  return all;
}

}  // namespace tgnrec
