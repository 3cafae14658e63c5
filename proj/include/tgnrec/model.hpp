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


// The full link-prediction model: memory module, graph transformer embedding
// and scoring head, bound to one temporal graph.
//
// Batch schedule. Events of a processed batch are held as "pending" and are
// folded into memory at the start of the next forward pass, inside the
// differentiation scope, so the GRU and message parameters receive gradients
// from the next batch's loss. The memory a batch is scored against therefore
// reflects every earlier event and none of the batch's own events. Committed
// memory rows are constants: gradients never flow into earlier batches.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tgnrec/decoder.hpp"
#include "tgnrec/graph_transformer.hpp"
#include "tgnrec/init.hpp"
#include "tgnrec/memory.hpp"
#include "tgnrec/temporal_graph.hpp"
#include "tgnrec/tensor.hpp"

namespace tgnrec {

struct ModelConfig {
  std::size_t d_mem = 32;
  std::size_t d_time = 32;
  std::size_t d_out = 32;
  std::size_t d_dec = 32;
  std::size_t heads = 2;
  std::size_t neighbors = 10;
  std::size_t batch_size = 200;  // used when replaying events without training
  MessageVariant message = MessageVariant::kLearned;
  Aggregator aggregator = Aggregator::kLast;
  MemoryInit memory_init = MemoryInit::kFeatures;
  std::uint64_t seed = 42;

  std::size_t head_dim() const { return std::max<std::size_t>(1, d_mem / heads); }
  std::size_t message_dim() const {
    return message == MessageVariant::kIdentity ? 2 * d_mem + d_time : d_mem;
  }
};

template <typename T>
struct ModelParams {
  TimeEncoder<T> time;
  std::optional<MessageEncoderParams<T>> message;
  GruParams<T> gru;
  std::optional<Tensor<T>> projection;  // [feature_dim, d_mem]
  TransformerParams<T> transformer;
  DecoderParams<T> decoder;

  /// Each block draws from its own stream, so blocks shared by two model
  /// variants start from the same values (paired ablations).
  static ModelParams init(const ModelConfig& cfg, std::size_t feature_dim) {
    const auto stream = [&](std::uint64_t block) {
      std::seed_seq seq{cfg.seed, block};
      return Rng(seq);
    };
    ModelParams p;
    p.time = TimeEncoder<T>::init(cfg.d_time);
    if (cfg.message == MessageVariant::kLearned) {
      auto rng = stream(1);
      p.message = MessageEncoderParams<T>::init(2 * cfg.d_mem + cfg.d_time, cfg.d_mem, rng);
    }
    {
      auto rng = stream(2);
      p.gru = GruParams<T>::init(cfg.message_dim(), cfg.d_mem, rng);
    }
    if (cfg.memory_init == MemoryInit::kFeatures) {
      auto rng = stream(3);
      p.projection = uniform_weight<T>(rng, feature_dim, cfg.d_mem);
    }
    {
      auto rng = stream(4);
      p.transformer = TransformerParams<T>::init(cfg.d_mem, cfg.d_time, cfg.heads,
                                                 cfg.head_dim(), cfg.d_out, rng);
    }
    auto rng = stream(5);
    p.decoder = DecoderParams<T>::init(cfg.d_out, cfg.d_dec, rng);
    return p;
  }

  /// Every learnable tensor with a stable name, in a fixed order.
  std::vector<std::pair<std::string, Tensor<T>>> named() const {
    std::vector<std::pair<std::string, Tensor<T>>> out{
        {"time.omega", time.omega}, {"time.phase", time.phase}};
    if (message) {
      out.emplace_back("message.W", message->W);
      out.emplace_back("message.b", message->b);
    }
    const std::pair<const char*, const Tensor<T>*> gru_fields[] = {
        {"W_ir", &gru.W_ir}, {"W_hr", &gru.W_hr}, {"W_iz", &gru.W_iz},
        {"W_hz", &gru.W_hz}, {"W_in", &gru.W_in}, {"W_hn", &gru.W_hn},
        {"b_ir", &gru.b_ir}, {"b_hr", &gru.b_hr}, {"b_iz", &gru.b_iz},
        {"b_hz", &gru.b_hz}, {"b_in", &gru.b_in}, {"b_hn", &gru.b_hn}};
    for (const auto& [name, t] : gru_fields) out.emplace_back(std::string("gru.") + name, *t);
    if (projection) out.emplace_back("memory.projection", *projection);
    for (std::size_t h = 0; h < transformer.heads.size(); ++h) {
      const auto& head = transformer.heads[h];
      const std::string prefix = "transformer.head" + std::to_string(h) + ".";
      out.emplace_back(prefix + "W1", head.W1);
      out.emplace_back(prefix + "W2", head.W2);
      out.emplace_back(prefix + "W3", head.W3);
      out.emplace_back(prefix + "W4", head.W4);
      out.emplace_back(prefix + "W6", head.W6);
    }
    out.emplace_back("transformer.W_comb", transformer.W_comb);
    out.emplace_back("transformer.b_comb", transformer.b_comb);
    out.emplace_back("decoder.W_i", decoder.W_i);
    out.emplace_back("decoder.b_i", decoder.b_i);
    out.emplace_back("decoder.W_j", decoder.W_j);
    out.emplace_back("decoder.b_j", decoder.b_j);
    out.emplace_back("decoder.W_out", decoder.W_out);
    out.emplace_back("decoder.b_out", decoder.b_out);
    return out;
  }

  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
  }
};

/// Which part of the pipeline read an event.
enum class EventAccess { kNeighbor, kMessage, kQuery };
using EventObserver = std::function<void(EventAccess, std::size_t event_index)>;

/// Memory plus the bookkeeping of which events it has absorbed.
template <typename T>
struct MemoryCheckpoint {
  MemoryState<T> memory;
  std::optional<EventRange> pending;
  std::size_t absorbed_until = 0;

  friend bool operator==(const MemoryCheckpoint&, const MemoryCheckpoint&) = default;
};

template <typename T>
class TgnModel {
 public:
  TgnModel(const TemporalGraph& graph, ModelConfig cfg)
      : graph_(&graph), cfg_(cfg) {
    if (!graph.frozen()) throw std::logic_error("TgnModel: graph must be frozen");
    const auto& features = graph.node_features();
    if (cfg_.memory_init == MemoryInit::kFeatures) {
      if (features.empty()) {
        throw std::invalid_argument("TgnModel: feature initialization needs node features");
      }
      std::vector<T> x(features.values.begin(), features.values.end());
      features_ = Tensor<T>({features.rows, features.cols}, std::move(x));
    }
    params_ = ModelParams<T>::init(cfg_, features.cols);
    reset_memory();
  }

  const ModelConfig& config() const { return cfg_; }
  const TemporalGraph& graph() const { return *graph_; }
  ModelParams<T>& params() { return params_; }
  const ModelParams<T>& params() const { return params_; }
  const MemoryState<T>& memory() const { return memory_; }
  std::optional<EventRange> pending() const { return pending_; }
  /// Events [0, absorbed_until) are in memory or pending.
  std::size_t absorbed_until() const { return absorbed_until_; }

  void set_observer(EventObserver observer) { observer_ = std::move(observer); }

  /// Back to S(t0) with nothing absorbed.
  void reset_memory() {
    NoGradGuard<T> no_grad;
    memory_ = MemoryState<T>(graph_->node_count(), cfg_.d_mem);
    if (params_.projection) {
      memory_ = init_memory<T>(graph_->node_count(), cfg_.d_mem,
                               &graph_->node_features(), &*params_.projection);
    }
    pending_.reset();
    absorbed_until_ = 0;
  }

  MemoryCheckpoint<T> checkpoint() const { return {memory_, pending_, absorbed_until_}; }

  void restore(const MemoryCheckpoint<T>& c) {
    memory_.restore(c.memory);
    pending_ = c.pending;
    absorbed_until_ = c.absorbed_until;
  }

  /// Marks `range` (which must start where absorption left off) as the next
  /// pending batch, folding any older pending batch into memory first.
  void absorb(EventRange range) {
    if (range.begin != absorbed_until_ || range.end > graph_->event_count()) {
      throw std::logic_error("absorb: range [" + std::to_string(range.begin) + "," +
                             std::to_string(range.end) + ") does not continue at event " +
                             std::to_string(absorbed_until_));
    }
    flush();
    if (!range.empty()) pending_ = range;
    absorbed_until_ = range.end;
  }

  /// Applies the pending batch without recording gradients.
  void flush() {
    NoGradGuard<T> no_grad;
    apply_pending();
  }

  /// Brings memory to "every event before `position` absorbed", replaying
  /// forward in batches or restarting from S(t0) if already past it.
  void seek(std::size_t position) {
    if (position > graph_->event_count()) throw std::out_of_range("seek: past end");
    if (position < absorbed_until_) reset_memory();
    while (absorbed_until_ < position) {
      const std::size_t end = std::min(position, absorbed_until_ + cfg_.batch_size);
      absorb({absorbed_until_, end});
    }
    flush();
  }

  /// Embeddings [queries, d_out]. Applies the pending batch first; inside a
  /// recording scope the result is differentiable with respect to every
  /// parameter, including the memory updater.
  Tensor<T> embed_queries(std::span<const EmbeddingQuery> queries) {
    auto staged = apply_pending();

    // Identical (node, time) queries share one embedding.
    std::vector<EmbeddingQuery> unique;
    std::vector<std::size_t> slot_of;
    {
      std::map<std::pair<NodeId, double>, std::size_t> seen;
      for (const auto& q : queries) {
        if (q.node >= graph_->node_count()) {
          throw std::out_of_range("embed: unknown node " + std::to_string(q.node));
        }
        auto [it, inserted] = seen.try_emplace({q.node, q.t}, unique.size());
        if (inserted) unique.push_back(q);
        slot_of.push_back(it->second);
      }
    }
    const auto plan = plan_neighborhoods(unique, *graph_, cfg_.neighbors);
    if (observer_) {
      for (const auto& list : plan.neighbors)
        for (const auto& nb : list) observer_(EventAccess::kNeighbor, nb.event_id);
    }
    const Tensor<T> rows = assemble_rows(plan.nodes, staged ? &*staged : nullptr);
    const Tensor<T> emb = transformer_embed(rows, plan, params_.transformer, params_.time);
    if (unique.size() == queries.size()) return emb;
    return gather_rows(emb, slot_of);
  }

  /// Logits for each (source, candidate) pair of each query at its time.
  std::vector<std::vector<double>> score_candidates(
      std::span<const EmbeddingQuery> sources,
      const std::vector<std::vector<NodeId>>& candidates) {
    NoGradGuard<T> no_grad;
    std::vector<EmbeddingQuery> all(sources.begin(), sources.end());
    std::vector<std::size_t> src_row, dst_row;
    for (std::size_t q = 0; q < sources.size(); ++q) {
      for (NodeId c : candidates[q]) {
        src_row.push_back(q);
        dst_row.push_back(all.size());
        all.push_back({c, sources[q].t});
      }
    }
    std::vector<std::vector<double>> out(sources.size());
    if (src_row.empty()) {
      flush();
      return out;
    }
    const Tensor<T> emb = embed_queries(all);
    const Tensor<T> logits = score_rows(gather_rows(emb, src_row),
                                        gather_rows(emb, dst_row), params_.decoder);
    std::size_t k = 0;
    for (std::size_t q = 0; q < sources.size(); ++q)
      for (std::size_t c = 0; c < candidates[q].size(); ++c)
        out[q].push_back(static_cast<double>(logits.data()[k++]));
    return out;
  }

  /// Top-`k` destinations for `src` at time `t` among `candidates`, using
  /// memory as currently absorbed.
  std::vector<ScoredCandidate> recommend(NodeId src, double t,
                                         std::span<const NodeId> candidates,
                                         std::size_t k) {
    if (k == 0) throw std::invalid_argument("recommend: K must be positive");
    if (src >= graph_->node_count()) {
      throw std::out_of_range("recommend: unknown source node " + std::to_string(src));
    }
    flush();
    std::vector<NodeId> pool(candidates.begin(), candidates.end());
    for (NodeId v : pool) {
      if (v >= graph_->node_count()) {
        throw std::out_of_range("recommend: unknown candidate " + std::to_string(v));
      }
    }
    pool.push_back(src);
    for (NodeId v : pool) {
      if (memory_.last_update(v) > t) {
        throw std::invalid_argument("recommend: query time precedes memory of node " +
                                    std::to_string(v));
      }
    }
    pool.pop_back();
    const EmbeddingQuery q{src, t};
    const auto logits = score_candidates(std::span(&q, 1), {pool});
    return top_k(pool, logits.front(), k);
  }

  void notify_query(std::size_t event_index) const {
    if (observer_) observer_(EventAccess::kQuery, event_index);
  }

 private:
  struct Staged {
    NodeRows nodes;
    Tensor<T> states;
  };

  // Folds the pending batch into memory: raw messages, aggregation and one
  // GRU step per touched node. Returns the updated rows (differentiable when
  // recording) and commits their values to memory.
  std::optional<Staged> apply_pending() {
    if (!pending_) return std::nullopt;
    const EventRange range = *pending_;
    pending_.reset();
    const auto events = graph_->events().subspan(range.begin, range.size());
    std::vector<NodeId> ids;
    for (const Event& e : events) {
      ids.push_back(e.src);
      ids.push_back(e.dst);
      if (observer_) observer_(EventAccess::kMessage, e.id);
    }
    Staged staged{NodeRows(std::move(ids)), {}};
    const Tensor<T> prev = assemble_rows(staged.nodes, nullptr);
    const auto messages =
        build_messages(events, staged.nodes, prev, memory_.last_update(), params_.time,
                       cfg_.message, params_.message ? &*params_.message : nullptr);
    const auto plan = plan_aggregation(messages.targets, messages.times,
                                       messages.event_ids, cfg_.aggregator);
    staged.states = gru_cell(aggregate_rows(messages.payloads, plan), prev, params_.gru);
    for (std::size_t p = 0; p < plan.nodes.size(); ++p)
      memory_.write(plan.nodes[p], staged.states.data().subspan(p * cfg_.d_mem, cfg_.d_mem),
                    plan.times[p]);
    return staged;
  }

  // Current memory rows for `nodes`: staged rows when present, committed
  // memory for touched nodes, and S(t0) for untouched nodes. With feature
  // initialization S(t0) is recomputed through the live projection.
  Tensor<T> assemble_rows(const NodeRows& nodes, const Staged* staged) const {
    std::vector<std::size_t> staged_sel, projected_nodes, source(nodes.size());
    std::vector<T> constant;
    enum Part { kStaged, kConstant, kProjected };
    std::vector<std::pair<Part, std::size_t>> where;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const NodeId v = nodes[i];
      if (staged) {
        if (auto s = staged->nodes.find(v)) {
          where.emplace_back(kStaged, staged_sel.size());
          staged_sel.push_back(*s);
          continue;
        }
      }
      if (memory_.touched(v) || !params_.projection) {
        where.emplace_back(kConstant, constant.size() / cfg_.d_mem);
        auto r = memory_.row(v);
        constant.insert(constant.end(), r.begin(), r.end());
      } else {
        where.emplace_back(kProjected, projected_nodes.size());
        projected_nodes.push_back(v);
      }
    }
    std::vector<Tensor<T>> parts;
    std::size_t offsets[3] = {0, 0, 0};
    std::size_t total = 0;
    if (!staged_sel.empty()) {
      offsets[kStaged] = total;
      total += staged_sel.size();
      parts.push_back(gather_rows(staged->states, staged_sel));
    }
    if (!constant.empty()) {
      offsets[kConstant] = total;
      const std::size_t n = constant.size() / cfg_.d_mem;
      total += n;
      parts.emplace_back(Shape{n, cfg_.d_mem}, std::move(constant));
    }
    if (!projected_nodes.empty()) {
      offsets[kProjected] = total;
      total += projected_nodes.size();
      parts.push_back(matmul(gather_rows(features_, projected_nodes), *params_.projection));
    }
    if (parts.empty()) return Tensor<T>::zeros({0, cfg_.d_mem});
    const Tensor<T> stacked = parts.size() == 1 ? parts.front() : concat(parts, 0);
    bool identity = true;
    for (std::size_t i = 0; i < where.size(); ++i) {
      source[i] = offsets[where[i].first] + where[i].second;
      identity = identity && source[i] == i;
    }
    return identity ? stacked : gather_rows(stacked, source);
  }

  const TemporalGraph* graph_;
  ModelConfig cfg_;
  ModelParams<T> params_;
  Tensor<T> features_;
  MemoryState<T> memory_;
  std::optional<EventRange> pending_;
  std::size_t absorbed_until_ = 0;
  EventObserver observer_;
};

}  // namespace tgnrec
