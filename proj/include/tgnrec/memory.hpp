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


// Per-node memory: state storage, time encoding, bidirectional raw messages,
// per-batch message aggregation and the GRU updater.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "tgnrec/binary_io.hpp"
#include "tgnrec/init.hpp"
#include "tgnrec/temporal_graph.hpp"
#include "tgnrec/tensor.hpp"

namespace tgnrec {

enum class MessageVariant { kIdentity, kLearned };
enum class Aggregator { kMean, kLast };
enum class MemoryInit { kFeatures, kZeros };
// Only kGru is implemented; the other names are reserved.
enum class UpdaterKind { kGru, kRnn, kLstm };

/// Sorted set of node ids with O(log n) row lookup.
class NodeRows {
 public:
  NodeRows() = default;
  explicit NodeRows(std::vector<NodeId> ids) : ids_(std::move(ids)) {
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
  }

  std::size_t size() const { return ids_.size(); }
  const std::vector<NodeId>& ids() const { return ids_; }
  NodeId operator[](std::size_t i) const { return ids_[i]; }

  std::optional<std::size_t> find(NodeId v) const {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), v);
    if (it == ids_.end() || *it != v) return std::nullopt;
    return static_cast<std::size_t>(it - ids_.begin());
  }

  std::size_t index_of(NodeId v) const {
    auto i = find(v);
    if (!i) throw std::out_of_range("NodeRows: node " + std::to_string(v) + " absent");
    return *i;
  }

 private:
  std::vector<NodeId> ids_;
};

// ---------------------------------------------------------------------------
// Time encoding phi(dt) = cos(dt * omega + b).

template <typename T>
struct TimeEncoder {
  Tensor<T> omega;  // [1, d_time]
  Tensor<T> phase;  // [d_time]

  /// Frequencies on the geometric ladder 10^(-k * 10 / d_time), zero phases.
  static TimeEncoder init(std::size_t d_time) {
    std::vector<T> w(d_time);
    const double alpha = 10.0 / static_cast<double>(d_time);
    for (std::size_t k = 0; k < d_time; ++k)
      w[k] = static_cast<T>(1.0 / std::pow(10.0, static_cast<double>(k) * alpha));
    return {Tensor<T>({1, d_time}, std::move(w), true), zero_bias<T>(d_time)};
  }

  std::size_t dim() const { return phase.numel(); }

  /// Encodes each time gap into one row of a [k, d_time] tensor.
  Tensor<T> encode(std::span<const double> deltas) const {
    std::vector<T> col(deltas.size());
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      if (deltas[i] < 0.0) {
        throw std::invalid_argument("encode_time: negative time gap " +
                                    std::to_string(deltas[i]) +
                                    " (temporal leakage upstream)");
      }
      col[i] = static_cast<T>(deltas[i]);
    }
    Tensor<T> dt({deltas.size(), 1}, std::move(col));
    return cos(add(matmul(dt, omega), phase));
  }

  std::vector<T> encode_time(double delta) const {
    NoGradGuard<T> no_grad;
    const double d[1] = {delta};
    auto out = encode(d);
    return {out.data().begin(), out.data().end()};
  }
};

// ---------------------------------------------------------------------------
// GRU updater.

template <typename T>
struct GruParams {
  Tensor<T> W_ir, W_hr, W_iz, W_hz, W_in, W_hn;  // W_i*: [in, d], W_h*: [d, d]
  Tensor<T> b_ir, b_hr, b_iz, b_hz, b_in, b_hn;  // [d]

  static GruParams init(std::size_t input_dim, std::size_t hidden, Rng& rng) {
    GruParams p;
    p.W_ir = uniform_weight<T>(rng, input_dim, hidden);
    p.W_hr = uniform_weight<T>(rng, hidden, hidden);
    p.W_iz = uniform_weight<T>(rng, input_dim, hidden);
    p.W_hz = uniform_weight<T>(rng, hidden, hidden);
    p.W_in = uniform_weight<T>(rng, input_dim, hidden);
    p.W_hn = uniform_weight<T>(rng, hidden, hidden);
    p.b_ir = zero_bias<T>(hidden);
    p.b_hr = zero_bias<T>(hidden);
    p.b_iz = zero_bias<T>(hidden);
    p.b_hz = zero_bias<T>(hidden);
    p.b_in = zero_bias<T>(hidden);
    p.b_hn = zero_bias<T>(hidden);
    return p;
  }

  std::size_t input_dim() const { return W_ir.dim(0); }
  std::size_t hidden_dim() const { return W_hr.dim(0); }
};

/// Batched GRU step: `m` is [P, in] aggregated messages, `s` is [P, d]
/// previous states; returns the [P, d] updated states.
template <typename T>
Tensor<T> gru_cell(const Tensor<T>& m, const Tensor<T>& s, const GruParams<T>& p) {
  if (m.rank() != 2 || s.rank() != 2 || m.dim(0) != s.dim(0) ||
      m.dim(1) != p.input_dim() || s.dim(1) != p.hidden_dim()) {
    throw ShapeError("gru_cell: message " + shape_string(m.shape()) +
                     " / state " + shape_string(s.shape()) +
                     " incompatible with W_ir " + shape_string(p.W_ir.shape()));
  }
  const auto gate = [&](const Tensor<T>& wi, const Tensor<T>& bi,
                        const Tensor<T>& wh, const Tensor<T>& bh) {
    return sigmoid(add(add(add(matmul(m, wi), bi), matmul(s, wh)), bh));
  };
  const Tensor<T> r = gate(p.W_ir, p.b_ir, p.W_hr, p.b_hr);
  const Tensor<T> z = gate(p.W_iz, p.b_iz, p.W_hz, p.b_hz);
  const Tensor<T> n = tanh(add(add(matmul(m, p.W_in), p.b_in),
                               mul(r, add(matmul(s, p.W_hn), p.b_hn))));
  // (1 - z) * n + z * s
  return add(n, mul(z, sub(s, n)));
}

// ---------------------------------------------------------------------------
// Messages.

template <typename T>
struct MessageEncoderParams {
  Tensor<T> W;  // [2 * d_mem + d_time, d_msg]
  Tensor<T> b;  // [d_msg]

  static MessageEncoderParams init(std::size_t in, std::size_t out, Rng& rng) {
    return {uniform_weight<T>(rng, in, out), zero_bias<T>(out)};
  }
};

template <typename T>
struct RawMessage {
  NodeId target = 0;
  std::vector<T> payload;
  double t = 0.0;
  EventId event_id = 0;
};

/// Messages in tensor form: row r of `payloads` is addressed to targets[r].
template <typename T>
struct MessageBatch {
  Tensor<T> payloads;
  std::vector<NodeId> targets;
  std::vector<double> times;
  std::vector<EventId> event_ids;
};

/// Two messages per event, in event order: first to the citing node from
/// (s_src, s_dst, phi(t - last_src)), then to the cited node from
/// (s_dst, s_src, phi(t - last_dst)). `rows` holds previous states for the
/// nodes in `nodes`; `last_update` is indexed by node id.
template <typename T>
MessageBatch<T> build_messages(std::span<const Event> events, const NodeRows& nodes,
                               const Tensor<T>& rows,
                               std::span<const double> last_update,
                               const TimeEncoder<T>& time_encoder,
                               MessageVariant variant,
                               const MessageEncoderParams<T>* encoder) {
  MessageBatch<T> out;
  std::vector<std::size_t> self_idx, other_idx;
  std::vector<double> deltas;
  for (const Event& e : events) {
    const std::size_t i = nodes.index_of(e.src);
    const std::size_t j = nodes.index_of(e.dst);
    for (const auto& [target, self, other] :
         {std::tuple{e.src, i, j}, std::tuple{e.dst, j, i}}) {
      const double dt = e.t - last_update[target];
      if (dt < 0.0) {
        throw std::invalid_argument(
            "compute_raw_messages: event " + std::to_string(e.id) + " at t=" +
            std::to_string(e.t) + " precedes last update of node " +
            std::to_string(target));
      }
      self_idx.push_back(self);
      other_idx.push_back(other);
      deltas.push_back(dt);
      out.targets.push_back(target);
      out.times.push_back(e.t);
      out.event_ids.push_back(e.id);
    }
  }
  Tensor<T> payload = concat<T>({gather_rows(rows, self_idx),
                                 gather_rows(rows, other_idx),
                                 time_encoder.encode(deltas)},
                                1);
  if (variant == MessageVariant::kLearned) {
    if (encoder == nullptr) {
      throw std::invalid_argument("build_messages: learned variant needs encoder");
    }
    payload = relu(add(matmul(payload, encoder->W), encoder->b));
  }
  out.payloads = std::move(payload);
  return out;
}

/// Which messages feed each target node's aggregate.
struct AggregationPlan {
  NodeRows nodes;
  std::vector<std::vector<std::size_t>> members;  // message indices per node
  std::vector<double> times;                      // effective time per node
};

/// Mean keeps every message and takes the latest time; last keeps only the
/// message with the greatest (time, event id).
inline AggregationPlan plan_aggregation(std::span<const NodeId> targets,
                                        std::span<const double> times,
                                        std::span<const EventId> event_ids,
                                        Aggregator mode) {
  AggregationPlan plan;
  plan.nodes = NodeRows(std::vector<NodeId>(targets.begin(), targets.end()));
  plan.members.resize(plan.nodes.size());
  plan.times.assign(plan.nodes.size(), 0.0);
  for (std::size_t r = 0; r < targets.size(); ++r) {
    const std::size_t p = plan.nodes.index_of(targets[r]);
    auto& group = plan.members[p];
    if (mode == Aggregator::kMean) {
      group.push_back(r);
      plan.times[p] = group.size() == 1 ? times[r] : std::max(plan.times[p], times[r]);
    } else if (group.empty() ||
               std::tie(times[r], event_ids[r]) >=
                   std::tie(times[group[0]], event_ids[group[0]])) {
      group.assign(1, r);
      plan.times[p] = times[r];
    }
  }
  return plan;
}

/// Aggregated [P, d] message tensor for the plan's nodes.
template <typename T>
Tensor<T> aggregate_rows(const Tensor<T>& payloads, const AggregationPlan& plan) {
  const std::size_t count = payloads.dim(0);
  bool singletons = true;
  for (const auto& g : plan.members) singletons = singletons && g.size() == 1;
  if (singletons) {
    std::vector<std::size_t> idx;
    for (const auto& g : plan.members) idx.push_back(g[0]);
    return gather_rows(payloads, idx);
  }
  std::vector<T> weights(plan.nodes.size() * count, T{0});
  for (std::size_t p = 0; p < plan.members.size(); ++p) {
    const T w = T{1} / static_cast<T>(plan.members[p].size());
    for (std::size_t r : plan.members[p]) weights[p * count + r] = w;
  }
  return matmul(Tensor<T>({plan.nodes.size(), count}, std::move(weights)), payloads);
}

// ---------------------------------------------------------------------------
// Memory state.

template <typename T>
class MemoryState {
 public:
  MemoryState() = default;
  MemoryState(std::size_t node_count, std::size_t dim)
      : node_count_(node_count),
        dim_(dim),
        states_(node_count * dim, T{0}),
        last_update_(node_count, 0.0),
        touched_(node_count, 0) {}

  std::size_t node_count() const { return node_count_; }
  std::size_t dim() const { return dim_; }

  std::span<const T> row(NodeId v) const {
    check(v);
    return {states_.data() + static_cast<std::size_t>(v) * dim_, dim_};
  }
  std::span<const T> states() const { return states_; }
  std::span<const double> last_update() const { return last_update_; }
  double last_update(NodeId v) const { check(v); return last_update_[v]; }
  /// True once the node has received at least one memory update.
  bool touched(NodeId v) const { check(v); return touched_[v] != 0; }

  void set_initial_row(NodeId v, std::span<const T> values) {
    check(v);
    if (values.size() != dim_) throw ShapeError("set_initial_row: width mismatch");
    std::copy(values.begin(), values.end(), states_.begin() + v * dim_);
  }

  /// Replaces node `v`'s state after an update at `time`.
  void write(NodeId v, std::span<const T> values, double time) {
    check(v);
    if (values.size() != dim_) {
      throw ShapeError("memory write: width " + std::to_string(values.size()) +
                       " vs d_mem " + std::to_string(dim_));
    }
    if (time < last_update_[v]) {
      throw std::invalid_argument("memory write: time " + std::to_string(time) +
                                  " precedes last update of node " +
                                  std::to_string(v));
    }
    std::copy(values.begin(), values.end(), states_.begin() + static_cast<std::size_t>(v) * dim_);
    last_update_[v] = time;
    touched_[v] = 1;
  }

  MemoryState snapshot() const { return *this; }

  void restore(const MemoryState& checkpoint) {
    if (checkpoint.dim_ != dim_ || checkpoint.node_count_ != node_count_) {
      throw ShapeError("memory restore: checkpoint is " +
                       std::to_string(checkpoint.node_count_) + "x" +
                       std::to_string(checkpoint.dim_) + ", memory is " +
                       std::to_string(node_count_) + "x" + std::to_string(dim_));
    }
    *this = checkpoint;
  }

  /// Header (d_mem, node_count, precision bytes), row-major states,
  /// last_update times, then the touched mask.
  void serialize(io::Writer& w) const {
    w.put<std::uint64_t>(dim_);
    w.put<std::uint64_t>(node_count_);
    w.put<std::uint8_t>(sizeof(T));
    w.put_array(states_);
    w.put_array(last_update_);
    w.put_array(touched_);
  }

  static MemoryState deserialize(io::Reader& r) {
    const auto dim = r.get<std::uint64_t>();
    const auto nodes = r.get<std::uint64_t>();
    const auto precision = r.get<std::uint8_t>();
    if (precision != sizeof(T)) {
      throw io::FormatError("memory block precision " + std::to_string(precision) +
                            " bytes, expected " + std::to_string(sizeof(T)));
    }
    MemoryState m(nodes, dim);
    m.states_ = r.get_array<T>(nodes * dim);
    m.last_update_ = r.get_array<double>(nodes);
    m.touched_ = r.get_array<std::uint8_t>(nodes);
    return m;
  }

  friend bool operator==(const MemoryState&, const MemoryState&) = default;

 private:
  void check(NodeId v) const {
    if (v >= node_count_) {
      throw std::out_of_range("memory: node " + std::to_string(v) + " out of range");
    }
  }

  std::size_t node_count_ = 0;
  std::size_t dim_ = 0;
  std::vector<T> states_;
  std::vector<double> last_update_;
  std::vector<std::uint8_t> touched_;
};

/// Initial memory S(t0): zeros, the feature rows themselves (when their width
/// equals d_mem and no projection is given), or features * projection.
template <typename T>
MemoryState<T> init_memory(std::size_t node_count, std::size_t d_mem,
                           const FeatureMatrix* features = nullptr,
                           const Tensor<T>* projection = nullptr) {
  MemoryState<T> m(node_count, d_mem);
  if (features == nullptr || features->empty()) return m;
  if (features->rows != node_count) {
    throw std::invalid_argument("init_memory: " + std::to_string(features->rows) +
                                " feature rows for " + std::to_string(node_count) +
                                " nodes");
  }
  if (projection == nullptr) {
    if (features->cols != d_mem) {
      throw ShapeError("init_memory: feature width " + std::to_string(features->cols) +
                       " differs from d_mem " + std::to_string(d_mem) +
                       " and no projection given");
    }
    for (std::size_t v = 0; v < node_count; ++v) {
      std::vector<T> row(features->row(v).begin(), features->row(v).end());
      m.set_initial_row(static_cast<NodeId>(v), row);
    }
    return m;
  }
  NoGradGuard<T> no_grad;
  std::vector<T> x(features->values.begin(), features->values.end());
  const Tensor<T> s = matmul(Tensor<T>({features->rows, features->cols}, std::move(x)),
                             *projection);
  if (s.dim(1) != d_mem) {
    throw ShapeError("init_memory: projection " + shape_string(projection->shape()) +
                     " does not map to d_mem " + std::to_string(d_mem));
  }
  for (std::size_t v = 0; v < node_count; ++v)
    m.set_initial_row(static_cast<NodeId>(v),
                      s.data().subspan(v * d_mem, d_mem));
  return m;
}

/// Gathers the current states of `nodes` into a constant [P, d] tensor.
template <typename T>
Tensor<T> memory_rows(const MemoryState<T>& memory, const NodeRows& nodes) {
  std::vector<T> out;
  out.reserve(nodes.size() * memory.dim());
  for (NodeId v : nodes.ids()) {
    auto r = memory.row(v);
    out.insert(out.end(), r.begin(), r.end());
  }
  return Tensor<T>({nodes.size(), memory.dim()}, std::move(out));
}

/// Raw messages for a batch read from stored memory (no differentiation).
template <typename T>
std::vector<RawMessage<T>> compute_raw_messages(std::span<const Event> events,
                                                const MemoryState<T>& memory,
                                                const TimeEncoder<T>& time_encoder,
                                                MessageVariant variant,
                                                const MessageEncoderParams<T>* encoder) {
  NoGradGuard<T> no_grad;
  std::vector<NodeId> touched;
  for (const Event& e : events) {
    touched.push_back(e.src);
    touched.push_back(e.dst);
  }
  const NodeRows nodes(std::move(touched));
  const auto batch = build_messages(events, nodes, memory_rows(memory, nodes),
                                    memory.last_update(), time_encoder, variant, encoder);
  std::vector<RawMessage<T>> out;
  const std::size_t width = batch.payloads.dim(1);
  for (std::size_t r = 0; r < batch.targets.size(); ++r) {
    auto p = batch.payloads.data().subspan(r * width, width);
    out.push_back({batch.targets[r], {p.begin(), p.end()}, batch.times[r],
                   batch.event_ids[r]});
  }
  return out;
}

template <typename T>
struct AggregatedMessage {
  std::vector<T> payload;
  double t = 0.0;
};

template <typename T>
std::map<NodeId, AggregatedMessage<T>> aggregate(std::span<const RawMessage<T>> messages,
                                                 Aggregator mode) {
  std::map<NodeId, AggregatedMessage<T>> out;
  if (messages.empty()) return out;
  std::vector<NodeId> targets;
  std::vector<double> times;
  std::vector<EventId> ids;
  for (const auto& m : messages) {
    targets.push_back(m.target);
    times.push_back(m.t);
    ids.push_back(m.event_id);
  }
  const auto plan = plan_aggregation(targets, times, ids, mode);
  const std::size_t width = messages.front().payload.size();
  for (std::size_t p = 0; p < plan.nodes.size(); ++p) {
    AggregatedMessage<T> agg{std::vector<T>(width, T{0}), plan.times[p]};
    const auto& group = plan.members[p];
    for (std::size_t r : group) {
      if (messages[r].payload.size() != width) {
        throw ShapeError("aggregate: payload widths differ");
      }
      for (std::size_t k = 0; k < width; ++k)
        agg.payload[k] += messages[r].payload[k] / static_cast<T>(group.size());
    }
    out.emplace(plan.nodes[p], std::move(agg));
  }
  return out;
}

/// Applies one GRU step to every node with an aggregated message; other
/// nodes are left untouched.
template <typename T>
void update_memory(MemoryState<T>& memory,
                   const std::map<NodeId, AggregatedMessage<T>>& aggregated,
                   const GruParams<T>& gru) {
  if (aggregated.empty()) return;
  NoGradGuard<T> no_grad;
  std::vector<NodeId> ids;
  std::vector<T> m;
  for (const auto& [v, agg] : aggregated) {
    if (agg.payload.size() != gru.input_dim()) {
      throw ShapeError("update_memory: message width " +
                       std::to_string(agg.payload.size()) + " vs GRU input " +
                       std::to_string(gru.input_dim()));
    }
    if (agg.t < memory.last_update(v)) {
      throw std::invalid_argument("update_memory: message older than node state");
    }
    ids.push_back(v);
    m.insert(m.end(), agg.payload.begin(), agg.payload.end());
  }
  if (memory.dim() != gru.hidden_dim()) {
    throw ShapeError("update_memory: d_mem " + std::to_string(memory.dim()) +
                     " vs GRU hidden " + std::to_string(gru.hidden_dim()));
  }
  const NodeRows nodes(ids);  // map order is already sorted
  const Tensor<T> s = memory_rows(memory, nodes);
  const Tensor<T> next =
      gru_cell(Tensor<T>({ids.size(), gru.input_dim()}, std::move(m)), s, gru);
  for (std::size_t p = 0; p < ids.size(); ++p)
    memory.write(ids[p], next.data().subspan(p * memory.dim(), memory.dim()),
                 aggregated.at(ids[p]).t);
}

}  // namespace tgnrec
