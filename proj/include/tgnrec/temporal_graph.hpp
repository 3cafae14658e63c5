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


// Append-only continuous-time dynamic graph of citation events.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace tgnrec {

using NodeId = std::uint32_t;
using EventId = std::uint64_t;

/// One timestamped citation: `src` cites `dst` at time `t` (days).
struct Event {
  EventId id = 0;
  NodeId src = 0;
  NodeId dst = 0;
  double t = 0.0;
  std::vector<double> edge_feat;
};

/// Half-open range of event positions.
struct EventRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  friend bool operator==(const EventRange&, const EventRange&) = default;
};

struct ChronologicalSplit {
  EventRange train;
  EventRange val;
  EventRange test;
};

struct EventBatch {
  std::size_t batch_index = 0;
  EventRange range;
  std::span<const Event> events;
};

struct BatchCursor {
  EventRange range;
  std::size_t position = 0;
  std::size_t batch_index = 0;

  explicit BatchCursor(EventRange r) : range(r), position(r.begin) {}
};

struct TemporalNeighbor {
  NodeId node = 0;
  double time = 0.0;
  double delta = 0.0;  // query time minus event time, always > 0
  EventId event_id = 0;
};

/// Dense row-major feature matrix, one row per node.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * cols, cols};
  }
  bool empty() const { return rows == 0; }
};

/// Fixed-capacity per-node ring of the most recent interactions.
class NeighborIndex {
 public:
  struct Entry {
    NodeId neighbor = 0;
    double time = 0.0;
    EventId event_id = 0;
  };

  explicit NeighborIndex(std::size_t capacity = 10) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("NeighborIndex: capacity 0");
  }

  std::size_t capacity() const { return capacity_; }

  void insert(NodeId v, Entry e) {
    if (v >= rings_.size()) rings_.resize(v + 1);
    Ring& ring = rings_[v];
    if (ring.slots.size() < capacity_) {
      ring.slots.push_back(e);
    } else {
      ring.slots[ring.head] = e;
      ring.head = (ring.head + 1) % capacity_;
    }
  }

  std::size_t size(NodeId v) const {
    return v < rings_.size() ? rings_[v].slots.size() : 0;
  }

  /// Retained entries for `v`, most recent first.
  std::vector<Entry> entries(NodeId v) const {
    std::vector<Entry> out;
    if (v >= rings_.size()) return out;
    const Ring& ring = rings_[v];
    const std::size_t n = ring.slots.size();
    for (std::size_t k = 0; k < n; ++k) {
      // Oldest slot is `head` once the ring has wrapped.
      out.push_back(ring.slots[(ring.head + n - 1 - k) % n]);
    }
    return out;
  }

  /// Up to `n` retained entries strictly before `t`, most recent first.
  std::vector<Entry> recent(NodeId v, double t, std::size_t n) const {
    std::vector<Entry> out;
    for (const auto& e : entries(v)) {
      if (out.size() == n) break;
      if (e.time < t) out.push_back(e);
    }
    return out;
  }

 private:
  struct Ring {
    std::vector<Entry> slots;
    std::size_t head = 0;
  };
  std::size_t capacity_;
  std::vector<Ring> rings_;
};

class TemporalGraph {
 public:
  struct EventInput {
    NodeId src = 0;
    NodeId dst = 0;
    double t = 0.0;
    std::vector<double> edge_feat;
  };

  explicit TemporalGraph(std::size_t node_count = 0,
                         std::size_t neighbor_capacity = 10)
      : node_count_(node_count), recent_(neighbor_capacity) {
    adjacency_.resize(node_count);
  }

  /// Appends one event. Events must arrive in non-decreasing time order;
  /// use bulk_load for unsorted input.
  EventId add_event(NodeId src, NodeId dst, double t,
                    std::vector<double> edge_feat = {}) {
    if (frozen_) throw std::logic_error("add_event: graph is frozen");
    validate(src, dst, t);
    if (!events_.empty() && t < events_.back().t) {
      throw std::invalid_argument(
          "add_event: time " + std::to_string(t) + " precedes latest event " +
          std::to_string(events_.back().t) + "; use bulk_load");
    }
    append(src, dst, t, std::move(edge_feat));
    return events_.back().id;
  }

  /// Sorts `inputs` by (t, src, dst) and appends them. The order is a total
  /// function of the event contents, so any permutation of the same input
  /// yields the same event sequence.
  void bulk_load(std::vector<EventInput> inputs) {
    if (frozen_) throw std::logic_error("bulk_load: graph is frozen");
    for (const auto& in : inputs) validate(in.src, in.dst, in.t);
    std::sort(inputs.begin(), inputs.end(),
              [](const EventInput& a, const EventInput& b) {
                return std::tie(a.t, a.src, a.dst, a.edge_feat) <
                       std::tie(b.t, b.src, b.dst, b.edge_feat);
              });
    if (!inputs.empty() && !events_.empty() && inputs.front().t < events_.back().t) {
      throw std::invalid_argument(
          "bulk_load: batch starts before the latest existing event");
    }
    for (auto& in : inputs) append(in.src, in.dst, in.t, std::move(in.edge_feat));
  }

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  std::size_t node_count() const { return node_count_; }
  std::size_t event_count() const { return events_.size(); }
  std::span<const Event> events() const { return events_; }
  const Event& event(std::size_t i) const { return events_.at(i); }
  EventRange all_events() const { return {0, events_.size()}; }
  const NeighborIndex& recent_neighbors() const { return recent_; }

  /// Grows the node universe (for papers without any citation events).
  void ensure_nodes(std::size_t count) {
    if (count > node_count_) {
      node_count_ = count;
      adjacency_.resize(count);
    }
  }

  void set_node_features(FeatureMatrix features) {
    if (features.rows != node_count_) {
      throw std::invalid_argument(
          "set_node_features: " + std::to_string(features.rows) +
          " rows for " + std::to_string(node_count_) + " nodes");
    }
    features_ = std::move(features);
  }
  const FeatureMatrix& node_features() const { return features_; }

  /// Publication time per node, used to build default candidate pools.
  void set_node_times(std::vector<double> times) {
    if (times.size() != node_count_) {
      throw std::invalid_argument("set_node_times: size mismatch");
    }
    node_times_ = std::move(times);
  }
  const std::vector<double>& node_times() const { return node_times_; }

  /// Up to `n` most recent interactions of `v` strictly before `t`, most
  /// recent first. Unknown nodes have no neighbors.
  std::vector<TemporalNeighbor> temporal_neighbors(NodeId v, double t,
                                                   std::size_t n) const {
    if (!frozen_) {
      throw std::logic_error("temporal_neighbors: graph must be frozen");
    }
    std::vector<TemporalNeighbor> out;
    if (v >= adjacency_.size()) return out;
    const auto& adj = adjacency_[v];
    auto first_not_before = std::lower_bound(
        adj.begin(), adj.end(), t,
        [](const NeighborIndex::Entry& e, double q) { return e.time < q; });
    for (auto it = first_not_before; it != adj.begin() && out.size() < n;) {
      --it;
      out.push_back({it->neighbor, it->time, t - it->time, it->event_id});
    }
    return out;
  }

  /// Partitions the event sequence into consecutive train/val/test ranges
  /// with sizes proportional to `fractions`.
  ChronologicalSplit split_chronological(double train, double val,
                                         double test) const {
    if (events_.empty()) {
      throw std::invalid_argument("split_chronological: empty graph");
    }
    if (train <= 0.0 || val <= 0.0 || test <= 0.0) {
      throw std::invalid_argument(
          "split_chronological: every fraction must be positive");
    }
    if (std::abs(train + val + test - 1.0) > 1e-9) {
      throw std::invalid_argument("split_chronological: fractions must sum to 1");
    }
    const double n = static_cast<double>(events_.size());
    const auto cut = [&](double f) {
      return std::min(events_.size(),
                      static_cast<std::size_t>(std::floor(f * n + 1e-9)));
    };
    const std::size_t a = cut(train);
    const std::size_t b = std::max(a, cut(train + val));
    return {{0, a}, {a, b}, {b, events_.size()}};
  }

  /// Next consecutive slice of at most `batch_size` events from the cursor's
  /// range, or nullopt once the range is exhausted.
  std::optional<EventBatch> next_batch(BatchCursor& cursor,
                                       std::size_t batch_size) const {
    if (batch_size == 0) throw std::invalid_argument("next_batch: batch size 0");
    if (cursor.range.end > events_.size() || cursor.position < cursor.range.begin) {
      throw std::out_of_range("next_batch: cursor outside event list");
    }
    if (cursor.position >= cursor.range.end) return std::nullopt;
    const std::size_t end = std::min(cursor.range.end, cursor.position + batch_size);
    EventBatch batch{cursor.batch_index, {cursor.position, end},
                     std::span<const Event>(events_).subspan(
                         cursor.position, end - cursor.position)};
    cursor.position = end;
    ++cursor.batch_index;
    return batch;
  }

 private:
  static void validate(NodeId src, NodeId dst, double t) {
    if (src == dst) {
      throw std::invalid_argument("event rejected: self-citation of node " +
                                  std::to_string(src));
    }
    if (!(t >= 0.0) || !std::isfinite(t)) {
      throw std::invalid_argument("event rejected: invalid time " +
                                  std::to_string(t));
    }
  }

  void append(NodeId src, NodeId dst, double t, std::vector<double> feat) {
    const EventId id = events_.size();
    ensure_nodes(static_cast<std::size_t>(std::max(src, dst)) + 1);
    events_.push_back({id, src, dst, t, std::move(feat)});
    adjacency_[src].push_back({dst, t, id});
    adjacency_[dst].push_back({src, t, id});
    recent_.insert(src, {dst, t, id});
    recent_.insert(dst, {src, t, id});
  }

  std::size_t node_count_;
  std::vector<Event> events_;
  std::vector<std::vector<NeighborIndex::Entry>> adjacency_;
  NeighborIndex recent_;
  FeatureMatrix features_;
  std::vector<double> node_times_;
  bool frozen_ = false;
};

}  // namespace tgnrec
