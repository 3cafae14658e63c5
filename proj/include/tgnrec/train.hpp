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


// Chronological training, streaming ranking evaluation and the ablation grid.

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "tgnrec/decoder.hpp"
#include "tgnrec/metrics.hpp"
#include "tgnrec/model.hpp"
#include "tgnrec/optim.hpp"
#include "tgnrec/temporal_graph.hpp"
#include "tgnrec/tensor.hpp"

namespace tgnrec {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EvalConfig {
  std::size_t negatives = 49;
  std::vector<std::size_t> k_list{10, 20, 50};
  EvalProtocol protocol = EvalProtocol::kSinglePositive;
  std::uint64_t seed = 42;
  std::size_t batch_size = 200;
};

struct TrainConfig {
  std::size_t batch_size = 200;
  std::size_t epochs = 20;
  double lr = 1e-3;
  std::size_t d_mem = 32;
  std::size_t d_time = 32;
  std::size_t d_out = 32;
  std::size_t d_dec = 32;
  std::size_t heads = 2;
  std::size_t neighbors = 10;
  MessageVariant message = MessageVariant::kLearned;
  Aggregator aggregator = Aggregator::kLast;
  MemoryInit memory_init = MemoryInit::kFeatures;
  std::size_t negatives = 1;
  std::vector<std::size_t> k_list{10, 20, 50};
  std::uint64_t seed = 42;
  double train_fraction = 0.70;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  std::size_t eval_negatives = 49;
  EvalProtocol protocol = EvalProtocol::kSinglePositive;
  bool validate = true;

  void check() const {
    const auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(batch_size, "batch_size");
    positive(d_mem, "d_mem");
    positive(d_time, "d_time");
    positive(d_out, "d_out");
    positive(d_dec, "d_dec");
    positive(heads, "heads");
    positive(neighbors, "neighbors");
    positive(negatives, "negatives");
    positive(eval_negatives, "eval_negatives");
    if (d_mem < heads) throw ConfigError("d_mem must be at least the head count");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (k_list.empty()) throw ConfigError("k_list must not be empty");
    for (std::size_t i = 0; i < k_list.size(); ++i) {
      if (k_list[i] == 0) throw ConfigError("k_list entries must be positive");
      if (i && k_list[i] <= k_list[i - 1]) throw ConfigError("k_list must be ascending");
    }
    if (train_fraction <= 0 || val_fraction <= 0 || test_fraction <= 0 ||
        std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
      throw ConfigError("split fractions must be positive and sum to 1");
    }
  }

  ModelConfig model_config() const {
    ModelConfig m;
    m.d_mem = d_mem;
    m.d_time = d_time;
    m.d_out = d_out;
    m.d_dec = d_dec;
    m.heads = heads;
    m.neighbors = neighbors;
    m.batch_size = batch_size;
    m.message = message;
    m.aggregator = aggregator;
    m.memory_init = memory_init;
    m.seed = seed;
    return m;
  }

  EvalConfig eval_config() const {
    return {eval_negatives, k_list, protocol, seed, batch_size};
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// ---------------------------------------------------------------------------
// Evaluation.

/// Anything that can score candidate destinations and follow the event
/// stream: the trained model, or a baseline.
template <typename S>
concept LinkScorer = requires(S& s, std::size_t position, EventRange range,
                              std::span<const EmbeddingQuery> sources,
                              const std::vector<std::vector<NodeId>>& candidates) {
  s.seek(position);
  { s.score(sources, candidates) } -> std::same_as<std::vector<std::vector<double>>>;
  s.absorb(range);
};

template <typename T>
class ModelScorer {
 public:
  explicit ModelScorer(TgnModel<T>& model) : model_(&model) {}
  void seek(std::size_t position) { model_->seek(position); }
  std::vector<std::vector<double>> score(std::span<const EmbeddingQuery> sources,
                                         const std::vector<std::vector<NodeId>>& candidates) {
    return model_->score_candidates(sources, candidates);
  }
  void absorb(EventRange range) {
    for (std::size_t i = range.begin; i < range.end; ++i) model_->notify_query(i);
    model_->absorb(range);
  }

 private:
  TgnModel<T>* model_;
};

/// Independent standard-normal logits for every candidate.
class RandomScorer {
 public:
  explicit RandomScorer(std::uint64_t seed) : rng_(seed) {}
  void seek(std::size_t) {}
  std::vector<std::vector<double>> score(std::span<const EmbeddingQuery>,
                                         const std::vector<std::vector<NodeId>>& candidates) {
    std::normal_distribution<double> dist;
    std::vector<std::vector<double>> out;
    for (const auto& c : candidates) {
      auto& row = out.emplace_back();
      for (std::size_t i = 0; i < c.size(); ++i) row.push_back(dist(rng_));
    }
    return out;
  }
  void absorb(EventRange) {}

 private:
  Rng rng_;
};

/// Query groups of `range`: one event each, or each run of events sharing
/// (source, time) under the all-references protocol.
inline std::vector<EventRange> query_groups(const TemporalGraph& graph, EventRange range,
                                            EvalProtocol protocol) {
  std::vector<EventRange> groups;
  for (std::size_t i = range.begin; i < range.end;) {
    std::size_t j = i + 1;
    if (protocol == EvalProtocol::kAllReferences) {
      const Event& first = graph.event(i);
      while (j < range.end && graph.event(j).src == first.src && graph.event(j).t == first.t) ++j;
    }
    groups.push_back({i, j});
    i = j;
  }
  return groups;
}

/// `count` distinct uniform nodes from [0, universe) avoiding `exclude`.
inline std::vector<NodeId> sample_distinct_negatives(std::span<const NodeId> exclude,
                                                     std::size_t count,
                                                     std::size_t universe, Rng& rng) {
  std::unordered_set<NodeId> taken(exclude.begin(), exclude.end());
  if (universe < taken.size() + count) {
    throw std::invalid_argument("evaluation: " + std::to_string(count) +
                                " negatives requested but only " +
                                std::to_string(universe - taken.size()) +
                                " non-positive nodes exist");
  }
  std::uniform_int_distribution<std::size_t> pick(0, universe - 1);
  std::vector<NodeId> out;
  out.reserve(count);
  while (out.size() < count) {
    const auto v = static_cast<NodeId>(pick(rng));
    if (taken.insert(v).second) out.push_back(v);
  }
  return out;
}

/// Streaming evaluation over `range`: every query is scored against memory
/// holding all earlier events, then its events are absorbed.
template <LinkScorer Scorer>
MetricsReport evaluate(Scorer& scorer, const TemporalGraph& graph, EventRange range,
                       const EvalConfig& cfg) {
  if (range.empty()) throw std::invalid_argument("evaluate: empty split");
  if (cfg.k_list.empty()) throw std::invalid_argument("evaluate: empty K list");
  scorer.seek(range.begin);
  const auto groups = query_groups(graph, range, cfg.protocol);

  MetricsReport report;
  report.protocol = cfg.protocol;
  report.negatives = cfg.negatives;
  std::vector<std::size_t> ranks;
  std::vector<double> pos_scores, neg_scores;
  std::map<std::size_t, double> recall_sum, precision_sum;
  std::size_t recall_queries = 0;

  for (std::size_t g = 0; g < groups.size();) {
    // Batch whole groups until the batch holds at least batch_size events.
    const std::size_t first = g;
    std::size_t events = 0;
    while (g < groups.size() && (events == 0 || events < cfg.batch_size)) {
      events += groups[g].size();
      ++g;
    }
    std::vector<EmbeddingQuery> sources;
    std::vector<std::vector<NodeId>> candidates;
    std::vector<std::size_t> positive_count;
    for (std::size_t q = first; q < g; ++q) {
      const Event& head = graph.event(groups[q].begin);
      std::vector<NodeId> positives;
      for (std::size_t i = groups[q].begin; i < groups[q].end; ++i) {
        const NodeId d = graph.event(i).dst;
        if (std::find(positives.begin(), positives.end(), d) == positives.end())
          positives.push_back(d);
      }
      std::seed_seq seq{cfg.seed, std::uint64_t{0x5eed}, std::uint64_t{groups[q].begin}};
      Rng rng(seq);
      auto negatives = sample_distinct_negatives(positives, cfg.negatives,
                                                 graph.node_count(), rng);
      positive_count.push_back(positives.size());
      positives.insert(positives.end(), negatives.begin(), negatives.end());
      candidates.push_back(std::move(positives));
      sources.push_back({head.src, head.t});
    }
    const auto logits = scorer.score(sources, candidates);
    for (std::size_t q = 0; q < sources.size(); ++q) {
      const auto& cand = candidates[q];
      const auto& score = logits[q];
      const std::size_t npos = positive_count[q];
      const std::size_t nneg = cand.size() - npos;
      const auto before = [&](std::size_t a, std::size_t b) {
        return ranks_before({cand[a], score[a], 0.0}, {cand[b], score[b], 0.0});
      };
      std::vector<std::size_t> order(cand.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::sort(order.begin(), order.end(), before);
      for (std::size_t p = 0; p < npos; ++p) {
        std::size_t rank = 1;
        for (std::size_t n = npos; n < cand.size(); ++n)
          if (before(n, p)) ++rank;
        ranks.push_back(rank);
        pos_scores.push_back(score[p]);
        neg_scores.push_back(score[npos + p % nneg]);
      }
      ++report.queries;
      const auto hits_in_top = [&](std::size_t k) {
        std::size_t hits = 0;
        for (std::size_t r = 0; r < std::min(k, order.size()); ++r)
          if (order[r] < npos) ++hits;
        return hits;
      };
      bool counted = false;
      for (std::size_t k : cfg.k_list) {
        const std::size_t hits = hits_in_top(k);
        precision_sum[k] += precision_at_k(hits, k);
        if (auto rec = recall_at_k(hits, npos)) {
          recall_sum[k] += *rec;
          counted = true;
        }
      }
      if (counted) {
        ++recall_queries;
      } else {
        ++report.skipped_recall;
      }
    }
    scorer.absorb({groups[first].begin, groups[g - 1].end});
  }

  report.mrr = mrr(ranks);
  for (std::size_t k : cfg.k_list) {
    report.precision_at[k] = precision_sum[k] / static_cast<double>(report.queries);
    report.recall_at[k] =
        recall_queries ? recall_sum[k] / static_cast<double>(recall_queries) : 0.0;
  }
  report.ap = average_precision(pos_scores, neg_scores);
  report.auc = auc(pos_scores, neg_scores);
  return report;
}

// ---------------------------------------------------------------------------
// Training.

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double val_mrr = 0.0;
  double val_ap = 0.0;
  double val_auc = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

/// Resumable position of a training run.
struct TrainProgress {
  std::size_t completed_epochs = 0;
  bool in_epoch = false;
  std::size_t position = 0;     // next training event
  std::size_t batch_index = 0;  // within the current epoch
  double loss_sum = 0.0;
  std::size_t loss_batches = 0;
  std::vector<EpochRecord> history;

  friend bool operator==(const TrainProgress&, const TrainProgress&) = default;
};

enum class Phase { kTraining, kEvaluation };
using PhaseObserver = std::function<void(Phase, EventAccess, std::size_t event_index)>;

template <typename T>
class Trainer {
 public:
  Trainer(const TemporalGraph& graph, TrainConfig cfg)
      : graph_(&graph), cfg_((cfg.check(), cfg)),
        split_(graph.split_chronological(cfg_.train_fraction, cfg_.val_fraction,
                                         cfg_.test_fraction)),
        model_(graph, cfg_.model_config()),
        params_(model_.params().tensors()),
        adam_(params_, AdamHyper{cfg_.lr}) {
    if (graph.node_count() < 2) throw std::invalid_argument("Trainer: need at least 2 nodes");
  }

  const TrainConfig& config() const { return cfg_; }
  const ChronologicalSplit& split() const { return split_; }
  TgnModel<T>& model() { return model_; }
  const TgnModel<T>& model() const { return model_; }
  AdamState<T>& adam() { return adam_; }
  const AdamState<T>& adam() const { return adam_; }
  TrainProgress& progress() { return progress_; }
  const TrainProgress& progress() const { return progress_; }
  const std::vector<EpochRecord>& history() const { return progress_.history; }
  bool finished() const { return progress_.completed_epochs >= cfg_.epochs; }

  void set_observer(PhaseObserver observer) {
    observer_ = std::move(observer);
    if (observer_) {
      model_.set_observer([this](EventAccess a, std::size_t i) { observer_(phase_, a, i); });
    } else {
      model_.set_observer(nullptr);
    }
  }

  /// Trains until every epoch is done, or until `max_steps` optimizer steps
  /// have been taken by this call. Returns true once training is complete.
  bool run(std::optional<std::size_t> max_steps = std::nullopt) {
    std::size_t steps = 0;
    while (!finished()) {
      if (!progress_.in_epoch) begin_epoch();
      while (progress_.position < split_.train.end) {
        if (max_steps && steps == *max_steps) return false;
        train_step();
        ++steps;
      }
      end_epoch();
    }
    return true;
  }

  /// Loss of one optimizer step on events [position, position + batch).
  double train_step() {
    phase_ = Phase::kTraining;
    const std::size_t begin = progress_.position;
    const std::size_t end = std::min(split_.train.end, begin + cfg_.batch_size);
    const auto batch = graph_->events().subspan(begin, end - begin);
    const std::size_t k = batch.size();

    std::seed_seq seq{cfg_.seed, std::uint64_t{progress_.completed_epochs},
                      std::uint64_t{progress_.batch_index}};
    Rng rng(seq);
    std::vector<NodeId> dsts;
    for (const Event& e : batch) {
      model_.notify_query(e.id);
      dsts.push_back(e.dst);
    }
    const auto negs = sample_negatives(dsts, cfg_.negatives, graph_->node_count(), rng);

    std::vector<EmbeddingQuery> queries;
    queries.reserve(2 * k + negs.size());
    for (const Event& e : batch) queries.push_back({e.src, e.t});
    for (const Event& e : batch) queries.push_back({e.dst, e.t});
    std::vector<std::size_t> src_idx(k), dst_idx(k), rep_idx, neg_idx;
    for (std::size_t i = 0; i < negs.size(); ++i) {
      const std::size_t owner = i / cfg_.negatives;
      rep_idx.push_back(owner);
      neg_idx.push_back(queries.size());
      queries.push_back({negs[i], batch[owner].t});
    }
    std::iota(src_idx.begin(), src_idx.end(), std::size_t{0});
    std::iota(dst_idx.begin(), dst_idx.end(), k);

    zero_grads(params_);
    const Tensor<T> emb = model_.embed_queries(queries);
    const auto& dec = model_.params().decoder;
    const Tensor<T> pos = score_rows(gather_rows(emb, src_idx), gather_rows(emb, dst_idx), dec);
    const Tensor<T> neg = score_rows(gather_rows(emb, rep_idx), gather_rows(emb, neg_idx), dec);
    const Tensor<T> loss = bce_loss(pos, neg);
    backward(loss);
    adam_step(params_, adam_);
    zero_grads(params_);

    model_.absorb({begin, end});
    progress_.position = end;
    ++progress_.batch_index;
    progress_.loss_sum += static_cast<double>(loss.item());
    ++progress_.loss_batches;
    return static_cast<double>(loss.item());
  }

  /// Metrics over `range` with memory streamed from the model's current
  /// position (replaying or restarting as needed).
  MetricsReport evaluate_range(EventRange range) {
    phase_ = Phase::kEvaluation;
    ModelScorer<T> scorer(model_);
    return evaluate(scorer, *graph_, range, cfg_.eval_config());
  }

 private:
  void begin_epoch() {
    model_.reset_memory();
    progress_.in_epoch = true;
    progress_.position = split_.train.begin;
    progress_.batch_index = 0;
    progress_.loss_sum = 0.0;
    progress_.loss_batches = 0;
  }

  void end_epoch() {
    phase_ = Phase::kTraining;
    model_.flush();
    EpochRecord rec;
    rec.epoch = progress_.completed_epochs + 1;
    rec.loss = progress_.loss_batches
                   ? progress_.loss_sum / static_cast<double>(progress_.loss_batches)
                   : 0.0;
    if (cfg_.validate && !split_.val.empty()) {
      const auto saved = model_.checkpoint();
      const auto report = evaluate_range(split_.val);
      model_.restore(saved);
      rec.val_mrr = report.mrr;
      rec.val_ap = report.ap;
      rec.val_auc = report.auc;
    }
    progress_.history.push_back(rec);
    ++progress_.completed_epochs;
    progress_.in_epoch = false;
  }

  const TemporalGraph* graph_;
  TrainConfig cfg_;
  ChronologicalSplit split_;
  TgnModel<T> model_;
  std::vector<Tensor<T>> params_;
  AdamState<T> adam_;
  TrainProgress progress_;
  Phase phase_ = Phase::kTraining;
  PhaseObserver observer_;
};

/// Mean loss over the trailing `window` epochs ending at `epoch` (1-based).
inline double smoothed_loss(const std::vector<EpochRecord>& history, std::size_t epoch,
                            std::size_t window = 3) {
  if (epoch == 0 || epoch > history.size()) {
    throw std::out_of_range("smoothed_loss: epoch out of range");
  }
  const std::size_t first = epoch > window ? epoch - window : 0;
  double total = 0.0;
  for (std::size_t e = first; e < epoch; ++e) total += history[e].loss;
  return total / static_cast<double>(epoch - first);
}

// ---------------------------------------------------------------------------
// Ablation grid.

struct AblationCell {
  MessageVariant message = MessageVariant::kLearned;
  Aggregator aggregator = Aggregator::kLast;
  MemoryInit init = MemoryInit::kFeatures;

  friend bool operator==(const AblationCell&, const AblationCell&) = default;
};

struct AblationRow {
  AblationCell cell;
  MetricsReport test;
  std::vector<EpochRecord> history;
};

/// The 2x2x2 grid over initialization, message variant and aggregator.
inline std::vector<AblationCell> default_grid() {
  std::vector<AblationCell> cells;
  for (auto init : {MemoryInit::kZeros, MemoryInit::kFeatures})
    for (auto agg : {Aggregator::kMean, Aggregator::kLast})
      for (auto msg : {MessageVariant::kIdentity, MessageVariant::kLearned})
        cells.push_back({msg, agg, init});
  return cells;
}

template <typename T>
AblationRow run_cell(const TemporalGraph& graph, TrainConfig cfg, const AblationCell& cell) {
  cfg.message = cell.message;
  cfg.aggregator = cell.aggregator;
  cfg.memory_init = cell.init;
  Trainer<T> trainer(graph, cfg);
  trainer.run();
  return {cell, trainer.evaluate_range(trainer.split().test), trainer.history()};
}

template <typename T>
std::vector<AblationRow> run_ablation(const TemporalGraph& graph, const TrainConfig& base,
                                      const std::vector<AblationCell>& cells) {
  std::vector<AblationRow> rows;
  for (const auto& cell : cells) rows.push_back(run_cell<T>(graph, base, cell));
  return rows;
}

inline std::string to_string(MessageVariant m) {
  return m == MessageVariant::kIdentity ? "identity" : "learned";
}
inline std::string to_string(Aggregator a) { return a == Aggregator::kMean ? "mean" : "last"; }
inline std::string to_string(MemoryInit i) {
  return i == MemoryInit::kFeatures ? "features" : "zeros";
}

/// Comma-separated table with one row per cell, in the column order
/// encoder, initialization, message, aggregator, MRR, Recall@K..., Precision@K...
inline std::string format_ablation_table(const std::vector<AblationRow>& rows,
                                         const std::vector<std::size_t>& k_list) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "encoder,initialization,message,aggregator,MRR";
  for (std::size_t k : k_list) os << ",Recall@" << k;
  for (std::size_t k : k_list) os << ",Precision@" << k;
  os << ",protocol\n";
  for (const auto& r : rows) {
    os << "TGN-TRec," << (r.cell.init == MemoryInit::kFeatures ? "yes" : "no") << ','
       << (r.cell.message == MessageVariant::kIdentity ? "Id" : "Sl") << ','
       << to_string(r.cell.aggregator) << ',' << r.test.mrr;
    for (std::size_t k : k_list) os << ',' << r.test.recall_at.at(k);
    for (std::size_t k : k_list) os << ',' << r.test.precision_at.at(k);
    os << ',' << to_string(r.test.protocol) << '\n';
  }
  return os.str();
}

}  // namespace tgnrec
