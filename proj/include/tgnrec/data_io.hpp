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


// Citation dump ingestion, the synthetic citation generator and training
// checkpoints.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tgnrec/binary_io.hpp"
#include "tgnrec/config.hpp"
#include "tgnrec/temporal_graph.hpp"
#include "tgnrec/train.hpp"

namespace tgnrec {

using Date = std::chrono::sys_days;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Strict YYYY-MM-DD. Returns nullopt for anything else, including
/// impossible calendar dates.
inline std::optional<Date> parse_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0, d = 0;
  const auto digits = [&](std::size_t from, std::size_t n, auto& out) {
    for (std::size_t i = from; i < from + n; ++i) {
      if (s[i] < '0' || s[i] > '9') return false;
      out = out * 10 + static_cast<std::remove_reference_t<decltype(out)>>(s[i] - '0');
    }
    return true;
  };
  if (!digits(0, 4, y) || !digits(5, 2, m) || !digits(8, 2, d)) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return Date{ymd};
}

inline std::string format_date(Date date) {
  const std::chrono::year_month_day ymd{date};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

struct PaperRecord {
  std::string id;
  Date date;
  std::vector<std::string> references;
  std::vector<double> features;  // empty when not provided
};

struct IngestReport {
  std::size_t lines = 0;
  std::size_t papers = 0;
  std::size_t events = 0;
  std::size_t rejected_dates = 0;
  std::size_t rejected_malformed = 0;
  std::size_t duplicate_ids = 0;
  std::vector<std::size_t> rejected_lines;  // 1-based
  std::size_t unknown_references = 0;
  std::size_t self_citations = 0;
  std::size_t repeated_references = 0;
  std::size_t missing_embeddings = 0;
  std::size_t unknown_embeddings = 0;
};

inline std::string format_ingest_report(const IngestReport& r) {
  std::ostringstream os;
  os << "papers=" << r.papers << " events=" << r.events
     << " rejected_dates=" << r.rejected_dates << " rejected_malformed=" << r.rejected_malformed
     << " duplicate_ids=" << r.duplicate_ids << " unknown_references=" << r.unknown_references
     << " self_citations=" << r.self_citations
     << " repeated_references=" << r.repeated_references
     << " missing_embeddings=" << r.missing_embeddings
     << " unknown_embeddings=" << r.unknown_embeddings;
  return os.str();
}

/// A graph together with its external id map. Models hold a pointer to
/// `graph`, so keep the dataset in place while they live.
struct CitationDataset {
  TemporalGraph graph;
  std::vector<std::string> ids;
  std::unordered_map<std::string, NodeId> index;
  std::vector<Date> dates;
  Date epoch{};
  IngestReport report;

  std::optional<NodeId> find(const std::string& id) const {
    auto it = index.find(id);
    if (it == index.end()) return std::nullopt;
    return it->second;
  }
};

/// Builds the graph: ids numbered in record order, one event per
/// (paper, known reference) at t = days since the earliest paper.
inline CitationDataset build_dataset(const std::vector<PaperRecord>& records,
                                     IngestReport report = {}, std::size_t neighbor_capacity = 10) {
  CitationDataset ds;
  for (const auto& rec : records) {
    if (ds.index.count(rec.id)) {
      ++report.duplicate_ids;
      continue;
    }
    ds.index.emplace(rec.id, static_cast<NodeId>(ds.ids.size()));
    ds.ids.push_back(rec.id);
    ds.dates.push_back(rec.date);
  }
  const std::size_t n = ds.ids.size();
  if (n > 0) ds.epoch = *std::min_element(ds.dates.begin(), ds.dates.end());

  std::size_t feature_dim = 0;
  bool any_features = false;
  for (const auto& rec : records) {
    if (rec.features.empty()) continue;
    if (any_features && rec.features.size() != feature_dim) {
      throw DataError("embedding dim inconsistency: paper " + rec.id + " has " +
                      std::to_string(rec.features.size()) + " values, expected " +
                      std::to_string(feature_dim));
    }
    feature_dim = rec.features.size();
    any_features = true;
  }

  ds.graph = TemporalGraph(n, neighbor_capacity);
  std::vector<TemporalGraph::EventInput> inputs;
  std::vector<bool> seen_record(n, false);
  FeatureMatrix features{n, feature_dim, std::vector<double>(n * feature_dim, 0.0)};
  for (const auto& rec : records) {
    const NodeId src = ds.index.at(rec.id);
    if (seen_record[src]) continue;  // duplicate id
    seen_record[src] = true;
    if (any_features) {
      if (rec.features.empty()) {
        ++report.missing_embeddings;
      } else {
        std::copy(rec.features.begin(), rec.features.end(),
                  features.values.begin() + static_cast<std::ptrdiff_t>(src * feature_dim));
      }
    }
    const double t = static_cast<double>((rec.date - ds.epoch).count());
    std::unordered_set<NodeId> cited;
    for (const auto& ref : rec.references) {
      auto it = ds.index.find(ref);
      if (it == ds.index.end()) {
        ++report.unknown_references;
      } else if (it->second == src) {
        ++report.self_citations;
      } else if (!cited.insert(it->second).second) {
        ++report.repeated_references;
      } else {
        inputs.push_back({src, it->second, t, {}});
      }
    }
  }
  report.papers = n;
  report.events = inputs.size();
  ds.graph.bulk_load(std::move(inputs));
  if (any_features) ds.graph.set_node_features(std::move(features));
  std::vector<double> times(n);
  for (std::size_t v = 0; v < n; ++v)
    times[v] = static_cast<double>((ds.dates[v] - ds.epoch).count());
  ds.graph.set_node_times(std::move(times));
  ds.graph.freeze();
  ds.report = std::move(report);
  return ds;
}

/// Reads "id|YYYY-MM-DD|ref1,ref2,..." lines. Blank lines and lines
/// starting with '#' are ignored; bad records are counted and skipped.
inline std::vector<PaperRecord> parse_papers(std::istream& in, IngestReport& report) {
  std::vector<PaperRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    ++report.lines;
    const auto fields = detail::split(body, '|');
    if (fields.size() < 2 || fields.size() > 3 || fields[0].empty()) {
      ++report.rejected_malformed;
      report.rejected_lines.push_back(line_no);
      continue;
    }
    const auto date = parse_date(fields[1]);
    if (!date) {
      ++report.rejected_dates;
      report.rejected_lines.push_back(line_no);
      continue;
    }
    PaperRecord rec{std::string(fields[0]), *date, {}, {}};
    if (fields.size() == 3 && !fields[2].empty()) {
      for (auto ref : detail::split(fields[2], ','))
        if (!ref.empty()) rec.references.emplace_back(ref);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

/// Reads a "dim D" header and then "id v1 ... vD" lines into the matching
/// records' feature vectors.
inline void attach_embeddings(std::istream& in, std::vector<PaperRecord>& records,
                              IngestReport& report) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> dim;
  std::unordered_map<std::string, std::size_t> where;
  for (std::size_t i = 0; i < records.size(); ++i) where.emplace(records[i].id, i);
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string head;
    if (!(ls >> head) || head.front() == '#') continue;
    if (!dim) {
      std::size_t d = 0;
      if (head != "dim" || !(ls >> d) || d == 0) {
        throw DataError("embeddings line " + std::to_string(line_no) +
                        ": expected header 'dim D'");
      }
      dim = d;
      continue;
    }
    std::vector<double> values;
    double v = 0;
    while (ls >> v) values.push_back(v);
    if (!ls.eof()) {
      throw DataError("embeddings line " + std::to_string(line_no) + ": bad number");
    }
    if (values.size() != *dim) {
      throw DataError("embedding dim inconsistency at line " + std::to_string(line_no) + ": " +
                      std::to_string(values.size()) + " values, header declares " +
                      std::to_string(*dim));
    }
    auto it = where.find(head);
    if (it == where.end()) {
      ++report.unknown_embeddings;
      continue;
    }
    records[it->second].features = std::move(values);
  }
  if (!dim) throw DataError("embeddings file is empty");
}

inline CitationDataset load_citation_dataset(const std::string& papers_path,
                                             const std::optional<std::string>& embeddings_path = {},
                                             std::size_t neighbor_capacity = 10) {
  std::ifstream papers(papers_path);
  if (!papers) throw DataError("cannot open papers file " + papers_path);
  IngestReport report;
  auto records = parse_papers(papers, report);
  if (embeddings_path) {
    std::ifstream emb(*embeddings_path);
    if (!emb) throw DataError("cannot open embeddings file " + *embeddings_path);
    attach_embeddings(emb, records, report);
  }
  return build_dataset(records, std::move(report), neighbor_capacity);
}

inline void write_papers(std::ostream& os, const std::vector<PaperRecord>& records) {
  for (const auto& r : records) {
    os << r.id << '|' << format_date(r.date) << '|';
    for (std::size_t i = 0; i < r.references.size(); ++i) os << (i ? "," : "") << r.references[i];
    os << '\n';
  }
}

inline void write_embeddings(std::ostream& os, const std::vector<PaperRecord>& records) {
  std::size_t dim = 0;
  for (const auto& r : records) dim = std::max(dim, r.features.size());
  os << "dim " << dim << '\n';
  os.precision(17);
  for (const auto& r : records) {
    if (r.features.empty()) continue;
    os << r.id;
    for (double v : r.features) os << ' ' << v;
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Synthetic citation networks.

struct SyntheticConfig {
  std::size_t nodes = 500;
  double mean_out_degree = 10.0;
  double exponent = 1.0;           // preferential attachment on (in-degree + 1)
  double half_life = 365.0;        // days; infinity disables recency decay
  std::size_t feature_dim = 16;
  double arrival_rate = 1.0;       // papers per day
  std::size_t topics = 5;
  double cross_topic_weight = 0.1; // attachment multiplier across topics
  double feature_noise = 0.5;      // spread around the topic centre
  std::uint64_t seed = 42;
  std::string start_date = "2000-01-01";

  void check() const {
    if (nodes == 0) throw std::invalid_argument("synthetic: nodes must be positive");
    if (!(mean_out_degree > 0)) throw std::invalid_argument("synthetic: mean out-degree must be positive");
    if (mean_out_degree >= static_cast<double>(nodes) && nodes > 1)
      throw std::invalid_argument("synthetic: mean out-degree must be below the node count");
    if (!(exponent >= 0)) throw std::invalid_argument("synthetic: exponent must be >= 0");
    if (!(half_life > 0)) throw std::invalid_argument("synthetic: half-life must be positive");
    if (feature_dim == 0) throw std::invalid_argument("synthetic: feature dim must be positive");
    if (!(arrival_rate > 0)) throw std::invalid_argument("synthetic: arrival rate must be positive");
    if (topics == 0) throw std::invalid_argument("synthetic: topics must be positive");
    if (!(cross_topic_weight > 0) || cross_topic_weight > 1)
      throw std::invalid_argument("synthetic: cross-topic weight must be in (0, 1]");
    if (!(feature_noise >= 0)) throw std::invalid_argument("synthetic: feature noise must be >= 0");
    if (!parse_date(start_date)) throw std::invalid_argument("synthetic: bad start date");
  }
};

/// Papers arrive as a Poisson process with day-granular dates. Each paper
/// cites Poisson(mean) earlier papers, drawn without replacement with
/// weight (in-degree + 1)^exponent * 2^(-age / half_life), scaled by
/// cross_topic_weight across topics. Features are Gaussian around a
/// per-topic centre.
inline std::vector<PaperRecord> generate_synthetic_records(const SyntheticConfig& cfg) {
  cfg.check();
  Rng rng(cfg.seed);
  std::normal_distribution<double> gauss;
  std::vector<std::vector<double>> centres(cfg.topics, std::vector<double>(cfg.feature_dim));
  for (auto& c : centres)
    for (auto& x : c) x = gauss(rng);

  const std::size_t n = cfg.nodes;
  std::vector<std::size_t> topic(n);
  std::vector<double> day(n);
  std::vector<double> indeg(n, 0.0);
  std::uniform_int_distribution<std::size_t> pick_topic(0, cfg.topics - 1);
  std::exponential_distribution<double> gap(cfg.arrival_rate);
  std::poisson_distribution<int> out_degree(cfg.mean_out_degree);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Date start = *parse_date(cfg.start_date);

  std::vector<PaperRecord> records(n);
  double clock = 0.0;
  std::vector<std::pair<double, std::size_t>> keys;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) clock += gap(rng);
    day[i] = std::floor(clock);
    topic[i] = pick_topic(rng);
    auto& rec = records[i];
    rec.id = "P" + std::to_string(i);
    rec.date = start + std::chrono::days(static_cast<long>(day[i]));
    rec.features.resize(cfg.feature_dim);
    for (std::size_t k = 0; k < cfg.feature_dim; ++k)
      rec.features[k] = centres[topic[i]][k] + cfg.feature_noise * gauss(rng);

    const auto want = std::min<std::size_t>(static_cast<std::size_t>(out_degree(rng)), i);
    if (want == 0) continue;
    // Weighted sampling without replacement: keep the `want` largest
    // log(u) / w keys.
    keys.clear();
    for (std::size_t j = 0; j < i; ++j) {
      double w = std::pow(indeg[j] + 1.0, cfg.exponent);
      if (std::isfinite(cfg.half_life)) w *= std::exp2(-(day[i] - day[j]) / cfg.half_life);
      if (topic[j] != topic[i]) w *= cfg.cross_topic_weight;
      const double u = std::max(unit(rng), std::numeric_limits<double>::min());
      keys.emplace_back(w > 0 ? std::log(u) / w : -std::numeric_limits<double>::infinity(), j);
    }
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(want), keys.end(),
                      [](const auto& a, const auto& b) {
                        return a.first > b.first || (a.first == b.first && a.second < b.second);
                      });
    for (std::size_t r = 0; r < want; ++r) {
      const std::size_t j = keys[r].second;
      rec.references.push_back(records[j].id);
      indeg[j] += 1.0;
    }
  }
  return records;
}

inline CitationDataset generate_synthetic(const SyntheticConfig& cfg,
                                          std::size_t neighbor_capacity = 10) {
  return build_dataset(generate_synthetic_records(cfg), {}, neighbor_capacity);
}

// ---------------------------------------------------------------------------
// Checkpoints.

inline constexpr char kCheckpointMagic[8] = {'T', 'G', 'N', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Header fields readable without building a model.
struct CheckpointInfo {
  std::uint32_t version = 0;
  std::uint8_t precision = 0;  // bytes per scalar
  TrainConfig config;
  std::string data_path;
  std::string embeddings_path;
};

namespace detail {

inline void write_tensor(io::Writer& w, const std::string& name, const auto& t) {
  using T = std::remove_cvref_t<decltype(t.data()[0])>;
  w.put_string(name);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) w.put<std::uint64_t>(d);
  for (T v : t.data()) w.put<T>(v);
}

template <typename T>
void read_tensor_into(io::Reader& r, const std::string& name, Tensor<T>& t) {
  const auto offset = r.offset();
  const std::string got = r.get_string();
  if (got != name) {
    throw io::FormatError("checkpoint: expected tensor " + name + ", found " + got +
                          " at byte offset " + std::to_string(offset));
  }
  const auto rank = r.get<std::uint32_t>();
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.get<std::uint64_t>());
  if (shape != t.shape()) {
    throw ShapeError("checkpoint: tensor " + name + " has shape " + shape_string(shape) +
                     " but the model expects " + shape_string(t.shape()));
  }
  auto values = r.get_array<T>(t.numel());
  std::copy(values.begin(), values.end(), t.mutable_data().begin());
}

inline CheckpointInfo read_header(io::Reader& r) {
  char magic[8];
  r.read_raw(magic, 8);
  if (!std::equal(magic, magic + 8, kCheckpointMagic)) {
    throw io::FormatError("not a tgnrec checkpoint");
  }
  CheckpointInfo info;
  info.version = r.get<std::uint32_t>();
  if (info.version != kCheckpointVersion) {
    throw io::FormatError("checkpoint version " + std::to_string(info.version) +
                          " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  info.precision = r.get<std::uint8_t>();
  info.config = parse_config(r.get_string());
  info.data_path = r.get_string();
  info.embeddings_path = r.get_string();
  return info;
}

}  // namespace detail

/// Writes parameters, memory, optimizer and training progress.
template <typename T>
void save_checkpoint(std::ostream& os, const Trainer<T>& trainer, const std::string& data_path = {},
                     const std::string& embeddings_path = {}) {
  io::Writer w(os);
  w.put_bytes(kCheckpointMagic, 8);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(sizeof(T)));
  w.put_string(config_to_text(trainer.config()));
  w.put_string(data_path);
  w.put_string(embeddings_path);

  const auto named = trainer.model().params().named();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) detail::write_tensor(w, name, t);

  const auto& model = trainer.model();
  model.memory().serialize(w);
  const auto pending = model.pending();
  w.put<std::uint8_t>(pending ? 1 : 0);
  w.put<std::uint64_t>(pending ? pending->begin : 0);
  w.put<std::uint64_t>(pending ? pending->end : 0);
  w.put<std::uint64_t>(model.absorbed_until());

  const auto& adam = trainer.adam();
  w.put<std::uint64_t>(adam.step);
  for (std::size_t i = 0; i < named.size(); ++i) {
    w.put_array(adam.m[i]);
    w.put_array(adam.v[i]);
  }

  const auto& p = trainer.progress();
  w.put<std::uint64_t>(p.completed_epochs);
  w.put<std::uint8_t>(p.in_epoch ? 1 : 0);
  w.put<std::uint64_t>(p.position);
  w.put<std::uint64_t>(p.batch_index);
  w.put<double>(p.loss_sum);
  w.put<std::uint64_t>(p.loss_batches);
  w.put<std::uint64_t>(p.history.size());
  for (const auto& rec : p.history) {
    w.put<std::uint64_t>(rec.epoch);
    w.put<double>(rec.loss);
    w.put<double>(rec.val_mrr);
    w.put<double>(rec.val_ap);
    w.put<double>(rec.val_auc);
  }
}

template <typename T>
void save_checkpoint(const std::string& path, const Trainer<T>& trainer,
                     const std::string& data_path = {}, const std::string& embeddings_path = {}) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write checkpoint " + path);
  save_checkpoint(os, trainer, data_path, embeddings_path);
  os.flush();
  if (!os) throw DataError("failed writing checkpoint " + path);
}

inline CheckpointInfo read_checkpoint_info(std::istream& is) {
  io::Reader r(is);
  return detail::read_header(r);
}

inline CheckpointInfo read_checkpoint_info(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path);
  return read_checkpoint_info(is);
}

/// Restores a checkpoint into `trainer`, which must have been built with
/// matching shapes on the same graph.
template <typename T>
CheckpointInfo load_checkpoint(std::istream& is, Trainer<T>& trainer) {
  io::Reader r(is);
  CheckpointInfo info = detail::read_header(r);
  if (info.precision != sizeof(T)) {
    throw io::FormatError("checkpoint stores " + std::to_string(info.precision) +
                          "-byte scalars, model uses " + std::to_string(sizeof(T)));
  }
  auto named = trainer.model().params().named();
  const auto count = r.get<std::uint32_t>();
  if (count != named.size()) {
    throw ShapeError("checkpoint holds " + std::to_string(count) + " tensors, model has " +
                     std::to_string(named.size()));
  }
  for (auto& [name, t] : named) detail::read_tensor_into(r, name, t);

  auto memory = MemoryState<T>::deserialize(r);
  if (memory.dim() != trainer.model().memory().dim() ||
      memory.node_count() != trainer.model().memory().node_count()) {
    throw ShapeError("checkpoint memory shape does not match the model");
  }
  MemoryCheckpoint<T> mc{std::move(memory), std::nullopt, 0};
  const bool has_pending = r.get<std::uint8_t>() != 0;
  const auto pb = r.get<std::uint64_t>();
  const auto pe = r.get<std::uint64_t>();
  if (has_pending) mc.pending = EventRange{pb, pe};
  mc.absorbed_until = r.get<std::uint64_t>();
  if (mc.absorbed_until > trainer.model().graph().event_count() || pe > mc.absorbed_until) {
    throw io::FormatError("checkpoint event positions exceed the dataset");
  }
  trainer.model().restore(mc);

  auto& adam = trainer.adam();
  adam.step = r.get<std::uint64_t>();
  for (std::size_t i = 0; i < named.size(); ++i) {
    adam.m[i] = r.get_array<T>(named[i].second.numel());
    adam.v[i] = r.get_array<T>(named[i].second.numel());
  }

  auto& p = trainer.progress();
  p.completed_epochs = r.get<std::uint64_t>();
  p.in_epoch = r.get<std::uint8_t>() != 0;
  p.position = r.get<std::uint64_t>();
  p.batch_index = r.get<std::uint64_t>();
  p.loss_sum = r.get<double>();
  p.loss_batches = r.get<std::uint64_t>();
  const auto epochs = r.get<std::uint64_t>();
  p.history.clear();
  for (std::uint64_t e = 0; e < epochs; ++e) {
    EpochRecord rec;
    rec.epoch = r.get<std::uint64_t>();
    rec.loss = r.get<double>();
    rec.val_mrr = r.get<double>();
    rec.val_ap = r.get<double>();
    rec.val_auc = r.get<double>();
    p.history.push_back(rec);
  }
  return info;
}

template <typename T>
CheckpointInfo load_checkpoint(const std::string& path, Trainer<T>& trainer) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path);
  return load_checkpoint(is, trainer);
}

}  // namespace tgnrec
