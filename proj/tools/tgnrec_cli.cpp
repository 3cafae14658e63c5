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


// tgnrec command-line front end: synth, train, eval, ablate, recommend.
// Exit codes: 0 success, 1 runtime or data error, 2 usage or config error.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tgnrec.hpp"

namespace {

using namespace tgnrec;

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path);
  os << text;
  os.flush();
  if (!os) throw DataError("failed writing " + path);
}

// Flags shared by train and ablate; each overrides the config file.
struct TrainFlags {
  std::string data;
  std::string embeddings;
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::size_t> epochs, batch_size, d_mem, neighbors, negatives, eval_negatives;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> message, aggregator, init, protocol;
  std::optional<bool> validate;

  void add(CLI::App* app) {
    app->add_option("--data", data, "papers file (id|YYYY-MM-DD|ref,ref,...)")->required();
    app->add_option("--embeddings", embeddings, "embeddings file ('dim D' header)");
    app->add_option("--config", config_path, "key = value config file");
    app->add_option("--set", sets, "extra key=value overrides");
    app->add_option("--epochs", epochs);
    app->add_option("--batch-size", batch_size);
    app->add_option("--lr", lr);
    app->add_option("--d-mem", d_mem);
    app->add_option("--neighbors", neighbors);
    app->add_option("--negatives", negatives, "training negatives per positive");
    app->add_option("--eval-negatives", eval_negatives);
    app->add_option("--seed", seed);
    app->add_option("--message", message, "identity | learned");
    app->add_option("--aggregator", aggregator, "mean | last");
    app->add_option("--init", init, "features | zeros");
    app->add_option("--protocol", protocol, "single | all");
    app->add_option("--validate", validate, "per-epoch validation (true|false)");
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!config_path.empty()) apply_config_text(cfg, read_file(config_path));
    const auto put = [&](const char* key, const auto& v) {
      if (!v) return;
      std::ostringstream os;
      if constexpr (std::is_same_v<std::decay_t<decltype(*v)>, bool>) {
        os << (*v ? "true" : "false");
      } else if constexpr (std::is_same_v<std::decay_t<decltype(*v)>, double>) {
        os << format_double(*v);
      } else {
        os << *v;
      }
      set_config_value(cfg, key, os.str());
    };
    put("epochs", epochs);
    put("batch_size", batch_size);
    put("lr", lr);
    put("d_mem", d_mem);
    put("neighbors", neighbors);
    put("negatives", negatives);
    put("eval_negatives", eval_negatives);
    put("seed", seed);
    put("message", message);
    put("aggregator", aggregator);
    put("memory_init", init);
    put("protocol", protocol);
    put("validate", validate);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + s);
      set_config_value(cfg, detail::trim(std::string_view(s).substr(0, eq)),
                       detail::trim(std::string_view(s).substr(eq + 1)));
    }
    cfg.check();
    if (!seed && config_path.empty()) {
      std::clog << "seed: " << cfg.seed << " (default)\n";
    } else {
      std::clog << "seed: " << cfg.seed << '\n';
    }
    return cfg;
  }
};

CitationDataset load_data(const std::string& papers, const std::string& embeddings,
                          const TrainConfig& cfg) {
  if (cfg.memory_init == MemoryInit::kFeatures && embeddings.empty()) {
    throw UsageError("memory_init = features needs --embeddings (or use --init zeros)");
  }
  auto ds = load_citation_dataset(
      papers, embeddings.empty() ? std::nullopt : std::optional<std::string>(embeddings),
      cfg.neighbors);
  std::clog << format_ingest_report(ds.report) << '\n';
  if (!ds.report.rejected_lines.empty()) {
    std::clog << "rejected lines:";
    for (auto l : ds.report.rejected_lines) std::clog << ' ' << l;
    std::clog << '\n';
  }
  if (ds.graph.event_count() < 3) throw DataError("dataset has fewer than 3 citation events");
  return ds;
}

std::string history_text(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "epoch,loss,val_mrr,val_ap,val_auc\n";
  for (const auto& r : history) {
    os << r.epoch << ',' << format_double(r.loss) << ',' << format_double(r.val_mrr) << ','
       << format_double(r.val_ap) << ',' << format_double(r.val_auc) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  SyntheticConfig cfg;
  bool seed_given = false;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  try {
    a.cfg.check();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::clog << "seed: " << a.cfg.seed << (a.seed_given ? "" : " (default)") << '\n';
  const auto records = generate_synthetic_records(a.cfg);
  std::ostringstream papers, emb;
  write_papers(papers, records);
  write_embeddings(emb, records);
  write_text(a.out + ".papers", papers.str());
  write_text(a.out + ".emb", emb.str());
  std::size_t events = 0;
  for (const auto& r : records) events += r.references.size();
  std::cout << "wrote " << records.size() << " papers, " << events << " citations to "
            << a.out << ".papers and " << a.out << ".emb\n";
  return kOk;
}

struct TrainArgs {
  TrainFlags flags;
  std::string checkpoint;
  std::string history;
  std::string resume;
  std::optional<std::size_t> max_steps;
  std::string precision = "float";
};

template <typename T>
int train_with(const TrainArgs& a, const TrainConfig& cfg) {
  const auto ds = load_data(a.flags.data, a.flags.embeddings, cfg);
  Trainer<T> trainer(ds.graph, cfg);
  if (!a.resume.empty()) {
    const auto info = read_checkpoint_info(a.resume);
    if (!(info.config == cfg)) throw UsageError("--resume checkpoint was trained with a different config");
    load_checkpoint(a.resume, trainer);
  }
  std::size_t reported = trainer.history().size();
  const bool done = trainer.run(a.max_steps);
  for (; reported < trainer.history().size(); ++reported) {
    const auto& r = trainer.history()[reported];
    std::clog << "epoch " << r.epoch << " loss " << r.loss;
    if (cfg.validate) std::clog << " val_mrr " << r.val_mrr << " val_ap " << r.val_ap;
    std::clog << '\n';
  }
  save_checkpoint(a.checkpoint, trainer, a.flags.data, a.flags.embeddings);
  write_text(a.history.empty() ? a.checkpoint + ".history.csv" : a.history,
             history_text(trainer.history()));
  std::cout << (done ? "training complete" : "training paused") << ", checkpoint " << a.checkpoint
            << '\n';
  return kOk;
}

int run_train(const TrainArgs& a) {
  const auto cfg = a.flags.resolve();
  return a.precision == "double" ? train_with<double>(a, cfg) : train_with<float>(a, cfg);
}

struct EvalArgs {
  std::string checkpoint, data, embeddings, split = "test", out, protocol, scorer = "model";
  std::vector<std::size_t> k_list;
  std::optional<std::size_t> negatives;
  std::optional<std::uint64_t> seed;
};

EventRange pick_split(const ChronologicalSplit& s, const std::string& name, std::size_t total) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  if (name == "all") return {0, total};
  throw UsageError("--split must be train, val, test or all");
}

template <typename T>
int eval_with(const EvalArgs& a, const CheckpointInfo& info) {
  const std::string data = a.data.empty() ? info.data_path : a.data;
  const std::string emb = a.embeddings.empty() ? info.embeddings_path : a.embeddings;
  if (data.empty()) throw UsageError("checkpoint has no data path; pass --data");
  const auto ds = load_data(data, emb, info.config);
  Trainer<T> trainer(ds.graph, info.config);
  load_checkpoint(a.checkpoint, trainer);

  EvalConfig ec = info.config.eval_config();
  if (!a.k_list.empty()) ec.k_list = a.k_list;
  std::sort(ec.k_list.begin(), ec.k_list.end());
  if (ec.k_list.empty() || ec.k_list.front() == 0 ||
      std::adjacent_find(ec.k_list.begin(), ec.k_list.end()) != ec.k_list.end()) {
    throw UsageError("--K must be distinct positive integers");
  }
  if (a.negatives) ec.negatives = *a.negatives;
  if (ec.negatives == 0) throw UsageError("--negatives must be positive");
  if (a.seed) ec.seed = *a.seed;
  std::clog << "seed: " << ec.seed << (a.seed ? "" : " (from checkpoint)") << '\n';
  if (!a.protocol.empty()) {
    if (a.protocol == "single") ec.protocol = EvalProtocol::kSinglePositive;
    else if (a.protocol == "all") ec.protocol = EvalProtocol::kAllReferences;
    else throw UsageError("--protocol must be single or all");
  }
  const auto range = pick_split(trainer.split(), a.split, ds.graph.event_count());
  MetricsReport report;
  if (a.scorer == "random") {
    RandomScorer s(ec.seed);
    report = evaluate(s, ds.graph, range, ec);
  } else {
    ModelScorer<T> s(trainer.model());
    report = evaluate(s, ds.graph, range, ec);
  }
  const auto text = format_report(report);
  std::cout << text;
  if (!a.out.empty()) write_text(a.out, text);
  return kOk;
}

int run_eval(const EvalArgs& a) {
  const auto info = read_checkpoint_info(a.checkpoint);
  return info.precision == sizeof(double) ? eval_with<double>(a, info) : eval_with<float>(a, info);
}

struct AblateArgs {
  TrainFlags flags;
  std::string grid = "default";
  std::string out;
};

int run_ablate(const AblateArgs& a) {
  if (a.grid != "default") throw UsageError("--grid: only 'default' is available");
  const auto cfg = a.flags.resolve();
  if (a.flags.embeddings.empty()) {
    throw UsageError("the default grid includes feature initialization; pass --embeddings");
  }
  const auto ds = load_data(a.flags.data, a.flags.embeddings, cfg);
  std::vector<AblationRow> rows;
  for (const auto& cell : default_grid()) {
    rows.push_back(run_cell<float>(ds.graph, cfg, cell));
    std::clog << "cell " << to_string(cell.init) << '/' << to_string(cell.message) << '/'
              << to_string(cell.aggregator) << " test mrr " << rows.back().test.mrr << '\n';
  }
  const auto table = format_ablation_table(rows, cfg.k_list);
  std::cout << table;
  if (!a.out.empty()) write_text(a.out, table);
  return kOk;
}

struct RecommendArgs {
  std::string checkpoint, data, embeddings, paper, t;
  std::size_t k = 10;
};

template <typename T>
int recommend_with(const RecommendArgs& a, const CheckpointInfo& info) {
  const std::string data = a.data.empty() ? info.data_path : a.data;
  const std::string emb = a.embeddings.empty() ? info.embeddings_path : a.embeddings;
  if (data.empty()) throw UsageError("checkpoint has no data path; pass --data");
  const auto ds = load_data(data, emb, info.config);
  const auto src = ds.find(a.paper);
  if (!src) throw DataError("unknown paper id " + a.paper);
  Trainer<T> trainer(ds.graph, info.config);
  load_checkpoint(a.checkpoint, trainer);

  double t = ds.graph.node_times()[*src];
  if (!a.t.empty()) {
    if (auto d = parse_date(a.t)) {
      t = static_cast<double>((*d - ds.epoch).count());
    } else {
      try {
        std::size_t used = 0;
        t = std::stod(a.t, &used);
        if (used != a.t.size()) throw std::invalid_argument(a.t);
      } catch (const std::exception&) {
        throw UsageError("--t must be days since the epoch or YYYY-MM-DD");
      }
    }
  }
  // memory sees exactly the citations made before t
  const auto events = ds.graph.events();
  const auto first_at_t = std::lower_bound(events.begin(), events.end(), t,
                                           [](const Event& e, double x) { return e.t < x; });
  trainer.model().seek(static_cast<std::size_t>(first_at_t - events.begin()));

  std::vector<NodeId> pool;
  for (NodeId v = 0; v < ds.graph.node_count(); ++v)
    if (v != *src && ds.graph.node_times()[v] < t) pool.push_back(v);
  if (pool.empty()) {
    std::cout << "no papers published before t=" << t << '\n';
    return kOk;
  }
  const auto top = trainer.model().recommend(*src, t, pool, a.k);
  std::cout << "rank,paper,logit\n";
  for (std::size_t i = 0; i < top.size(); ++i)
    std::cout << i + 1 << ',' << ds.ids[top[i].node] << ',' << format_double(top[i].logit) << '\n';
  return kOk;
}

int run_recommend(const RecommendArgs& a) {
  if (a.k == 0) throw UsageError("--k must be positive");
  const auto info = read_checkpoint_info(a.checkpoint);
  return info.precision == sizeof(double) ? recommend_with<double>(a, info)
                                          : recommend_with<float>(a, info);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal graph network citation recommender"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic citation network");
  s->add_option("--nodes", synth.cfg.nodes, "paper count")->capture_default_str();
  s->add_option("--seed", synth.cfg.seed)->capture_default_str();
  s->add_option("--out", synth.out, "output prefix; writes PREFIX.papers and PREFIX.emb")->required();
  s->add_option("--mean-degree", synth.cfg.mean_out_degree)->capture_default_str();
  s->add_option("--exponent", synth.cfg.exponent, "preferential attachment exponent")->capture_default_str();
  s->add_option("--half-life", synth.cfg.half_life, "recency half-life in days")->capture_default_str();
  s->add_option("--feature-dim", synth.cfg.feature_dim)->capture_default_str();
  s->add_option("--arrival-rate", synth.cfg.arrival_rate, "papers per day")->capture_default_str();
  s->add_option("--topics", synth.cfg.topics)->capture_default_str();
  s->add_option("--cross-topic", synth.cfg.cross_topic_weight)->capture_default_str();
  s->add_option("--noise", synth.cfg.feature_noise)->capture_default_str();
  s->add_option("--start-date", synth.cfg.start_date)->capture_default_str();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train a model");
  train.flags.add(t);
  t->add_option("--out-checkpoint", train.checkpoint)->required();
  t->add_option("--history", train.history, "loss history CSV (default CHECKPOINT.history.csv)");
  t->add_option("--resume", train.resume, "continue from a checkpoint");
  t->add_option("--max-steps", train.max_steps, "stop after this many optimizer steps");
  t->add_option("--precision", train.precision)->check(CLI::IsMember({"float", "double"}));

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint");
  e->add_option("--checkpoint", eval.checkpoint)->required();
  e->add_option("--data", eval.data, "papers file (default: path stored in the checkpoint)");
  e->add_option("--embeddings", eval.embeddings);
  e->add_option("--split", eval.split, "train | val | test | all")->capture_default_str();
  e->add_option("--K", eval.k_list, "cutoffs, e.g. 10,20,50")->delimiter(',');
  e->add_option("--negatives", eval.negatives, "sampled negatives per query");
  e->add_option("--protocol", eval.protocol, "single | all");
  e->add_option("--seed", eval.seed);
  e->add_option("--scorer", eval.scorer)->check(CLI::IsMember({"model", "random"}));
  e->add_option("--out", eval.out, "also write the report here");

  AblateArgs ablate;
  auto* b = app.add_subcommand("ablate", "train and test every cell of the ablation grid");
  ablate.flags.add(b);
  b->add_option("--grid", ablate.grid)->capture_default_str();
  b->add_option("--out", ablate.out, "CSV table path");

  RecommendArgs rec;
  auto* r = app.add_subcommand("recommend", "rank candidate references for a paper");
  r->add_option("--checkpoint", rec.checkpoint)->required();
  r->add_option("--paper", rec.paper)->required();
  r->add_option("--t", rec.t, "query time: days since epoch or YYYY-MM-DD (default: paper date)");
  r->add_option("--k", rec.k)->capture_default_str();
  r->add_option("--data", rec.data);
  r->add_option("--embeddings", rec.embeddings);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }
  synth.seed_given = s->count("--seed") > 0;

  try {
    if (*s) return run_synth(synth);
    if (*t) return run_train(train);
    if (*e) return run_eval(eval);
    if (*b) return run_ablate(ablate);
    if (*r) return run_recommend(rec);
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kUsage;
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << '\n';
    return kUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
