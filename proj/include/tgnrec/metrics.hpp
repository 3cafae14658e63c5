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


// Ranking and classification metrics for link recommendation.

#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tgnrec {

/// Mean reciprocal rank; ranks are 1-based.
inline double mrr(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw std::invalid_argument("mrr: no ranks");
  double total = 0.0;
  for (std::size_t r : ranks) {
    if (r == 0) throw std::invalid_argument("mrr: ranks are 1-based");
    total += 1.0 / static_cast<double>(r);
  }
  return total / static_cast<double>(ranks.size());
}

inline double precision_at_k(std::size_t relevant_in_top_k, std::size_t k) {
  if (k == 0) throw std::invalid_argument("precision_at_k: K must be positive");
  if (relevant_in_top_k > k) {
    throw std::invalid_argument("precision_at_k: more hits than K");
  }
  return static_cast<double>(relevant_in_top_k) / static_cast<double>(k);
}

/// Undefined (nullopt) when the query has no relevant items.
inline std::optional<double> recall_at_k(std::size_t relevant_in_top_k,
                                         std::size_t total_relevant) {
  if (relevant_in_top_k > total_relevant) {
    throw std::invalid_argument("recall_at_k: more hits than relevant items");
  }
  if (total_relevant == 0) return std::nullopt;
  return static_cast<double>(relevant_in_top_k) / static_cast<double>(total_relevant);
}

/// Mean, over positive positions, of the precision at that position.
/// `labels` are relevance flags in rank order.
inline double average_precision(std::span<const int> labels) {
  std::size_t hits = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0) {
      ++hits;
      total += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  if (hits == 0 || hits == labels.size()) {
    throw std::invalid_argument("average_precision: need both positive and negative labels");
  }
  return total / static_cast<double>(hits);
}

/// Fraction of (positive, negative) pairs where the positive scores higher;
/// ties count one half.
inline double auc(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty() || neg.empty()) {
    throw std::invalid_argument("auc: need at least one positive and one negative");
  }
  std::vector<double> sorted_neg(neg.begin(), neg.end());
  std::sort(sorted_neg.begin(), sorted_neg.end());
  double wins = 0.0;
  for (double p : pos) {
    const auto lo = std::lower_bound(sorted_neg.begin(), sorted_neg.end(), p);
    const auto hi = std::upper_bound(lo, sorted_neg.end(), p);
    wins += static_cast<double>(lo - sorted_neg.begin()) +
            0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

/// Average precision of a scored pool. Tied scores rank negatives first, so
/// a constant scorer gets no credit for its ties.
inline double average_precision(std::span<const double> pos, std::span<const double> neg) {
  std::vector<std::pair<double, int>> pool;
  for (double p : pos) pool.emplace_back(p, 1);
  for (double n : neg) pool.emplace_back(n, 0);
  std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<int> labels;
  labels.reserve(pool.size());
  for (const auto& [s, l] : pool) labels.push_back(l);
  return average_precision(labels);
}

enum class EvalProtocol {
  kSinglePositive,  // each citation is its own query: 1 positive + negatives
  kAllReferences,   // a citing paper's same-day references form one query
};

inline std::string to_string(EvalProtocol p) {
  return p == EvalProtocol::kSinglePositive ? "single-positive" : "all-references";
}

struct MetricsReport {
  double mrr = 0.0;
  std::map<std::size_t, double> recall_at;
  std::map<std::size_t, double> precision_at;
  double ap = 0.0;
  double auc = 0.0;
  std::size_t queries = 0;
  std::size_t skipped_recall = 0;
  std::size_t negatives = 0;
  EvalProtocol protocol = EvalProtocol::kSinglePositive;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, end) : std::to_string(v);
}

/// One "key=value" line per metric.
inline std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  os << "protocol=" << to_string(r.protocol) << '\n';
  os << "negatives=" << r.negatives << '\n';
  os << "queries=" << r.queries << '\n';
  os << "skipped_recall=" << r.skipped_recall << '\n';
  os << "mrr=" << format_double(r.mrr) << '\n';
  for (const auto& [k, v] : r.recall_at) os << "recall@" << k << '=' << format_double(v) << '\n';
  for (const auto& [k, v] : r.precision_at)
    os << "precision@" << k << '=' << format_double(v) << '\n';
  os << "ap=" << format_double(r.ap) << '\n';
  os << "auc=" << format_double(r.auc) << '\n';
  return os.str();
}

}  // namespace tgnrec
