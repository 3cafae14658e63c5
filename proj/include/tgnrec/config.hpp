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


// Flat key=value configuration text for TrainConfig.

#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tgnrec/train.hpp"

namespace tgnrec {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename V>
V parse_number(std::string_view key, std::string_view text) {
  V v{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError("config: bad value '" + std::string(text) + "' for " + std::string(key));
  }
  return v;
}

}  // namespace detail

/// Sets one field from its textual form. Unknown keys are errors.
inline void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value) {
  using detail::parse_number;
  const auto size = [&] { return parse_number<std::size_t>(key, value); };
  const auto choice = [&](std::string_view a, std::string_view b) {
    if (value == a) return true;
    if (value == b) return false;
    throw ConfigError("config: " + std::string(key) + " must be " + std::string(a) + " or " +
                      std::string(b) + ", got '" + std::string(value) + "'");
  };
  if (key == "batch_size") cfg.batch_size = size();
  else if (key == "epochs") cfg.epochs = size();
  else if (key == "lr") cfg.lr = parse_number<double>(key, value);
  else if (key == "d_mem") cfg.d_mem = size();
  else if (key == "d_time") cfg.d_time = size();
  else if (key == "d_out") cfg.d_out = size();
  else if (key == "d_dec") cfg.d_dec = size();
  else if (key == "heads") cfg.heads = size();
  else if (key == "neighbors") cfg.neighbors = size();
  else if (key == "message")
    cfg.message = choice("identity", "learned") ? MessageVariant::kIdentity : MessageVariant::kLearned;
  else if (key == "aggregator")
    cfg.aggregator = choice("mean", "last") ? Aggregator::kMean : Aggregator::kLast;
  else if (key == "memory_init")
    cfg.memory_init = choice("features", "zeros") ? MemoryInit::kFeatures : MemoryInit::kZeros;
  else if (key == "negatives") cfg.negatives = size();
  else if (key == "k_list") {
    cfg.k_list.clear();
    for (auto part : detail::split(value, ',')) cfg.k_list.push_back(parse_number<std::size_t>(key, part));
  } else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "split") {
    const auto parts = detail::split(value, ',');
    if (parts.size() != 3) throw ConfigError("config: split needs three fractions");
    cfg.train_fraction = parse_number<double>(key, parts[0]);
    cfg.val_fraction = parse_number<double>(key, parts[1]);
    cfg.test_fraction = parse_number<double>(key, parts[2]);
  } else if (key == "eval_negatives") cfg.eval_negatives = size();
  else if (key == "protocol")
    cfg.protocol = choice("single", "all") ? EvalProtocol::kSinglePositive : EvalProtocol::kAllReferences;
  else if (key == "validate") cfg.validate = choice("true", "false");
  else throw ConfigError("config: unknown key '" + std::string(key) + "'");
}

/// Applies "key = value" lines; '#' starts a comment.
inline void apply_config_text(TrainConfig& cfg, std::string_view text) {
  std::size_t line_no = 0;
  for (auto line : detail::split(text, '\n')) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    set_config_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
}

/// Defaults overridden by `text`, then validated.
inline TrainConfig parse_config(std::string_view text) {
  TrainConfig cfg;
  apply_config_text(cfg, text);
  cfg.check();
  return cfg;
}

/// Canonical text; parse_config(config_to_text(c)) == c.
inline std::string config_to_text(const TrainConfig& c) {
  std::ostringstream os;
  const auto list = [](const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  os << "batch_size = " << c.batch_size << '\n'
     << "epochs = " << c.epochs << '\n'
     << "lr = " << format_double(c.lr) << '\n'
     << "d_mem = " << c.d_mem << '\n'
     << "d_time = " << c.d_time << '\n'
     << "d_out = " << c.d_out << '\n'
     << "d_dec = " << c.d_dec << '\n'
     << "heads = " << c.heads << '\n'
     << "neighbors = " << c.neighbors << '\n'
     << "message = " << to_string(c.message) << '\n'
     << "aggregator = " << to_string(c.aggregator) << '\n'
     << "memory_init = " << to_string(c.memory_init) << '\n'
     << "negatives = " << c.negatives << '\n'
     << "k_list = " << list(c.k_list) << '\n'
     << "seed = " << c.seed << '\n'
     << "split = " << format_double(c.train_fraction) << ',' << format_double(c.val_fraction)
     << ',' << format_double(c.test_fraction) << '\n'
     << "eval_negatives = " << c.eval_negatives << '\n'
     << "protocol = " << (c.protocol == EvalProtocol::kSinglePositive ? "single" : "all") << '\n'
     << "validate = " << (c.validate ? "true" : "false") << '\n';
  return os.str();
}

}  // namespace tgnrec
