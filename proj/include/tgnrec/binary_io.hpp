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


// Little-endian binary encoding helpers with offset-aware error reporting.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace tgnrec::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename V>
V byteswap_if_big(V v) {
  if constexpr (std::endian::native == std::endian::little || sizeof(V) == 1) {
    return v;
  } else {
    unsigned char bytes[sizeof(V)];
    std::memcpy(bytes, &v, sizeof(V));
    for (std::size_t i = 0; i < sizeof(V) / 2; ++i)
      std::swap(bytes[i], bytes[sizeof(V) - 1 - i]);
    std::memcpy(&v, bytes, sizeof(V));
    return v;
  }
}

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  template <typename V>
    requires std::is_arithmetic_v<V>
  void put(V v) {
    v = byteswap_if_big(v);
    os_.write(reinterpret_cast<const char*>(&v), sizeof(V));
    if (!os_) throw std::runtime_error("write failed");
  }

  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  void put_bytes(const char* data, std::size_t n) {
    os_.write(data, static_cast<std::streamsize>(n));
  }

  template <typename V>
  void put_array(const std::vector<V>& values) {
    for (V v : values) put<V>(v);
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  std::uint64_t offset() const { return offset_; }

  template <typename V>
    requires std::is_arithmetic_v<V>
  V get() {
    V v{};
    read_raw(reinterpret_cast<char*>(&v), sizeof(V));
    return byteswap_if_big(v);
  }

  std::string get_string(std::uint32_t max_len = 1u << 20) {
    const auto n = get<std::uint32_t>();
    if (n > max_len) {
      throw FormatError("string length " + std::to_string(n) +
                        " exceeds limit at byte offset " +
                        std::to_string(offset_ - 4));
    }
    std::string s(n, '\0');
    read_raw(s.data(), n);
    return s;
  }

  template <typename V>
  std::vector<V> get_array(std::size_t n) {
    std::vector<V> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(get<V>());
    return out;
  }

  void read_raw(char* dst, std::size_t n) {
    is_.read(dst, static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(is_.gcount());
    if (got != n) {
      throw FormatError("truncated file at byte offset " +
                        std::to_string(offset_ + got) + " (needed " +
                        std::to_string(n) + " bytes)");
    }
    offset_ += n;
  }

 private:
  std::istream& is_;
  std::uint64_t offset_ = 0;
};

}  // namespace tgnrec::io
