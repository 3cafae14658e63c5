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


#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "tgnrec/tensor.hpp"

namespace tgnrec {

using Rng = std::mt19937_64;

/// Learnable [fan_in x fan_out] matrix drawn uniformly from +-1/sqrt(fan_in).
template <typename T>
Tensor<T> uniform_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> w(fan_in * fan_out);
  for (auto& x : w) x = static_cast<T>(dist(rng));
  return Tensor<T>({fan_in, fan_out}, std::move(w), true);
}

template <typename T>
Tensor<T> zero_bias(std::size_t n) {
  return Tensor<T>::zeros({n}, true);
}

/// Builds a learnable tensor from explicit values (tests and fixtures).
template <typename T>
Tensor<T> parameter(Shape shape, std::vector<T> values) {
  return Tensor<T>(std::move(shape), std::move(values), true);
}

}  // namespace tgnrec
