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
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgnrec/tensor.hpp"

namespace tgnrec {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers for Adam, one pair per parameter in registration order.
template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  AdamState() = default;

  AdamState(const std::vector<Tensor<T>>& params, AdamHyper h) : hyper(h) {
    for (const auto& p : params) {
      m.emplace_back(p.numel(), T{0});
      v.emplace_back(p.numel(), T{0});
    }
  }
};

/// One bias-corrected Adam update using each parameter's accumulated
/// gradient. Parameters without a gradient see a zero gradient.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state) {
  if (params.size() != state.m.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) +
                     " parameters but state holds " +
                     std::to_string(state.m.size()));
  }
  ++state.step;
  const auto& h = state.hyper;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.numel() || v.size() != p.numel()) {
      throw ShapeError("adam_step: moment buffer of length " +
                       std::to_string(m.size()) + " vs parameter shape " +
                       shape_string(p.shape()));
    }
    const std::vector<T> g = p.grad();
    auto w = p.mutable_data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = static_cast<T>(h.beta1 * m[k] + (1.0 - h.beta1) * g[k]);
      v[k] = static_cast<T>(h.beta2 * v[k] + (1.0 - h.beta2) * g[k] * g[k]);
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] = static_cast<T>(w[k] - h.lr * mhat / (std::sqrt(vhat) + h.eps));
    }
  }
}

template <typename T>
void zero_grads(std::vector<Tensor<T>>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace tgnrec
