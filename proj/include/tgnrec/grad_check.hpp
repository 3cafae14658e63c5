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


// Finite-difference verification of analytic gradients.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "tgnrec/tensor.hpp"

namespace tgnrec {

using ScalarFunction =
    std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Largest relative discrepancy between the analytic gradient of `f` and the
/// central difference (f(x+h) - f(x-h)) / 2h over every coordinate of every
/// input. Relative error is |a - n| / max(|a|, |n|, 1e-4), so gradients
/// smaller than 1e-4 are compared on an absolute scale.
inline double grad_check(const ScalarFunction& f,
                         std::vector<Tensor<double>> inputs, double h = 1e-5) {
  std::vector<Tensor<double>> leaves;
  for (const auto& in : inputs) {
    leaves.emplace_back(in.shape(),
                        std::vector<double>(in.data().begin(), in.data().end()),
                        true);
  }
  clear_tape<double>();
  Tensor<double> out = f(leaves);
  std::vector<std::vector<double>> analytic;
  if (out.requires_grad()) {
    backward(out);
    for (const auto& l : leaves) analytic.push_back(l.grad());
  } else {
    for (const auto& l : leaves) analytic.emplace_back(l.numel(), 0.0);
  }

  NoGradGuard<double> no_grad;
  double worst = 0.0;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    auto values = leaves[i].mutable_data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      // divide by the step actually taken after rounding
      const double hi = saved + h;
      const double lo = saved - h;
      values[k] = hi;
      const double up = f(leaves).item();
      values[k] = lo;
      const double down = f(leaves).item();
      values[k] = saved;
      const double numeric = (up - down) / (hi - lo);
      const double a = analytic[i][k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-4});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

/// Same comparison for tensors captured by `loss` itself (for example model
/// parameters). `loss` must be repeatable: each call recomputes from the
/// current values of `params`.
inline double grad_check_params(const std::function<Tensor<double>()>& loss,
                                std::vector<Tensor<double>> params, double h = 1e-5) {
  clear_tape<double>();
  for (auto& p : params) p.zero_grad();
  backward(loss());
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.push_back(p.grad());
  for (auto& p : params) p.zero_grad();

  NoGradGuard<double> no_grad;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].mutable_data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      const double hi = saved + h;
      const double lo = saved - h;
      values[k] = hi;
      const double up = loss().item();
      values[k] = lo;
      const double down = loss().item();
      values[k] = saved;
      const double numeric = (up - down) / (hi - lo);
      const double a = analytic[i][k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-4});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace tgnrec
