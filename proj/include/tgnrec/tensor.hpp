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

// Dense tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle to a node holding a value buffer and an
// optional gradient buffer. Operations on tensors that require gradients
// append their output node to a thread-local tape; backward() walks the tape
// in reverse creation order, which is a valid topological order because an
// operation can only consume tensors that already exist.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tgnrec {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

[[noreturn]] inline void shape_mismatch(const char* op, const Shape& a,
                                        const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) +
                   " vs " + shape_string(b));
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::function<void()> backward;

  T* grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T{0});
    return grad.data();
  }
};

template <typename T>
struct TapeState {
  std::vector<std::shared_ptr<Node<T>>> records;
  bool grad_enabled = true;
};

template <typename T>
TapeState<T>& tape_state() {
  thread_local TapeState<T> state;
  return state;
}

}  // namespace detail

/// Handle to a dense row-major array that may participate in differentiation.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : Tensor(Shape{}, std::vector<T>{T{0}}) {}

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<T>>()) {
    if (numel_of(shape) != values.size()) {
      throw ShapeError("tensor: buffer length " +
                       std::to_string(values.size()) +
                       " does not match shape " + shape_string(shape));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = numel_of(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T{0}), requires_grad);
  }

  static Tensor full(Shape shape, T v) {
    const auto n = numel_of(shape);
    return Tensor(std::move(shape), std::vector<T>(n, v));
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, {v}); }

  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  std::span<T> mutable_data() { return node_->value; }
  T item() const {
    if (numel() != 1) {
      throw ShapeError("item: tensor of shape " + shape_string(shape()) +
                       " is not a scalar");
    }
    return node_->value[0];
  }
  T at(std::size_t r, std::size_t c) const {
    return node_->value[r * node_->shape.back() + c];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; zeros when nothing has flowed into this tensor.
  std::vector<T> grad() const {
    if (node_->grad.empty()) return std::vector<T>(numel(), T{0});
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  /// Copy of the value detached from any differentiation history.
  Tensor detach() const { return Tensor(shape(), node_->value); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  detail::Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

/// Disables tape recording for the current thread while in scope.
template <typename T>
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::tape_state<T>().grad_enabled) {
    detail::tape_state<T>().grad_enabled = false;
  }
  ~NoGradGuard() { detail::tape_state<T>().grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Suspends recording for both precisions.
class NoGrad {
 private:
  NoGradGuard<float> f_;
  NoGradGuard<double> d_;
};

template <typename T>
bool grad_enabled() {
  return detail::tape_state<T>().grad_enabled;
}

template <typename T>
std::size_t tape_size() {
  return detail::tape_state<T>().records.size();
}

/// Drops every recorded operation without computing gradients.
template <typename T>
void clear_tape() {
  auto& records = detail::tape_state<T>().records;
  for (auto& r : records) r->backward = nullptr;
  records.clear();
}

namespace detail {

// Creates an output tensor; when any input requires gradients and recording
// is enabled, the node is placed on the tape and `make_backward` is invoked
// with the output node to produce its backward closure.
template <typename T, typename MakeBackward>
Tensor<T> record(Shape shape, std::vector<T> values,
                 std::initializer_list<const Tensor<T>*> inputs,
                 MakeBackward&& make_backward) {
  Tensor<T> out(std::move(shape), std::move(values));
  auto& state = tape_state<T>();
  if (!state.grad_enabled) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor<T>* t) {
                                   return t->requires_grad();
                                 });
  if (!needs) return out;
  Node<T>* node = out.node();
  node->requires_grad = true;
  node->backward = make_backward(node);
  state.records.push_back(out.node_ptr());
  return out;
}

template <typename T>
void require_rank(const char* op, const Tensor<T>& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got shape " +
                     shape_string(a.shape()));
  }
}

// Validates elementwise-binary operands: equal shapes, or `b` matching `a`
// with the leading dimension removed (broadcast over the batch axis).
template <typename T>
bool broadcast_leading(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() == b.shape()) return false;
  if (a.rank() >= 1 && b.rank() + 1 == a.rank() &&
      std::equal(b.shape().begin(), b.shape().end(), a.shape().begin() + 1)) {
    return true;
  }
  shape_mismatch(op, a.shape(), b.shape());
}

template <typename T, typename Fwd, typename DA, typename DB>
Tensor<T> binary(const char* op, const Tensor<T>& a, const Tensor<T>& b,
                 Fwd fwd, DA da, DB db) {
  const bool bcast = broadcast_leading(op, a, b);
  const std::size_t n = a.numel();
  const std::size_t m = b.numel();
  std::vector<T> out(n);
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[bcast ? i % m : i]);
  return record<T>(a.shape(), std::move(out), {&a, &b}, [=](Node<T>* o) {
    auto an = a.node_ptr();
    auto bn = b.node_ptr();
    return [=]() {
      const T* g = o->grad.data();
      const auto& x = an->value;
      const auto& y = bn->value;
      if (an->requires_grad) {
        T* ga = an->grad_buffer();
        for (std::size_t i = 0; i < n; ++i)
          ga[i] += g[i] * da(x[i], y[bcast ? i % m : i]);
      }
      if (bn->requires_grad) {
        T* gb = bn->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t j = bcast ? i % m : i;
          gb[j] += g[i] * db(x[i], y[j]);
        }
      }
    };
  });
}

// `deriv` receives (input, output) and returns d output / d input.
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& a, Fwd fwd, Deriv deriv) {
  const std::size_t n = a.numel();
  std::vector<T> out(n);
  auto av = a.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i]);
  return record<T>(a.shape(), std::move(out), {&a}, [=](Node<T>* o) {
    auto an = a.node_ptr();
    return [=]() {
      const T* g = o->grad.data();
      T* ga = an->grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        ga[i] += g[i] * deriv(an->value[i], o->value[i]);
    };
  });
}

// C[m,n] += A[m,k] * B[k,n] with optional transposes expressed by strides.
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
              std::size_t n, bool trans_a, bool trans_b) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = trans_a ? a[p * m + i] : a[i * k + p];
      if (av == T{0}) continue;
      if (!trans_b) {
        const T* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
      }
    }
  }
}

struct AxisSplit {
  std::size_t outer;
  std::size_t len;
  std::size_t inner;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic.

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T{1}; },
      [](T, T) { return T{1}; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T{1}; },
      [](T, T) { return T{-1}; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  return detail::unary<T>(
      a, [c](T x) { return c * x; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary<T>(
      a,
      [](T x) {
        if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
        const T e = std::exp(x);
        return e / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return detail::unary<T>(
      a, [](T x) { return std::tanh(x); },
      [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return detail::unary<T>(
      a, [](T x) { return x > T{0} ? x : T{0}; },
      [](T x, T) { return x > T{0} ? T{1} : T{0}; });
}

template <typename T>
Tensor<T> cos(const Tensor<T>& a) {
  return detail::unary<T>(
      a, [](T x) { return std::cos(x); }, [](T x, T) { return -std::sin(x); });
}

/// log(1 + exp(x)), evaluated without overflow.
template <typename T>
Tensor<T> softplus(const Tensor<T>& a) {
  return detail::unary<T>(
      a,
      [](T x) {
        return std::max(x, T{0}) + std::log1p(std::exp(-std::abs(x)));
      },
      [](T x, T) {
        if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
        const T e = std::exp(x);
        return e / (T{1} + e);
      });
}

// ---------------------------------------------------------------------------
// Reductions and linear algebra.

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s{0};
  for (T v : a.data()) s += v;
  const std::size_t n = a.numel();
  return detail::record<T>(Shape{}, {s}, {&a}, [=](detail::Node<T>* o) {
    auto an = a.node_ptr();
    return [=]() {
      T* ga = an->grad_buffer();
      const T g = o->grad[0];
      for (std::size_t i = 0; i < n; ++i) ga[i] += g;
    };
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), T{1} / static_cast<T>(a.numel()));
}

/// Matrix product of rank-2 operands, or batched product of rank-3 operands
/// sharing the leading dimension.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() == 2 && b.rank() == 2) {
    if (a.dim(1) != b.dim(0)) detail::shape_mismatch("matmul", a.shape(), b.shape());
  } else if (a.rank() == 3 && b.rank() == 3) {
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
      detail::shape_mismatch("matmul", a.shape(), b.shape());
  } else {
    detail::shape_mismatch("matmul", a.shape(), b.shape());
  }
  const bool batched = a.rank() == 3;
  const std::size_t batch = batched ? a.dim(0) : 1;
  const std::size_t m = a.dim(a.rank() - 2);
  const std::size_t k = a.dim(a.rank() - 1);
  const std::size_t n = b.dim(b.rank() - 1);
  std::vector<T> out(batch * m * n, T{0});
  for (std::size_t bi = 0; bi < batch; ++bi) {
    detail::gemm_acc(a.data().data() + bi * m * k, b.data().data() + bi * k * n,
                     out.data() + bi * m * n, m, k, n, false, false);
  }
  Shape shape = batched ? Shape{batch, m, n} : Shape{m, n};
  return detail::record<T>(
      std::move(shape), std::move(out), {&a, &b}, [=](detail::Node<T>* o) {
        auto an = a.node_ptr();
        auto bn = b.node_ptr();
        return [=]() {
          for (std::size_t bi = 0; bi < batch; ++bi) {
            const T* g = o->grad.data() + bi * m * n;
            if (an->requires_grad) {
              // dA = dC * B^T
              detail::gemm_acc(g, bn->value.data() + bi * k * n,
                               an->grad_buffer() + bi * m * k, m, n, k, false,
                               true);
            }
            if (bn->requires_grad) {
              // dB = A^T * dC
              detail::gemm_acc(an->value.data() + bi * m * k, g,
                               bn->grad_buffer() + bi * k * n, k, m, n, true,
                               false);
            }
          }
        };
      });
}

/// Swaps the last two axes of a rank-2 or rank-3 tensor.
template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2 && a.rank() != 3) {
    throw ShapeError("transpose: expected rank 2 or 3, got " +
                     shape_string(a.shape()));
  }
  const std::size_t batch = a.rank() == 3 ? a.dim(0) : 1;
  const std::size_t r = a.dim(a.rank() - 2);
  const std::size_t c = a.dim(a.rank() - 1);
  std::vector<T> out(a.numel());
  auto av = a.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        out[b * r * c + j * r + i] = av[b * r * c + i * c + j];
  Shape shape = a.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  return detail::record<T>(
      std::move(shape), std::move(out), {&a}, [=](detail::Node<T>* o) {
        auto an = a.node_ptr();
        return [=]() {
          T* ga = an->grad_buffer();
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < r; ++i)
              for (std::size_t j = 0; j < c; ++j)
                ga[b * r * c + i * c + j] += o->grad[b * r * c + j * r + i];
        };
      });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel_of(shape) != a.numel())
    detail::shape_mismatch("reshape", a.shape(), shape);
  std::vector<T> out(a.data().begin(), a.data().end());
  const std::size_t n = a.numel();
  return detail::record<T>(std::move(shape), std::move(out), {&a},
                           [=](detail::Node<T>* o) {
                             auto an = a.node_ptr();
                             return [=]() {
                               T* ga = an->grad_buffer();
                               for (std::size_t i = 0; i < n; ++i)
                                 ga[i] += o->grad[i];
                             };
                           });
}

/// Softmax along `axis`. When `mask` is non-empty it must have one entry per
/// element; masked-out entries (0) receive probability exactly 0, and a slice
/// with every entry masked produces all zeros.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis,
                  std::span<const unsigned char> mask = {}) {
  if (axis >= a.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) +
                     " out of range for shape " + shape_string(a.shape()));
  }
  if (!mask.empty() && mask.size() != a.numel()) {
    throw ShapeError("softmax: mask length " + std::to_string(mask.size()) +
                     " does not match shape " + shape_string(a.shape()));
  }
  const auto s = detail::split_axis(a.shape(), axis);
  std::vector<unsigned char> keep(mask.begin(), mask.end());
  std::vector<T> out(a.numel(), T{0});
  auto av = a.data();
  auto kept = [&](std::size_t idx) { return keep.empty() || keep[idx] != 0; };
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t l = 0; l < s.len; ++l) {
        const std::size_t idx = base + l * s.inner;
        if (kept(idx)) mx = std::max(mx, av[idx]);
      }
      if (mx == -std::numeric_limits<T>::infinity()) continue;
      T total{0};
      for (std::size_t l = 0; l < s.len; ++l) {
        const std::size_t idx = base + l * s.inner;
        if (!kept(idx)) continue;
        out[idx] = std::exp(av[idx] - mx);
        total += out[idx];
      }
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] /= total;
    }
  }
  return detail::record<T>(
      a.shape(), std::move(out), {&a}, [=](detail::Node<T>* o) {
        auto an = a.node_ptr();
        return [=]() {
          T* ga = an->grad_buffer();
          const T* y = o->value.data();
          const T* g = o->grad.data();
          for (std::size_t oi = 0; oi < s.outer; ++oi) {
            for (std::size_t in = 0; in < s.inner; ++in) {
              const std::size_t base = oi * s.len * s.inner + in;
              T dot{0};
              for (std::size_t l = 0; l < s.len; ++l) {
                const std::size_t idx = base + l * s.inner;
                dot += g[idx] * y[idx];
              }
              for (std::size_t l = 0; l < s.len; ++l) {
                const std::size_t idx = base + l * s.inner;
                ga[idx] += y[idx] * (g[idx] - dot);
              }
            }
          }
        };
      });
}

/// Concatenates tensors along `axis`; all other dimensions must agree.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) {
    throw ShapeError("concat: axis " + std::to_string(axis) +
                     " out of range for shape " + shape_string(first));
  }
  Shape shape = first;
  shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    if (ps.size() != first.size()) detail::shape_mismatch("concat", first, ps);
    for (std::size_t i = 0; i < ps.size(); ++i)
      if (i != axis && ps[i] != first[i])
        detail::shape_mismatch("concat", first, ps);
    shape[axis] += ps[axis];
  }
  const auto s = detail::split_axis(shape, axis);
  std::vector<T> out(numel_of(shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t plen = p.dim(axis);
    auto pv = p.data();
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(pv.begin() + o * plen * s.inner, plen * s.inner,
                  out.begin() + (o * s.len + off) * s.inner);
    off += plen;
  }
  Tensor<T> result(shape, std::move(out));
  auto& state = detail::tape_state<T>();
  const bool needs =
      state.grad_enabled &&
      std::any_of(parts.begin(), parts.end(),
                  [](const Tensor<T>& p) { return p.requires_grad(); });
  if (!needs) return result;
  std::vector<std::shared_ptr<detail::Node<T>>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node_ptr());
  detail::Node<T>* o = result.node();
  o->requires_grad = true;
  o->backward = [=]() {
    for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
      auto& pn = nodes[pi];
      if (!pn->requires_grad) continue;
      const std::size_t plen = pn->shape[axis];
      T* gp = pn->grad_buffer();
      for (std::size_t oi = 0; oi < s.outer; ++oi) {
        const T* src = o->grad.data() + (oi * s.len + offsets[pi]) * s.inner;
        T* dst = gp + oi * plen * s.inner;
        for (std::size_t i = 0; i < plen * s.inner; ++i) dst[i] += src[i];
      }
    }
  };
  state.records.push_back(result.node_ptr());
  return result;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis) {
  return concat<T>(std::vector<Tensor<T>>{a, b}, axis);
}

/// Selects rows (slices along axis 0) by index; indices may repeat.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, std::span<const std::size_t> indices) {
  if (a.rank() == 0) throw ShapeError("gather_rows: scalar input");
  const std::size_t rows = a.dim(0);
  const std::size_t width = a.numel() / std::max<std::size_t>(rows, 1);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<T> out(idx.size() * width);
  auto av = a.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= rows) {
      throw std::out_of_range("gather_rows: index " + std::to_string(idx[r]) +
                              " out of range for shape " +
                              shape_string(a.shape()));
    }
    std::copy_n(av.begin() + idx[r] * width, width, out.begin() + r * width);
  }
  Shape shape = a.shape();
  shape[0] = idx.size();
  return detail::record<T>(
      std::move(shape), std::move(out), {&a}, [=](detail::Node<T>* o) {
        auto an = a.node_ptr();
        return [=]() {
          T* ga = an->grad_buffer();
          for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t c = 0; c < width; ++c)
              ga[idx[r] * width + c] += o->grad[r * width + c];
        };
      });
}

// ---------------------------------------------------------------------------

/// Back-propagates from a scalar loss into every reachable tensor that
/// requires gradients, then clears the tape.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " +
                     shape_string(loss.shape()));
  }
  auto& records = detail::tape_state<T>().records;
  if (!loss.requires_grad() || records.empty()) {
    throw std::logic_error("backward: loss is not connected to the tape");
  }
  loss.node()->grad_buffer()[0] += T{1};
  for (auto it = records.rbegin(); it != records.rend(); ++it) {
    auto& node = *it;
    if (node->grad.empty() || !node->backward) continue;
    node->backward();
  }
  clear_tape<T>();
}

}  // namespace tgnrec
