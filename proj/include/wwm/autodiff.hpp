/**
 * @file autodiff.hpp
 * @brief Reverse-mode automatic differentiation over dense tensors.
 *
 * Dynamic graph of shared nodes. Forward ops record parents and a backprop
 * closure; backward() runs the closures in reverse creation order. Tensors
 * are immutable once recorded. One graph is single-threaded; distinct graphs
 * may live on distinct threads (creation ids are thread-local).
 */
#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>

#include "wwm/kernels.hpp"
#include "wwm/tensor.hpp"

namespace wwm::ad {

namespace detail {
inline thread_local uint64_t next_order = 0;
inline thread_local bool grad_enabled = true;
}  // namespace detail

/// Disables graph recording in scope (target-encoder passes, evaluation).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = prev; }
};

inline bool grad_enabled() { return detail::grad_enabled; }

template <typename T>
struct Node {
  Tensor<T> val;
  Tensor<T> grad;  // empty until materialized
  Tensor<T> aux;   // op scratch kept for backward (softmax probs, ...)
  std::shared_ptr<std::vector<std::size_t>> aux_idx;
  bool requires_grad = false;
  uint64_t order = 0;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backprop;

  void ensure_grad() {
    if (grad.v.empty()) grad = Tensor<T>::zeros(val.shape);
  }
  void zero_grad() { grad = Tensor<T>(); }
  Tensor<T> grad_or_zeros() const {
    return grad.v.empty() ? Tensor<T>::zeros(val.shape) : grad;
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

[[noreturn]] inline void op_error(const std::string& op, const std::string& what) {
  throw std::runtime_error(op + ": " + what);
}

template <typename T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b))
    op_error(op, "shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

template <typename T>
Var<T> leaf(Tensor<T> value, bool requires_grad) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(value);
  n->requires_grad = requires_grad;
  n->order = detail::next_order++;
  return n;
}

template <typename T>
Var<T> constant(Tensor<T> value) {
  return leaf(std::move(value), false);
}

template <typename T>
Var<T> make_node(Tensor<T> value, std::vector<Var<T>> parents,
                 std::function<void(Node<T>&)> backprop) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(value);
  n->order = detail::next_order++;
  bool rq = false;
  if (detail::grad_enabled)
    for (const auto& p : parents)
      if (p && p->requires_grad) rq = true;
  if (rq) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

template <typename T>
void backward(const Var<T>& loss) {
  if (!loss) op_error("backward", "null loss");
  if (loss->val.numel() != 1)
    op_error("backward", "loss must be scalar, got " + loss->val.shape_str());
  // Collect reachable grad-requiring nodes.
  std::vector<Node<T>*> nodes;
  std::unordered_set<Node<T>*> seen;
  std::vector<Node<T>*> stack{loss.get()};
  while (!stack.empty()) {
    Node<T>* n = stack.back();
    stack.pop_back();
    if (!n || !n->requires_grad || seen.count(n)) continue;
    seen.insert(n);
    nodes.push_back(n);
    for (auto& p : n->parents) stack.push_back(p.get());
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const Node<T>* a, const Node<T>* b) { return a->order > b->order; });
  for (auto* n : nodes) n->ensure_grad();
  loss->grad.v[0] += T(1);
  for (auto* n : nodes)
    if (n->backprop) n->backprop(*n);
}

// ---------------------------------------------------------------------------
// elementwise / structural ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same_shape("add", a->val, b->val);
  Tensor<T> out = a->val;
  const std::size_t n = out.numel();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) out.v[i] += b->val.v[i];
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (int p = 0; p < 2; ++p)
      if (self.parents[p]->requires_grad) {
        self.parents[p]->ensure_grad();
        T* g = self.parents[p]->grad.v.data();
        const T* d = self.grad.v.data();
        const std::size_t n = self.grad.numel();
#pragma omp simd
        for (std::size_t i = 0; i < n; ++i) g[i] += d[i];
      }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same_shape("sub", a->val, b->val);
  Tensor<T> out = a->val;
  const std::size_t n = out.numel();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) out.v[i] -= b->val.v[i];
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const T* d = self.grad.v.data();
    const std::size_t n = self.grad.numel();
    if (self.parents[0]->requires_grad) {
      self.parents[0]->ensure_grad();
      T* g = self.parents[0]->grad.v.data();
#pragma omp simd
      for (std::size_t i = 0; i < n; ++i) g[i] += d[i];
    }
    if (self.parents[1]->requires_grad) {
      self.parents[1]->ensure_grad();
      T* g = self.parents[1]->grad.v.data();
#pragma omp simd
      for (std::size_t i = 0; i < n; ++i) g[i] -= d[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same_shape("mul", a->val, b->val);
  Tensor<T> out = a->val;
  const std::size_t n = out.numel();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) out.v[i] *= b->val.v[i];
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const T* d = self.grad.v.data();
    const std::size_t n = self.grad.numel();
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      T* g = pa->grad.v.data();
      const T* bv = pb->val.v.data();
#pragma omp simd
      for (std::size_t i = 0; i < n; ++i) g[i] += d[i] * bv[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      T* g = pb->grad.v.data();
      const T* av = pa->val.v.data();
#pragma omp simd
      for (std::size_t i = 0; i < n; ++i) g[i] += d[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, double c) {
  Tensor<T> out = a->val;
  const T cc = static_cast<T>(c);
  for (auto& x : out.v) x *= cc;
  return make_node<T>(std::move(out), {a}, [cc](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    T* g = p->grad.v.data();
    const T* d = self.grad.v.data();
    const std::size_t n = self.grad.numel();
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) g[i] += cc * d[i];
  });
}

/// a: (n,d), bias: d entries (any shape with d elements), broadcast over rows.
template <typename T>
Var<T> add_bias(const Var<T>& a, const Var<T>& bias) {
  const std::size_t d = a->val.cols();
  if (bias->val.numel() != d)
    op_error("add_bias", "bias size " + bias->val.shape_str() + " vs cols " +
                             std::to_string(d));
  Tensor<T> out = a->val;
  const std::size_t rows = out.numel() / d;
  for (std::size_t i = 0; i < rows; ++i) {
    T* r = out.v.data() + i * d;
    const T* bv = bias->val.v.data();
#pragma omp simd
    for (std::size_t j = 0; j < d; ++j) r[j] += bv[j];
  }
  return make_node<T>(std::move(out), {a, bias}, [d](Node<T>& self) {
    const std::size_t rows = self.grad.numel() / d;
    if (self.parents[0]->requires_grad) {
      self.parents[0]->ensure_grad();
      T* g = self.parents[0]->grad.v.data();
      const T* dd = self.grad.v.data();
      const std::size_t n = self.grad.numel();
#pragma omp simd
      for (std::size_t i = 0; i < n; ++i) g[i] += dd[i];
    }
    if (self.parents[1]->requires_grad) {
      self.parents[1]->ensure_grad();
      T* g = self.parents[1]->grad.v.data();
      for (std::size_t i = 0; i < rows; ++i) {
        const T* dr = self.grad.v.data() + i * d;
#pragma omp simd
        for (std::size_t j = 0; j < d; ++j) g[j] += dr[j];
      }
    }
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const std::size_t m = a->val.rows(), k = a->val.cols();
  const std::size_t k2 = b->val.rows(), n = b->val.cols();
  if (k != k2)
    op_error("matmul", "inner dims " + a->val.shape_str() + " vs " + b->val.shape_str());
  Tensor<T> out({m, n});
  kernels::gemm_nn(a->val.v.data(), b->val.v.data(), out.v.data(), m, k, n);
  return make_node<T>(std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      kernels::gemm_nt(self.grad.v.data(), pb->val.v.data(), pa->grad.v.data(),
                       m, n, k, /*accumulate=*/true);
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      kernels::gemm_tn(pa->val.v.data(), self.grad.v.data(), pb->grad.v.data(),
                       k, m, n, /*accumulate=*/true);
    }
  });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  const std::size_t m = a->val.rows(), n = a->val.cols();
  Tensor<T> out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a->val.at(i, j);
  return make_node<T>(std::move(out), {a}, [m, n](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) p->grad.at(i, j) += self.grad.at(j, i);
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, std::vector<std::size_t> shape) {
  if (Tensor<T>::count(shape) != a->val.numel())
    op_error("reshape", "numel mismatch " + a->val.shape_str());
  Tensor<T> out = a->val;
  out.shape = std::move(shape);
  return make_node<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const std::size_t n = self.grad.numel();
    T* g = p->grad.v.data();
    const T* d = self.grad.v.data();
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) g[i] += d[i];
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) op_error("concat_rows", "no inputs");
  std::size_t d = 0, rows = 0;
  for (const auto& p : parts) {
    if (p->val.numel() == 0) continue;
    if (d == 0) d = p->val.cols();
    if (p->val.cols() != d)
      op_error("concat_rows", "col mismatch " + p->val.shape_str());
    rows += p->val.rows();
  }
  Tensor<T> out({rows, d});
  std::size_t r = 0;
  for (const auto& p : parts) {
    std::copy(p->val.v.begin(), p->val.v.end(), out.v.begin() + r * d);
    r += p->val.rows();
  }
  return make_node<T>(std::move(out), parts, [d](Node<T>& self) {
    std::size_t r = 0;
    for (auto& p : self.parents) {
      const std::size_t rows = p->val.rows() * (p->val.numel() ? 1 : 0);
      if (p->requires_grad && p->val.numel()) {
        p->ensure_grad();
        const T* src = self.grad.v.data() + r * d;
        T* g = p->grad.v.data();
        const std::size_t n = p->val.numel();
#pragma omp simd
        for (std::size_t i = 0; i < n; ++i) g[i] += src[i];
      }
      r += rows;
    }
  });
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, std::size_t r0, std::size_t r1) {
  const std::size_t m = a->val.rows(), d = a->val.cols();
  if (r0 > r1 || r1 > m) op_error("slice_rows", "range out of bounds");
  Tensor<T> out({r1 - r0, d});
  std::copy(a->val.v.begin() + r0 * d, a->val.v.begin() + r1 * d, out.v.begin());
  return make_node<T>(std::move(out), {a}, [r0, d](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    T* g = p->grad.v.data() + r0 * d;
    const T* dd = self.grad.v.data();
    const std::size_t n = self.grad.numel();
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) g[i] += dd[i];
  });
}

template <typename T>
Var<T> gather_rows(const Var<T>& a, std::vector<std::size_t> idx) {
  const std::size_t m = a->val.rows(), d = a->val.cols();
  for (auto i : idx)
    if (i >= m) op_error("gather_rows", "index out of range");
  Tensor<T> out({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy(a->val.row(idx[i]), a->val.row(idx[i]) + d, out.row(i));
  auto ip = std::make_shared<std::vector<std::size_t>>(std::move(idx));
  return make_node<T>(std::move(out), {a}, [ip, d](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < ip->size(); ++i) {
      T* g = p->grad.v.data() + (*ip)[i] * d;
      const T* dd = self.grad.v.data() + i * d;
#pragma omp simd
      for (std::size_t j = 0; j < d; ++j) g[j] += dd[j];
    }
  });
}

template <typename T>
Var<T> slice_cols(const Var<T>& a, std::size_t c0, std::size_t c1) {
  const std::size_t m = a->val.rows(), d = a->val.cols();
  if (c0 > c1 || c1 > d) op_error("slice_cols", "range out of bounds");
  const std::size_t w = c1 - c0;
  Tensor<T> out({m, w});
  for (std::size_t i = 0; i < m; ++i)
    std::copy(a->val.row(i) + c0, a->val.row(i) + c1, out.row(i));
  return make_node<T>(std::move(out), {a}, [c0, w, d](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const std::size_t m = self.grad.rows();
    for (std::size_t i = 0; i < m; ++i) {
      T* g = p->grad.v.data() + i * d + c0;
      const T* dd = self.grad.v.data() + i * w;
#pragma omp simd
      for (std::size_t j = 0; j < w; ++j) g[j] += dd[j];
    }
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) op_error("concat_cols", "no inputs");
  const std::size_t m = parts[0]->val.rows();
  std::size_t d = 0;
  for (const auto& p : parts) {
    if (p->val.rows() != m) op_error("concat_cols", "row mismatch");
    d += p->val.cols();
  }
  Tensor<T> out({m, d});
  std::size_t c = 0;
  for (const auto& p : parts) {
    const std::size_t w = p->val.cols();
    for (std::size_t i = 0; i < m; ++i)
      std::copy(p->val.row(i), p->val.row(i) + w, out.row(i) + c);
    c += w;
  }
  return make_node<T>(std::move(out), parts, [m, d](Node<T>& self) {
    std::size_t c = 0;
    for (auto& p : self.parents) {
      const std::size_t w = p->val.cols();
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          T* g = p->grad.v.data() + i * w;
          const T* dd = self.grad.v.data() + i * d + c;
#pragma omp simd
          for (std::size_t j = 0; j < w; ++j) g[j] += dd[j];
        }
      }
      c += w;
    }
  });
}

/// out.v[i] = a.v[idx[i]]; duplicate sources allowed.
template <typename T>
Var<T> gather_flat(const Var<T>& a, std::vector<std::size_t> idx,
                   std::vector<std::size_t> out_shape) {
  if (Tensor<T>::count(out_shape) != idx.size())
    op_error("gather_flat", "index count vs out shape");
  Tensor<T> out(std::move(out_shape));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= a->val.numel()) op_error("gather_flat", "index out of range");
    out.v[i] = a->val.v[idx[i]];
  }
  auto ip = std::make_shared<std::vector<std::size_t>>(std::move(idx));
  return make_node<T>(std::move(out), {a}, [ip](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < ip->size(); ++i)
      p->grad.v[(*ip)[i]] += self.grad.v[i];
  });
}

/// out.v[idx[i]] = a.v[i]; idx must be a bijection onto out positions.
template <typename T>
Var<T> scatter_flat(const Var<T>& a, std::vector<std::size_t> idx,
                    std::vector<std::size_t> out_shape) {
  if (a->val.numel() != idx.size()) op_error("scatter_flat", "index count");
  Tensor<T> out(std::move(out_shape));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= out.numel()) op_error("scatter_flat", "index out of range");
    out.v[idx[i]] = a->val.v[i];
  }
  auto ip = std::make_shared<std::vector<std::size_t>>(std::move(idx));
  return make_node<T>(std::move(out), {a}, [ip](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < ip->size(); ++i)
      p->grad.v[i] += self.grad.v[(*ip)[i]];
  });
}

// ---------------------------------------------------------------------------
// nonlinearities and normalization
// ---------------------------------------------------------------------------

template <typename T>
Var<T> gelu(const Var<T>& a) {
  Tensor<T> out = a->val;
  for (auto& x : out.v) {
    const double xv = static_cast<double>(x);
    x = static_cast<T>(0.5 * xv * (1.0 + std::erf(xv * 0.7071067811865475244)));
  }
  return make_node<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const std::size_t n = self.grad.numel();
    for (std::size_t i = 0; i < n; ++i) {
      const double x = static_cast<double>(p->val.v[i]);
      const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
      const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779;
      p->grad.v[i] += self.grad.v[i] * static_cast<T>(cdf + x * pdf);
    }
  });
}

/// Row-wise softmax over the last dimension.
template <typename T>
Var<T> softmax_rows(const Var<T>& a) {
  const std::size_t rows = a->val.rows(), d = a->val.cols();
  Tensor<T> out = a->val;
  for (std::size_t i = 0; i < rows; ++i) {
    T* r = out.v.data() + i * d;
    T mx = r[0];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, r[j]);
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) {
      r[j] = static_cast<T>(std::exp(static_cast<double>(r[j] - mx)));
      s += r[j];
    }
    const T inv = static_cast<T>(1.0 / s);
    for (std::size_t j = 0; j < d; ++j) r[j] *= inv;
  }
  return make_node<T>(std::move(out), {a}, [rows, d](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < rows; ++i) {
      const T* y = self.val.v.data() + i * d;
      const T* dy = self.grad.v.data() + i * d;
      T* g = p->grad.v.data() + i * d;
      T dot = 0;
#pragma omp simd reduction(+ : dot)
      for (std::size_t j = 0; j < d; ++j) dot += dy[j] * y[j];
#pragma omp simd
      for (std::size_t j = 0; j < d; ++j) g[j] += y[j] * (dy[j] - dot);
    }
  });
}

/// Row-wise layer normalization with affine scale/shift over the last dim.
template <typename T>
Var<T> layer_norm(const Var<T>& a, const Var<T>& gamma, const Var<T>& beta,
                  double eps = 1e-5) {
  const std::size_t d = a->val.cols();
  if (gamma->val.numel() != d || beta->val.numel() != d)
    op_error("layer_norm", "affine params size mismatch");
  const std::size_t rows = a->val.numel() / d;
  Tensor<T> out = a->val;
  Tensor<T> aux({rows, 2});  // per-row mean, inv std
  for (std::size_t i = 0; i < rows; ++i) {
    T* r = out.v.data() + i * d;
    double mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += r[j];
    mu /= d;
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = r[j] - mu;
      var += c * c;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    aux.at(i, 0) = static_cast<T>(mu);
    aux.at(i, 1) = static_cast<T>(inv);
    const T* gv = gamma->val.v.data();
    const T* bv = beta->val.v.data();
    for (std::size_t j = 0; j < d; ++j)
      r[j] = static_cast<T>((r[j] - mu) * inv) * gv[j] + bv[j];
  }
  auto node = make_node<T>(std::move(out), {a, gamma, beta},
                           [rows, d](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pg = self.parents[1];
    auto& pb = self.parents[2];
    const T* gv = pg->val.v.data();
    for (std::size_t i = 0; i < rows; ++i) {
      const T mu = self.aux.at(i, 0), inv = self.aux.at(i, 1);
      const T* x = pa->val.v.data() + i * d;
      const T* dy = self.grad.v.data() + i * d;
      if (pg->requires_grad || pb->requires_grad) {
        if (pg->requires_grad) pg->ensure_grad();
        if (pb->requires_grad) pb->ensure_grad();
        for (std::size_t j = 0; j < d; ++j) {
          const T xh = (x[j] - mu) * inv;
          if (pg->requires_grad) pg->grad.v[j] += dy[j] * xh;
          if (pb->requires_grad) pb->grad.v[j] += dy[j];
        }
      }
      if (pa->requires_grad) {
        pa->ensure_grad();
        T* g = pa->grad.v.data() + i * d;
        double sum_dxh = 0, sum_dxh_xh = 0;
        for (std::size_t j = 0; j < d; ++j) {
          const double dxh = static_cast<double>(dy[j]) * gv[j];
          const double xh = (x[j] - mu) * inv;
          sum_dxh += dxh;
          sum_dxh_xh += dxh * xh;
        }
        for (std::size_t j = 0; j < d; ++j) {
          const double dxh = static_cast<double>(dy[j]) * gv[j];
          const double xh = (x[j] - mu) * inv;
          g[j] += static_cast<T>(inv * (dxh - sum_dxh / d - xh * sum_dxh_xh / d));
        }
      }
    }
  });
  node->aux = std::move(aux);
  return node;
}

/// Fused scaled-dot-product attention for one head. Stores only the softmax
/// probabilities for backward. q,k,v: (n_q,d),(n_k,d),(n_k,d).
template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, double att_scale) {
  const std::size_t nq = q->val.rows(), d = q->val.cols();
  const std::size_t nk = k->val.rows();
  if (k->val.cols() != d || v->val.rows() != nk)
    op_error("attention", "shape mismatch q" + q->val.shape_str() + " k" +
                              k->val.shape_str() + " v" + v->val.shape_str());
  const std::size_t dv = v->val.cols();
  Tensor<T> probs({nq, nk});
  kernels::gemm_nt(q->val.v.data(), k->val.v.data(), probs.v.data(), nq, d, nk);
  const T sc = static_cast<T>(att_scale);
  for (std::size_t i = 0; i < nq; ++i) {
    T* r = probs.v.data() + i * nk;
    T mx = r[0] * sc;
    for (std::size_t j = 0; j < nk; ++j) mx = std::max(mx, r[j] * sc);
    double s = 0;
    for (std::size_t j = 0; j < nk; ++j) {
      r[j] = static_cast<T>(std::exp(static_cast<double>(r[j] * sc - mx)));
      s += r[j];
    }
    const T inv = static_cast<T>(1.0 / s);
#pragma omp simd
    for (std::size_t j = 0; j < nk; ++j) r[j] *= inv;
  }
  Tensor<T> out({nq, dv});
  kernels::gemm_nn(probs.v.data(), v->val.v.data(), out.v.data(), nq, nk, dv);
  auto node = make_node<T>(std::move(out), {q, k, v},
                           [nq, nk, d, dv, sc](Node<T>& self) {
    auto& pq = self.parents[0];
    auto& pk = self.parents[1];
    auto& pv = self.parents[2];
    const Tensor<T>& probs = self.aux;
    if (pv->requires_grad) {
      pv->ensure_grad();
      // dV = P^T * dOut : (nk,nq)*(nq,dv)
      kernels::gemm_tn(probs.v.data(), self.grad.v.data(), pv->grad.v.data(),
                       nk, nq, dv, true);
    }
    if (pq->requires_grad || pk->requires_grad) {
      Tensor<T> dp({nq, nk});
      kernels::gemm_nt(self.grad.v.data(), pv->val.v.data(), dp.v.data(), nq,
                       dv, nk);
      // softmax backward in place: ds = p .* (dp - rowdot(dp, p)), then * sc
      for (std::size_t i = 0; i < nq; ++i) {
        const T* p = probs.v.data() + i * nk;
        T* dr = dp.v.data() + i * nk;
        T dot = 0;
#pragma omp simd reduction(+ : dot)
        for (std::size_t j = 0; j < nk; ++j) dot += dr[j] * p[j];
#pragma omp simd
        for (std::size_t j = 0; j < nk; ++j) dr[j] = sc * p[j] * (dr[j] - dot);
      }
      if (pq->requires_grad) {
        pq->ensure_grad();
        kernels::gemm_nn(dp.v.data(), pk->val.v.data(), pq->grad.v.data(), nq,
                         nk, d, true);
      }
      if (pk->requires_grad) {
        pk->ensure_grad();
        // dK = dS^T * Q : (nk,nq)*(nq,d)
        kernels::gemm_tn(dp.v.data(), pq->val.v.data(), pk->grad.v.data(), nk,
                         nq, d, true);
      }
    }
  });
  node->aux = std::move(probs);
  return node;
}

// ---------------------------------------------------------------------------
// reductions and losses
// ---------------------------------------------------------------------------

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  double s = 0;
  for (T x : a->val.v) s += x;
  Tensor<T> out({1});
  out.v[0] = static_cast<T>(s);
  return make_node<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const T d = self.grad.v[0];
    for (auto& g : p->grad.v) g += d;
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a->val.numel()));
}

/// mean |a - b| over all elements; subgradient 0 at kinks.
template <typename T>
Var<T> l1_mean(const Var<T>& a, const Var<T>& b) {
  check_same_shape("l1_mean", a->val, b->val);
  double s = 0;
  const std::size_t n = a->val.numel();
  for (std::size_t i = 0; i < n; ++i)
    s += std::fabs(static_cast<double>(a->val.v[i] - b->val.v[i]));
  Tensor<T> out({1});
  out.v[0] = static_cast<T>(s / n);
  return make_node<T>(std::move(out), {a, b}, [n](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    const T d = self.grad.v[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T diff = pa->val.v[i] - pb->val.v[i];
      const T s = diff > 0 ? d : (diff < 0 ? -d : T(0));
      if (pa->requires_grad) {
        pa->ensure_grad();
        pa->grad.v[i] += s;
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        pb->grad.v[i] -= s;
      }
    }
  });
}

/// mean (a - b)^2 over all elements.
template <typename T>
Var<T> mse_mean(const Var<T>& a, const Var<T>& b) {
  check_same_shape("mse_mean", a->val, b->val);
  double s = 0;
  const std::size_t n = a->val.numel();
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = static_cast<double>(a->val.v[i] - b->val.v[i]);
    s += diff * diff;
  }
  Tensor<T> out({1});
  out.v[0] = static_cast<T>(s / n);
  return make_node<T>(std::move(out), {a, b}, [n](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    const T d = self.grad.v[0] * T(2) / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T diff = pa->val.v[i] - pb->val.v[i];
      if (pa->requires_grad) {
        pa->ensure_grad();
        pa->grad.v[i] += d * diff;
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        pb->grad.v[i] -= d * diff;
      }
    }
  });
}

/// Elementwise multiply by a one-element node (broadcast scalar).
template <typename T>
Var<T> mul_scalar_node(const Var<T>& a, const Var<T>& s) {
  if (s->val.numel() != 1) op_error("mul_scalar_node", "scalar operand expected");
  Tensor<T> out = a->val;
  const T sv = s->val.v[0];
  for (auto& x : out.v) x *= sv;
  return make_node<T>(std::move(out), {a, s}, [sv](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& ps = self.parents[1];
    const std::size_t n = self.grad.numel();
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) pa->grad.v[i] += self.grad.v[i] * sv;
    }
    if (ps->requires_grad) {
      ps->ensure_grad();
      double acc = 0;
      for (std::size_t i = 0; i < n; ++i)
        acc += static_cast<double>(self.grad.v[i]) * pa->val.v[i];
      ps->grad.v[0] += static_cast<T>(acc);
    }
  });
}

/// One-element node -> 1/sqrt(x + eps).
template <typename T>
Var<T> rsqrt_scalar(const Var<T>& s, double eps) {
  if (s->val.numel() != 1) op_error("rsqrt_scalar", "scalar operand expected");
  Tensor<T> out({1});
  const double x = static_cast<double>(s->val.v[0]) + eps;
  out.v[0] = static_cast<T>(1.0 / std::sqrt(x));
  return make_node<T>(std::move(out), {s}, [eps](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double x = static_cast<double>(p->val.v[0]) + eps;
    p->grad.v[0] += self.grad.v[0] * static_cast<T>(-0.5 / (x * std::sqrt(x)));
  });
}

/// Elementwise sqrt(x + eps).
template <typename T>
Var<T> sqrt_eps(const Var<T>& a, double eps) {
  Tensor<T> out = a->val;
  for (auto& x : out.v)
    x = static_cast<T>(std::sqrt(static_cast<double>(x) + eps));
  return make_node<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const std::size_t n = self.grad.numel();
    for (std::size_t i = 0; i < n; ++i)
      p->grad.v[i] += self.grad.v[i] * T(0.5) / self.val.v[i];
  });
}

/// sqrt(re^2 + im^2) elementwise; gradient 0 at the origin.
template <typename T>
Var<T> complex_abs(const Var<T>& re, const Var<T>& im) {
  check_same_shape("complex_abs", re->val, im->val);
  Tensor<T> out = re->val;
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i)
    out.v[i] = static_cast<T>(std::hypot(static_cast<double>(re->val.v[i]),
                                         static_cast<double>(im->val.v[i])));
  return make_node<T>(std::move(out), {re, im}, [n](Node<T>& self) {
    auto& pr = self.parents[0];
    auto& pi = self.parents[1];
    for (std::size_t i = 0; i < n; ++i) {
      const T r = self.val.v[i];
      if (r == T(0)) continue;
      const T d = self.grad.v[i] / r;
      if (pr->requires_grad) {
        pr->ensure_grad();
        pr->grad.v[i] += d * pr->val.v[i];
      }
      if (pi->requires_grad) {
        pi->ensure_grad();
        pi->grad.v[i] += d * pi->val.v[i];
      }
    }
  });
}

/// mean_n cos(atan2(im_hat,re_hat) - atan2(im,re)); elements where either
/// magnitude is exactly zero contribute cos = 1 and no gradient.
template <typename T>
Var<T> phase_cosine_mean(const Var<T>& re_hat, const Var<T>& im_hat,
                         const Var<T>& re, const Var<T>& im) {
  check_same_shape("phase_cosine_mean", re_hat->val, re->val);
  check_same_shape("phase_cosine_mean", im_hat->val, im->val);
  const std::size_t n = re->val.numel();
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double rh = re_hat->val.v[i], ih = im_hat->val.v[i];
    const double r = re->val.v[i], im_v = im->val.v[i];
    const double m1 = std::hypot(rh, ih), m2 = std::hypot(r, im_v);
    if (m1 == 0.0 || m2 == 0.0) {
      acc += 1.0;
      continue;
    }
    acc += std::cos(std::atan2(ih, rh) - std::atan2(im_v, r));
  }
  Tensor<T> out({1});
  out.v[0] = static_cast<T>(acc / n);
  return make_node<T>(std::move(out), {re_hat, im_hat, re, im},
                      [n](Node<T>& self) {
    auto& prh = self.parents[0];
    auto& pih = self.parents[1];
    auto& pr = self.parents[2];
    auto& pi = self.parents[3];
    const double d = static_cast<double>(self.grad.v[0]) / n;
    for (std::size_t i = 0; i < n; ++i) {
      const double rh = prh->val.v[i], ih = pih->val.v[i];
      const double r = pr->val.v[i], imv = pi->val.v[i];
      const double q1 = rh * rh + ih * ih, q2 = r * r + imv * imv;
      if (q1 == 0.0 || q2 == 0.0) continue;
      const double du = std::atan2(ih, rh) - std::atan2(imv, r);
      const double s = std::sin(du);
      if (prh->requires_grad) {
        prh->ensure_grad();
        prh->grad.v[i] += static_cast<T>(d * s * ih / q1);
      }
      if (pih->requires_grad) {
        pih->ensure_grad();
        pih->grad.v[i] += static_cast<T>(-d * s * rh / q1);
      }
      if (pr->requires_grad) {
        pr->ensure_grad();
        pr->grad.v[i] += static_cast<T>(-d * s * imv / q2);
      }
      if (pi->requires_grad) {
        pi->ensure_grad();
        pi->grad.v[i] += static_cast<T>(d * s * r / q2);
      }
    }
  });
}

/// Straight-through elementwise quantizer: forward applies fn, backward is
/// the identity.
template <typename T>
Var<T> quantize_st(const Var<T>& a, const std::function<T(T)>& fn) {
  Tensor<T> out = a->val;
  for (auto& x : out.v) x = fn(x);
  return make_node<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const std::size_t n = self.grad.numel();
    for (std::size_t i = 0; i < n; ++i) p->grad.v[i] += self.grad.v[i];
  });
}

/// Row-wise hard one-hot at the argmax; straight-through backward, so the
/// gradient equals the soft input's gradient.
template <typename T>
Var<T> hard_onehot_st(const Var<T>& y) {
  const std::size_t rows = y->val.rows(), d = y->val.cols();
  Tensor<T> out({rows, d});
  for (std::size_t i = 0; i < rows; ++i) {
    const T* r = y->val.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < d; ++j)
      if (r[j] > r[best]) best = j;
    out.at(i, best) = T(1);
  }
  return make_node<T>(std::move(out), {y}, [](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const std::size_t n = self.grad.numel();
    for (std::size_t i = 0; i < n; ++i) p->grad.v[i] += self.grad.v[i];
  });
}

/// (groups*group_size, d) -> (groups, d) rowwise max pooling per group.
template <typename T>
Var<T> group_max_rows(const Var<T>& a, std::size_t group_size) {
  const std::size_t m = a->val.rows(), d = a->val.cols();
  if (group_size == 0 || m % group_size)
    op_error("group_max_rows", "rows not divisible by group size");
  const std::size_t groups = m / group_size;
  Tensor<T> out({groups, d});
  auto arg = std::make_shared<std::vector<std::size_t>>(groups * d);
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t j = 0; j < d; ++j) {
      std::size_t best = g * group_size;
      T bv = a->val.at(best, j);
      for (std::size_t r = 1; r < group_size; ++r) {
        const T x = a->val.at(g * group_size + r, j);
        if (x > bv) {
          bv = x;
          best = g * group_size + r;
        }
      }
      out.at(g, j) = bv;
      (*arg)[g * d + j] = best;
    }
  auto node = make_node<T>(std::move(out), {a}, [d](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const std::size_t groups = self.grad.rows();
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t j = 0; j < d; ++j)
        p->grad.at((*self.aux_idx)[g * d + j], j) += self.grad.at(g, j);
  });
  node->aux_idx = arg;
  return node;
}

/// Mean cross entropy with fused softmax over rows; labels are class indices.
template <typename T>
Var<T> cross_entropy_mean(const Var<T>& logits, std::vector<std::size_t> labels) {
  const std::size_t rows = logits->val.rows(), d = logits->val.cols();
  if (labels.size() != rows) op_error("cross_entropy_mean", "label count");
  for (auto l : labels)
    if (l >= d) op_error("cross_entropy_mean", "label out of range");
  Tensor<T> probs = logits->val;
  double loss = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    T* r = probs.v.data() + i * d;
    T mx = r[0];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, r[j]);
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) {
      r[j] = static_cast<T>(std::exp(static_cast<double>(r[j] - mx)));
      s += r[j];
    }
    const T inv = static_cast<T>(1.0 / s);
    for (std::size_t j = 0; j < d; ++j) r[j] *= inv;
    loss -= std::log(std::max(static_cast<double>(r[labels[i]]), 1e-300));
  }
  Tensor<T> out({1});
  out.v[0] = static_cast<T>(loss / rows);
  auto lp = std::make_shared<std::vector<std::size_t>>(std::move(labels));
  auto node = make_node<T>(std::move(out), {logits}, [lp, d](Node<T>& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const std::size_t rows = lp->size();
    const T dscale = self.grad.v[0] / static_cast<T>(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      const T* pr = self.aux.v.data() + i * d;
      T* g = p->grad.v.data() + i * d;
      for (std::size_t j = 0; j < d; ++j)
        g[j] += dscale * (pr[j] - (j == (*lp)[i] ? T(1) : T(0)));
    }
  });
  node->aux = std::move(probs);
  return node;
}

template <typename T>
bool has_nan(const Tensor<T>& t) {
  for (T x : t.v)
    if (std::isnan(static_cast<double>(x))) return true;
  return false;
}

}  // namespace wwm::ad
