#pragma once
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "meshgpt/tensor.hpp"

namespace meshgpt::ad {

// Reverse-mode tape. Ops record one node per result; backward() walks nodes
// in reverse creation order (creation order is already topological), handing
// each node its output gradient, and accumulates input gradients with +=.
// A tape is single-writer; build a fresh one per training step.
template <class T>
class Tape {
 public:
  using BackFn = std::function<void(Tape&, const Tensor<T>&)>;

  bool enabled = true;

  // Registers a leaf (parameter or input we want gradients for). Memoized by
  // buffer so repeated uses share a node and fan-out accumulates.
  Tensor<T> leaf(const Tensor<T>& t) {
    if (!enabled) return t;
    auto it = leaf_ids_.find(t.data.get());
    Tensor<T> out = t;
    if (it != leaf_ids_.end()) {
      out.node = it->second;
      return out;
    }
    out.node = push(t.shape, nullptr);
    leaf_ids_[t.data.get()] = out.node;
    return out;
  }

  bool has_grad(const Tensor<T>& t) const {
    return t.node >= 0 && t.node < int(grads_.size()) && grads_[t.node].defined();
  }

  const Tensor<T>& grad(const Tensor<T>& t) const {
    if (!has_grad(t)) throw TensorError("no gradient recorded for this tensor");
    return grads_[t.node];
  }

  void backward(const Tensor<T>& root) {
    if (root.node < 0) throw TensorError("backward: root is not on the tape");
    if (root.numel() != 1)
      throw TensorError("backward: root must be scalar, got " + root.shape.str());
    grads_.assign(nodes_.size(), Tensor<T>());
    grad_slot(root.node, root.shape)[0] = T(1);
    for (int i = root.node; i >= 0; --i) {
      if (grads_[i].defined() && nodes_[i].back) nodes_[i].back(*this, grads_[i]);
    }
  }

  // --- used by op implementations ---

  int push(Shape s, BackFn back) {
    nodes_.push_back({s, std::move(back)});
    return int(nodes_.size()) - 1;
  }

  Tensor<T>& grad_slot(int node, Shape s) {
    if (!grads_[node].defined()) grads_[node] = Tensor<T>::zeros(s);
    return grads_[node];
  }

  void accumulate(int node, const Tensor<T>& g) {
    if (node < 0) return;
    Tensor<T>& slot = grad_slot(node, g.shape);
    T* dst = slot.ptr();
    const T* src = g.ptr();
    for (int64_t i = 0, n = g.numel(); i < n; ++i) dst[i] += src[i];
  }

 private:
  struct Node {
    Shape shape;
    BackFn back;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
  std::unordered_map<const void*, int> leaf_ids_;
};

namespace detail {

template <class T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// b broadcasts into a when its shape equals a suffix of a's shape (scalars
// included); flat index i of a then maps to i % b.numel().
inline bool suffix_broadcast(const Shape& a, const Shape& b) {
  if (b.rank > a.rank) return false;
  for (int j = 0; j < b.rank; ++j) {
    if (a.d[a.rank - b.rank + j] != b.d[j]) return false;
  }
  return true;
}

template <class T>
bool tracked(const Tape<T>& tp, const Tensor<T>& a) {
  return a.node >= 0;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops (suffix broadcasting over leading batch dims)
// ---------------------------------------------------------------------------

namespace detail {

// Shared skeleton for add/sub/mul: f(a_i, b_{i mod m}).
template <class T, class Fwd, class Back>
Tensor<T> binary_op(const char* name, Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b,
                    Fwd fwd, Back back) {
  if (!suffix_broadcast(a.shape, b.shape)) {
    throw TensorError(std::string(name) + ": shapes " + a.shape.str() + " and " +
                      b.shape.str() + " incompatible");
  }
  Tensor<T> out(a.shape);
  const int64_t n = a.numel(), m = b.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = fwd(a[i], b[i % m]);
  if (tp.enabled && (a.node >= 0 || b.node >= 0)) {
    out.node = tp.push(out.shape, [a, b, back](Tape<T>& t, const Tensor<T>& g) {
      back(t, g, a, b);
    });
  }
  return out;
}

}  // namespace detail

template <class T>
Tensor<T> add(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op<T>(
      "add", tp, a, b, [](T x, T y) { return x + y; },
      [](Tape<T>& t, const Tensor<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
        t.accumulate(a.node, g);
        if (b.node >= 0) {
          Tensor<T> db(b.shape);
          const int64_t n = g.numel(), m = b.numel();
          for (int64_t i = 0; i < n; ++i) db[i % m] += g[i];
          t.accumulate(b.node, db);
        }
      });
}

template <class T>
Tensor<T> sub(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op<T>(
      "sub", tp, a, b, [](T x, T y) { return x - y; },
      [](Tape<T>& t, const Tensor<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
        t.accumulate(a.node, g);
        if (b.node >= 0) {
          Tensor<T> db(b.shape);
          const int64_t n = g.numel(), m = b.numel();
          for (int64_t i = 0; i < n; ++i) db[i % m] -= g[i];
          t.accumulate(b.node, db);
        }
      });
}

template <class T>
Tensor<T> mul(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op<T>(
      "mul", tp, a, b, [](T x, T y) { return x * y; },
      [](Tape<T>& t, const Tensor<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
        const int64_t n = g.numel(), m = b.numel();
        if (a.node >= 0) {
          Tensor<T> da(a.shape);
          for (int64_t i = 0; i < n; ++i) da[i] = g[i] * b[i % m];
          t.accumulate(a.node, da);
        }
        if (b.node >= 0) {
          Tensor<T> db(b.shape);
          for (int64_t i = 0; i < n; ++i) db[i % m] += g[i] * a[i];
          t.accumulate(b.node, db);
        }
      });
}

template <class T>
Tensor<T> scale(Tape<T>& tp, const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape);
  for (int64_t i = 0, n = a.numel(); i < n; ++i) out[i] = a[i] * s;
  if (tp.enabled && a.node >= 0) {
    out.node = tp.push(out.shape, [a, s](Tape<T>& t, const Tensor<T>& g) {
      Tensor<T> da(a.shape);
      for (int64_t i = 0, n = g.numel(); i < n; ++i) da[i] = g[i] * s;
      t.accumulate(a.node, da);
    });
  }
  return out;
}

template <class T>
Tensor<T> relu(Tape<T>& tp, const Tensor<T>& a) {
  Tensor<T> out(a.shape);
  for (int64_t i = 0, n = a.numel(); i < n; ++i) out[i] = a[i] > T(0) ? a[i] : T(0);
  if (tp.enabled && a.node >= 0) {
    out.node = tp.push(out.shape, [a](Tape<T>& t, const Tensor<T>& g) {
      Tensor<T> da(a.shape);
      for (int64_t i = 0, n = g.numel(); i < n; ++i) da[i] = a[i] > T(0) ? g[i] : T(0);
      t.accumulate(a.node, da);
    });
  }
  return out;
}

// tanh approximation: 0.5 x (1 + tanh(c (x + 0.044715 x^3))).
template <class T>
Tensor<T> gelu(Tape<T>& tp, const Tensor<T>& a) {
  const T c = T(0.7978845608028654);  // sqrt(2/pi)
  const T k = T(0.044715);
  Tensor<T> out(a.shape);
  for (int64_t i = 0, n = a.numel(); i < n; ++i) {
    T x = a[i];
    out[i] = T(0.5) * x * (T(1) + std::tanh(c * (x + k * x * x * x)));
  }
  if (tp.enabled && a.node >= 0) {
    out.node = tp.push(out.shape, [a, c, k](Tape<T>& t, const Tensor<T>& g) {
      Tensor<T> da(a.shape);
      for (int64_t i = 0, n = g.numel(); i < n; ++i) {
        T x = a[i];
        T u = c * (x + k * x * x * x);
        T th = std::tanh(u);
        T dudx = c * (T(1) + T(3) * k * x * x);
        da[i] = g[i] * (T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * dudx);
      }
      t.accumulate(a.node, da);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> matmul(Tape<T>& tp, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape.rank != 2 || b.shape.rank != 2 || a.shape[1] != b.shape[0]) {
    throw TensorError("matmul: shapes " + a.shape.str() + " x " + b.shape.str());
  }
  const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor<T> out({m, n});
  detail::ConstMatMap<T> A(a.ptr(), m, k), B(b.ptr(), k, n);
  detail::MatMap<T>(out.ptr(), m, n).noalias() = A * B;
  if (tp.enabled && (a.node >= 0 || b.node >= 0)) {
    out.node = tp.push(out.shape, [a, b, m, k, n](Tape<T>& t, const Tensor<T>& g) {
      detail::ConstMatMap<T> G(g.ptr(), m, n);
      if (a.node >= 0) {
        Tensor<T> da(a.shape);
        detail::ConstMatMap<T> B(b.ptr(), k, n);
        detail::MatMap<T>(da.ptr(), m, k).noalias() = G * B.transpose();
        t.accumulate(a.node, da);
      }
      if (b.node >= 0) {
        Tensor<T> db(b.shape);
        detail::ConstMatMap<T> A(a.ptr(), m, k);
        detail::MatMap<T>(db.ptr(), k, n).noalias() = A.transpose() * G;
        t.accumulate(b.node, db);
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> transpose(Tape<T>& tp, const Tensor<T>& a) {
  if (a.shape.rank != 2) throw TensorError("transpose: rank-2 only, got " + a.shape.str());
  const int64_t m = a.shape[0], n = a.shape[1];
  Tensor<T> out({n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  if (tp.enabled && a.node >= 0) {
    out.node = tp.push(out.shape, [a, m, n](Tape<T>& t, const Tensor<T>& g) {
      Tensor<T> da(a.shape);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) da[i * n + j] = g[j * m + i];
      t.accumulate(a.node, da);
    });
  }
  return out;
}

enum class Pad { kSame, kValid };

// x: [L, Cin], w: [K, Cin, Cout] -> [Lout, Cout], stride 1. Same padding
// requires an odd kernel. Implemented as im2col + one matmul.
template <class T>
Tensor<T> conv1d(Tape<T>& tp, const Tensor<T>& x, const Tensor<T>& w, Pad pad) {
  if (x.shape.rank != 2 || w.shape.rank != 3 || w.shape[1] != x.shape[1]) {
    throw TensorError("conv1d: shapes " + x.shape.str() + " * " + w.shape.str());
  }
  const int64_t L = x.shape[0], C = x.shape[1], K = w.shape[0], F = w.shape[2];
  if (pad == Pad::kSame && K % 2 == 0) throw TensorError("conv1d: same padding needs odd kernel");
  const int64_t off = pad == Pad::kSame ? (K - 1) / 2 : 0;
  const int64_t Lout = pad == Pad::kSame ? L : L - K + 1;
  if (Lout < 1) throw TensorError("conv1d: input shorter than kernel");

  Tensor<T> col({Lout, K * C});
  for (int64_t t = 0; t < Lout; ++t) {
    for (int64_t k = 0; k < K; ++k) {
      const int64_t s = t + k - off;
      T* dst = col.ptr() + (t * K + k) * C;
      if (s < 0 || s >= L) {
        std::fill(dst, dst + C, T(0));
      } else {
        const T* src = x.ptr() + s * C;
        std::copy(src, src + C, dst);
      }
    }
  }
  Tensor<T> out({Lout, F});
  detail::ConstMatMap<T> Col(col.ptr(), Lout, K * C), W(w.ptr(), K * C, F);
  detail::MatMap<T>(out.ptr(), Lout, F).noalias() = Col * W;

  if (tp.enabled && (x.node >= 0 || w.node >= 0)) {
    out.node = tp.push(out.shape, [x, w, col, L, C, K, F, off, Lout](Tape<T>& t,
                                                                     const Tensor<T>& g) {
      detail::ConstMatMap<T> G(g.ptr(), Lout, F);
      if (w.node >= 0) {
        Tensor<T> dw(w.shape);
        detail::ConstMatMap<T> Col(col.ptr(), Lout, K * C);
        detail::MatMap<T>(dw.ptr(), K * C, F).noalias() = Col.transpose() * G;
        t.accumulate(w.node, dw);
      }
      if (x.node >= 0) {
        Tensor<T> dcol({Lout, K * C});
        detail::ConstMatMap<T> W(w.ptr(), K * C, F);
        detail::MatMap<T>(dcol.ptr(), Lout, K * C).noalias() = G * W.transpose();
        Tensor<T> dx(x.shape);
        for (int64_t tt = 0; tt < Lout; ++tt) {
          for (int64_t k = 0; k < K; ++k) {
            const int64_t s = tt + k - off;
            if (s < 0 || s >= L) continue;
            const T* src = dcol.ptr() + (tt * K + k) * C;
            T* dst = dx.ptr() + s * C;
            for (int64_t c = 0; c < C; ++c) dst[c] += src[c];
          }
        }
        t.accumulate(x.node, dx);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization and softmax
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> softmax(Tape<T>& tp, const Tensor<T>& a, int axis) {
  if (axis < 0) axis += a.shape.rank;
  if (axis < 0 || axis >= a.shape.rank) throw TensorError("softmax: bad axis");
  int64_t outer = 1, inner = 1;
  const int64_t len = a.shape[axis];
  for (int i = 0; i < axis; ++i) outer *= a.shape[i];
  for (int i = axis + 1; i < a.shape.rank; ++i) inner *= a.shape[i];

  Tensor<T> out(a.shape);
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * len * inner + in;
      T mx = a[base];
      for (int64_t k = 1; k < len; ++k) mx = std::max(mx, a[base + k * inner]);
      T sum = T(0);
      for (int64_t k = 0; k < len; ++k) {
        T e = std::exp(a[base + k * inner] - mx);
        out[base + k * inner] = e;
        sum += e;
      }
      for (int64_t k = 0; k < len; ++k) out[base + k * inner] /= sum;
    }
  }
  if (tp.enabled && a.node >= 0) {
    out.node = tp.push(out.shape, [a, out, outer, inner, len](Tape<T>& t, const Tensor<T>& g) {
      Tensor<T> da(a.shape);
      for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
          const int64_t base = o * len * inner + in;
          T dot = T(0);
          for (int64_t k = 0; k < len; ++k) dot += g[base + k * inner] * out[base + k * inner];
          for (int64_t k = 0; k < len; ++k) {
            const int64_t idx = base + k * inner;
            da[idx] = out[idx] * (g[idx] - dot);
          }
        }
      }
      t.accumulate(a.node, da);
    });
  }
  return out;
}

// Square score matrix [L, L]; row i is a softmax over columns 0..i and exact
// zeros above the diagonal, so later positions cannot leak into earlier ones.
template <class T>
Tensor<T> causal_softmax(Tape<T>& tp, const Tensor<T>& a) {
  if (a.shape.rank != 2 || a.shape[0] != a.shape[1]) {
    throw TensorError("causal_softmax: square rank-2 input required, got " + a.shape.str());
  }
  const int64_t L = a.shape[0];
  Tensor<T> out(a.shape);
  for (int64_t i = 0; i < L; ++i) {
    const T* row = a.ptr() + i * L;
    T* orow = out.ptr() + i * L;
    T mx = row[0];
    for (int64_t j = 1; j <= i; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    for (int64_t j = 0; j <= i; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (int64_t j = 0; j <= i; ++j) orow[j] /= sum;
    for (int64_t j = i + 1; j < L; ++j) orow[j] = T(0);
  }
  if (tp.enabled && a.node >= 0) {
    out.node = tp.push(out.shape, [a, out, L](Tape<T>& t, const Tensor<T>& g) {
      Tensor<T> da(a.shape);
      for (int64_t i = 0; i < L; ++i) {
        const T* orow = out.ptr() + i * L;
        const T* grow = g.ptr() + i * L;
        T* drow = da.ptr() + i * L;
        T dot = T(0);
        for (int64_t j = 0; j <= i; ++j) dot += grow[j] * orow[j];
        for (int64_t j = 0; j <= i; ++j) drow[j] = orow[j] * (grow[j] - dot);
      }
      t.accumulate(a.node, da);
    });
  }
  return out;
}

// Normalizes the last axis to zero mean / unit variance (no affine; scale and
// shift are separate parameters composed with mul/add).
template <class T>
Tensor<T> layer_norm(Tape<T>& tp, const Tensor<T>& a, T eps = T(1e-5)) {
  if (a.shape.rank < 1) throw TensorError("layer_norm: rank >= 1 required");
  const int64_t C = a.shape[a.shape.rank - 1];
  const int64_t rows = a.numel() / C;
  Tensor<T> out(a.shape);
  Tensor<T> inv_std({rows});
  for (int64_t r = 0; r < rows; ++r) {
    const T* row = a.ptr() + r * C;
    T* orow = out.ptr() + r * C;
    T mean = T(0);
    for (int64_t c = 0; c < C; ++c) mean += row[c];
    mean /= T(C);
    T var = T(0);
    for (int64_t c = 0; c < C; ++c) {
      T d = row[c] - mean;
      var += d * d;
    }
    var /= T(C);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int64_t c = 0; c < C; ++c) orow[c] = (row[c] - mean) * is;
  }
  if (tp.enabled && a.node >= 0) {
    out.node = tp.push(out.shape, [a, out, inv_std, rows, C](Tape<T>& t, const Tensor<T>& g) {
      Tensor<T> da(a.shape);
      for (int64_t r = 0; r < rows; ++r) {
        const T* y = out.ptr() + r * C;
        const T* grow = g.ptr() + r * C;
        T* drow = da.ptr() + r * C;
        T gmean = T(0), gymean = T(0);
        for (int64_t c = 0; c < C; ++c) {
          gmean += grow[c];
          gymean += grow[c] * y[c];
        }
        gmean /= T(C);
        gymean /= T(C);
        for (int64_t c = 0; c < C; ++c) {
          drow[c] = inv_std[r] * (grow[c] - gmean - y[c] * gymean);
        }
      }
      t.accumulate(a.node, da);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gather / scatter style ops
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> embedding_gather(Tape<T>& tp, const Tensor<T>& table, const std::vector<int64_t>& idx) {
  if (table.shape.rank != 2) throw TensorError("embedding_gather: table must be rank-2");
  const int64_t K = table.shape[0], E = table.shape[1];
  for (int64_t i : idx) {
    if (i < 0 || i >= K) throw TensorError("embedding_gather: index " + std::to_string(i) +
                                           " out of range [0, " + std::to_string(K) + ")");
  }
  Tensor<T> out({int64_t(idx.size()), E});
  for (size_t r = 0; r < idx.size(); ++r) {
    std::copy(table.ptr() + idx[r] * E, table.ptr() + (idx[r] + 1) * E, out.ptr() + r * E);
  }
  if (tp.enabled && table.node >= 0) {
    out.node = tp.push(out.shape, [table, idx, E](Tape<T>& t, const Tensor<T>& g) {
      Tensor<T> dt(table.shape);
      for (size_t r = 0; r < idx.size(); ++r) {
        const T* src = g.ptr() + r * E;
        T* dst = dt.ptr() + idx[r] * E;
        for (int64_t c = 0; c < E; ++c) dst[c] += src[c];
      }
      t.accumulate(table.node, dt);
    });
  }
  return out;
}

// y[r] = sum_k w_k x[col_k] per CSR row; backward applies the transpose.
template <class T>
Tensor<T> rowmix(Tape<T>& tp, const RowMix& m, const Tensor<T>& x) {
  if (x.shape.rank != 2 || x.shape[0] != m.cols) {
    throw TensorError("rowmix: expected [" + std::to_string(m.cols) + ", E], got " +
                      x.shape.str());
  }
  const int64_t E = x.shape[1];
  Tensor<T> out({int64_t(m.rows), E});
  for (int r = 0; r < m.rows; ++r) {
    T* dst = out.ptr() + int64_t(r) * E;
    for (int e = m.offsets[r]; e < m.offsets[r + 1]; ++e) {
      const T w = T(m.weight[e]);
      const T* src = x.ptr() + int64_t(m.col[e]) * E;
      for (int64_t c = 0; c < E; ++c) dst[c] += w * src[c];
    }
  }
  if (tp.enabled && x.node >= 0) {
    out.node = tp.push(out.shape, [&m, x, E](Tape<T>& t, const Tensor<T>& g) {
      Tensor<T> dx(x.shape);
      for (int r = 0; r < m.rows; ++r) {
        const T* src = g.ptr() + int64_t(r) * E;
        for (int e = m.offsets[r]; e < m.offsets[r + 1]; ++e) {
          const T w = T(m.weight[e]);
          T* dst = dx.ptr() + int64_t(m.col[e]) * E;
          for (int64_t c = 0; c < E; ++c) dst[c] += w * src[c];
        }
      }
      t.accumulate(x.node, dx);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> reshape(Tape<T>& tp, const Tensor<T>& a, Shape s) {
  if (s.numel() != a.numel()) {
    throw TensorError("reshape: " + a.shape.str() + " -> " + s.str());
  }
  Tensor<T> out;
  out.shape = s;
  out.data = a.data;  // tensors are immutable once built, sharing is safe
  if (tp.enabled && a.node >= 0) {
    out.node = tp.push(s, [a](Tape<T>& t, const Tensor<T>& g) {
      Tensor<T> da;
      da.shape = a.shape;
      da.data = g.data;
      t.accumulate(a.node, da);
    });
  }
  return out;
}

template <class T>
Tensor<T> slice(Tape<T>& tp, const Tensor<T>& a, int axis, int64_t start, int64_t len) {
  if (axis < 0 || axis >= a.shape.rank) throw TensorError("slice: bad axis");
  if (start < 0 || len < 1 || start + len > a.shape[axis]) {
    throw TensorError("slice: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                      ") out of range for " + a.shape.str());
  }
  Shape os = a.shape;
  os.d[axis] = len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.shape[i];
  for (int i = axis + 1; i < a.shape.rank; ++i) inner *= a.shape[i];
  const int64_t alen = a.shape[axis];

  Tensor<T> out(os);
  for (int64_t o = 0; o < outer; ++o) {
    const T* src = a.ptr() + (o * alen + start) * inner;
    T* dst = out.ptr() + o * len * inner;
    std::copy(src, src + len * inner, dst);
  }
  if (tp.enabled && a.node >= 0) {
    out.node = tp.push(os, [a, axis, start, len, outer, inner, alen](Tape<T>& t,
                                                                     const Tensor<T>& g) {
      Tensor<T> da(a.shape);
      for (int64_t o = 0; o < outer; ++o) {
        const T* src = g.ptr() + o * len * inner;
        T* dst = da.ptr() + (o * alen + start) * inner;
        std::copy(src, src + len * inner, dst);
      }
      t.accumulate(a.node, da);
    });
  }
  return out;
}

template <class T>
Tensor<T> concat(Tape<T>& tp, const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw TensorError("concat: empty input list");
  const Shape& s0 = parts[0].shape;
  if (axis < 0 || axis >= s0.rank) throw TensorError("concat: bad axis");
  int64_t total = 0;
  for (const auto& p : parts) {
    if (p.shape.rank != s0.rank) throw TensorError("concat: rank mismatch");
    for (int i = 0; i < s0.rank; ++i) {
      if (i != axis && p.shape[i] != s0[i]) {
        throw TensorError("concat: shape mismatch " + p.shape.str() + " vs " + s0.str());
      }
    }
    total += p.shape[axis];
  }
  Shape os = s0;
  os.d[axis] = total;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s0[i];
  for (int i = axis + 1; i < s0.rank; ++i) inner *= s0[i];

  Tensor<T> out(os);
  int64_t at = 0;
  for (const auto& p : parts) {
    const int64_t plen = p.shape[axis];
    for (int64_t o = 0; o < outer; ++o) {
      const T* src = p.ptr() + o * plen * inner;
      T* dst = out.ptr() + (o * total + at) * inner;
      std::copy(src, src + plen * inner, dst);
    }
    at += plen;
  }
  bool any = false;
  for (const auto& p : parts) any = any || p.node >= 0;
  if (tp.enabled && any) {
    out.node = tp.push(os, [parts, axis, outer, inner, total](Tape<T>& t, const Tensor<T>& g) {
      int64_t at = 0;
      for (const auto& p : parts) {
        const int64_t plen = p.shape[axis];
        if (p.node >= 0) {
          Tensor<T> dp(p.shape);
          for (int64_t o = 0; o < outer; ++o) {
            const T* src = g.ptr() + (o * total + at) * inner;
            T* dst = dp.ptr() + o * plen * inner;
            std::copy(src, src + plen * inner, dst);
          }
          t.accumulate(p.node, dp);
        }
        at += plen;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> sum(Tape<T>& tp, const Tensor<T>& a) {
  T acc = T(0);
  for (int64_t i = 0, n = a.numel(); i < n; ++i) acc += a[i];
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (tp.enabled && a.node >= 0) {
    out.node = tp.push(out.shape, [a](Tape<T>& t, const Tensor<T>& g) {
      Tensor<T> da(a.shape);
      const T gv = g[0];
      for (int64_t i = 0, n = da.numel(); i < n; ++i) da[i] = gv;
      t.accumulate(a.node, da);
    });
  }
  return out;
}

template <class T>
Tensor<T> mean(Tape<T>& tp, const Tensor<T>& a) {
  const int64_t n = a.numel();
  T acc = T(0);
  for (int64_t i = 0; i < n; ++i) acc += a[i];
  Tensor<T> out = Tensor<T>::scalar(acc / T(n));
  if (tp.enabled && a.node >= 0) {
    out.node = tp.push(out.shape, [a, n](Tape<T>& t, const Tensor<T>& g) {
      Tensor<T> da(a.shape);
      const T gv = g[0] / T(n);
      for (int64_t i = 0; i < n; ++i) da[i] = gv;
      t.accumulate(a.node, da);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

namespace detail {

// Per-row softmax with max-subtraction; returns probabilities and logsumexp.
template <class T>
void row_softmax(const T* row, int64_t K, T* probs, T& lse) {
  T mx = row[0];
  for (int64_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
  T sum = T(0);
  for (int64_t k = 0; k < K; ++k) {
    probs[k] = std::exp(row[k] - mx);
    sum += probs[k];
  }
  for (int64_t k = 0; k < K; ++k) probs[k] /= sum;
  lse = mx + std::log(sum);
}

}  // namespace detail

// Mean over rows of -log softmax(logits)[target]; hard class-id targets.
template <class T>
Tensor<T> softmax_cross_entropy(Tape<T>& tp, const Tensor<T>& logits,
                                const std::vector<int64_t>& targets) {
  if (logits.shape.rank != 2) throw TensorError("cross_entropy: logits must be [B, K]");
  const int64_t B = logits.shape[0], K = logits.shape[1];
  if (int64_t(targets.size()) != B) throw TensorError("cross_entropy: target count mismatch");
  Tensor<T> probs({B, K});
  T loss = T(0);
  for (int64_t b = 0; b < B; ++b) {
    if (targets[b] < 0 || targets[b] >= K) throw TensorError("cross_entropy: class id out of range");
    T lse;
    detail::row_softmax(logits.ptr() + b * K, K, probs.ptr() + b * K, lse);
    loss += lse - logits[b * K + targets[b]];
  }
  Tensor<T> out = Tensor<T>::scalar(loss / T(B));
  if (tp.enabled && logits.node >= 0) {
    out.node = tp.push(out.shape, [logits, probs, targets, B, K](Tape<T>& t, const Tensor<T>& g) {
      Tensor<T> dl(logits.shape);
      const T gv = g[0] / T(B);
      for (int64_t b = 0; b < B; ++b) {
        for (int64_t k = 0; k < K; ++k) dl[b * K + k] = probs[b * K + k] * gv;
        dl[b * K + targets[b]] -= gv;
      }
      t.accumulate(logits.node, dl);
    });
  }
  return out;
}

// Soft-target variant; each target row must sum to 1 (1e-6 slack). Targets
// are constants, no gradient flows into them.
template <class T>
Tensor<T> softmax_cross_entropy(Tape<T>& tp, const Tensor<T>& logits, const Tensor<T>& soft) {
  if (logits.shape.rank != 2 || soft.shape != logits.shape) {
    throw TensorError("cross_entropy: logits " + logits.shape.str() + " vs targets " +
                      soft.shape.str());
  }
  const int64_t B = logits.shape[0], K = logits.shape[1];
  for (int64_t b = 0; b < B; ++b) {
    T s = T(0);
    for (int64_t k = 0; k < K; ++k) s += soft[b * K + k];
    if (std::abs(double(s) - 1.0) > 1e-6) {
      throw TensorError("cross_entropy: soft target row " + std::to_string(b) +
                        " sums to " + std::to_string(double(s)));
    }
  }
  Tensor<T> probs({B, K});
  T loss = T(0);
  for (int64_t b = 0; b < B; ++b) {
    T lse;
    detail::row_softmax(logits.ptr() + b * K, K, probs.ptr() + b * K, lse);
    T dot = T(0);
    for (int64_t k = 0; k < K; ++k) dot += soft[b * K + k] * logits[b * K + k];
    loss += lse - dot;  // sum_k t_k (lse - l_k) with sum_k t_k = 1
  }
  Tensor<T> out = Tensor<T>::scalar(loss / T(B));
  if (tp.enabled && logits.node >= 0) {
    out.node = tp.push(out.shape, [logits, probs, soft, B, K](Tape<T>& t, const Tensor<T>& g) {
      Tensor<T> dl(logits.shape);
      const T gv = g[0] / T(B);
      for (int64_t i = 0; i < B * K; ++i) dl[i] = (probs[i] - soft[i]) * gv;
      t.accumulate(logits.node, dl);
    });
  }
  return out;
}

}  // namespace meshgpt::ad
