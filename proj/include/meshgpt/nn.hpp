#pragma once
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "meshgpt/rng.hpp"
#include "meshgpt/tape.hpp"
#include "meshgpt/tensor.hpp"

namespace meshgpt::nn {

using ad::Pad;
using ad::RowMix;
using ad::Shape;
using ad::Tape;
using ad::Tensor;

template <class T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;  // accumulated across a batch, zeroed by the optimizer step
  Tensor<T> m, v;  // Adam moments, allocated on first step
};

// Owns every parameter of a model in registration order; that order is also
// the checkpoint serialization order.
template <class T>
class ParamStore {
 public:
  Param<T>* add(const std::string& name, Shape s) {
    items_.push_back(std::make_unique<Param<T>>());
    Param<T>* p = items_.back().get();
    p->name = name;
    p->value = Tensor<T>::zeros(s);
    p->grad = Tensor<T>::zeros(s);
    return p;
  }

  Param<T>* add_normal(const std::string& name, Shape s, Rng& rng, double stddev) {
    Param<T>* p = add(name, s);
    for (int64_t i = 0, n = p->value.numel(); i < n; ++i) {
      p->value[i] = T(rng.normal() * stddev);
    }
    return p;
  }

  Param<T>* add_full(const std::string& name, Shape s, T fill) {
    Param<T>* p = add(name, s);
    for (int64_t i = 0, n = p->value.numel(); i < n; ++i) p->value[i] = fill;
    return p;
  }

  std::vector<Param<T>*> all() {
    std::vector<Param<T>*> out;
    out.reserve(items_.size());
    for (auto& p : items_) out.push_back(p.get());
    return out;
  }

  Param<T>* find(const std::string& name) {
    for (auto& p : items_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }

  int64_t count() const {
    int64_t n = 0;
    for (auto& p : items_) n += p->value.numel();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Param<T>>> items_;
};

// Pull tape gradients into Param::grad (+=, scaled); call once per
// micro-batch so gradient accumulation falls out naturally.
template <class T>
void collect_grads(Tape<T>& tp, const std::vector<Param<T>*>& params, T scale = T(1)) {
  for (Param<T>* p : params) {
    Tensor<T> probe = tp.leaf(p->value);
    if (!tp.has_grad(probe)) continue;
    const Tensor<T>& g = tp.grad(probe);
    for (int64_t i = 0, n = g.numel(); i < n; ++i) p->grad[i] += g[i] * scale;
  }
}

template <class T>
void zero_grads(const std::vector<Param<T>*>& params) {
  for (Param<T>* p : params) {
    for (int64_t i = 0, n = p->grad.numel(); i < n; ++i) p->grad[i] = T(0);
  }
}

// Bias-corrected Adam: theta -= lr * m_hat / (sqrt(v_hat) + eps). With
// clip > 0 the global gradient norm is rescaled to at most clip first.
template <class T>
struct Adam {
  T lr = T(1e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  T clip = T(0);
  int64_t steps = 0;

  void step(const std::vector<Param<T>*>& params) {
    ++steps;
    T scale = T(1);
    if (clip > T(0)) {
      double sq = 0;
      for (Param<T>* p : params) {
        for (int64_t i = 0, n = p->grad.numel(); i < n; ++i) {
          sq += double(p->grad[i]) * double(p->grad[i]);
        }
      }
      const double norm = std::sqrt(sq);
      if (norm > double(clip)) scale = T(double(clip) / norm);
    }
    const T c1 = T(1) - std::pow(beta1, T(steps));
    const T c2 = T(1) - std::pow(beta2, T(steps));
    for (Param<T>* p : params) {
      if (!p->m.defined()) {
        p->m = Tensor<T>::zeros(p->value.shape);
        p->v = Tensor<T>::zeros(p->value.shape);
      }
      for (int64_t i = 0, n = p->value.numel(); i < n; ++i) {
        const T g = p->grad[i] * scale;
        p->m[i] = beta1 * p->m[i] + (T(1) - beta1) * g;
        p->v[i] = beta2 * p->v[i] + (T(1) - beta2) * g * g;
        const T mhat = p->m[i] / c1;
        const T vhat = p->v[i] / c2;
        p->value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
    zero_grads(params);
  }
};

// ---------------------------------------------------------------------------
// Graph convolution (mean aggregation)
// ---------------------------------------------------------------------------

// out_i = x_i W_self + mean_{j in N(i)} x_j W_neigh + b; isolated nodes get a
// zero neighbor aggregate. The neighbor mean arrives as a constant RowMix so
// aggregation stays order-free by construction.
template <class T>
struct SageConv {
  Param<T>* w_self = nullptr;   // [in, out]
  Param<T>* w_neigh = nullptr;  // [in, out]
  Param<T>* bias = nullptr;     // [out]

  SageConv() = default;
  SageConv(ParamStore<T>& ps, const std::string& prefix, int in, int out, Rng& rng) {
    const double std = 1.0 / std::sqrt(double(in));
    w_self = ps.add_normal(prefix + ".w_self", {in, out}, rng, std);
    w_neigh = ps.add_normal(prefix + ".w_neigh", {in, out}, rng, std);
    bias = ps.add(prefix + ".bias", {out});
  }

  Tensor<T> forward(Tape<T>& tp, const Tensor<T>& x, const RowMix& neighbor_mean) const {
    Tensor<T> self_part = ad::matmul(tp, x, tp.leaf(w_self->value));
    Tensor<T> agg = ad::rowmix(tp, neighbor_mean, x);
    Tensor<T> neigh_part = ad::matmul(tp, agg, tp.leaf(w_neigh->value));
    return ad::add(tp, ad::add(tp, self_part, neigh_part), tp.leaf(bias->value));
  }
};

// ---------------------------------------------------------------------------
// 1D ResNet over a face sequence (stride 1, length preserved)
// ---------------------------------------------------------------------------

template <class T>
struct Conv1dLayer {
  Param<T>* w = nullptr;  // [K, Cin, Cout]
  Param<T>* b = nullptr;  // [Cout]

  Conv1dLayer() = default;
  Conv1dLayer(ParamStore<T>& ps, const std::string& prefix, int k, int cin, int cout, Rng& rng) {
    const double std = 1.0 / std::sqrt(double(k) * cin);
    w = ps.add_normal(prefix + ".w", {k, cin, cout}, rng, std);
    b = ps.add(prefix + ".b", {cout});
  }

  Tensor<T> forward(Tape<T>& tp, const Tensor<T>& x) const {
    Tensor<T> y = ad::conv1d(tp, x, tp.leaf(w->value), Pad::kSame);
    return ad::add(tp, y, tp.leaf(b->value));
  }
};

// y = relu(x' + conv2(relu(conv1(x)))) with a 1x1 projection x' when the
// widths differ.
template <class T>
struct ResBlock1d {
  Conv1dLayer<T> conv1, conv2;
  std::optional<Conv1dLayer<T>> proj;

  ResBlock1d() = default;
  ResBlock1d(ParamStore<T>& ps, const std::string& prefix, int k, int cin, int cout, Rng& rng)
      : conv1(ps, prefix + ".conv1", k, cin, cout, rng),
        conv2(ps, prefix + ".conv2", k, cout, cout, rng) {
    if (cin != cout) proj.emplace(ps, prefix + ".proj", 1, cin, cout, rng);
  }

  Tensor<T> forward(Tape<T>& tp, const Tensor<T>& x) const {
    Tensor<T> f = conv2.forward(tp, ad::relu(tp, conv1.forward(tp, x)));
    Tensor<T> shortcut = proj ? proj->forward(tp, x) : x;
    return ad::relu(tp, ad::add(tp, shortcut, f));
  }
};

struct ResNetSpec {
  int in_width = 0;
  std::vector<int> stage_widths;   // one per stage
  std::vector<int> stage_blocks;   // ResNet-34 layout: 3,4,6,3
  int kernel = 3;
  int out_width = 0;
};

template <class T>
struct ResNet1d {
  Conv1dLayer<T> stem;
  std::vector<ResBlock1d<T>> blocks;
  Conv1dLayer<T> head;  // 1x1, linear output

  ResNet1d() = default;
  ResNet1d(ParamStore<T>& ps, const std::string& prefix, const ResNetSpec& spec, Rng& rng) {
    if (spec.stage_widths.size() != spec.stage_blocks.size() || spec.stage_widths.empty()) {
      throw ad::TensorError("ResNet1d: stage widths/blocks mismatch");
    }
    stem = Conv1dLayer<T>(ps, prefix + ".stem", spec.kernel, spec.in_width,
                          spec.stage_widths[0], rng);
    int cur = spec.stage_widths[0];
    for (size_t s = 0; s < spec.stage_widths.size(); ++s) {
      for (int j = 0; j < spec.stage_blocks[s]; ++j) {
        const std::string name =
            prefix + ".stage" + std::to_string(s) + ".block" + std::to_string(j);
        blocks.emplace_back(ps, name, spec.kernel, cur, spec.stage_widths[s], rng);
        cur = spec.stage_widths[s];
      }
    }
    head = Conv1dLayer<T>(ps, prefix + ".head", 1, cur, spec.out_width, rng);
  }

  Tensor<T> forward(Tape<T>& tp, const Tensor<T>& x) const {
    Tensor<T> h = ad::relu(tp, stem.forward(tp, x));
    for (const auto& b : blocks) h = b.forward(tp, h);
    return head.forward(tp, h);
  }
};

// ---------------------------------------------------------------------------
// Pre-norm transformer block
// ---------------------------------------------------------------------------

template <class T>
struct AttentionBlock {
  int heads = 0;
  int width = 0;
  Param<T>*ln1_g{}, *ln1_b{}, *wq{}, *bq{}, *wk{}, *bk{}, *wv{}, *bv{}, *wo{}, *bo{};
  Param<T>*ln2_g{}, *ln2_b{}, *w1{}, *b1{}, *w2{}, *b2{};

  AttentionBlock() = default;
  AttentionBlock(ParamStore<T>& ps, const std::string& prefix, int width_, int heads_,
                 int ffn_width, int layer_count, Rng& rng) {
    heads = heads_;
    width = width_;
    if (width % heads != 0) throw ad::TensorError("attention: width not divisible by heads");
    const double std = 0.02;
    // Residual output projections are shrunk by sqrt(2 * depth) so the
    // residual stream variance stays bounded at init.
    const double res_std = std / std::sqrt(2.0 * layer_count);
    ln1_g = ps.add_full(prefix + ".ln1.g", {width}, T(1));
    ln1_b = ps.add(prefix + ".ln1.b", {width});
    wq = ps.add_normal(prefix + ".attn.wq", {width, width}, rng, std);
    bq = ps.add(prefix + ".attn.bq", {width});
    wk = ps.add_normal(prefix + ".attn.wk", {width, width}, rng, std);
    bk = ps.add(prefix + ".attn.bk", {width});
    wv = ps.add_normal(prefix + ".attn.wv", {width, width}, rng, std);
    bv = ps.add(prefix + ".attn.bv", {width});
    wo = ps.add_normal(prefix + ".attn.wo", {width, width}, rng, res_std);
    bo = ps.add(prefix + ".attn.bo", {width});
    ln2_g = ps.add_full(prefix + ".ln2.g", {width}, T(1));
    ln2_b = ps.add(prefix + ".ln2.b", {width});
    w1 = ps.add_normal(prefix + ".ffn.w1", {width, ffn_width}, rng, std);
    b1 = ps.add(prefix + ".ffn.b1", {ffn_width});
    w2 = ps.add_normal(prefix + ".ffn.w2", {ffn_width, width}, rng, res_std);
    b2 = ps.add(prefix + ".ffn.b2", {width});
  }

  Tensor<T> forward(Tape<T>& tp, const Tensor<T>& x, bool causal) const {
    const int64_t L = x.shape[0];
    const int dh = width / heads;
    const T inv_sqrt_dh = T(1) / T(std::sqrt(double(dh)));

    Tensor<T> h = ad::layer_norm(tp, x);
    h = ad::add(tp, ad::mul(tp, h, tp.leaf(ln1_g->value)), tp.leaf(ln1_b->value));
    Tensor<T> q = ad::add(tp, ad::matmul(tp, h, tp.leaf(wq->value)), tp.leaf(bq->value));
    Tensor<T> k = ad::add(tp, ad::matmul(tp, h, tp.leaf(wk->value)), tp.leaf(bk->value));
    Tensor<T> v = ad::add(tp, ad::matmul(tp, h, tp.leaf(wv->value)), tp.leaf(bv->value));

    std::vector<Tensor<T>> ctx;
    ctx.reserve(heads);
    for (int hd = 0; hd < heads; ++hd) {
      Tensor<T> qh = ad::slice(tp, q, 1, int64_t(hd) * dh, dh);
      Tensor<T> kh = ad::slice(tp, k, 1, int64_t(hd) * dh, dh);
      Tensor<T> vh = ad::slice(tp, v, 1, int64_t(hd) * dh, dh);
      Tensor<T> scores = ad::scale(tp, ad::matmul(tp, qh, ad::transpose(tp, kh)), inv_sqrt_dh);
      Tensor<T> probs = causal ? ad::causal_softmax(tp, scores) : ad::softmax(tp, scores, 1);
      ctx.push_back(ad::matmul(tp, probs, vh));
    }
    Tensor<T> merged = heads == 1 ? ctx[0] : ad::concat(tp, ctx, 1);
    Tensor<T> attn_out =
        ad::add(tp, ad::matmul(tp, merged, tp.leaf(wo->value)), tp.leaf(bo->value));
    Tensor<T> x1 = ad::add(tp, x, attn_out);

    Tensor<T> f = ad::layer_norm(tp, x1);
    f = ad::add(tp, ad::mul(tp, f, tp.leaf(ln2_g->value)), tp.leaf(ln2_b->value));
    f = ad::gelu(tp, ad::add(tp, ad::matmul(tp, f, tp.leaf(w1->value)), tp.leaf(b1->value)));
    f = ad::add(tp, ad::matmul(tp, f, tp.leaf(w2->value)), tp.leaf(b2->value));
    (void)L;
    return ad::add(tp, x1, f);
  }
};

}  // namespace meshgpt::nn
