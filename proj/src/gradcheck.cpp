#include "meshgpt/gradcheck.hpp"

#include <cmath>

#include "meshgpt/nn.hpp"

namespace meshgpt::ad {

namespace {

Tensor<double> random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  Tensor<double> t(s);
  for (int64_t i = 0, n = t.numel(); i < n; ++i) t[i] = rng.normal() * scale;
  return t;
}

// Tensor with |x| >= margin so kinked activations are probed away from 0.
Tensor<double> random_tensor_away_from_zero(Shape s, Rng& rng, double margin) {
  Tensor<double> t(s);
  for (int64_t i = 0, n = t.numel(); i < n; ++i) {
    double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    t[i] = sign * (margin + rng.uniform());
  }
  return t;
}

// Scalarizes an op output as sum(out * R) with fixed random weights, which
// exercises every output element with a distinct cotangent.
Tensor<double> weighted_sum(Tape<double>& tp, const Tensor<double>& out, const Tensor<double>& r) {
  return sum(tp, mul(tp, out, r));
}

}  // namespace

double max_rel_error(const std::function<Tensor<double>(Tape<double>&)>& fn,
                     const std::vector<Tensor<double>*>& wrt, double step) {
  Tape<double> tp;
  Tensor<double> root = fn(tp);
  tp.backward(root);

  std::vector<Tensor<double>> analytic;
  analytic.reserve(wrt.size());
  for (Tensor<double>* w : wrt) {
    Tensor<double> probe = tp.leaf(*w);
    analytic.push_back(tp.has_grad(probe) ? tp.grad(probe).clone()
                                          : Tensor<double>::zeros(w->shape));
  }

  double worst = 0.0;
  for (size_t wi = 0; wi < wrt.size(); ++wi) {
    Tensor<double>& w = *wrt[wi];
    for (int64_t i = 0, n = w.numel(); i < n; ++i) {
      const double saved = w[i];
      Tape<double> off;
      off.enabled = false;
      w[i] = saved + step;
      const double fp = fn(off).item();
      w[i] = saved - step;
      const double fm = fn(off).item();
      w[i] = saved;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[wi][i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

Tensor<double> op_forward(Tape<double>& tp, const std::string& kind,
                          const std::vector<Tensor<double>>& in) {
  auto need = [&](size_t n) {
    if (in.size() != n) {
      throw TensorError("op_forward(" + kind + "): expected " + std::to_string(n) + " inputs");
    }
  };
  if (kind == "add") { need(2); return add(tp, in[0], in[1]); }
  if (kind == "sub") { need(2); return sub(tp, in[0], in[1]); }
  if (kind == "mul") { need(2); return mul(tp, in[0], in[1]); }
  if (kind == "matmul") { need(2); return matmul(tp, in[0], in[1]); }
  if (kind == "conv1d") { need(2); return conv1d(tp, in[0], in[1], Pad::kSame); }
  if (kind == "conv1d_valid") { need(2); return conv1d(tp, in[0], in[1], Pad::kValid); }
  if (kind == "relu") { need(1); return relu(tp, in[0]); }
  if (kind == "gelu") { need(1); return gelu(tp, in[0]); }
  if (kind == "softmax") { need(1); return softmax(tp, in[0], in[0].shape.rank - 1); }
  if (kind == "causal_softmax") { need(1); return causal_softmax(tp, in[0]); }
  if (kind == "layer_norm") { need(1); return layer_norm(tp, in[0]); }
  if (kind == "sum") { need(1); return sum(tp, in[0]); }
  if (kind == "mean") { need(1); return mean(tp, in[0]); }
  if (kind == "concat") { return concat(tp, in, in[0].shape.rank - 1); }
  if (kind == "slice") {
    need(1);
    const int axis = in[0].shape.rank - 1;
    const int64_t len = std::max<int64_t>(1, in[0].shape[axis] / 2);
    return slice(tp, in[0], axis, 0, len);
  }
  if (kind == "transpose") { need(1); return transpose(tp, in[0]); }
  if (kind == "scale") { need(1); return scale(tp, in[0], 1.7); }
  if (kind == "reshape") { need(1); return reshape(tp, in[0], {in[0].numel()}); }
  throw TensorError("op_forward: unknown kind '" + kind + "'");
}

double grad_check_op(const std::string& kind, Rng& rng, double step) {
  const int64_t m = 2 + rng.index(3);
  const int64_t n = 2 + rng.index(3);
  const int64_t k = 2 + rng.index(3);

  std::vector<Tensor<double>> inputs;
  if (kind == "add" || kind == "sub" || kind == "mul") {
    inputs = {random_tensor({m, n, k}, rng), random_tensor({n, k}, rng)};
  } else if (kind == "matmul") {
    inputs = {random_tensor({m, k}, rng), random_tensor({k, n}, rng)};
  } else if (kind == "conv1d" || kind == "conv1d_valid") {
    inputs = {random_tensor({4 + rng.index(4), m}, rng), random_tensor({3, m, n}, rng)};
  } else if (kind == "relu") {
    inputs = {random_tensor_away_from_zero({m, n}, rng, 10.0 * step)};
  } else if (kind == "causal_softmax") {
    inputs = {random_tensor({m, m}, rng)};
  } else if (kind == "layer_norm") {
    // A deterministic ramp keeps every row's variance away from zero, where
    // 1/sqrt(var + eps) makes central differences ill-conditioned.
    Tensor<double> x = random_tensor({m, n + 2}, rng, 0.5);
    for (int64_t r = 0; r < m; ++r) {
      for (int64_t c = 0; c < n + 2; ++c) x[r * (n + 2) + c] += double(c);
    }
    inputs = {x};
  } else if (kind == "concat") {
    inputs = {random_tensor({m, n}, rng), random_tensor({m, k}, rng)};
  } else if (kind == "embedding_gather") {
    Tensor<double> table = random_tensor({6, n}, rng);
    std::vector<int64_t> idx;
    for (int64_t i = 0; i < m + 2; ++i) idx.push_back(rng.index(6));
    Tensor<double> r = random_tensor({int64_t(idx.size()), n}, rng);
    auto fn = [&](Tape<double>& tp) {
      return weighted_sum(tp, embedding_gather(tp, tp.leaf(table), idx), r);
    };
    return max_rel_error(fn, {&table}, step);
  } else if (kind == "rowmix") {
    RowMix mix;
    mix.rows = int(m + 1);
    mix.cols = int(n + 2);
    mix.offsets.push_back(0);
    for (int r = 0; r < mix.rows; ++r) {
      const int deg = int(rng.index(3));
      for (int e = 0; e < deg; ++e) {
        mix.col.push_back(int(rng.index(mix.cols)));
        mix.weight.push_back(rng.uniform(0.2, 1.0));
      }
      mix.offsets.push_back(int(mix.col.size()));
    }
    Tensor<double> x = random_tensor({mix.cols, k}, rng);
    Tensor<double> r = random_tensor({mix.rows, k}, rng);
    auto fn = [&](Tape<double>& tp) { return weighted_sum(tp, rowmix(tp, mix, tp.leaf(x)), r); };
    return max_rel_error(fn, {&x}, step);
  } else if (kind == "softmax_cross_entropy") {
    Tensor<double> logits = random_tensor({m, k + 2}, rng);
    std::vector<int64_t> ids;
    for (int64_t b = 0; b < m; ++b) ids.push_back(rng.index(k + 2));
    auto fn = [&](Tape<double>& tp) { return softmax_cross_entropy(tp, tp.leaf(logits), ids); };
    return max_rel_error(fn, {&logits}, step);
  } else if (kind == "softmax_cross_entropy_soft") {
    Tensor<double> logits = random_tensor({m, k + 2}, rng);
    Tensor<double> soft({m, k + 2});
    for (int64_t b = 0; b < m; ++b) {
      double s = 0;
      for (int64_t j = 0; j < k + 2; ++j) {
        soft[b * (k + 2) + j] = rng.uniform(0.05, 1.0);
        s += soft[b * (k + 2) + j];
      }
      for (int64_t j = 0; j < k + 2; ++j) soft[b * (k + 2) + j] /= s;
    }
    auto fn = [&](Tape<double>& tp) { return softmax_cross_entropy(tp, tp.leaf(logits), soft); };
    return max_rel_error(fn, {&logits}, step);
  } else {
    inputs = {random_tensor({m, n}, rng)};
  }

  // Generic path: scalarize with fixed random weights.
  Tape<double> probe;
  probe.enabled = false;
  Tensor<double> shape_probe = op_forward(probe, kind, inputs);
  Tensor<double> r = random_tensor(shape_probe.shape, rng);
  std::vector<Tensor<double>*> wrt;
  for (auto& t : inputs) wrt.push_back(&t);
  auto fn = [&](Tape<double>& tp) {
    std::vector<Tensor<double>> tracked;
    tracked.reserve(inputs.size());
    for (auto& t : inputs) tracked.push_back(tp.leaf(t));
    return weighted_sum(tp, op_forward(tp, kind, tracked), r);
  };
  return max_rel_error(fn, wrt, step);
}

namespace {

using nn::AttentionBlock;
using nn::Param;
using nn::ParamStore;
using nn::ResBlock1d;
using nn::ResNet1d;
using nn::ResNetSpec;
using nn::SageConv;

std::vector<Tensor<double>*> param_values(ParamStore<double>& ps) {
  std::vector<Tensor<double>*> out;
  for (Param<double>* p : ps.all()) out.push_back(&p->value);
  return out;
}

double check_sage_layer(Rng& rng, double step) {
  ParamStore<double> ps;
  Rng init = rng.fork(1);
  SageConv<double> layer(ps, "sage", 5, 4, init);
  RowMix mean_mix;
  mean_mix.rows = mean_mix.cols = 6;
  mean_mix.offsets.push_back(0);
  for (int i = 0; i < 6; ++i) {
    const int a = (i + 1) % 6, b = (i + 2) % 6;
    mean_mix.col.push_back(a);
    mean_mix.col.push_back(b);
    mean_mix.weight.push_back(0.5);
    mean_mix.weight.push_back(0.5);
    mean_mix.offsets.push_back(int(mean_mix.col.size()));
  }
  Tensor<double> x = random_tensor({6, 5}, rng);
  Tensor<double> r = random_tensor({6, 4}, rng);
  auto fn = [&](Tape<double>& tp) {
    return weighted_sum(tp, relu(tp, layer.forward(tp, tp.leaf(x), mean_mix)), r);
  };
  std::vector<Tensor<double>*> wrt = param_values(ps);
  wrt.push_back(&x);
  return max_rel_error(fn, wrt, step);
}

double check_resnet_layer(Rng& rng, double step, bool full_stack) {
  ParamStore<double> ps;
  Rng init = rng.fork(2);
  Tensor<double> x = random_tensor({7, 4}, rng, 0.7);
  if (full_stack) {
    ResNetSpec spec;
    spec.in_width = 4;
    spec.stage_widths = {5, 6};
    spec.stage_blocks = {1, 1};
    spec.kernel = 3;
    spec.out_width = 3;
    ResNet1d<double> net(ps, "res", spec, init);
    Tensor<double> r = random_tensor({7, 3}, rng);
    auto fn = [&](Tape<double>& tp) { return weighted_sum(tp, net.forward(tp, tp.leaf(x)), r); };
    std::vector<Tensor<double>*> wrt = param_values(ps);
    wrt.push_back(&x);
    return max_rel_error(fn, wrt, step);
  }
  ResBlock1d<double> block(ps, "block", 3, 4, 5, init);
  Tensor<double> r = random_tensor({7, 5}, rng);
  auto fn = [&](Tape<double>& tp) { return weighted_sum(tp, block.forward(tp, tp.leaf(x)), r); };
  std::vector<Tensor<double>*> wrt = param_values(ps);
  wrt.push_back(&x);
  return max_rel_error(fn, wrt, step);
}

double check_attention_layer(Rng& rng, double step, bool with_loss) {
  ParamStore<double> ps;
  Rng init = rng.fork(3);
  AttentionBlock<double> block(ps, "blk", 8, 2, 16, 1, init);
  Tensor<double> x = random_tensor({5, 8}, rng, 0.5);
  auto fn = [&](Tape<double>& tp) -> Tensor<double> {
    Tensor<double> y = block.forward(tp, tp.leaf(x), true);
    if (with_loss) {
      std::vector<int64_t> ids = {1, 0, 3, 2, 1};
      return softmax_cross_entropy(tp, slice(tp, y, 1, 0, 4), ids);
    }
    return mean(tp, mul(tp, y, y));
  };
  std::vector<Tensor<double>*> wrt = param_values(ps);
  wrt.push_back(&x);
  return max_rel_error(fn, wrt, step);
}

}  // namespace

std::vector<CheckResult> run_grad_check_suite(uint64_t seed) {
  Rng rng(seed);
  std::vector<CheckResult> out;
  const double kOpThreshold = 1e-5;
  const double kLayerThreshold = 1e-4;

  const char* op_kinds[] = {
      "add",   "sub",      "mul",        "matmul", "conv1d", "conv1d_valid",
      "relu",  "gelu",     "softmax",    "causal_softmax",   "layer_norm",
      "sum",   "mean",     "concat",     "slice",  "transpose", "scale",
      "reshape", "embedding_gather", "rowmix", "softmax_cross_entropy",
      "softmax_cross_entropy_soft"};
  for (const char* kind : op_kinds) {
    double err = 0;
    for (int rep = 0; rep < 3; ++rep) err = std::max(err, grad_check_op(kind, rng));
    out.push_back({std::string("op.") + kind, err, kOpThreshold, err < kOpThreshold});
  }

  struct LayerCheck {
    const char* name;
    std::function<double(Rng&)> run;
  };
  const LayerCheck layers[] = {
      {"layer.sage_conv", [](Rng& r) { return check_sage_layer(r, 1e-4); }},
      {"layer.resblock1d", [](Rng& r) { return check_resnet_layer(r, 1e-4, false); }},
      {"layer.resnet1d", [](Rng& r) { return check_resnet_layer(r, 1e-4, true); }},
      {"layer.attention_block", [](Rng& r) { return check_attention_layer(r, 1e-4, false); }},
      {"layer.attention_loss", [](Rng& r) { return check_attention_layer(r, 1e-4, true); }},
  };
  for (const auto& lc : layers) {
    double err = lc.run(rng);
    out.push_back({lc.name, err, kLayerThreshold, err < kLayerThreshold});
  }
  return out;
}

}  // namespace meshgpt::ad
