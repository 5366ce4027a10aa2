#include "meshgpt/codec.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "meshgpt/datasets.hpp"

namespace meshgpt {

using ad::RowMix;
using ad::Shape;
using ad::Tape;
using ad::Tensor;

CodecSettings CodecSettings::from_config(const Config& cfg) {
  CodecSettings s;
  s.codebook_size = int(cfg.get_int("codec", "codebook_size"));
  s.codebook_dim = int(cfg.get_int("codec", "codebook_dim"));
  s.rq_depth = int(cfg.get_int("codec", "rq_depth"));
  s.per_vertex_quant = cfg.get_bool("codec", "per_vertex_quant");
  s.posenc_freqs = int(cfg.get_int("codec", "posenc_freqs"));
  s.encoder_widths = cfg.get_int_list("codec", "encoder_widths");
  s.decoder_widths = cfg.get_int_list("codec", "decoder_widths");
  s.decoder_blocks = cfg.get_int_list("codec", "decoder_blocks");
  s.kernel_size = int(cfg.get_int("codec", "kernel_size"));
  s.sigma = cfg.get_float("codec", "sigma");
  s.commitment_weight = cfg.get_float("codec", "commitment_weight");
  s.ema_decay = cfg.get_float("codec", "ema_decay");
  s.ema_epsilon = cfg.get_float("codec", "ema_epsilon");
  s.dead_code_threshold = cfg.get_float("codec", "dead_code_threshold");
  s.stochastic = cfg.get_bool("codec", "stochastic");
  s.temperature = cfg.get_float("codec", "temperature");
  s.lr = cfg.get_float("codec", "lr");
  s.grad_clip = cfg.get_float("codec", "grad_clip");
  s.batch_size = int(cfg.get_int("codec", "batch_size"));
  s.max_steps = cfg.get_int("codec", "max_steps");
  s.stop_accuracy = cfg.get_float("codec", "stop_accuracy");
  s.log_every = cfg.get_int("codec", "log_every");
  s.seed = uint64_t(cfg.get_int("codec", "seed"));
  if (s.per_vertex_quant && s.face_width() != 3 * s.codebook_dim) {
    throw ConfigError("codec: encoder_widths must end at 3*codebook_dim (" +
                      std::to_string(3 * s.codebook_dim) + "), got " +
                      std::to_string(s.face_width()));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Residual quantization
// ---------------------------------------------------------------------------

RqResult rq_quantize_rows(const float* rows, int n, int dim, const Tensor<float>& embed,
                          int depth, bool stochastic, double temperature, Rng* rng) {
  if (embed.shape.rank != 2 || embed.shape[1] != dim) {
    throw ad::TensorError("rq_quantize_rows: codebook shape mismatch");
  }
  const int K = int(embed.shape[0]);
  if (K < 1) throw ad::TensorError("rq_quantize_rows: empty codebook");
  if (stochastic && !rng) throw ad::TensorError("rq_quantize_rows: stochastic mode needs an rng");

  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Mat codes(K, dim);
  for (int k = 0; k < K; ++k) {
    for (int c = 0; c < dim; ++c) codes(k, c) = double(embed[int64_t(k) * dim + c]);
  }
  Eigen::VectorXd code_norm = codes.rowwise().squaredNorm();

  Mat residual(n, dim);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < dim; ++c) residual(r, c) = double(rows[int64_t(r) * dim + c]);
  }

  RqResult out;
  out.rows = n;
  out.dim = dim;
  out.depth = depth;
  out.tokens.assign(size_t(n) * depth, 0);
  out.quantized.assign(size_t(n) * dim, 0.f);
  out.partials.assign(size_t(depth) * n * dim, 0.f);

  Mat partial = Mat::Zero(n, dim);
  for (int d = 0; d < depth; ++d) {
    Mat dots = residual * codes.transpose();  // [n, K]
    for (int r = 0; r < n; ++r) {
      const double rn = residual.row(r).squaredNorm();
      int pick = 0;
      if (!stochastic) {
        double best = rn + code_norm(0) - 2.0 * dots(r, 0);
        for (int k = 1; k < K; ++k) {
          const double dk = rn + code_norm(k) - 2.0 * dots(r, k);
          if (dk < best) {
            best = dk;
            pick = k;
          }
        }
      } else {
        // Sample proportional to softmax(-distance / temperature).
        double dmin = rn + code_norm(0) - 2.0 * dots(r, 0);
        std::vector<double> dk(K);
        dk[0] = dmin;
        for (int k = 1; k < K; ++k) {
          dk[k] = rn + code_norm(k) - 2.0 * dots(r, k);
          dmin = std::min(dmin, dk[k]);
        }
        double total = 0;
        for (int k = 0; k < K; ++k) {
          dk[k] = std::exp(-(dk[k] - dmin) / temperature);
          total += dk[k];
        }
        double u = rng->uniform() * total;
        double acc = 0;
        pick = K - 1;
        for (int k = 0; k < K; ++k) {
          acc += dk[k];
          if (u < acc) {
            pick = k;
            break;
          }
        }
      }
      out.tokens[size_t(r) * depth + d] = pick;
      residual.row(r) -= codes.row(pick);
      partial.row(r) += codes.row(pick);
      out.commitment += residual.row(r).squaredNorm();  // |z - partial_d|^2
      for (int c = 0; c < dim; ++c) {
        out.partials[(size_t(d) * n + r) * dim + c] = float(partial(r, c));
      }
    }
  }
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < dim; ++c) out.quantized[size_t(r) * dim + c] = float(partial(r, c));
  }
  return out;
}

void ema_update(Codebook& cb, const std::vector<double>& counts, const std::vector<double>& sums,
                const CodecSettings& s, const float* pool, int pool_rows, Rng& rng) {
  const int K = int(cb.embed.shape[0]);
  const int dim = int(cb.embed.shape[1]);
  if (int(counts.size()) != K || int64_t(sums.size()) != int64_t(K) * dim) {
    throw ad::TensorError("ema_update: stats size mismatch");
  }
  const double g = s.ema_decay;
  for (int k = 0; k < K; ++k) {
    const double size_k = g * double(cb.ema_size[k]) + (1.0 - g) * counts[size_t(k)];
    cb.ema_size[k] = float(size_k);
    for (int c = 0; c < dim; ++c) {
      const int64_t i = int64_t(k) * dim + c;
      const double sum_kc = g * double(cb.ema_sum[i]) + (1.0 - g) * sums[size_t(i)];
      cb.ema_sum[i] = float(sum_kc);
      cb.embed[i] = float(sum_kc / (size_k + s.ema_epsilon));
    }
  }
  if (pool_rows > 0) {
    for (int k = 0; k < K; ++k) {
      if (double(cb.ema_size[k]) >= s.dead_code_threshold) continue;
      const int64_t row = rng.index(pool_rows);
      cb.ema_size[k] = 1.f;
      for (int c = 0; c < dim; ++c) {
        // Jittered copy: lands next to the feature, so a code already sitting
        // on it keeps its assignment and only uncovered features get claimed.
        const float v = pool[row * dim + c] + float(rng.normal() * 0.02);
        cb.embed[int64_t(k) * dim + c] = v;
        cb.ema_sum[int64_t(k) * dim + c] = v;
      }
    }
  }
}

std::vector<float> smoothed_target_row(int target_bin, double sigma) {
  std::vector<double> w(kCoordBins, 0.0);
  const double radius = 4.0 * sigma;
  double total = 0;
  for (int k = 0; k < kCoordBins; ++k) {
    const double d = double(k - target_bin);
    if (std::abs(d) > radius) continue;
    w[k] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    total += w[k];
  }
  if (total <= 0) {  // vanishing sigma: exact one-hot
    w[target_bin] = 1.0;
    total = 1.0;
  }
  std::vector<float> out(kCoordBins);
  for (int k = 0; k < kCoordBins; ++k) out[k] = float(w[k] / total);
  return out;
}

double triangle_accuracy(const std::vector<std::array<int, 9>>& predicted,
                         const std::vector<std::array<int, 9>>& target) {
  if (predicted.size() != target.size()) {
    throw MeshError("triangle_accuracy: face counts differ (" +
                    std::to_string(predicted.size()) + " vs " + std::to_string(target.size()) +
                    ")");
  }
  if (predicted.empty()) throw MeshError("triangle_accuracy: empty mesh");
  size_t hits = 0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == target[i]) ++hits;
  }
  return 100.0 * double(hits) / double(predicted.size());
}

double triangle_accuracy(const DiscreteMesh& predicted, const DiscreteMesh& target) {
  return triangle_accuracy(face_bins(predicted), face_bins(target));
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct CodecModel::Item {
  DiscreteMesh dmesh;
  Tensor<float> features;  // [N, n_in]
  RowMix neighbor_mean;    // [N, N]
  RowMix slot_average;     // [S, S]
  std::vector<int> unique_rows;  // representative slot per distinct vertex
  std::vector<int> row_group;    // slot -> unique row index
  std::vector<std::array<int, 9>> targets;
  Tensor<float> soft;  // [9N, 128]
};

CodecModel::CodecModel(CodecSettings s) : settings_(std::move(s)) {
  Rng init = Rng(settings_.seed).fork(0);
  const int n_in = feature_width(settings_.posenc_freqs);
  int cur = n_in;
  for (size_t l = 0; l < settings_.encoder_widths.size(); ++l) {
    encoder_.emplace_back(params_, "enc.sage" + std::to_string(l), cur,
                          settings_.encoder_widths[l], init);
    cur = settings_.encoder_widths[l];
  }
  nn::ResNetSpec spec;
  spec.in_width = settings_.face_width();
  spec.stage_widths = settings_.decoder_widths;
  spec.stage_blocks = settings_.decoder_blocks;
  spec.kernel = settings_.kernel_size;
  spec.out_width = 9 * kCoordBins;
  decoder_ = nn::ResNet1d<float>(params_, "dec", spec, init);

  Rng cb_init = Rng(settings_.seed).fork(1);
  codebook_.embed = Tensor<float>({settings_.codebook_size, settings_.slot_dim()});
  for (int64_t i = 0, n = codebook_.embed.numel(); i < n; ++i) {
    codebook_.embed[i] = float(cb_init.normal() * 0.1);
  }
  codebook_.ema_size = Tensor<float>::full({settings_.codebook_size}, 1.f);
  codebook_.ema_sum = codebook_.embed.clone();
}

CodecModel::Item CodecModel::prepare(const DiscreteMesh& canonical) const {
  if (canonical.faces.empty()) throw MeshError("codec: empty mesh");
  Item item;
  item.dmesh = canonical;
  const int n = int(canonical.faces.size());

  FaceFeatureMatrix feats = compute_face_features(canonical, settings_.posenc_freqs);
  item.features = Tensor<float>({n, feats.cols});
  for (int64_t i = 0, t = int64_t(feats.rows) * feats.cols; i < t; ++i) {
    item.features[i] = float(feats.data[size_t(i)]);
  }

  FaceGraph graph = build_face_graph(canonical);
  std::vector<std::vector<std::pair<int, double>>> mean_rows(n);
  for (int i = 0; i < n; ++i) {
    const auto& nb = graph.neighbors[i];
    if (nb.empty()) continue;
    const double w = 1.0 / double(nb.size());
    for (int j : nb) mean_rows[size_t(i)].push_back({j, w});
  }
  item.neighbor_mean = RowMix::from_lists(n, mean_rows);

  if (settings_.per_vertex_quant) {
    const int slots = n * 3;
    std::vector<int> slot_vertex(slots);
    std::unordered_map<int, std::vector<int>> by_vertex;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 3; ++j) {
        slot_vertex[size_t(i) * 3 + j] = canonical.faces[size_t(i)][j];
        by_vertex[canonical.faces[size_t(i)][j]].push_back(i * 3 + j);
      }
    }
    std::vector<std::vector<std::pair<int, double>>> avg_rows(slots);
    for (int sidx = 0; sidx < slots; ++sidx) {
      const auto& group = by_vertex[slot_vertex[size_t(sidx)]];
      const double w = 1.0 / double(group.size());
      for (int member : group) avg_rows[size_t(sidx)].push_back({member, w});
    }
    item.slot_average = RowMix::from_lists(slots, avg_rows);

    item.row_group.assign(slots, -1);
    std::unordered_map<int, int> vertex_unique;
    for (int sidx = 0; sidx < slots; ++sidx) {
      const int v = slot_vertex[size_t(sidx)];
      auto [it, inserted] = vertex_unique.emplace(v, int(item.unique_rows.size()));
      if (inserted) item.unique_rows.push_back(sidx);
      item.row_group[size_t(sidx)] = it->second;
    }
  } else {
    item.unique_rows.resize(n);
    item.row_group.resize(n);
    for (int i = 0; i < n; ++i) {
      item.unique_rows[size_t(i)] = i;
      item.row_group[size_t(i)] = i;
    }
  }

  item.targets = face_bins(canonical);
  item.soft = Tensor<float>({int64_t(n) * 9, kCoordBins});
  for (int f = 0; f < n; ++f) {
    for (int c = 0; c < 9; ++c) {
      std::vector<float> row = smoothed_target_row(item.targets[size_t(f)][c], settings_.sigma);
      std::copy(row.begin(), row.end(), item.soft.ptr() + (int64_t(f) * 9 + c) * kCoordBins);
    }
  }
  return item;
}

Tensor<float> CodecModel::encode_tracked(Tape<float>& tp, const Item& item,
                                         Tensor<float>* z_out) const {
  Tensor<float> h = item.features;
  for (size_t l = 0; l < encoder_.size(); ++l) {
    h = encoder_[l].forward(tp, h, item.neighbor_mean);
    if (l + 1 < encoder_.size()) h = ad::relu(tp, h);
  }
  if (z_out) *z_out = h;
  if (!settings_.per_vertex_quant) return h;
  const int64_t slots = h.shape[0] * 3;
  Tensor<float> rows = ad::reshape(tp, h, {slots, settings_.slot_dim()});
  return ad::rowmix(tp, item.slot_average, rows);
}

namespace {

// Gather representative rows for the quantizer.
std::vector<float> gather_rows(const Tensor<float>& slots, const std::vector<int>& which,
                               int dim) {
  std::vector<float> out(which.size() * size_t(dim));
  for (size_t u = 0; u < which.size(); ++u) {
    const float* src = slots.ptr() + int64_t(which[u]) * dim;
    std::copy(src, src + dim, out.data() + u * size_t(dim));
  }
  return out;
}

}  // namespace

TokenStack CodecModel::tokenize(const DiscreteMesh& canonical) {
  Item item = prepare(canonical);
  Tape<float> tp;
  tp.enabled = false;
  Tensor<float> slots = encode_tracked(tp, item, nullptr);
  const int dim = settings_.slot_dim();
  std::vector<float> rows = gather_rows(slots, item.unique_rows, dim);
  RqResult rq = rq_quantize_rows(rows.data(), int(item.unique_rows.size()), dim,
                                 codebook_.embed, settings_.levels_per_slot(), false, 0, nullptr);
  TokenStack out;
  out.faces = int(canonical.faces.size());
  out.per_face = settings_.tokens_per_face();
  out.tokens.reserve(size_t(out.faces) * out.per_face);
  const int levels = settings_.levels_per_slot();
  const int slots_pf = settings_.slots_per_face();
  for (int f = 0; f < out.faces; ++f) {
    for (int j = 0; j < slots_pf; ++j) {
      const int group = item.row_group[size_t(f) * slots_pf + j];
      for (int d = 0; d < levels; ++d) {
        out.tokens.push_back(rq.tokens[size_t(group) * levels + d]);
      }
    }
  }
  return out;
}

std::vector<std::array<int, 9>> CodecModel::logits_to_bins(const Tensor<float>& logits) const {
  const int n = int(logits.shape[0]);
  std::vector<std::array<int, 9>> out(static_cast<size_t>(n));
  for (int f = 0; f < n; ++f) {
    for (int c = 0; c < 9; ++c) {
      const float* row = logits.ptr() + (int64_t(f) * 9 + c) * kCoordBins;
      int best = 0;
      for (int k = 1; k < kCoordBins; ++k) {
        if (row[k] > row[best]) best = k;
      }
      out[size_t(f)][c] = best;
    }
  }
  return out;
}

std::vector<std::array<int, 9>> CodecModel::decode(const TokenStack& tokens) {
  const int n = tokens.faces;
  if (n < 1) throw MeshError("decode: empty token stack");
  if (int(tokens.tokens.size()) != n * settings_.tokens_per_face()) {
    throw MeshError("decode: token count " + std::to_string(tokens.tokens.size()) +
                    " != " + std::to_string(n * settings_.tokens_per_face()));
  }
  const int K = settings_.codebook_size;
  for (int t : tokens.tokens) {
    if (t < 0 || t >= K) throw MeshError("decode: token " + std::to_string(t) + " out of range");
  }
  const int dim = settings_.slot_dim();
  const int levels = settings_.levels_per_slot();
  const int slots_pf = settings_.slots_per_face();
  Tensor<float> zcat({n, settings_.face_width()});
  for (int f = 0; f < n; ++f) {
    for (int j = 0; j < slots_pf; ++j) {
      float* dst = zcat.ptr() + int64_t(f) * settings_.face_width() + int64_t(j) * dim;
      for (int d = 0; d < levels; ++d) {
        const int tok = tokens.tokens[(size_t(f) * slots_pf + j) * levels + d];
        const float* e = codebook_.embed.ptr() + int64_t(tok) * dim;
        for (int c = 0; c < dim; ++c) dst[c] += e[c];
      }
    }
  }
  Tape<float> tp;
  tp.enabled = false;
  Tensor<float> logits = decoder_.forward(tp, zcat);
  return logits_to_bins(logits);
}

double CodecModel::reconstruction_accuracy(const DiscreteMesh& canonical) {
  return triangle_accuracy(decode(tokenize(canonical)), face_bins(canonical));
}

CodecModel::EncodeOut CodecModel::encode_eval(const DiscreteMesh& canonical) {
  Item item = prepare(canonical);
  Tape<float> tp;
  tp.enabled = false;
  EncodeOut out;
  out.slots = encode_tracked(tp, item, &out.z);
  return out;
}

CodecTrainResult CodecModel::train(const std::vector<DiscreteMesh>& data,
                                   const CodecTrainOptions& opts) {
  if (data.empty() && opts.augment_sources.empty()) throw MeshError("train_codec: empty dataset");

  const bool augmenting = !opts.augment_sources.empty();
  std::vector<Item> items;
  if (!augmenting) {
    items.reserve(data.size());
    for (const DiscreteMesh& d : data) items.push_back(prepare(d));
  }
  const size_t dataset_size = augmenting ? opts.augment_sources.size() : data.size();

  Rng shuffle_rng = Rng(settings_.seed).fork(2);
  Rng stochastic_rng = Rng(settings_.seed).fork(3);
  Rng reseed_rng = Rng(settings_.seed).fork(4);
  Rng augment_rng = Rng(settings_.seed).fork(5);

  nn::Adam<float> adam;
  adam.lr = float(settings_.lr);
  adam.clip = float(settings_.grad_clip);
  auto params = params_.all();

  const int K = settings_.codebook_size;
  const int dim = settings_.slot_dim();
  const int levels = settings_.levels_per_slot();
  const int64_t anneal_at = int64_t(0.9 * double(settings_.max_steps));

  CodecTrainResult result;
  int64_t step = 0;
  double last_loss = 0;
  double last_acc = 0;
  bool done = false;

  // Codebook churn (EMA + re-seeding) makes late evals non-monotonic; keep
  // the best-accuracy state and restore it when training ends.
  struct Snapshot {
    std::vector<std::vector<float>> params;
    std::vector<float> embed, size, sum;
    double acc = -1;
  } best;
  auto take_snapshot = [&](double acc) {
    best.acc = acc;
    best.params.clear();
    for (nn::Param<float>* p : params) {
      best.params.emplace_back(p->value.ptr(), p->value.ptr() + p->value.numel());
    }
    best.embed.assign(codebook_.embed.ptr(), codebook_.embed.ptr() + codebook_.embed.numel());
    best.size.assign(codebook_.ema_size.ptr(),
                     codebook_.ema_size.ptr() + codebook_.ema_size.numel());
    best.sum.assign(codebook_.ema_sum.ptr(),
                    codebook_.ema_sum.ptr() + codebook_.ema_sum.numel());
  };
  auto restore_snapshot = [&] {
    if (best.acc < 0) return;
    for (size_t i = 0; i < params.size(); ++i) {
      std::copy(best.params[i].begin(), best.params[i].end(), params[i]->value.ptr());
    }
    std::copy(best.embed.begin(), best.embed.end(), codebook_.embed.ptr());
    std::copy(best.size.begin(), best.size.end(), codebook_.ema_size.ptr());
    std::copy(best.sum.begin(), best.sum.end(), codebook_.ema_sum.ptr());
  };

  auto eval_accuracy = [&]() {
    double acc = 0;
    const auto eval_set = augmenting ? std::vector<const DiscreteMesh*>() : [&] {
      std::vector<const DiscreteMesh*> v;
      for (const Item& it : items) v.push_back(&it.dmesh);
      return v;
    }();
    if (augmenting) {
      // Accuracy is measured on the clean (un-augmented) meshes.
      for (const Mesh& m : opts.augment_sources) {
        acc += reconstruction_accuracy(canonicalize(discretize(m)));
      }
      return acc / double(opts.augment_sources.size());
    }
    for (const DiscreteMesh* d : eval_set) acc += reconstruction_accuracy(*d);
    return acc / double(eval_set.size());
  };

  for (int64_t epoch = 0; !done; ++epoch) {
    if (augmenting) {
      items.clear();
      for (size_t i = 0; i < opts.augment_sources.size(); ++i) {
        const uint64_t aseed = augment_rng.fork(uint64_t(epoch)).fork(i).next_u64();
        Mesh warped = augment(opts.augment_sources[i], aseed);
        items.push_back(prepare(canonicalize(discretize(warped))));
      }
    }
    std::vector<size_t> order(dataset_size);
    for (size_t i = 0; i < dataset_size; ++i) order[i] = i;
    Rng epoch_rng = shuffle_rng.fork(uint64_t(epoch));
    for (size_t i = dataset_size; i > 1; --i) {
      std::swap(order[i - 1], order[size_t(epoch_rng.index(int64_t(i)))]);
    }

    // Seed the codebook from encoder output over the whole dataset before the
    // first step: every feature row gets a nearby code, the rest are jittered
    // duplicates that die off and recycle.
    if (!codebook_.initialized) {
      std::vector<float> pool;
      Tape<float> off;
      off.enabled = false;
      for (const Item& item : items) {
        Tensor<float> slots = encode_tracked(off, item, nullptr);
        std::vector<float> rows = gather_rows(slots, item.unique_rows, dim);
        pool.insert(pool.end(), rows.begin(), rows.end());
      }
      const int pool_rows = int(pool.size() / size_t(dim));
      Rng noise = Rng(settings_.seed).fork(6);
      std::vector<int> pick(static_cast<size_t>(pool_rows));
      for (int i = 0; i < pool_rows; ++i) pick[size_t(i)] = i;
      for (size_t i = pick.size(); i > 1; --i) {
        std::swap(pick[i - 1], pick[size_t(noise.index(int64_t(i)))]);
      }
      for (int k = 0; k < K; ++k) {
        const int64_t row = k < pool_rows ? pick[size_t(k)] : noise.index(pool_rows);
        // Spread the starting sizes so unused codes expire (and re-seed) as a
        // trickle instead of a synchronized wave.
        const float size0 = float(0.3 + 1.4 * noise.uniform());
        for (int c = 0; c < dim; ++c) {
          const float v = pool[size_t(row) * dim + c] + float(noise.normal() * 1e-3);
          codebook_.embed[int64_t(k) * dim + c] = v;
          codebook_.ema_sum[int64_t(k) * dim + c] = v * size0;
        }
        codebook_.ema_size[k] = size0;
      }
      codebook_.initialized = true;
    }

    for (size_t at = 0; at < dataset_size && !done; at += size_t(settings_.batch_size)) {
      const size_t batch_n = std::min(size_t(settings_.batch_size), dataset_size - at);
      const bool stochastic_now = settings_.stochastic && step < anneal_at;

      std::vector<double> counts(size_t(K), 0.0);
      std::vector<double> sums(size_t(K) * dim, 0.0);
      std::vector<float> pool;
      double batch_loss = 0;

      for (size_t b = 0; b < batch_n; ++b) {
        const Item& item = items[order[at + b]];
        const int n = int(item.dmesh.faces.size());
        const int slot_count = n * settings_.slots_per_face();

        Tape<float> tp;
        Tensor<float> averaged = encode_tracked(tp, item, nullptr);

        std::vector<float> rows = gather_rows(averaged, item.unique_rows, dim);
        const int urows = int(item.unique_rows.size());
        RqResult rq = rq_quantize_rows(rows.data(), urows, dim, codebook_.embed, levels,
                                       stochastic_now, settings_.temperature, &stochastic_rng);
        pool.insert(pool.end(), rows.begin(), rows.end());
        for (int r = 0; r < urows; ++r) {
          for (int d = 0; d < levels; ++d) {
            const int code = rq.tokens[size_t(r) * levels + d];
            counts[size_t(code)] += 1.0;
            for (int c = 0; c < dim; ++c) {
              // Level input: z for d == 0, else z - partial_{d-1}.
              double feat = double(rows[size_t(r) * dim + c]);
              if (d > 0) feat -= double(rq.partials[(size_t(d - 1) * urows + r) * dim + c]);
              sums[size_t(code) * dim + c] += feat;
            }
          }
        }

        // Straight-through: decoder sees the quantization, encoder sees the
        // decoder gradient unchanged.
        Tensor<float> st_delta(averaged.shape);
        for (int sidx = 0; sidx < slot_count; ++sidx) {
          const int group = item.row_group[size_t(sidx)];
          for (int c = 0; c < dim; ++c) {
            st_delta[int64_t(sidx) * dim + c] =
                rq.quantized[size_t(group) * dim + c] - averaged[int64_t(sidx) * dim + c];
          }
        }
        Tensor<float> st = ad::add(tp, averaged, st_delta);
        Tensor<float> zcat = ad::reshape(tp, st, {n, settings_.face_width()});
        Tensor<float> logits = decoder_.forward(tp, zcat);
        Tensor<float> logit_rows = ad::reshape(tp, logits, {int64_t(n) * 9, kCoordBins});
        Tensor<float> recon = ad::softmax_cross_entropy(tp, logit_rows, item.soft);

        // Commitment over slots and levels against the stop-gradient partial
        // sums, expanded back to slot alignment.
        Tensor<float> commit = Tensor<float>::scalar(0.f);
        for (int d = 0; d < levels; ++d) {
          Tensor<float> partial(averaged.shape);
          for (int sidx = 0; sidx < slot_count; ++sidx) {
            const int group = item.row_group[size_t(sidx)];
            std::copy(rq.partials.data() + (size_t(d) * urows + group) * dim,
                      rq.partials.data() + (size_t(d) * urows + group + 1) * dim,
                      partial.ptr() + int64_t(sidx) * dim);
          }
          Tensor<float> diff = ad::sub(tp, averaged, partial);
          commit = ad::add(tp, commit, ad::sum(tp, ad::mul(tp, diff, diff)));
        }
        Tensor<float> loss =
            ad::add(tp, recon, ad::scale(tp, commit, float(settings_.commitment_weight)));
        batch_loss += double(loss.item());
        tp.backward(loss);
        nn::collect_grads(tp, params, 1.f / float(batch_n));
      }

      adam.step(params);
      ema_update(codebook_, counts, sums, settings_, pool.data(), int(pool.size() / size_t(dim)),
                 reseed_rng);
      ++step;
      last_loss = batch_loss / double(batch_n);

      if (step % settings_.log_every == 0 || step >= settings_.max_steps) {
        last_acc = eval_accuracy();
        result.log.push_back({step, last_loss, last_acc});
        if (opts.progress) {
          (*opts.progress) << "codec step " << step << " loss " << last_loss << " accuracy "
                           << last_acc << "\n";
        }
        if (last_acc > best.acc) take_snapshot(last_acc);
        if (last_acc >= settings_.stop_accuracy) done = true;
      }
      if (step >= settings_.max_steps) done = true;
    }
  }
  restore_snapshot();
  result.steps = step;
  result.final_accuracy = std::max(best.acc, last_acc);
  return result;
}

Checkpoint CodecModel::to_checkpoint(const Config& full_config) const {
  Checkpoint ckpt;
  ckpt.config_text = full_config.snapshot();
  Tensor<float> meta({1});
  meta[0] = codebook_.initialized ? 1.f : 0.f;
  ckpt.add_f32("codec.meta", meta);
  for (const nn::Param<float>* p : const_cast<nn::ParamStore<float>&>(params_).all()) {
    ckpt.add_f32("codec." + p->name, p->value);
  }
  ckpt.add_f32("codec.codebook.embed", codebook_.embed);
  ckpt.add_f32("codec.codebook.ema_size", codebook_.ema_size);
  ckpt.add_f32("codec.codebook.ema_sum", codebook_.ema_sum);
  return ckpt;
}

std::unique_ptr<CodecModel> CodecModel::from_checkpoint(const Checkpoint& ckpt) {
  Config cfg = Config::from_text(ckpt.config_text, "<checkpoint>");
  auto model = std::make_unique<CodecModel>(CodecSettings::from_config(cfg));
  Tensor<float> meta = ckpt.get_f32("codec.meta");
  model->codebook_.initialized = meta[0] != 0.f;
  for (nn::Param<float>* p : model->params_.all()) {
    Tensor<float> stored = ckpt.get_f32("codec." + p->name);
    if (stored.shape != p->value.shape) {
      throw CheckpointError("codec." + p->name + ": shape " + stored.shape.str() +
                            " != expected " + p->value.shape.str());
    }
    p->value = stored;
    p->grad = Tensor<float>::zeros(stored.shape);
  }
  model->codebook_.embed = ckpt.get_f32("codec.codebook.embed");
  model->codebook_.ema_size = ckpt.get_f32("codec.codebook.ema_size");
  model->codebook_.ema_sum = ckpt.get_f32("codec.codebook.ema_sum");
  return model;
}

}  // namespace meshgpt
