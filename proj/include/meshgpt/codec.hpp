#pragma once
#include <array>
#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "meshgpt/checkpoint.hpp"
#include "meshgpt/config.hpp"
#include "meshgpt/face_features.hpp"
#include "meshgpt/geometry.hpp"
#include "meshgpt/nn.hpp"
#include "meshgpt/rng.hpp"

namespace meshgpt {

struct CodecSettings {
  int codebook_size = 512;
  int codebook_dim = 192;
  int rq_depth = 2;  // residual levels per quantized slot
  bool per_vertex_quant = true;
  int posenc_freqs = 8;
  std::vector<int> encoder_widths = {192, 256, 384, 512, 576};
  std::vector<int> decoder_widths = {96, 128, 160, 192};
  std::vector<int> decoder_blocks = {3, 4, 6, 3};
  int kernel_size = 3;
  double sigma = 1.0;
  double commitment_weight = 0.25;
  double ema_decay = 0.99;
  double ema_epsilon = 1e-5;
  double dead_code_threshold = 1e-3;
  bool stochastic = true;
  double temperature = 1.0;
  double lr = 1e-4;
  double grad_clip = 1.0;
  int batch_size = 8;
  int64_t max_steps = 20000;
  double stop_accuracy = 100.0;
  int64_t log_every = 100;
  uint64_t seed = 1;

  static CodecSettings from_config(const Config& cfg);

  // Feature slots quantized per face: 3 vertex slots of codebook_dim each, or
  // one slot of the full face width.
  int slots_per_face() const { return per_vertex_quant ? 3 : 1; }
  int levels_per_slot() const { return per_vertex_quant ? rq_depth : rq_depth * 3; }
  int tokens_per_face() const { return slots_per_face() * levels_per_slot(); }
  int face_width() const { return encoder_widths.back(); }
  int slot_dim() const { return per_vertex_quant ? codebook_dim : face_width(); }
};

// Codebook shared across all residual levels, maintained by EMA rather than
// gradient descent.
struct Codebook {
  ad::Tensor<float> embed;     // [K, dim]
  ad::Tensor<float> ema_size;  // [K]
  ad::Tensor<float> ema_sum;   // [K, dim]
  bool initialized = false;    // becomes true once seeded from encoder output
};

// Greedy residual quantization of n rows against a codebook. Distances are
// evaluated in double so the argmin agrees exactly with a brute-force scan.
struct RqResult {
  int rows = 0;
  int dim = 0;
  int depth = 0;
  std::vector<int> tokens;       // rows * depth, level-major per row
  std::vector<float> quantized;  // rows * dim, full partial sum
  std::vector<float> partials;   // depth * rows * dim, cumulative per level
  double commitment = 0;         // sum_d sum_rows |z - partial_d|^2
};

RqResult rq_quantize_rows(const float* rows, int n, int dim, const ad::Tensor<float>& embed,
                          int depth, bool stochastic, double temperature, Rng* rng);

// EMA codebook update from one effective batch of assignments. Dead codes
// (EMA size under the threshold) are re-seeded from the feature pool.
void ema_update(Codebook& cb, const std::vector<double>& counts, const std::vector<double>& sums,
                const CodecSettings& s, const float* pool, int pool_rows, Rng& rng);

// Gaussian soft targets over bins: truncated at 4 sigma, renormalized.
std::vector<float> smoothed_target_row(int target_bin, double sigma);

double triangle_accuracy(const std::vector<std::array<int, 9>>& predicted,
                         const std::vector<std::array<int, 9>>& target);
double triangle_accuracy(const DiscreteMesh& predicted, const DiscreteMesh& target);

// Per-mesh token stack: tokens_per_face() indices per face, vertex-major.
struct TokenStack {
  int faces = 0;
  int per_face = 6;
  std::vector<int> tokens;
};

struct TrainLogLine {
  int64_t step = 0;
  double loss = 0;
  double accuracy_or_aux = 0;
};

struct CodecTrainResult {
  int64_t steps = 0;
  double final_accuracy = 0;
  std::vector<TrainLogLine> log;
};

struct CodecTrainOptions {
  // When set, items are re-built each epoch from these normalized meshes with
  // fresh scale/jitter augmentation.
  std::vector<Mesh> augment_sources;
  std::ostream* progress = nullptr;
};

class CodecModel {
 public:
  explicit CodecModel(CodecSettings s);

  // Deterministic encode + greedy RQ; the sequence the transformer trains on.
  TokenStack tokenize(const DiscreteMesh& canonical);

  // Token stack -> argmax coordinate bins per face.
  std::vector<std::array<int, 9>> decode(const TokenStack& tokens);

  // tokenize + decode vs the mesh's own bins.
  double reconstruction_accuracy(const DiscreteMesh& canonical);

  // Encoder output in evaluation mode: face features Z and the slot-aligned
  // (shared-vertex averaged) rows the quantizer sees.
  struct EncodeOut {
    ad::Tensor<float> z;      // [N, face_width]
    ad::Tensor<float> slots;  // [N*slots_per_face, slot_dim]
  };
  EncodeOut encode_eval(const DiscreteMesh& canonical);

  CodecTrainResult train(const std::vector<DiscreteMesh>& data, const CodecTrainOptions& opts);

  Checkpoint to_checkpoint(const Config& full_config) const;
  static std::unique_ptr<CodecModel> from_checkpoint(const Checkpoint& ckpt);

  const CodecSettings& settings() const { return settings_; }
  Codebook& codebook() { return codebook_; }
  int64_t param_count() { return params_.count(); }

 private:
  struct Item;

  Item prepare(const DiscreteMesh& canonical) const;
  ad::Tensor<float> encode_tracked(ad::Tape<float>& tp, const Item& item,
                                   ad::Tensor<float>* z_out) const;
  std::vector<std::array<int, 9>> logits_to_bins(const ad::Tensor<float>& logits) const;

  CodecSettings settings_;
  nn::ParamStore<float> params_;
  std::vector<nn::SageConv<float>> encoder_;
  nn::ResNet1d<float> decoder_;
  Codebook codebook_;
};

}  // namespace meshgpt
