#pragma once
#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "meshgpt/checkpoint.hpp"
#include "meshgpt/codec.hpp"
#include "meshgpt/config.hpp"
#include "meshgpt/nn.hpp"

namespace meshgpt {

struct GptSettings {
  int layers = 6;
  int heads = 8;
  int width = 256;
  int ffn_mult = 4;
  int context = 512;
  bool encoder_features = true;
  std::string token_mode = "learned";  // learned | raw
  double lr = 1e-4;
  double grad_clip = 1.0;
  int batch_size = 8;
  int64_t max_steps = 20000;
  double stop_loss = 0.0;
  int64_t log_every = 100;
  int64_t pretrain_steps = 0;
  uint64_t seed = 1;

  static GptSettings from_config(const Config& cfg);
};

// Flat autoregressive view of one mesh: start row, tokens_per_face ids per
// face, stop row. Positions carry (face index, index within face) ids.
struct FlatSequence {
  std::vector<int> ids;       // ids[0] = start sentinel (= vocab size)
  std::vector<int> face_pos;  // -1 for start/stop rows
  std::vector<int> intra;     // -1 for start/stop rows
};

struct SamplerConfig {
  std::string mode = "nucleus";  // greedy | nucleus | beam
  double p = 0.95;
  int top_k = 0;
  int beam_width = 4;
  double temperature = 1.0;
  uint64_t seed = 1;
  int max_faces = 0;  // 0 = derived from context
  double merge_epsilon = 1.0 / 256.0;

  static SamplerConfig from_config(const Config& cfg);
};

struct SampleResult {
  std::vector<int> tokens;  // real token ids, multiple of tokens_per_face
  bool truncated = false;   // context ran out before a stop token
};

struct GptTrainOptions {
  std::vector<FlatSequence> pretrain;  // mixed pool; used when pretrain_steps > 0
  std::ostream* progress = nullptr;
};

class GptModel {
 public:
  // Properties of the token source (the codec, or raw coordinate bins).
  struct TokenSource {
    int n_real_tokens = 0;                // codebook size K, or 128 for raw
    int tokens_per_face = 6;              // 6 learned tokens or 9 raw bins
    int slot_dim = 0;                     // codebook embedding width
    ad::Tensor<float> codebook;           // frozen [K, slot_dim] when used
  };

  GptModel(GptSettings s, TokenSource source);

  static TokenSource source_from_codec(const CodecModel& codec);
  static TokenSource raw_source();

  int vocab() const { return source_.n_real_tokens + 1; }
  int stop_id() const { return source_.n_real_tokens; }
  int tokens_per_face() const { return source_.tokens_per_face; }
  int max_faces() const { return (settings_.context - 2) / source_.tokens_per_face; }
  const GptSettings& settings() const { return settings_; }
  int64_t param_count() { return params_.count(); }

  // Start + tokens + stop with positional ids; throws when the flat length
  // exceeds the context window.
  FlatSequence build_token_sequence(const std::vector<int>& tokens) const;

  // Causal logits, one row per input position, over vocab() classes.
  ad::Tensor<float> forward(ad::Tape<float>& tp, const FlatSequence& seq) const;

  // Mean next-token cross-entropy of a full sequence (teacher forcing).
  ad::Tensor<float> sequence_loss(ad::Tape<float>& tp, const FlatSequence& seq) const;

  // Cross-entropy and next-token accuracy over a dataset, evaluation mode.
  struct EvalStats {
    double cross_entropy = 0;
    double accuracy = 0;  // percent
  };
  EvalStats evaluate(const std::vector<FlatSequence>& data);

  CodecTrainResult train(const std::vector<FlatSequence>& data, const GptTrainOptions& opts);

  // Autoregressive generation; prefix_tokens (possibly empty) are consumed
  // verbatim before new tokens are drawn. Stop is only legal at face
  // boundaries; running out of context truncates to the last complete face.
  SampleResult sample_tokens(const SamplerConfig& sampler,
                             const std::vector<int>& prefix_tokens) const;

  Checkpoint to_checkpoint(const Config& full_config) const;
  static std::unique_ptr<GptModel> from_checkpoint(const Checkpoint& ckpt);

 private:
  ad::Tensor<float> input_rows(ad::Tape<float>& tp, const FlatSequence& seq) const;
  std::vector<double> next_distribution(const std::vector<int>& tokens, double temperature,
                                        int cap_faces) const;

  GptSettings settings_;
  TokenSource source_;
  nn::ParamStore<float> params_;
  nn::Param<float>* in_proj_w_ = nullptr;  // codebook vec -> width
  nn::Param<float>* in_proj_b_ = nullptr;
  nn::Param<float>* token_table_ = nullptr;  // learned id embeddings otherwise
  nn::Param<float>* start_emb_ = nullptr;
  nn::Param<float>* stop_emb_ = nullptr;
  nn::Param<float>* face_pos_table_ = nullptr;
  nn::Param<float>* intra_table_ = nullptr;
  std::vector<nn::AttentionBlock<float>> blocks_;
  nn::Param<float>* lnf_g_ = nullptr;
  nn::Param<float>* lnf_b_ = nullptr;
  nn::Param<float>* head_w_ = nullptr;
  nn::Param<float>* head_b_ = nullptr;
};

// Token stream -> mesh. Learned mode decodes through the codec; raw mode
// reads bins directly. Generated soup is welded with merge_epsilon.
struct DecodedMesh {
  std::vector<std::array<int, 9>> bins;
  Mesh mesh;
};

DecodedMesh decode_generated_tokens(const std::vector<int>& tokens, CodecModel* codec,
                                    const GptModel& gpt, double merge_epsilon);

// Prefix-conditioned completion: the returned meshes contain the prefix faces
// verbatim followed by the sampled continuation.
struct CompletionResult {
  std::vector<std::array<int, 9>> prefix_bins;
  std::vector<DecodedMesh> meshes;
  std::vector<bool> truncated;
};

CompletionResult complete_mesh(GptModel& gpt, CodecModel* codec, const DiscreteMesh& partial,
                               int count, const SamplerConfig& sampler);

}  // namespace meshgpt
