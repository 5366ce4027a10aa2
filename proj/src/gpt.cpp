#include "meshgpt/gpt.hpp"

#include <algorithm>
#include <cmath>

namespace meshgpt {

using ad::Shape;
using ad::Tape;
using ad::Tensor;

GptSettings GptSettings::from_config(const Config& cfg) {
  GptSettings s;
  s.layers = int(cfg.get_int("gpt", "layers"));
  s.heads = int(cfg.get_int("gpt", "heads"));
  s.width = int(cfg.get_int("gpt", "width"));
  s.ffn_mult = int(cfg.get_int("gpt", "ffn_mult"));
  s.context = int(cfg.get_int("gpt", "context"));
  s.encoder_features = cfg.get_bool("gpt", "encoder_features");
  s.token_mode = cfg.get_str("gpt", "token_mode");
  if (s.token_mode != "learned" && s.token_mode != "raw") {
    throw ConfigError("gpt.token_mode must be 'learned' or 'raw', got '" + s.token_mode + "'");
  }
  s.lr = cfg.get_float("gpt", "lr");
  s.grad_clip = cfg.get_float("gpt", "grad_clip");
  s.batch_size = int(cfg.get_int("gpt", "batch_size"));
  s.max_steps = cfg.get_int("gpt", "max_steps");
  s.stop_loss = cfg.get_float("gpt", "stop_loss");
  s.log_every = std::max<int64_t>(1, cfg.get_int("gpt", "log_every"));
  s.pretrain_steps = cfg.get_int("gpt", "pretrain_steps");
  s.seed = uint64_t(cfg.get_int("gpt", "seed"));
  return s;
}

SamplerConfig SamplerConfig::from_config(const Config& cfg) {
  SamplerConfig s;
  s.mode = cfg.get_str("sampler", "mode");
  if (s.mode != "greedy" && s.mode != "nucleus" && s.mode != "beam") {
    throw ConfigError("sampler.mode must be greedy | nucleus | beam, got '" + s.mode + "'");
  }
  s.p = cfg.get_float("sampler", "p");
  s.top_k = int(cfg.get_int("sampler", "top_k"));
  s.beam_width = int(cfg.get_int("sampler", "beam_width"));
  s.temperature = cfg.get_float("sampler", "temperature");
  s.seed = uint64_t(cfg.get_int("sampler", "seed"));
  s.max_faces = int(cfg.get_int("sampler", "max_faces"));
  s.merge_epsilon = cfg.get_float("sampler", "merge_epsilon");
  return s;
}

GptModel::TokenSource GptModel::source_from_codec(const CodecModel& codec) {
  const CodecSettings& cs = codec.settings();
  TokenSource src;
  src.n_real_tokens = cs.codebook_size;
  src.tokens_per_face = cs.tokens_per_face();
  src.slot_dim = cs.slot_dim();
  src.codebook = const_cast<CodecModel&>(codec).codebook().embed.clone();
  return src;
}

GptModel::TokenSource GptModel::raw_source() {
  TokenSource src;
  src.n_real_tokens = kCoordBins;
  src.tokens_per_face = 9;
  src.slot_dim = 0;
  return src;
}

GptModel::GptModel(GptSettings s, TokenSource source)
    : settings_(std::move(s)), source_(std::move(source)) {
  if (settings_.token_mode == "raw") {
    // Raw coordinate tokens have no codebook to embed.
    source_.n_real_tokens = kCoordBins;
    source_.tokens_per_face = 9;
    source_.codebook = Tensor<float>();
  }
  const bool use_codebook =
      settings_.encoder_features && settings_.token_mode == "learned";
  if (use_codebook && !source_.codebook.defined()) {
    throw ad::TensorError("gpt: encoder_features requires a codec codebook");
  }
  if (max_faces() < 1) throw ConfigError("gpt.context too small for a single face");

  Rng init = Rng(settings_.seed).fork(0);
  const int W = settings_.width;
  const double std = 0.02;
  if (use_codebook) {
    in_proj_w_ = params_.add_normal("in_proj.w", {source_.slot_dim, W}, init,
                                    1.0 / std::sqrt(double(source_.slot_dim)));
    in_proj_b_ = params_.add("in_proj.b", {W});
  } else {
    token_table_ = params_.add_normal("token_table", {source_.n_real_tokens, W}, init, std);
  }
  start_emb_ = params_.add_normal("start_emb", {W}, init, std);
  stop_emb_ = params_.add_normal("stop_emb", {W}, init, std);
  face_pos_table_ = params_.add_normal("face_pos", {max_faces(), W}, init, std);
  intra_table_ = params_.add_normal("intra_pos", {source_.tokens_per_face, W}, init, std);
  for (int l = 0; l < settings_.layers; ++l) {
    blocks_.emplace_back(params_, "block" + std::to_string(l), W, settings_.heads,
                         W * settings_.ffn_mult, settings_.layers, init);
  }
  lnf_g_ = params_.add_full("lnf.g", {W}, 1.f);
  lnf_b_ = params_.add("lnf.b", {W});
  // Zero head: the untrained model is exactly uniform over the vocabulary.
  head_w_ = params_.add("head.w", {W, vocab()});
  head_b_ = params_.add("head.b", {vocab()});
}

FlatSequence GptModel::build_token_sequence(const std::vector<int>& tokens) const {
  const int T = source_.tokens_per_face;
  if (tokens.size() % size_t(T) != 0) {
    throw MeshError("build_token_sequence: token count " + std::to_string(tokens.size()) +
                    " not a multiple of " + std::to_string(T));
  }
  const int64_t len = int64_t(tokens.size()) + 2;
  if (len > settings_.context) {
    throw MeshError("build_token_sequence: flat length " + std::to_string(len) +
                    " exceeds context " + std::to_string(settings_.context));
  }
  for (int t : tokens) {
    if (t < 0 || t >= source_.n_real_tokens) {
      throw MeshError("build_token_sequence: token " + std::to_string(t) + " out of range");
    }
  }
  FlatSequence seq;
  seq.ids.reserve(size_t(len));
  seq.face_pos.reserve(size_t(len));
  seq.intra.reserve(size_t(len));
  seq.ids.push_back(vocab());  // start sentinel, never predicted
  seq.face_pos.push_back(-1);
  seq.intra.push_back(-1);
  for (size_t i = 0; i < tokens.size(); ++i) {
    seq.ids.push_back(tokens[i]);
    seq.face_pos.push_back(int(i) / T);
    seq.intra.push_back(int(i) % T);
  }
  seq.ids.push_back(stop_id());
  seq.face_pos.push_back(-1);
  seq.intra.push_back(-1);
  return seq;
}

Tensor<float> GptModel::input_rows(Tape<float>& tp, const FlatSequence& seq) const {
  const int64_t L = int64_t(seq.ids.size());
  const int W = settings_.width;

  // Real-token rows: token embedding plus face/intra position embeddings.
  std::vector<int64_t> real_ids, fp_ids, ii_ids;
  std::vector<int64_t> real_at;
  for (int64_t p = 0; p < L; ++p) {
    if (seq.face_pos[size_t(p)] >= 0) {
      real_ids.push_back(seq.ids[size_t(p)]);
      fp_ids.push_back(seq.face_pos[size_t(p)]);
      ii_ids.push_back(seq.intra[size_t(p)]);
      real_at.push_back(p);
    }
  }
  Tensor<float> real_rows;
  if (!real_ids.empty()) {
    Tensor<float> tok;
    if (token_table_) {
      tok = ad::embedding_gather(tp, tp.leaf(token_table_->value), real_ids);
    } else {
      Tensor<float> vecs = ad::embedding_gather(tp, source_.codebook, real_ids);
      tok = ad::add(tp, ad::matmul(tp, vecs, tp.leaf(in_proj_w_->value)),
                    tp.leaf(in_proj_b_->value));
    }
    Tensor<float> fp = ad::embedding_gather(tp, tp.leaf(face_pos_table_->value), fp_ids);
    Tensor<float> ii = ad::embedding_gather(tp, tp.leaf(intra_table_->value), ii_ids);
    real_rows = ad::add(tp, ad::add(tp, tok, fp), ii);
  }

  // Start/stop rows use their dedicated learned embeddings.
  std::vector<Tensor<float>> pieces;
  int64_t consumed = 0;
  for (int64_t p = 0; p < L; ++p) {
    if (seq.face_pos[size_t(p)] >= 0) {
      // contiguous run of real rows
      int64_t run = 0;
      while (p + run < L && seq.face_pos[size_t(p + run)] >= 0) ++run;
      pieces.push_back(ad::slice(tp, real_rows, 0, consumed, run));
      consumed += run;
      p += run - 1;
    } else if (seq.ids[size_t(p)] == vocab()) {
      pieces.push_back(ad::reshape(tp, tp.leaf(start_emb_->value), {1, W}));
    } else {
      pieces.push_back(ad::reshape(tp, tp.leaf(stop_emb_->value), {1, W}));
    }
  }
  return pieces.size() == 1 ? pieces[0] : ad::concat(tp, pieces, 0);
}

Tensor<float> GptModel::forward(Tape<float>& tp, const FlatSequence& seq) const {
  if (int64_t(seq.ids.size()) > settings_.context) {
    throw MeshError("gpt_forward: sequence exceeds context window");
  }
  Tensor<float> x = input_rows(tp, seq);
  for (const auto& block : blocks_) x = block.forward(tp, x, /*causal=*/true);
  x = ad::layer_norm(tp, x);
  x = ad::add(tp, ad::mul(tp, x, tp.leaf(lnf_g_->value)), tp.leaf(lnf_b_->value));
  return ad::add(tp, ad::matmul(tp, x, tp.leaf(head_w_->value)), tp.leaf(head_b_->value));
}

Tensor<float> GptModel::sequence_loss(Tape<float>& tp, const FlatSequence& seq) const {
  const int64_t L = int64_t(seq.ids.size());
  if (L < 2) throw MeshError("sequence_loss: sequence too short");
  Tensor<float> logits = forward(tp, seq);
  Tensor<float> predict = ad::slice(tp, logits, 0, 0, L - 1);
  std::vector<int64_t> targets(seq.ids.begin() + 1, seq.ids.end());
  return ad::softmax_cross_entropy(tp, predict, targets);
}

GptModel::EvalStats GptModel::evaluate(const std::vector<FlatSequence>& data) {
  EvalStats st;
  int64_t correct = 0, total = 0;
  double ce = 0;
  for (const FlatSequence& seq : data) {
    Tape<float> tp;
    tp.enabled = false;
    Tensor<float> logits = forward(tp, seq);
    const int64_t L = int64_t(seq.ids.size());
    const int V = vocab();
    double seq_ce = 0;
    for (int64_t p = 0; p + 1 < L; ++p) {
      const float* row = logits.ptr() + p * V;
      float mx = row[0];
      int arg = 0;
      for (int k = 1; k < V; ++k) {
        if (row[k] > mx) {
          mx = row[k];
          arg = k;
        }
      }
      double lse = 0;
      for (int k = 0; k < V; ++k) lse += std::exp(double(row[k]) - double(mx));
      lse = double(mx) + std::log(lse);
      seq_ce += lse - double(row[seq.ids[size_t(p + 1)]]);
      correct += arg == seq.ids[size_t(p + 1)] ? 1 : 0;
      ++total;
    }
    ce += seq_ce / double(L - 1);
  }
  st.cross_entropy = ce / double(data.size());
  st.accuracy = 100.0 * double(correct) / double(total);
  return st;
}

CodecTrainResult GptModel::train(const std::vector<FlatSequence>& data,
                                 const GptTrainOptions& opts) {
  if (data.empty()) throw MeshError("train_gpt: empty dataset");
  for (const FlatSequence& seq : data) {
    if (int64_t(seq.ids.size()) > settings_.context) {
      throw MeshError("train_gpt: training sequence exceeds context window");
    }
  }
  const bool pretraining = settings_.pretrain_steps > 0 && !opts.pretrain.empty();

  nn::Adam<float> adam;
  adam.lr = float(settings_.lr);
  adam.clip = float(settings_.grad_clip);
  auto params = params_.all();
  Rng shuffle_rng = Rng(settings_.seed).fork(2);

  CodecTrainResult result;
  int64_t step = 0;
  double batch_loss = 0;
  bool done = false;

  // Keep the best-eval parameters; late training on tiny sets is noisy.
  std::vector<std::vector<float>> best_params;
  double best_ce = -1;
  auto take_snapshot = [&](double ce) {
    best_ce = ce;
    best_params.clear();
    for (nn::Param<float>* p : params) {
      best_params.emplace_back(p->value.ptr(), p->value.ptr() + p->value.numel());
    }
  };
  auto restore_snapshot = [&] {
    if (best_ce < 0) return;
    for (size_t i = 0; i < params.size(); ++i) {
      std::copy(best_params[i].begin(), best_params[i].end(), params[i]->value.ptr());
    }
  };

  auto run_phase = [&](const std::vector<FlatSequence>& set, int64_t budget, bool is_final) {
    const size_t n = set.size();
    for (int64_t epoch = 0; !done && (budget < 0 || step < budget); ++epoch) {
      std::vector<size_t> order(n);
      for (size_t i = 0; i < n; ++i) order[i] = i;
      Rng epoch_rng = shuffle_rng.fork(uint64_t(epoch) * 2 + (is_final ? 1 : 0));
      for (size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[size_t(epoch_rng.index(int64_t(i)))]);
      }
      for (size_t at = 0; at < n && !done && (budget < 0 || step < budget);
           at += size_t(settings_.batch_size)) {
        const size_t batch_n = std::min(size_t(settings_.batch_size), n - at);
        batch_loss = 0;
        for (size_t b = 0; b < batch_n; ++b) {
          Tape<float> tp;
          Tensor<float> loss = sequence_loss(tp, set[order[at + b]]);
          batch_loss += double(loss.item());
          tp.backward(loss);
          nn::collect_grads(tp, params, 1.f / float(batch_n));
        }
        adam.step(params);
        ++step;
        batch_loss /= double(batch_n);

        if (step % settings_.log_every == 0 || step >= settings_.max_steps) {
          EvalStats st = evaluate(data);
          result.log.push_back({step, st.cross_entropy, st.accuracy});
          if (opts.progress) {
            (*opts.progress) << "gpt step " << step << " batch_loss " << batch_loss
                             << " train_ce " << st.cross_entropy << " acc " << st.accuracy
                             << "\n";
          }
          if (is_final && (best_ce < 0 || st.cross_entropy < best_ce)) {
            take_snapshot(st.cross_entropy);
          }
          if (is_final && settings_.stop_loss > 0 && st.cross_entropy < settings_.stop_loss) {
            done = true;
          }
        }
        if (step >= settings_.max_steps) done = true;
      }
    }
  };

  if (pretraining) run_phase(opts.pretrain, settings_.pretrain_steps, false);
  run_phase(data, -1, true);

  EvalStats st = evaluate(data);
  if (best_ce >= 0 && best_ce < st.cross_entropy) {
    restore_snapshot();
    st = evaluate(data);
  }
  result.steps = step;
  result.final_accuracy = st.cross_entropy;
  if (result.log.empty() || result.log.back().step != step) {
    result.log.push_back({step, st.cross_entropy, st.accuracy});
  }
  return result;
}

std::vector<double> GptModel::next_distribution(const std::vector<int>& tokens,
                                                double temperature, int cap_faces) const {
  FlatSequence seq;
  seq.ids.push_back(vocab());
  seq.face_pos.push_back(-1);
  seq.intra.push_back(-1);
  const int T = source_.tokens_per_face;
  for (size_t i = 0; i < tokens.size(); ++i) {
    seq.ids.push_back(tokens[i]);
    seq.face_pos.push_back(int(i) / T);
    seq.intra.push_back(int(i) % T);
  }
  Tape<float> tp;
  tp.enabled = false;
  Tensor<float> logits = forward(tp, seq);
  const int V = vocab();
  const int64_t last = int64_t(seq.ids.size()) - 1;
  const float* row = logits.ptr() + last * V;

  const int q = int(tokens.size());
  const bool stop_legal = q % T == 0;
  const bool must_stop = q >= cap_faces * T;

  std::vector<double> probs(size_t(V), 0.0);
  double mx = -1e300;
  for (int k = 0; k < V; ++k) {
    const bool legal = k == stop_id() ? stop_legal : !must_stop;
    if (!legal) continue;
    probs[size_t(k)] = double(row[k]) / temperature;
    mx = std::max(mx, probs[size_t(k)]);
  }
  double total = 0;
  for (int k = 0; k < V; ++k) {
    const bool legal = k == stop_id() ? stop_legal : !must_stop;
    if (!legal) {
      probs[size_t(k)] = 0;
      continue;
    }
    probs[size_t(k)] = std::exp(probs[size_t(k)] - mx);
    total += probs[size_t(k)];
  }
  for (double& p : probs) p /= total;
  return probs;
}

namespace {

int pick_nucleus(const std::vector<double>& probs, double p_cut, int top_k, Rng& rng) {
  std::vector<int> order(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) order[i] = int(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (probs[size_t(a)] != probs[size_t(b)]) return probs[size_t(a)] > probs[size_t(b)];
    return a < b;
  });
  size_t keep = 0;
  double cum = 0;
  const size_t limit = top_k > 0 ? std::min(order.size(), size_t(top_k)) : order.size();
  for (; keep < limit; ) {
    cum += probs[size_t(order[keep])];
    ++keep;
    if (cum >= p_cut) break;
  }
  const double u = rng.uniform() * cum;
  double acc = 0;
  for (size_t i = 0; i < keep; ++i) {
    acc += probs[size_t(order[i])];
    if (u < acc) return order[i];
  }
  return order[keep - 1];
}

}  // namespace

SampleResult GptModel::sample_tokens(const SamplerConfig& sampler,
                                     const std::vector<int>& prefix_tokens) const {
  const int T = source_.tokens_per_face;
  const int cap_faces =
      sampler.max_faces > 0 ? std::min(sampler.max_faces, max_faces()) : max_faces();
  const int max_tokens = cap_faces * T;
  if (int(prefix_tokens.size()) > max_tokens) {
    throw MeshError("sample: prefix exceeds the face budget");
  }
  Rng rng(sampler.seed);

  if (sampler.mode == "beam") {
    struct Beam {
      std::vector<int> tokens;
      double logprob = 0;
      bool finished = false;
    };
    std::vector<Beam> beams = {{prefix_tokens, 0.0, false}};
    for (int guard = 0; guard <= max_tokens; ++guard) {
      bool all_done = true;
      for (const Beam& b : beams) all_done = all_done && b.finished;
      if (all_done) break;
      struct Cand {
        size_t from;
        int token;  // -1 = keep finished beam
        double logprob;
      };
      std::vector<Cand> cands;
      for (size_t bi = 0; bi < beams.size(); ++bi) {
        if (beams[bi].finished) {
          cands.push_back({bi, -1, beams[bi].logprob});
          continue;
        }
        std::vector<double> probs =
            next_distribution(beams[bi].tokens, sampler.temperature, cap_faces);
        std::vector<int> order(probs.size());
        for (size_t i = 0; i < probs.size(); ++i) order[i] = int(i);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
          if (probs[size_t(a)] != probs[size_t(b)]) return probs[size_t(a)] > probs[size_t(b)];
          return a < b;
        });
        const int expand = std::min<int>(sampler.beam_width, int(order.size()));
        for (int e = 0; e < expand; ++e) {
          if (probs[size_t(order[e])] <= 0) break;
          cands.push_back({bi, order[e],
                           beams[bi].logprob + std::log(probs[size_t(order[e])])});
        }
      }
      std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.logprob != b.logprob) return a.logprob > b.logprob;
        if (a.from != b.from) return a.from < b.from;
        return a.token < b.token;
      });
      std::vector<Beam> next;
      for (const Cand& c : cands) {
        if (int(next.size()) >= sampler.beam_width) break;
        Beam nb = beams[c.from];
        if (c.token == stop_id()) {
          nb.finished = true;
          nb.logprob = c.logprob;
        } else if (c.token >= 0) {
          nb.tokens.push_back(c.token);
          nb.logprob = c.logprob;
        }
        next.push_back(std::move(nb));
      }
      beams = std::move(next);
    }
    const Beam* best = nullptr;
    for (const Beam& b : beams) {
      if (!b.finished) continue;
      if (!best || b.logprob > best->logprob) best = &b;
    }
    SampleResult out;
    if (!best) {  // nothing finished: take the best beam, trimmed to whole faces
      const Beam& b = beams.front();
      out.tokens = b.tokens;
      out.tokens.resize(out.tokens.size() - out.tokens.size() % size_t(T));
      out.truncated = true;
      return out;
    }
    out.tokens = best->tokens;
    return out;
  }

  std::vector<int> tokens = prefix_tokens;
  SampleResult out;
  bool stopped = false;
  while (int(tokens.size()) < max_tokens) {
    std::vector<double> probs = next_distribution(tokens, sampler.temperature, cap_faces);
    int pick;
    if (sampler.mode == "greedy") {
      pick = 0;
      for (size_t k = 1; k < probs.size(); ++k) {
        if (probs[k] > probs[size_t(pick)]) pick = int(k);
      }
    } else {
      pick = pick_nucleus(probs, sampler.p, sampler.top_k, rng);
    }
    if (pick == stop_id()) {
      stopped = true;
      break;
    }
    tokens.push_back(pick);
  }
  out.tokens = tokens;
  out.truncated = !stopped;  // budget ran out before a stop token
  return out;
}

Checkpoint GptModel::to_checkpoint(const Config& full_config) const {
  Checkpoint ckpt;
  ckpt.config_text = full_config.snapshot();
  Tensor<float> meta({4});
  meta[0] = float(source_.n_real_tokens);
  meta[1] = float(source_.tokens_per_face);
  meta[2] = float(source_.slot_dim);
  meta[3] = source_.codebook.defined() ? 1.f : 0.f;
  ckpt.add_f32("gpt.meta", meta);
  if (source_.codebook.defined()) ckpt.add_f32("gpt.codebook", source_.codebook);
  for (const nn::Param<float>* p : const_cast<nn::ParamStore<float>&>(params_).all()) {
    ckpt.add_f32("gpt." + p->name, p->value);
  }
  return ckpt;
}

std::unique_ptr<GptModel> GptModel::from_checkpoint(const Checkpoint& ckpt) {
  Config cfg = Config::from_text(ckpt.config_text, "<checkpoint>");
  GptSettings settings = GptSettings::from_config(cfg);
  Tensor<float> meta = ckpt.get_f32("gpt.meta");
  TokenSource src;
  src.n_real_tokens = int(meta[0]);
  src.tokens_per_face = int(meta[1]);
  src.slot_dim = int(meta[2]);
  if (meta[3] != 0.f) src.codebook = ckpt.get_f32("gpt.codebook");
  auto model = std::make_unique<GptModel>(settings, std::move(src));
  for (nn::Param<float>* p : model->params_.all()) {
    Tensor<float> stored = ckpt.get_f32("gpt." + p->name);
    if (stored.shape != p->value.shape) {
      throw CheckpointError("gpt." + p->name + ": shape " + stored.shape.str() +
                            " != expected " + p->value.shape.str());
    }
    p->value = stored;
    p->grad = Tensor<float>::zeros(stored.shape);
  }
  return model;
}

DecodedMesh decode_generated_tokens(const std::vector<int>& tokens, CodecModel* codec,
                                    const GptModel& gpt, double merge_epsilon) {
  DecodedMesh out;
  const int T = gpt.tokens_per_face();
  if (tokens.empty() || tokens.size() % size_t(T) != 0) {
    throw MeshError("decode_generated_tokens: token count " + std::to_string(tokens.size()) +
                    " is not a positive multiple of " + std::to_string(T));
  }
  const int faces = int(tokens.size()) / T;
  if (gpt.settings().token_mode == "raw") {
    out.bins.resize(size_t(faces));
    for (int f = 0; f < faces; ++f) {
      for (int c = 0; c < 9; ++c) out.bins[size_t(f)][c] = tokens[size_t(f) * 9 + c];
    }
  } else {
    if (!codec) throw MeshError("decode_generated_tokens: codec required for learned tokens");
    TokenStack stack;
    stack.faces = faces;
    stack.per_face = T;
    stack.tokens = tokens;
    out.bins = codec->decode(stack);
  }
  // Soup of per-face bin-center triangles, welded into a mesh.
  Mesh soup;
  for (int f = 0; f < faces; ++f) {
    for (int j = 0; j < 3; ++j) {
      const auto& row = out.bins[size_t(f)];
      soup.vertices.push_back({bin_center(row[j * 3 + 0]), bin_center(row[j * 3 + 1]),
                               bin_center(row[j * 3 + 2])});
    }
    soup.faces.push_back({f * 3, f * 3 + 1, f * 3 + 2});
  }
  out.mesh = merge_vertices(soup, merge_epsilon);
  return out;
}

CompletionResult complete_mesh(GptModel& gpt, CodecModel* codec, const DiscreteMesh& partial,
                               int count, const SamplerConfig& sampler) {
  CompletionResult out;
  std::vector<int> prefix;
  if (gpt.settings().token_mode == "raw") {
    out.prefix_bins = face_bins(partial);
    for (const auto& row : out.prefix_bins) {
      for (int c = 0; c < 9; ++c) prefix.push_back(row[c]);
    }
  } else {
    if (!codec) throw MeshError("complete_mesh: codec required for learned tokens");
    TokenStack stack = codec->tokenize(partial);
    prefix = stack.tokens;
    out.prefix_bins = face_bins(partial);
  }
  const int prefix_faces = int(out.prefix_bins.size());

  for (int i = 0; i < count; ++i) {
    SamplerConfig per = sampler;
    per.seed = Rng(sampler.seed).fork(uint64_t(i)).next_u64();
    SampleResult res = gpt.sample_tokens(per, prefix);
    DecodedMesh decoded = decode_generated_tokens(res.tokens, codec, gpt, sampler.merge_epsilon);
    // The prefix faces are kept verbatim; only the continuation comes from the
    // decoder (whose receptive field spans the full sequence).
    for (int f = 0; f < prefix_faces; ++f) decoded.bins[size_t(f)] = out.prefix_bins[size_t(f)];
    Mesh soup;
    for (size_t f = 0; f < decoded.bins.size(); ++f) {
      for (int j = 0; j < 3; ++j) {
        const auto& row = decoded.bins[f];
        soup.vertices.push_back({bin_center(row[j * 3 + 0]), bin_center(row[j * 3 + 1]),
                                 bin_center(row[j * 3 + 2])});
      }
      soup.faces.push_back({int(f) * 3, int(f) * 3 + 1, int(f) * 3 + 2});
    }
    decoded.mesh = merge_vertices(soup, sampler.merge_epsilon);
    out.meshes.push_back(std::move(decoded));
    out.truncated.push_back(res.truncated);
  }
  return out;
}

}  // namespace meshgpt
