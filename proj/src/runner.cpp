#include "meshgpt/runner.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "meshgpt/datasets.hpp"
#include "meshgpt/gradcheck.hpp"
#include "meshgpt/metrics.hpp"

namespace fs = std::filesystem;

namespace meshgpt {

std::string format_value(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MeshError("cannot write " + path);
  out << content;
  if (!out) throw MeshError("write failed for " + path);
}

void write_train_log(const std::string& path, const std::string& command, const Config& cfg,
                     uint64_t seed, const std::vector<TrainLogLine>& lines) {
  std::string out = "# meshgpt-log v1\n# command " + command + "\n# seed " +
                    std::to_string(seed) + "\n";
  std::istringstream snap(cfg.snapshot());
  std::string line;
  while (std::getline(snap, line)) out += "# " + line + "\n";
  for (const TrainLogLine& l : lines) {
    out += std::to_string(l.step) + "\t" + format_value(l.loss) + "\t" +
           format_value(l.accuracy_or_aux) + "\n";
  }
  write_text_file(path, out);
}

namespace {

std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  while (int(s.size()) < width) s = "0" + s;
  return s;
}

DiscreteMesh canonical_dmesh(const Mesh& normalized) {
  return canonicalize(discretize(normalized));
}

std::vector<std::string> sorted_obj_files(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".obj") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw MeshError("no .obj files in " + dir);
  return files;
}

// The [codec] section travels with every checkpoint; a mismatch between what
// the caller asks for and what the checkpoint was trained with is refused.
void check_codec_section(const Config& requested, const Checkpoint& ckpt,
                         const std::string& ckpt_path) {
  Config theirs = Config::from_text(ckpt.config_text, ckpt_path);
  std::vector<std::string> diff = Config::diff_section(requested, theirs, "codec");
  if (diff.empty()) return;
  std::string msg = ckpt_path + ": [codec] settings disagree with the requested config:";
  for (const std::string& d : diff) msg += "\n  " + d;
  throw ConfigError(msg);
}

}  // namespace

std::string run_gen_data(const Config& cfg, const std::string& out_dir, std::ostream* progress) {
  fs::create_directories(out_dir);
  SyntheticSpec spec;
  spec.families = cfg.get_str_list("data", "families");
  spec.count = int(cfg.get_int("data", "count"));
  spec.seed = uint64_t(cfg.get_int("data", "seed"));
  std::vector<Mesh> meshes = generate_synthetic(spec);

  std::vector<std::string> names, families;
  std::vector<int> faces;
  for (size_t i = 0; i < meshes.size(); ++i) {
    const std::string& family = spec.families[i % spec.families.size()];
    const std::string name = family + "_" + zero_pad(int(i), 4) + ".obj";
    save_obj(meshes[i], out_dir + "/" + name);
    names.push_back(name);
    families.push_back(family);
    faces.push_back(int(meshes[i].faces.size()));
  }
  DatasetManifest manifest =
      build_manifest(names, families, faces, int(cfg.get_int("data", "max_faces")),
                     cfg.get_float("data", "split_ratio"), spec.seed);
  const std::string manifest_path = out_dir + "/manifest.tsv";
  save_manifest(manifest, manifest_path);
  if (progress) {
    (*progress) << "gen-data: " << meshes.size() << " meshes, manifest " << manifest_path
                << "\n";
  }
  return manifest_path;
}

std::vector<Mesh> load_split_meshes(const std::string& manifest_path, const std::string& split) {
  DatasetManifest manifest = load_manifest(manifest_path);
  const std::string dir = manifest_dir(manifest_path);
  std::vector<Mesh> out;
  for (const ManifestEntry& e : manifest.split(split)) {
    out.push_back(normalize(load_obj(dir + "/" + e.path)));
  }
  if (out.empty()) throw MeshError(manifest_path + ": no '" + split + "' entries");
  return out;
}

CodecTrainResult run_train_codec(const Config& cfg, const std::string& manifest_path,
                                 const std::string& out_ckpt, const std::string& log_path,
                                 std::ostream* progress) {
  std::vector<Mesh> meshes = load_split_meshes(manifest_path, "train");
  CodecModel model(CodecSettings::from_config(cfg));

  std::vector<DiscreteMesh> data;
  CodecTrainOptions opts;
  opts.progress = progress;
  if (cfg.get_bool("data", "augment")) {
    opts.augment_sources = meshes;
  } else {
    for (const Mesh& m : meshes) data.push_back(canonical_dmesh(m));
  }
  CodecTrainResult result = model.train(data, opts);
  save_checkpoint(model.to_checkpoint(cfg), out_ckpt);
  if (!log_path.empty()) {
    write_train_log(log_path, "train-codec", cfg, model.settings().seed, result.log);
  }
  return result;
}

CodecTrainResult run_train_gpt(const Config& cfg, const std::string& manifest_path,
                               const std::string& codec_ckpt, const std::string& out_ckpt,
                               const std::string& log_path, const std::string& pretrain_manifest,
                               std::ostream* progress) {
  GptSettings settings = GptSettings::from_config(cfg);
  const bool raw = settings.token_mode == "raw";

  std::unique_ptr<CodecModel> codec;
  GptModel::TokenSource source;
  if (raw) {
    source = GptModel::raw_source();
  } else {
    if (codec_ckpt.empty()) throw ConfigError("train-gpt: --codec required for learned tokens");
    Checkpoint ck = load_checkpoint(codec_ckpt);
    check_codec_section(cfg, ck, codec_ckpt);
    codec = CodecModel::from_checkpoint(ck);
    source = GptModel::source_from_codec(*codec);
  }
  GptModel model(settings, std::move(source));

  auto to_sequences = [&](const std::string& path) {
    std::vector<FlatSequence> seqs;
    for (const Mesh& m : load_split_meshes(path, "train")) {
      DiscreteMesh d = canonical_dmesh(m);
      std::vector<int> tokens;
      if (raw) {
        for (const auto& row : face_bins(d)) {
          for (int c = 0; c < 9; ++c) tokens.push_back(row[c]);
        }
      } else {
        tokens = codec->tokenize(d).tokens;
      }
      seqs.push_back(model.build_token_sequence(tokens));
    }
    return seqs;
  };

  std::vector<FlatSequence> data = to_sequences(manifest_path);
  GptTrainOptions opts;
  opts.progress = progress;
  if (!pretrain_manifest.empty()) opts.pretrain = to_sequences(pretrain_manifest);

  CodecTrainResult result = model.train(data, opts);
  save_checkpoint(model.to_checkpoint(cfg), out_ckpt);
  if (!log_path.empty()) {
    write_train_log(log_path, "train-gpt", cfg, settings.seed, result.log);
  }
  return result;
}

namespace {

struct LoadedModels {
  std::unique_ptr<CodecModel> codec;
  std::unique_ptr<GptModel> gpt;
};

LoadedModels load_models(const std::string& codec_ckpt, const std::string& gpt_ckpt) {
  LoadedModels out;
  Checkpoint gk = load_checkpoint(gpt_ckpt);
  out.gpt = GptModel::from_checkpoint(gk);
  if (out.gpt->settings().token_mode == "raw") return out;
  if (codec_ckpt.empty()) throw ConfigError("sample: --codec required for learned tokens");
  Checkpoint ck = load_checkpoint(codec_ckpt);
  Config gpt_cfg = Config::from_text(gk.config_text, gpt_ckpt);
  check_codec_section(gpt_cfg, ck, codec_ckpt);
  out.codec = CodecModel::from_checkpoint(ck);
  return out;
}

}  // namespace

std::vector<std::string> run_sample(const Config& cfg, const std::string& codec_ckpt,
                                    const std::string& gpt_ckpt, int count,
                                    const std::string& out_dir, std::ostream* progress) {
  fs::create_directories(out_dir);
  LoadedModels models = load_models(codec_ckpt, gpt_ckpt);
  SamplerConfig sampler = SamplerConfig::from_config(cfg);

  std::vector<std::string> written;
  for (int i = 0; i < count; ++i) {
    SamplerConfig per = sampler;
    per.seed = Rng(sampler.seed).fork(uint64_t(i)).next_u64();
    SampleResult res = models.gpt->sample_tokens(per, {});
    if (res.tokens.empty()) {
      if (progress) (*progress) << "sample " << i << ": empty mesh, skipped\n";
      continue;
    }
    DecodedMesh decoded = decode_generated_tokens(res.tokens, models.codec.get(), *models.gpt,
                                                  sampler.merge_epsilon);
    const std::string path = out_dir + "/sample_" + zero_pad(i, 4) + ".obj";
    save_obj(decoded.mesh, path);
    written.push_back(path);
    if (progress) {
      (*progress) << "sample " << i << ": " << decoded.mesh.faces.size() << " faces"
                  << (res.truncated ? " (truncated: no stop token before the face budget)" : "")
                  << "\n";
    }
  }
  return written;
}

std::vector<std::string> run_complete(const Config& cfg, const std::string& codec_ckpt,
                                      const std::string& gpt_ckpt, const std::string& partial_obj,
                                      int count, const std::string& out_dir,
                                      std::ostream* progress) {
  fs::create_directories(out_dir);
  LoadedModels models = load_models(codec_ckpt, gpt_ckpt);
  SamplerConfig sampler = SamplerConfig::from_config(cfg);

  DiscreteMesh partial = canonical_dmesh(normalize(load_obj(partial_obj)));
  CompletionResult result =
      complete_mesh(*models.gpt, models.codec.get(), partial, count, sampler);
  std::vector<std::string> written;
  for (size_t i = 0; i < result.meshes.size(); ++i) {
    const std::string path = out_dir + "/complete_" + zero_pad(int(i), 4) + ".obj";
    save_obj(result.meshes[i].mesh, path);
    written.push_back(path);
    if (progress) {
      (*progress) << "complete " << i << ": " << result.meshes[i].mesh.faces.size() << " faces"
                  << (result.truncated[i] ? " (truncated)" : "") << "\n";
    }
  }
  return written;
}

std::string run_eval(const std::string& generated_dir, const std::string& reference_dir,
                     int points, uint64_t seed) {
  auto load_clouds = [&](const std::string& dir, uint64_t stream) {
    std::vector<PointCloud> clouds;
    std::vector<Mesh> meshes;
    Rng rng = Rng(seed).fork(stream);
    for (const std::string& path : sorted_obj_files(dir)) {
      Mesh m = load_obj(path);
      clouds.push_back(sample_surface_points(m, points, rng.fork(clouds.size()).next_u64()));
      meshes.push_back(std::move(m));
    }
    return std::pair(clouds, meshes);
  };
  auto [gen_clouds, gen_meshes] = load_clouds(generated_dir, 0);
  auto [ref_clouds, ref_meshes] = load_clouds(reference_dir, 1);

  ShapeSetMetrics m = shape_set_metrics(gen_clouds, ref_clouds);
  Compactness c = compactness(gen_meshes);
  std::string out;
  out += "mmd\t" + format_value(m.mmd) + "\n";
  out += "cov\t" + format_value(100.0 * m.cov) + "\n";
  out += "1nna\t" + format_value(100.0 * m.one_nna) + "\n";
  char buf[64];
  snprintf(buf, sizeof(buf), "%.1f", c.avg_vertices);
  out += "avg_vertices\t" + std::string(buf) + "\n";
  snprintf(buf, sizeof(buf), "%.1f", c.avg_faces);
  out += "avg_faces\t" + std::string(buf) + "\n";
  return out;
}

double run_roundtrip(const std::string& mesh_path, const std::string& codec_ckpt) {
  std::unique_ptr<CodecModel> codec = CodecModel::from_checkpoint(load_checkpoint(codec_ckpt));
  DiscreteMesh d = canonical_dmesh(normalize(load_obj(mesh_path)));
  return codec->reconstruction_accuracy(d);
}

bool run_grad_check(uint64_t seed, std::ostream& out) {
  bool all = true;
  for (const ad::CheckResult& r : ad::run_grad_check_suite(seed)) {
    out << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  max_err " << r.max_err
        << "  threshold " << r.threshold << "\n";
    all = all && r.pass;
  }
  return all;
}

}  // namespace meshgpt
