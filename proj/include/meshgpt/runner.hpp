#pragma once
#include <ostream>
#include <string>
#include <vector>

#include "meshgpt/codec.hpp"
#include "meshgpt/config.hpp"
#include "meshgpt/gpt.hpp"

namespace meshgpt {

// Pipeline entry points shared by the CLI, the acceptance suite and the
// python bindings. Every function is a pure function of (config, seed,
// inputs) and writes byte-stable artifacts.

// Generates the synthetic dataset plus manifest; returns the manifest path.
std::string run_gen_data(const Config& cfg, const std::string& out_dir,
                         std::ostream* progress = nullptr);

// Manifest split -> normalized meshes (paths resolved against the manifest).
std::vector<Mesh> load_split_meshes(const std::string& manifest_path, const std::string& split);

CodecTrainResult run_train_codec(const Config& cfg, const std::string& manifest_path,
                                 const std::string& out_ckpt, const std::string& log_path,
                                 std::ostream* progress = nullptr);

CodecTrainResult run_train_gpt(const Config& cfg, const std::string& manifest_path,
                               const std::string& codec_ckpt, const std::string& out_ckpt,
                               const std::string& log_path,
                               const std::string& pretrain_manifest = "",
                               std::ostream* progress = nullptr);

// Writes sample_<i>.obj files; returns their paths.
std::vector<std::string> run_sample(const Config& cfg, const std::string& codec_ckpt,
                                    const std::string& gpt_ckpt, int count,
                                    const std::string& out_dir, std::ostream* progress = nullptr);

// Prefix-conditioned completions of a partial OBJ; writes complete_<i>.obj.
std::vector<std::string> run_complete(const Config& cfg, const std::string& codec_ckpt,
                                      const std::string& gpt_ckpt, const std::string& partial_obj,
                                      int count, const std::string& out_dir,
                                      std::ostream* progress = nullptr);

// `metric<TAB>value` report comparing two OBJ directories.
std::string run_eval(const std::string& generated_dir, const std::string& reference_dir,
                     int points, uint64_t seed);

// Encode/quantize/decode one OBJ; returns triangle accuracy in percent.
double run_roundtrip(const std::string& mesh_path, const std::string& codec_ckpt);

// Gradient verification; prints one line per check, returns overall pass.
bool run_grad_check(uint64_t seed, std::ostream& out);

// Shortest-round-trip decimal text for doubles (locale independent).
std::string format_value(double v);

void write_text_file(const std::string& path, const std::string& content);

// Loss log: `# meshgpt-log v1` header, config snapshot + seed as comments,
// then `step<TAB>loss<TAB>accuracy` lines.
void write_train_log(const std::string& path, const std::string& command, const Config& cfg,
                     uint64_t seed, const std::vector<TrainLogLine>& lines);

}  // namespace meshgpt
