// meshgpt command line: dataset generation, vocabulary and transformer
// training, sampling/completion, evaluation, and verification, all driven by
// a config file plus a seed for full reproducibility.
#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "meshgpt/runner.hpp"

using namespace meshgpt;

namespace {

Config load_config(const std::string& path) {
  return path.empty() ? Config::defaults() : Config::from_file(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meshgpt: autoregressive triangle-mesh generation with a learned "
               "quantized triangle vocabulary"};
  app.require_subcommand(1);

  std::string config_path, out, data_manifest, codec_ckpt, gpt_ckpt, log_path;
  std::string pretrain_manifest, mesh_path, generated_dir, reference_dir;
  int count = 5;
  int points = 2048;
  int64_t seed_override = -1;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (defaults used when omitted)");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate synthetic meshes + manifest");
  add_config(gen);
  gen->add_option("--out", out, "output directory")->required();

  CLI::App* tc = app.add_subcommand("train-codec", "train the triangle vocabulary");
  add_config(tc);
  tc->add_option("--data", data_manifest, "dataset manifest")->required();
  tc->add_option("--out", out, "output checkpoint")->required();
  tc->add_option("--log", log_path, "loss log path");

  CLI::App* tg = app.add_subcommand("train-gpt", "train the mesh transformer");
  add_config(tg);
  tg->add_option("--data", data_manifest, "dataset manifest")->required();
  tg->add_option("--codec", codec_ckpt, "codec checkpoint (omit for token_mode = raw)");
  tg->add_option("--pretrain-data", pretrain_manifest, "pretraining pool manifest");
  tg->add_option("--out", out, "output checkpoint")->required();
  tg->add_option("--log", log_path, "loss log path");

  CLI::App* sm = app.add_subcommand("sample", "generate meshes from trained checkpoints");
  add_config(sm);
  sm->add_option("--codec", codec_ckpt, "codec checkpoint");
  sm->add_option("--gpt", gpt_ckpt, "transformer checkpoint")->required();
  sm->add_option("--n", count, "number of meshes");
  sm->add_option("--seed", seed_override, "override sampler.seed");
  sm->add_option("--out", out, "output directory")->required();

  CLI::App* cp = app.add_subcommand("complete", "complete a partial mesh");
  add_config(cp);
  cp->add_option("--codec", codec_ckpt, "codec checkpoint");
  cp->add_option("--gpt", gpt_ckpt, "transformer checkpoint")->required();
  cp->add_option("--mesh", mesh_path, "partial mesh OBJ")->required();
  cp->add_option("--n", count, "number of completions");
  cp->add_option("--seed", seed_override, "override sampler.seed");
  cp->add_option("--out", out, "output directory")->required();

  CLI::App* ev = app.add_subcommand("eval", "shape-set metrics between two OBJ directories");
  ev->add_option("--generated", generated_dir, "generated mesh directory")->required();
  ev->add_option("--reference", reference_dir, "reference mesh directory")->required();
  ev->add_option("--points", points, "surface samples per mesh");
  ev->add_option("--seed", seed_override, "sampling seed");
  ev->add_option("--out", out, "also write the report to this file");

  CLI::App* rt = app.add_subcommand("roundtrip", "encode/quantize/decode one mesh");
  rt->add_option("--mesh", mesh_path, "input OBJ")->required();
  rt->add_option("--codec", codec_ckpt, "codec checkpoint")->required();

  CLI::App* gc = app.add_subcommand("grad-check", "run the autodiff verification suite");
  gc->add_option("--seed", seed_override, "suite seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      run_gen_data(load_config(config_path), out, &std::cerr);
    } else if (tc->parsed()) {
      CodecTrainResult r =
          run_train_codec(load_config(config_path), data_manifest, out, log_path, &std::cerr);
      std::cout << "steps\t" << r.steps << "\ntriangle_accuracy\t"
                << format_value(r.final_accuracy) << "\n";
    } else if (tg->parsed()) {
      CodecTrainResult r = run_train_gpt(load_config(config_path), data_manifest, codec_ckpt,
                                         out, log_path, pretrain_manifest, &std::cerr);
      std::cout << "steps\t" << r.steps << "\ncross_entropy\t" << format_value(r.final_accuracy)
                << "\n";
    } else if (sm->parsed()) {
      Config cfg = load_config(config_path);
      if (seed_override >= 0) cfg.set("sampler", "seed", std::to_string(seed_override));
      for (const std::string& p : run_sample(cfg, codec_ckpt, gpt_ckpt, count, out, &std::cerr)) {
        std::cout << p << "\n";
      }
    } else if (cp->parsed()) {
      Config cfg = load_config(config_path);
      if (seed_override >= 0) cfg.set("sampler", "seed", std::to_string(seed_override));
      for (const std::string& p :
           run_complete(cfg, codec_ckpt, gpt_ckpt, mesh_path, count, out, &std::cerr)) {
        std::cout << p << "\n";
      }
    } else if (ev->parsed()) {
      const uint64_t seed = seed_override >= 0 ? uint64_t(seed_override) : 1;
      std::string report = run_eval(generated_dir, reference_dir, points, seed);
      std::cout << report;
      if (!out.empty()) write_text_file(out, report);
    } else if (rt->parsed()) {
      double acc = run_roundtrip(mesh_path, codec_ckpt);
      char buf[64];
      snprintf(buf, sizeof(buf), "%.2f", acc);
      std::cout << "triangle_accuracy " << buf << "\n";
    } else if (gc->parsed()) {
      const uint64_t seed = seed_override >= 0 ? uint64_t(seed_override) : 1;
      if (!run_grad_check(seed, std::cout)) {
        std::cerr << "grad-check: FAILED\n";
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
