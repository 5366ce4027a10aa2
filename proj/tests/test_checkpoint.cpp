#include <doctest.h>

#include "meshgpt/checkpoint.hpp"
#include "meshgpt/config.hpp"
#include "test_util.hpp"

using namespace meshgpt;
using testutil::TempDir;

TEST_CASE("checkpoint: save/load round-trips byte-exactly") {
  TempDir tmp("ckpt_rt");
  Checkpoint ckpt;
  ckpt.config_text = Config::defaults().snapshot();
  Rng rng(5);
  ad::Tensor<float> a({3, 4});
  for (int64_t i = 0; i < a.numel(); ++i) a[i] = float(rng.normal());
  ckpt.add_f32("model.a", a);
  ad::Tensor<float> b({7});
  ckpt.add_f32("model.b", b);

  const std::string p1 = tmp.file("a.ckpt"), p2 = tmp.file("b.ckpt");
  save_checkpoint(ckpt, p1);
  Checkpoint loaded = load_checkpoint(p1);
  CHECK(loaded.config_text == ckpt.config_text);
  save_checkpoint(loaded, p2);
  CHECK(testutil::read_file(p1) == testutil::read_file(p2));

  ad::Tensor<float> back = loaded.get_f32("model.a");
  CHECK(back.shape == a.shape);
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(back[i] == a[i]);
}

TEST_CASE("checkpoint: corrupt magic and version are rejected") {
  TempDir tmp("ckpt_bad");
  Checkpoint ckpt;
  ckpt.config_text = "x";
  const std::string path = tmp.file("c.ckpt");
  save_checkpoint(ckpt, path);

  std::string bytes = testutil::read_file(path);
  std::string corrupt = bytes;
  corrupt[0] = 'X';
  testutil::write_file(path, corrupt);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("bad magic"), CheckpointError);

  corrupt = bytes;
  corrupt[4] = 9;  // version
  testutil::write_file(path, corrupt);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version"), CheckpointError);
}

TEST_CASE("checkpoint: truncated record is detected") {
  TempDir tmp("ckpt_trunc");
  Checkpoint ckpt;
  ckpt.config_text = "cfg";
  ad::Tensor<float> a({16});
  ckpt.add_f32("weights", a);
  const std::string path = tmp.file("c.ckpt");
  save_checkpoint(ckpt, path);
  std::string bytes = testutil::read_file(path);
  testutil::write_file(path, bytes.substr(0, bytes.size() - 10));
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"), CheckpointError);
}

TEST_CASE("config: defaults, parsing, normalization") {
  Config cfg = Config::from_text("[codec]\ncodebook_size = 64\nstochastic = FALSE\n"
                                 "[sampler]\nmode = greedy\n",
                                 "<test>");
  CHECK(cfg.get_int("codec", "codebook_size") == 64);
  CHECK(cfg.get_bool("codec", "stochastic") == false);
  CHECK(cfg.get_str("sampler", "mode") == "greedy");
  // untouched keys hold their defaults
  CHECK(cfg.get_int("gpt", "width") == 256);
  CHECK(cfg.get_float("data", "split_ratio") == doctest::Approx(0.9));
}

TEST_CASE("config: unknown keys, sections and bad values are errors") {
  CHECK_THROWS_AS(Config::from_text("[codec]\nbogus = 1\n", "<t>"), ConfigError);
  CHECK_THROWS_AS(Config::from_text("[nope]\n", "<t>"), ConfigError);
  CHECK_THROWS_AS(Config::from_text("[codec]\ncodebook_size = banana\n", "<t>"), ConfigError);
  CHECK_THROWS_AS(Config::from_text("codebook_size = 2\n", "<t>"), ConfigError);
}

TEST_CASE("config: snapshot is canonical and stable") {
  Config a = Config::from_text("[codec]\nlr = 0.0001\n", "<t>");
  Config b = Config::from_text("# comment\n[codec]\nlr = 1e-4\n", "<t>");
  CHECK(a.snapshot() == b.snapshot());
  Config c = Config::from_text(a.snapshot(), "<resnapshot>");
  CHECK(c.snapshot() == a.snapshot());
}

TEST_CASE("config: section diff lists mismatched keys") {
  Config a = Config::defaults();
  Config b = Config::defaults();
  b.set("codec", "codebook_size", "1024");
  b.set("codec", "sigma", "2.0");
  auto diff = Config::diff_section(a, b, "codec");
  REQUIRE(diff.size() == 2);
  CHECK(diff[0].find("codebook_size") != std::string::npos);
  CHECK(diff[1].find("sigma") != std::string::npos);
  CHECK(Config::diff_section(a, b, "gpt").empty());
}
