#include "meshgpt/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace meshgpt {

namespace {

enum class Kind { kInt, kFloat, kBool, kStr, kIntList, kStrList };

struct SchemaEntry {
  const char* section;
  const char* key;
  Kind kind;
  const char* def;
  const char* doc;
};

// The single source of truth for every tunable: defaults are desk-scale and
// runnable; configs/paper.cfg mirrors the published large-scale settings.
const SchemaEntry kSchema[] = {
    {"data", "families", Kind::kStrList, "box,table,shelf,lamp",
     "synthetic families to generate"},
    {"data", "count", Kind::kInt, "16", "number of meshes to generate"},
    {"data", "seed", Kind::kInt, "1", "generation / split seed"},
    {"data", "max_faces", Kind::kInt, "800", "manifest filter: exclude larger meshes"},
    {"data", "split_ratio", Kind::kFloat, "0.9", "train fraction of the shuffled set"},
    {"data", "augment", Kind::kBool, "false",
     "re-augment (scale+jitter) each epoch during training"},

    {"codec", "codebook_size", Kind::kInt, "512", "codebook entries K"},
    {"codec", "codebook_dim", Kind::kInt, "192", "embedding width per code"},
    {"codec", "rq_depth", Kind::kInt, "2", "residual levels per vertex slot"},
    {"codec", "per_vertex_quant", Kind::kBool, "true",
     "split face features across vertices before quantizing"},
    {"codec", "posenc_freqs", Kind::kInt, "8", "sinusoidal octaves per input coordinate"},
    {"codec", "encoder_widths", Kind::kIntList, "192,256,384,512,576",
     "graph-conv layer output widths (last is n_z)"},
    {"codec", "decoder_widths", Kind::kIntList, "96,128,160,192",
     "1D ResNet stage widths"},
    {"codec", "decoder_blocks", Kind::kIntList, "3,4,6,3", "1D ResNet blocks per stage"},
    {"codec", "kernel_size", Kind::kInt, "3", "decoder convolution kernel"},
    {"codec", "sigma", Kind::kFloat, "1.0", "target smoothing width in bins"},
    {"codec", "commitment_weight", Kind::kFloat, "0.25", "weight of the commitment term"},
    {"codec", "ema_decay", Kind::kFloat, "0.99", "codebook EMA decay gamma"},
    {"codec", "ema_epsilon", Kind::kFloat, "1e-5", "Laplace smoothing for EMA sizes"},
    {"codec", "dead_code_threshold", Kind::kFloat, "1e-3",
     "EMA size below which a code is re-seeded"},
    {"codec", "stochastic", Kind::kBool, "true",
     "sample codes by softmax(-distance/temperature) while training"},
    {"codec", "temperature", Kind::kFloat, "1.0", "stochastic code-sampling temperature"},
    {"codec", "lr", Kind::kFloat, "1e-4", "Adam learning rate"},
    {"codec", "grad_clip", Kind::kFloat, "1.0", "global gradient-norm cap (0 = off)"},
    {"codec", "batch_size", Kind::kInt, "8", "meshes per optimizer step (accumulated)"},
    {"codec", "max_steps", Kind::kInt, "20000", "optimizer step budget"},
    {"codec", "stop_accuracy", Kind::kFloat, "100.0",
     "stop early once train triangle accuracy reaches this"},
    {"codec", "log_every", Kind::kInt, "100", "steps between loss-log lines"},
    {"codec", "seed", Kind::kInt, "1", "init / shuffle / stochastic-code seed"},

    {"gpt", "layers", Kind::kInt, "6", "transformer blocks"},
    {"gpt", "heads", Kind::kInt, "8", "attention heads"},
    {"gpt", "width", Kind::kInt, "256", "model width"},
    {"gpt", "ffn_mult", Kind::kInt, "4", "feed-forward width multiple"},
    {"gpt", "context", Kind::kInt, "512", "maximum flat sequence length"},
    {"gpt", "encoder_features", Kind::kBool, "true",
     "feed codebook embeddings (false: learned id table)"},
    {"gpt", "token_mode", Kind::kStr, "learned",
     "learned = codec tokens, raw = 9 coordinate bins per face"},
    {"gpt", "lr", Kind::kFloat, "1e-4", "Adam learning rate"},
    {"gpt", "grad_clip", Kind::kFloat, "1.0", "global gradient-norm cap (0 = off)"},
    {"gpt", "batch_size", Kind::kInt, "8", "sequences per optimizer step (accumulated)"},
    {"gpt", "max_steps", Kind::kInt, "20000", "optimizer step budget"},
    {"gpt", "stop_loss", Kind::kFloat, "0.0",
     "stop early once train cross-entropy falls below this"},
    {"gpt", "log_every", Kind::kInt, "100", "steps between loss-log lines"},
    {"gpt", "pretrain_steps", Kind::kInt, "0",
     "steps on the pretraining pool before fine-tuning (needs --pretrain-data)"},
    {"gpt", "seed", Kind::kInt, "1", "init / shuffle seed"},

    {"sampler", "mode", Kind::kStr, "nucleus", "greedy | nucleus | beam"},
    {"sampler", "p", Kind::kFloat, "0.95", "nucleus cumulative probability"},
    {"sampler", "top_k", Kind::kInt, "0", "optional top-k cutoff (0 = off)"},
    {"sampler", "beam_width", Kind::kInt, "4", "beams kept in beam mode"},
    {"sampler", "temperature", Kind::kFloat, "1.0", "logit temperature"},
    {"sampler", "seed", Kind::kInt, "1", "sampling seed"},
    {"sampler", "max_faces", Kind::kInt, "0", "face cap (0 = from context length)"},
    {"sampler", "merge_epsilon", Kind::kFloat, "0.00390625",
     "vertex weld tolerance for generated soup (1/256)"},
};

const SchemaEntry* find_entry(const std::string& section, const std::string& key) {
  for (const SchemaEntry& e : kSchema) {
    if (section == e.section && key == e.key) return &e;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

bool parse_int(const std::string& s, int64_t& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool parse_float(const std::string& s, double& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Canonical value text per kind; throws on malformed input.
std::string normalize(const SchemaEntry& e, const std::string& raw) {
  const std::string where = std::string(e.section) + "." + e.key;
  switch (e.kind) {
    case Kind::kInt: {
      int64_t v;
      if (!parse_int(raw, v)) throw ConfigError(where + ": '" + raw + "' is not an integer");
      return std::to_string(v);
    }
    case Kind::kFloat: {
      double v;
      if (!parse_float(raw, v)) throw ConfigError(where + ": '" + raw + "' is not a number");
      return format_double(v);
    }
    case Kind::kBool: {
      std::string low = raw;
      std::transform(low.begin(), low.end(), low.begin(), ::tolower);
      if (low == "true" || low == "1" || low == "yes") return "true";
      if (low == "false" || low == "0" || low == "no") return "false";
      throw ConfigError(where + ": '" + raw + "' is not a boolean");
    }
    case Kind::kStr:
      return raw;
    case Kind::kIntList: {
      std::string out;
      for (const std::string& item : split_list(raw)) {
        int64_t v;
        if (!parse_int(item, v)) throw ConfigError(where + ": '" + item + "' is not an integer");
        if (!out.empty()) out += ",";
        out += std::to_string(v);
      }
      if (out.empty()) throw ConfigError(where + ": empty list");
      return out;
    }
    case Kind::kStrList: {
      std::string out;
      for (const std::string& item : split_list(raw)) {
        if (!out.empty()) out += ",";
        out += item;
      }
      if (out.empty()) throw ConfigError(where + ": empty list");
      return out;
    }
  }
  throw ConfigError(where + ": unhandled kind");
}

}  // namespace

Config Config::defaults() {
  Config c;
  for (const SchemaEntry& e : kSchema) {
    c.values_[{e.section, e.key}] = normalize(e, e.def);
  }
  return c;
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_text(text, path);
}

Config Config::from_text(const std::string& text, const std::string& origin) {
  Config c = defaults();
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      bool known = false;
      for (const SchemaEntry& e : kSchema) known = known || section == e.section;
      if (!known) throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + ": key '" + key + "' outside any section");
    const SchemaEntry* e = find_entry(section, key);
    if (!e) throw ConfigError(where + ": unknown key '" + key + "' in [" + section + "]");
    try {
      c.values_[{section, key}] = normalize(*e, value);
    } catch (const ConfigError& err) {
      throw ConfigError(where + ": " + err.what());
    }
  }
  return c;
}

const std::string& Config::raw(const std::string& section, const std::string& key) const {
  auto it = values_.find({section, key});
  if (it == values_.end()) {
    throw ConfigError("no such config key " + section + "." + key);
  }
  return it->second;
}

int64_t Config::get_int(const std::string& s, const std::string& k) const {
  int64_t v;
  parse_int(raw(s, k), v);
  return v;
}

double Config::get_float(const std::string& s, const std::string& k) const {
  double v;
  parse_float(raw(s, k), v);
  return v;
}

bool Config::get_bool(const std::string& s, const std::string& k) const {
  return raw(s, k) == "true";
}

std::string Config::get_str(const std::string& s, const std::string& k) const {
  return raw(s, k);
}

std::vector<int> Config::get_int_list(const std::string& s, const std::string& k) const {
  std::vector<int> out;
  for (const std::string& item : split_list(raw(s, k))) {
    int64_t v;
    parse_int(item, v);
    out.push_back(int(v));
  }
  return out;
}

std::vector<std::string> Config::get_str_list(const std::string& s, const std::string& k) const {
  return split_list(raw(s, k));
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
  const SchemaEntry* e = find_entry(section, key);
  if (!e) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
  values_[{section, key}] = normalize(*e, value);
}

std::string Config::snapshot() const {
  std::string out;
  std::string current;
  for (const SchemaEntry& e : kSchema) {
    if (current != e.section) {
      if (!out.empty()) out += "\n";
      current = e.section;
      out += "[" + current + "]\n";
    }
    out += std::string(e.key) + " = " + raw(e.section, e.key) + "\n";
  }
  return out;
}

std::string Config::snapshot_section(const std::string& section) const {
  std::string out = "[" + section + "]\n";
  for (const SchemaEntry& e : kSchema) {
    if (section == e.section) out += std::string(e.key) + " = " + raw(e.section, e.key) + "\n";
  }
  return out;
}

std::vector<std::string> Config::diff_section(const Config& a, const Config& b,
                                              const std::string& section) {
  std::vector<std::string> out;
  for (const SchemaEntry& e : kSchema) {
    if (section != e.section) continue;
    const std::string& av = a.raw(e.section, e.key);
    const std::string& bv = b.raw(e.section, e.key);
    if (av != bv) out.push_back(std::string(e.key) + ": " + av + " vs " + bv);
  }
  return out;
}

std::string Config::describe() {
  std::string out;
  for (const SchemaEntry& e : kSchema) {
    out += std::string(e.section) + "." + e.key + " = " + e.def + "  # " + e.doc + "\n";
  }
  return out;
}

}  // namespace meshgpt
