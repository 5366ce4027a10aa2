#include "meshgpt/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace meshgpt {

namespace {

constexpr char kMagic[4] = {'M', 'G', 'P', 'T'};

void put_u32(std::string& out, uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
               char((v >> 24) & 0xff)};
  out.append(b, 4);
}

struct Reader {
  const std::string& buf;
  size_t at = 0;
  const std::string& path;

  void need(size_t n, const char* what) {
    if (at + n > buf.size()) {
      throw CheckpointError(path + ": truncated checkpoint (reading " + what + ")");
    }
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = uint32_t(uint8_t(buf[at])) | uint32_t(uint8_t(buf[at + 1])) << 8 |
                 uint32_t(uint8_t(buf[at + 2])) << 16 | uint32_t(uint8_t(buf[at + 3])) << 24;
    at += 4;
    return v;
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return uint8_t(buf[at++]);
  }
  std::string str(size_t n, const char* what) {
    need(n, what);
    std::string s = buf.substr(at, n);
    at += n;
    return s;
  }
};

size_t dtype_size(uint8_t code) {
  switch (code) {
    case 1: return 4;
    case 2: return 8;
    case 3: return 4;
  }
  throw CheckpointError("unknown dtype code " + std::to_string(code));
}

}  // namespace

void Checkpoint::add_f32(const std::string& name, const ad::Tensor<float>& t) {
  TensorRecord r;
  r.name = name;
  r.dtype = 1;
  for (int i = 0; i < t.shape.rank; ++i) r.dims.push_back(uint32_t(t.shape[i]));
  r.bytes.resize(size_t(t.numel()) * 4);
  std::memcpy(r.bytes.data(), t.ptr(), r.bytes.size());
  records.push_back(std::move(r));
}

ad::Tensor<float> Checkpoint::get_f32(const std::string& name) const {
  const TensorRecord* r = find(name);
  if (!r) throw CheckpointError("missing tensor '" + name + "'");
  if (r->dtype != 1) throw CheckpointError("tensor '" + name + "' is not f32");
  ad::Shape s;
  s.rank = int(r->dims.size());
  for (size_t i = 0; i < r->dims.size(); ++i) s.d[i] = r->dims[i];
  ad::Tensor<float> t(s);
  std::memcpy(t.ptr(), r->bytes.data(), r->bytes.size());
  return t;
}

const TensorRecord* Checkpoint::find(const std::string& name) const {
  for (const TensorRecord& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, uint32_t(ckpt.config_text.size()));
  out += ckpt.config_text;
  put_u32(out, uint32_t(ckpt.records.size()));
  for (const TensorRecord& r : ckpt.records) {
    if (r.dims.size() > 4) throw CheckpointError("tensor '" + r.name + "' has rank > 4");
    if (int64_t(r.bytes.size()) != r.numel() * int64_t(dtype_size(r.dtype))) {
      throw CheckpointError("tensor '" + r.name + "' payload size mismatch");
    }
    put_u32(out, uint32_t(r.name.size()));
    out += r.name;
    out.push_back(char(r.dtype));
    out.push_back(char(r.dims.size()));
    for (uint32_t d : r.dims) put_u32(out, d);
    out.append(r.bytes.data(), r.bytes.size());
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot write " + path);
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw CheckpointError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader rd{buf, 0, path};
  std::string magic = rd.str(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw CheckpointError(path + ": bad magic, not a checkpoint file");
  }
  const uint32_t version = rd.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(path + ": format version " + std::to_string(version) +
                          ", expected " + std::to_string(kCheckpointVersion));
  }
  Checkpoint ckpt;
  const uint32_t cfg_len = rd.u32("config length");
  ckpt.config_text = rd.str(cfg_len, "config snapshot");
  const uint32_t count = rd.u32("record count");
  for (uint32_t i = 0; i < count; ++i) {
    TensorRecord r;
    const uint32_t name_len = rd.u32("tensor name length");
    r.name = rd.str(name_len, "tensor name");
    r.dtype = rd.u8("dtype");
    const uint8_t rank = rd.u8("rank");
    if (rank > 4) throw CheckpointError(path + ": tensor '" + r.name + "' rank > 4");
    for (uint8_t d = 0; d < rank; ++d) r.dims.push_back(rd.u32("dims"));
    const size_t payload = size_t(r.numel()) * dtype_size(r.dtype);
    std::string data = rd.str(payload, ("payload of '" + r.name + "'").c_str());
    r.bytes.assign(data.begin(), data.end());
    ckpt.records.push_back(std::move(r));
  }
  if (rd.at != buf.size()) {
    throw CheckpointError(path + ": trailing bytes after last record");
  }
  return ckpt;
}

}  // namespace meshgpt
