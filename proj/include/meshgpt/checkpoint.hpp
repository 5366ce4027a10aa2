#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshgpt/tensor.hpp"

namespace meshgpt {

class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

// `MGPT` container: magic, u32 version, length-prefixed UTF-8 config
// snapshot, u32 record count, then per record: u32 name length, name, u8
// dtype code (1=f32, 2=f64, 3=i32), u8 rank, u32 dims, raw little-endian
// payload. Load/save round-trips byte-exactly.
struct TensorRecord {
  std::string name;
  uint8_t dtype = 1;
  std::vector<uint32_t> dims;
  std::vector<char> bytes;

  int64_t numel() const {
    int64_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
  }
};

struct Checkpoint {
  std::string config_text;
  std::vector<TensorRecord> records;

  void add_f32(const std::string& name, const ad::Tensor<float>& t);
  ad::Tensor<float> get_f32(const std::string& name) const;
  const TensorRecord* find(const std::string& name) const;
};

constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace meshgpt
