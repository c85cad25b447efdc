#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "phaseforge/nn/tensor.hpp"

namespace phaseforge::nn {

// PUW1: "PUW1", u32 tensor count, then per tensor u16 name length, name
// bytes, u8 rank, rank x u32 dims, float32 data. Little-endian.
struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

using Checkpoint = std::vector<CheckpointEntry>;

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

const CheckpointEntry* find_entry(const Checkpoint& ckpt, const std::string& name);

}  // namespace phaseforge::nn
