#pragma once

// Named-tensor checkpoint: a JSON manifest (names, shapes, byte offsets and a
// payload digest) plus a little-endian float64 payload. Round-trips bit-exactly.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>
#include "gwindcast/io.hpp"
#include "gwindcast/neural/tensor.hpp"

namespace gwc::nn {

struct NamedTensor {
  std::string name;
  std::string kind;  // "param" or "buffer"
  Tensor value;
};

struct Checkpoint {
  std::string manifest;  // JSON text
  io::Bytes payload;

  bool operator==(const Checkpoint&) const = default;
};

Checkpoint encode_checkpoint(const std::vector<NamedTensor>& tensors, const nlohmann::json& header);
/// Decodes the tensors; `header` receives the manifest's "header" object.
std::vector<NamedTensor> decode_checkpoint(const Checkpoint& ckpt, nlohmann::json* header = nullptr);

/// Writes `<stem>.json` and `<stem>.bin`.
void write_checkpoint(const std::filesystem::path& stem, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& stem);

}  // namespace gwc::nn
