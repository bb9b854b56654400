#include "gwindcast/neural/checkpoint.hpp"

#include <bit>

#include "gwindcast/error.hpp"

namespace gwc::nn {

using nlohmann::json;

Checkpoint encode_checkpoint(const std::vector<NamedTensor>& tensors, const json& header) {
  Checkpoint ck;
  json entries = json::array();
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    entries.push_back({{"name", t.name}, {"kind", t.kind}, {"shape", t.value.shape()}, {"offset", offset}});
    for (double v : t.value.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) ck.payload.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    offset += t.value.size() * 8;
  }
  json manifest = {{"format", "gwindcast-checkpoint"},
                   {"version", 1},
                   {"header", header},
                   {"tensors", entries},
                   {"payload_bytes", ck.payload.size()},
                   {"payload_fnv1a", io::hex_digest(io::fnv1a(ck.payload.data(), ck.payload.size()))}};
  ck.manifest = manifest.dump(2) + "\n";
  return ck;
}

std::vector<NamedTensor> decode_checkpoint(const Checkpoint& ck, json* header) {
  json m;
  try {
    m = json::parse(ck.manifest);
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("checkpoint manifest: ") + e.what());
  }
  if (m.value("format", "") != "gwindcast-checkpoint" || m.value("version", 0) != 1) {
    throw Error(Errc::ParseError, "not a version-1 gwindcast checkpoint");
  }
  if (m.at("payload_bytes").get<std::size_t>() != ck.payload.size()) {
    throw Error(Errc::ParseError, "checkpoint payload size mismatch");
  }
  if (m.at("payload_fnv1a").get<std::string>() !=
      io::hex_digest(io::fnv1a(ck.payload.data(), ck.payload.size()))) {
    throw Error(Errc::ParseError, "checkpoint payload digest mismatch");
  }
  std::vector<NamedTensor> out;
  for (const auto& e : m.at("tensors")) {
    NamedTensor t;
    t.name = e.at("name").get<std::string>();
    t.kind = e.at("kind").get<std::string>();
    const auto shape = e.at("shape").get<Shape>();
    const auto offset = e.at("offset").get<std::size_t>();
    const std::size_t n = shape_size(shape);
    if (offset + n * 8 > ck.payload.size()) throw Error(Errc::ParseError, "tensor '" + t.name + "' out of range");
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(ck.payload[offset + i * 8 + b]) << (8 * b);
      data[i] = std::bit_cast<double>(bits);
    }
    t.value = Tensor(shape, std::move(data));
    out.push_back(std::move(t));
  }
  if (header) *header = m.at("header");
  return out;
}

void write_checkpoint(const std::filesystem::path& stem, const Checkpoint& ck) {
  io::write_text(std::filesystem::path(stem.string() + ".json"), ck.manifest);
  io::write_bytes(std::filesystem::path(stem.string() + ".bin"), ck.payload);
}

Checkpoint read_checkpoint(const std::filesystem::path& stem) {
  return {io::read_text(std::filesystem::path(stem.string() + ".json")),
          io::read_bytes(std::filesystem::path(stem.string() + ".bin"))};
}

}  // namespace gwc::nn
