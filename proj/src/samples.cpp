#include "gwindcast/samples.hpp"

namespace gwc {

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::vector<std::size_t> SampleSet::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split_labels.size(); ++i) {
    if (split_labels[i] == s) out.push_back(i);
  }
  return out;
}

}  // namespace gwc
