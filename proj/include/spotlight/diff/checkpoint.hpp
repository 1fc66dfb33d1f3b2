#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "spotlight/diff/tensor.hpp"

namespace spotlight::diff {

using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;

/// Writes `<dir>/<stem>.json` ({"meta": meta, "tensors": [names...]}) and
/// `<dir>/<stem>.spt` with one SPT1 block per tensor in the listed order.
void save_checkpoint(const std::filesystem::path& dir, const std::string& stem,
                     const nlohmann::json& meta, const NamedTensors& tensors);

struct Checkpoint {
  nlohmann::json meta;
  NamedTensors tensors;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir, const std::string& stem);

}  // namespace spotlight::diff
