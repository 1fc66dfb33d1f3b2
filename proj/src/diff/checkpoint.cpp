#include "spotlight/diff/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "spotlight/diff/serialize.hpp"

namespace spotlight::diff {

void save_checkpoint(const std::filesystem::path& dir, const std::string& stem,
                     const nlohmann::json& meta, const NamedTensors& tensors) {
  std::filesystem::create_directories(dir);
  nlohmann::json names = nlohmann::json::array();
  std::ofstream blocks(dir / (stem + ".spt"), std::ios::binary);
  if (!blocks) throw std::runtime_error("cannot write " + (dir / (stem + ".spt")).string());
  for (const auto& [name, t] : tensors) {
    names.push_back(name);
    write_tensor(blocks, t);
  }
  std::ofstream manifest(dir / (stem + ".json"));
  manifest << nlohmann::json{{"meta", meta}, {"tensors", names}}.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& dir, const std::string& stem) {
  std::ifstream manifest(dir / (stem + ".json"));
  if (!manifest) throw std::runtime_error("missing " + (dir / (stem + ".json")).string());
  const auto doc = nlohmann::json::parse(manifest);
  std::ifstream blocks(dir / (stem + ".spt"), std::ios::binary);
  if (!blocks) throw std::runtime_error("missing " + (dir / (stem + ".spt")).string());
  Checkpoint ck;
  ck.meta = doc.at("meta");
  for (const auto& name : doc.at("tensors")) {
    ck.tensors.emplace_back(name.get<std::string>(), read_tensor(blocks));
  }
  return ck;
}

}  // namespace spotlight::diff
