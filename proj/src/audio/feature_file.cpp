#include "spotlight/audio/feature_file.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "spotlight/diff/serialize.hpp"

namespace spotlight::audio {

namespace io = diff::io;

void write_feature_file(std::ostream& out, const FrameMatrix& m) {
  out.write("SFTR", 4);
  io::put_u32(out, 1);
  io::put_u32(out, static_cast<std::uint32_t>(m.rows));
  io::put_u32(out, static_cast<std::uint32_t>(m.cols));
  for (float v : m.values) io::put_f32(out, v);
}

FrameMatrix read_feature_file(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "SFTR", 4) != 0) {
    throw std::runtime_error("not an SFTR feature file");
  }
  const auto version = io::get_u32(in);
  if (version != 1) throw std::runtime_error("unsupported SFTR version " + std::to_string(version));
  const auto rows = io::get_u32(in);
  const auto cols = io::get_u32(in);
  FrameMatrix m(rows, cols);
  for (auto& v : m.values) v = io::get_f32(in);
  return m;
}

void write_feature_file(const std::filesystem::path& path, const FrameMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_feature_file(out, m);
}

FrameMatrix read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_feature_file(in);
}

FrameMatrix flags_to_column(const std::vector<bool>& flags) {
  FrameMatrix m(flags.size(), 1);
  for (std::size_t i = 0; i < flags.size(); ++i) m.values[i] = flags[i] ? 1.0f : 0.0f;
  return m;
}

std::vector<bool> column_to_flags(const FrameMatrix& column) {
  std::vector<bool> flags(column.rows);
  for (std::size_t i = 0; i < column.rows; ++i) flags[i] = column.values[i * column.cols] > 0.5f;
  return flags;
}

}  // namespace spotlight::audio
