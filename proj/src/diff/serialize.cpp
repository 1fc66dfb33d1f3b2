#include "spotlight/diff/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <stdexcept>

namespace spotlight::diff {
namespace io {

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff),
                              static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw std::runtime_error("unexpected end of stream");
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

float get_f32(std::istream& in) { return std::bit_cast<float>(get_u32(in)); }

}  // namespace io

void write_tensor(std::ostream& out, const Tensor<float>& t) {
  out.write("SPT1", 4);
  io::put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) io::put_u32(out, static_cast<std::uint32_t>(d));
  for (float v : t.data()) io::put_f32(out, v);
}

Tensor<float> read_tensor(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "SPT1", 4) != 0) {
    throw std::runtime_error("not an SPT1 tensor block");
  }
  const auto rank = io::get_u32(in);
  if (rank > 8) throw std::runtime_error("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = io::get_u32(in);
  std::vector<float> values(numel(shape));
  for (auto& v : values) v = io::get_f32(in);
  return Tensor<float>::from(std::move(shape), std::move(values));
}

}  // namespace spotlight::diff
