#pragma once

#include <cstdint>
#include <istream>
#include <ostream>

#include "spotlight/diff/tensor.hpp"

namespace spotlight::diff {

/// Binary tensor block: "SPT1", u32 rank, u32 dims[rank], f32 little-endian
/// payload (row-major).
void write_tensor(std::ostream& out, const Tensor<float>& t);
Tensor<float> read_tensor(std::istream& in);

namespace io {
void put_u32(std::ostream& out, std::uint32_t v);
std::uint32_t get_u32(std::istream& in);
void put_f32(std::ostream& out, float v);
float get_f32(std::istream& in);
}  // namespace io

}  // namespace spotlight::diff
