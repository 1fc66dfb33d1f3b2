#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace spotlight::audio {

/// Row-major frames x features matrix of plain floats.
struct FrameMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  FrameMatrix() = default;
  FrameMatrix(std::size_t r, std::size_t c, float fill = 0.0f)
      : rows(r), cols(c), values(r * c, fill) {}

  float& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<float> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  std::span<const float> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

  bool operator==(const FrameMatrix&) const = default;
};

}  // namespace spotlight::audio
