#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "spotlight/audio/frame_matrix.hpp"

namespace spotlight::audio {

/// "SFTR" feature file: magic, u32 version (1), u32 rows, u32 cols, then f32
/// little-endian row-major values.
void write_feature_file(std::ostream& out, const FrameMatrix& m);
FrameMatrix read_feature_file(std::istream& in);
void write_feature_file(const std::filesystem::path& path, const FrameMatrix& m);
FrameMatrix read_feature_file(const std::filesystem::path& path);

/// rows x 1 column of 0.0 / 1.0.
FrameMatrix flags_to_column(const std::vector<bool>& flags);
std::vector<bool> column_to_flags(const FrameMatrix& column);

}  // namespace spotlight::audio
