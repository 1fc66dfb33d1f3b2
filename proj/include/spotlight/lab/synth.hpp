#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "spotlight/audio/feature_file.hpp"
#include "spotlight/audio/features.hpp"
#include "spotlight/audio/frame_matrix.hpp"
#include "spotlight/audio/pitch.hpp"

// Synthetic spectral data with known content, style and voicing. Voiced
// frames are harmonic stacks at the style's f0 (with vibrato) whose spectral
// tilt belongs to the style and whose formant peaks above 1 kHz belong to the
// content symbol; unvoiced frames are band-limited noise high in the spectrum.
namespace spotlight::lab {

using audio::FrameMatrix;
using audio::VuvFlags;

inline constexpr std::size_t kVoicedSymbols = 6;
inline constexpr std::size_t kUnvoicedSymbols = 4;
inline constexpr std::size_t kSymbols = kVoicedSymbols + kUnvoicedSymbols;
inline constexpr int kSampleRate = 22050;

struct StyleParams {
  double f0_base = 120.0;
  double vibrato_depth = 0.03;  // fraction of f0
  double vibrato_rate = 5.0;    // Hz
  double tilt = 1.2;            // harmonic h has amplitude h^-tilt
};

struct SynthSpec {
  std::size_t n_styles = 4;
  std::vector<double> f0_bases{120.0, 180.0, 240.0, 300.0};
  double vibrato_depth = 0.03;
  std::size_t n_contents = 10;
  std::size_t min_frames = 40;
  std::size_t max_frames = 80;
  double eval_fraction = 0.2;
  std::uint64_t seed = 7;

  void validate() const;
  StyleParams style(std::size_t s) const;
};

struct SynthSample {
  FrameMatrix mel;                      // T x 80 log mel
  VuvFlags vuv;                         // ground truth
  std::vector<std::size_t> content_ids; // T frame-level symbols
  std::size_t style_id = 0;
  std::size_t content_id = 0;
  std::vector<float> f0;                // Hz, 0 where unvoiced

  std::size_t frames() const { return mel.rows; }
};

struct Dataset {
  std::vector<SynthSample> samples;
  std::vector<std::size_t> train;  // indices into samples
  std::vector<std::size_t> eval;
};

bool is_voiced_symbol(std::size_t symbol);

/// n_styles x n_contents samples ordered content-major. The last
/// round(eval_fraction * n_contents) contents form the eval split.
Dataset generate_dataset(const SynthSpec& spec);

/// Frame-level symbol sequence of one content; the same for every style.
std::vector<std::size_t> content_sequence(const SynthSpec& spec, std::size_t content);

/// Voiced when the summed linear energy of the first 20 mel bins exceeds
/// `threshold` times that of the remaining bins.
VuvFlags energy_ratio_vuv(const FrameMatrix& mel, double threshold = 1.0);

/// Centre frequency of the strongest low-band mel bin in each frame.
std::vector<double> f0_proxy(const FrameMatrix& mel, int sample_rate = kSampleRate);

/// Largest spacing between adjacent low-band mel centres: the resolution
/// limit of f0_proxy.
double f0_proxy_resolution(int sample_rate = kSampleRate);

/// Cache layout: index.json plus per-sample SFTR files
/// (<i>.mel, <i>.vuv, <i>.f0, <i>.content).
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace spotlight::lab
