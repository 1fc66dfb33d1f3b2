#pragma once

#include <cstddef>
#include <vector>

#include "spotlight/audio/frame_matrix.hpp"
#include "spotlight/audio/wav.hpp"

namespace spotlight::audio {

struct FeatureConfig {
  std::size_t hop = 256;
  std::size_t win = 1024;
  std::size_t fft = 1024;
  std::size_t n_mels = 80;
  float log_floor = 1e-5f;
};

inline constexpr std::size_t kLowBandBins = 20;

struct MelSpectrogram {
  FrameMatrix frames;  // T x n_mels, natural-log magnitude
  int sample_rate = 22050;
  std::size_t hop = 256;
  std::size_t win = 1024;
  std::size_t fft = 1024;
};

/// Frames produced by un-centred framing: 1 + floor((len - win) / hop), or 0
/// when the signal is shorter than one window.
std::size_t frame_count(std::size_t samples, const FeatureConfig& cfg = {});

/// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

/// Magnitudes of the one-sided FFT of each Hann-windowed frame:
/// T x (fft/2 + 1). No centre padding.
FrameMatrix stft_magnitude(const Waveform& wave, const FeatureConfig& cfg = {});

/// Slaney-style mel scale (linear below 1 kHz, logarithmic above).
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters spanning 0 Hz to Nyquist with area normalisation:
/// n_mels x (fft/2 + 1).
FrameMatrix mel_filterbank(int sample_rate, const FeatureConfig& cfg = {});

/// Centre frequency in Hz of each mel filter.
std::vector<double> mel_center_hz(int sample_rate, const FeatureConfig& cfg = {});

/// Applies the filterbank to a magnitude spectrogram and takes
/// log(max(x, floor)).
FrameMatrix log_mel_from_magnitude(const FrameMatrix& magnitude, const FrameMatrix& filterbank,
                                   float log_floor);

MelSpectrogram mel_spectrogram(const Waveform& wave, const FeatureConfig& cfg = {});

/// First 20 mel bins of every frame.
FrameMatrix low_band(const MelSpectrogram& mel);
FrameMatrix low_band(const FrameMatrix& mel_frames);

}  // namespace spotlight::audio
