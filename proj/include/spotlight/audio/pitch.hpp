#pragma once

#include <cstddef>
#include <vector>

#include "spotlight/audio/features.hpp"
#include "spotlight/audio/wav.hpp"

namespace spotlight::audio {

struct PitchConfig {
  double f0_min = 50.0;
  double f0_max = 600.0;
  double nac_threshold = 0.5;
  double rms_threshold = 0.01;
  // Octave guard: the smallest lag whose local NAC peak reaches this fraction
  // of the global peak wins, so multiples of the period are not chosen.
  double peak_fraction = 0.95;
};

struct PitchTrack {
  std::vector<float> f0;  // Hz; 0 where unvoiced
};

struct VuvFlags {
  std::vector<bool> flags;  // true = voiced
  std::size_t voiced_count() const;
};

struct PitchResult {
  PitchTrack pitch;
  VuvFlags vuv;
};

/// Normalised-autocorrelation pitch tracker on the mel framing. A frame is
/// voiced when its chosen NAC peak reaches `nac_threshold` and its RMS reaches
/// `rms_threshold`; f0 is refined by parabolic interpolation of the peak.
PitchResult estimate_f0_vuv(const Waveform& wave, const FeatureConfig& framing = {},
                            const PitchConfig& cfg = {});

/// Normalised autocorrelation of one frame at integer lag.
double normalized_autocorrelation(const float* frame, std::size_t n, std::size_t lag);

}  // namespace spotlight::audio
