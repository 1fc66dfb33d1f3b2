#include "spotlight/audio/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

namespace spotlight::audio {
namespace {

constexpr double kMelLinearStep = 200.0 / 3.0;
constexpr double kMelBreakHz = 1000.0;
constexpr double kMelBreak = kMelBreakHz / kMelLinearStep;  // 15
const double kMelLogStep = std::log(6.4) / 27.0;

struct FftwPlan {
  double* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;

  explicit FftwPlan(std::size_t n) {
    in = fftw_alloc_real(n);
    out = fftw_alloc_complex(n / 2 + 1);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }
  ~FftwPlan() {
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  FftwPlan(const FftwPlan&) = delete;
  FftwPlan& operator=(const FftwPlan&) = delete;
};

}  // namespace

std::size_t frame_count(std::size_t samples, const FeatureConfig& cfg) {
  if (samples < cfg.win) return 0;
  return 1 + (samples - cfg.win) / cfg.hop;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

FrameMatrix stft_magnitude(const Waveform& wave, const FeatureConfig& cfg) {
  if (wave.samples.size() < cfg.win) {
    throw AudioError(AudioErrorCode::kTooShort,
                     "signal of " + std::to_string(wave.samples.size()) +
                         " samples is shorter than one window (" + std::to_string(cfg.win) + ")");
  }
  const std::size_t frames = frame_count(wave.samples.size(), cfg);
  const std::size_t bins = cfg.fft / 2 + 1;
  const auto window = hann_window(cfg.win);
  FftwPlan fft(cfg.fft);
  FrameMatrix out(frames, bins);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(fft.in, fft.in + cfg.fft, 0.0);
    const float* src = wave.samples.data() + t * cfg.hop;
    for (std::size_t i = 0; i < cfg.win; ++i) fft.in[i] = src[i] * window[i];
    fftw_execute(fft.plan);
    for (std::size_t k = 0; k < bins; ++k) {
      out.at(t, k) = static_cast<float>(std::hypot(fft.out[k][0], fft.out[k][1]));
    }
  }
  return out;
}

double hz_to_mel(double hz) {
  if (hz < kMelBreakHz) return hz / kMelLinearStep;
  return kMelBreak + std::log(hz / kMelBreakHz) / kMelLogStep;
}

double mel_to_hz(double mel) {
  if (mel < kMelBreak) return mel * kMelLinearStep;
  return kMelBreakHz * std::exp(kMelLogStep * (mel - kMelBreak));
}

namespace {

std::vector<double> mel_edges(int sample_rate, const FeatureConfig& cfg) {
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  }
  return edges;
}

}  // namespace

FrameMatrix mel_filterbank(int sample_rate, const FeatureConfig& cfg) {
  const std::size_t bins = cfg.fft / 2 + 1;
  const auto edges = mel_edges(sample_rate, cfg);
  FrameMatrix fb(cfg.n_mels, bins);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    const double norm = 2.0 / (hi - lo);
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(cfg.fft);
      const double rise = (f - lo) / (mid - lo);
      const double fall = (hi - f) / (hi - mid);
      fb.at(m, k) = static_cast<float>(std::max(0.0, std::min(rise, fall)) * norm);
    }
  }
  return fb;
}

std::vector<double> mel_center_hz(int sample_rate, const FeatureConfig& cfg) {
  const auto edges = mel_edges(sample_rate, cfg);
  return {edges.begin() + 1, edges.end() - 1};
}

FrameMatrix log_mel_from_magnitude(const FrameMatrix& magnitude, const FrameMatrix& filterbank,
                                   float log_floor) {
  FrameMatrix out(magnitude.rows, filterbank.rows);
  for (std::size_t t = 0; t < magnitude.rows; ++t) {
    const auto spec = magnitude.row(t);
    for (std::size_t m = 0; m < filterbank.rows; ++m) {
      const auto w = filterbank.row(m);
      double acc = 0.0;
      for (std::size_t k = 0; k < spec.size(); ++k) acc += static_cast<double>(w[k]) * spec[k];
      out.at(t, m) = static_cast<float>(std::log(std::max(acc, static_cast<double>(log_floor))));
    }
  }
  return out;
}

MelSpectrogram mel_spectrogram(const Waveform& wave, const FeatureConfig& cfg) {
  MelSpectrogram mel;
  mel.sample_rate = wave.sample_rate;
  mel.hop = cfg.hop;
  mel.win = cfg.win;
  mel.fft = cfg.fft;
  mel.frames = log_mel_from_magnitude(stft_magnitude(wave, cfg),
                                      mel_filterbank(wave.sample_rate, cfg), cfg.log_floor);
  return mel;
}

FrameMatrix low_band(const FrameMatrix& mel_frames) {
  if (mel_frames.cols < kLowBandBins) {
    throw std::invalid_argument("low_band needs at least 20 mel bins, got " +
                                std::to_string(mel_frames.cols));
  }
  FrameMatrix out(mel_frames.rows, kLowBandBins);
  for (std::size_t t = 0; t < mel_frames.rows; ++t)
    std::copy_n(mel_frames.row(t).data(), kLowBandBins, out.row(t).data());
  return out;
}

FrameMatrix low_band(const MelSpectrogram& mel) { return low_band(mel.frames); }

}  // namespace spotlight::audio
