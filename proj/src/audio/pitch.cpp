#include "spotlight/audio/pitch.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace spotlight::audio {

std::size_t VuvFlags::voiced_count() const {
  return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true));
}

double normalized_autocorrelation(const float* frame, std::size_t n, std::size_t lag) {
  if (lag >= n) return 0.0;
  double cross = 0.0, head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i + lag < n; ++i) {
    const double a = frame[i], b = frame[i + lag];
    cross += a * b;
    head += a * a;
    tail += b * b;
  }
  const double denom = std::sqrt(head * tail);
  return denom > 0.0 ? cross / denom : 0.0;
}

PitchResult estimate_f0_vuv(const Waveform& wave, const FeatureConfig& framing,
                            const PitchConfig& cfg) {
  if (wave.sample_rate < 8000) {
    throw std::invalid_argument("pitch tracking needs sample_rate >= 8000, got " +
                                std::to_string(wave.sample_rate));
  }
  const std::size_t frames = frame_count(wave.samples.size(), framing);
  const std::size_t n = framing.win;
  const double rate = wave.sample_rate;
  const auto lag_lo = static_cast<std::size_t>(std::floor(rate / cfg.f0_max));
  const auto lag_hi = std::min(static_cast<std::size_t>(std::ceil(rate / cfg.f0_min)), n - 2);

  PitchResult out;
  out.pitch.f0.assign(frames, 0.0f);
  out.vuv.flags.assign(frames, false);
  std::vector<double> nac(lag_hi + 2, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    const float* frame = wave.samples.data() + t * framing.hop;
    double energy = 0.0;
    for (std::size_t i = 0; i < n; ++i) energy += static_cast<double>(frame[i]) * frame[i];
    if (std::sqrt(energy / n) < cfg.rms_threshold) continue;

    for (std::size_t lag = lag_lo - 1; lag <= lag_hi + 1; ++lag) {
      nac[lag] = normalized_autocorrelation(frame, n, lag);
    }
    double global = -1.0;
    for (std::size_t lag = lag_lo; lag <= lag_hi; ++lag) global = std::max(global, nac[lag]);
    if (global < cfg.nac_threshold) continue;

    std::size_t best = 0;
    for (std::size_t lag = lag_lo; lag <= lag_hi; ++lag) {
      const bool local = nac[lag] >= nac[lag - 1] && nac[lag] >= nac[lag + 1];
      if (local && nac[lag] >= cfg.peak_fraction * global) {
        best = lag;
        break;
      }
    }
    if (best == 0 || nac[best] < cfg.nac_threshold) continue;

    const double ym = nac[best - 1], y0 = nac[best], yp = nac[best + 1];
    const double curvature = ym - 2.0 * y0 + yp;
    const double shift = curvature < 0.0 ? 0.5 * (ym - yp) / curvature : 0.0;
    const double f0 = rate / (static_cast<double>(best) + std::clamp(shift, -0.5, 0.5));
    if (f0 < cfg.f0_min || f0 > cfg.f0_max) continue;
    out.pitch.f0[t] = static_cast<float>(f0);
    out.vuv.flags[t] = true;
  }
  return out;
}

}  // namespace spotlight::audio
