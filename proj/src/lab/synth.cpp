#include "spotlight/lab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace spotlight::lab {

namespace {

constexpr double kHarmonicLevel = 40.0;
constexpr double kNoiseLevel = 4.0;
constexpr double kFloorLevel = 0.005;
constexpr double kFormantBandwidth = 200.0;
constexpr double kFricativeWidth = 1200.0;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t tag) {
  std::seed_seq seq{seed, a, b, tag};
  return std::mt19937_64(seq);
}

double gauss_bump(double f, double centre, double width) {
  const double z = (f - centre) / width;
  return std::exp(-z * z);
}

FrameMatrix column(const std::vector<float>& values) {
  FrameMatrix m(values.size(), 1);
  m.values = values;
  return m;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_styles == 0 || n_styles > f0_bases.size())
    throw std::invalid_argument("synth spec: n_styles must be in [1, " +
                                std::to_string(f0_bases.size()) + "]");
  if (n_contents < 2) throw std::invalid_argument("synth spec: n_contents must be at least 2");
  if (min_frames < 10 || max_frames < min_frames)
    throw std::invalid_argument("synth spec: frame range must satisfy 10 <= min <= max");
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0))
    throw std::invalid_argument("synth spec: eval_fraction must lie in (0, 1)");
}

StyleParams SynthSpec::style(std::size_t s) const {
  StyleParams p;
  p.f0_base = f0_bases.at(s);
  p.vibrato_depth = vibrato_depth;
  p.vibrato_rate = 4.5 + 0.75 * static_cast<double>(s);
  p.tilt = 1.2 + 0.3 * static_cast<double>(s);
  return p;
}

bool is_voiced_symbol(std::size_t symbol) { return symbol < kVoicedSymbols; }

std::vector<std::size_t> content_sequence(const SynthSpec& spec, std::size_t content) {
  auto rng = stream(spec.seed, content, 0, 1);
  std::uniform_int_distribution<std::size_t> length(spec.min_frames, spec.max_frames);
  std::uniform_int_distribution<std::size_t> voiced_run(4, 10), unvoiced_run(3, 7);
  std::uniform_int_distribution<std::size_t> vowel(0, kVoicedSymbols - 1);
  std::uniform_int_distribution<std::size_t> fricative(kVoicedSymbols, kSymbols - 1);
  std::bernoulli_distribution coin(0.5);
  for (;;) {
    const std::size_t t = length(rng);
    std::vector<std::size_t> ids;
    bool voiced = coin(rng);
    while (ids.size() < t) {
      const std::size_t run = voiced ? voiced_run(rng) : unvoiced_run(rng);
      const std::size_t symbol = voiced ? vowel(rng) : fricative(rng);
      for (std::size_t i = 0; i < run && ids.size() < t; ++i) ids.push_back(symbol);
      voiced = !voiced;
    }
    const auto n_voiced = static_cast<double>(std::count_if(ids.begin(), ids.end(), is_voiced_symbol));
    const double frac = n_voiced / static_cast<double>(t);
    if (frac >= 0.3 && frac <= 0.8) return ids;
  }
}

Dataset generate_dataset(const SynthSpec& spec) {
  spec.validate();
  const audio::FeatureConfig feat;
  const auto fb = audio::mel_filterbank(kSampleRate, feat);
  const std::size_t bins = feat.fft / 2 + 1;
  const double bin_hz = static_cast<double>(kSampleRate) / static_cast<double>(feat.fft);
  const double top = 0.95 * kSampleRate / 2.0;
  const double frame_sec = static_cast<double>(feat.hop) / kSampleRate;

  Dataset data;
  const auto n_eval = static_cast<std::size_t>(
      std::max(1.0, std::round(spec.eval_fraction * static_cast<double>(spec.n_contents))));
  for (std::size_t c = 0; c < spec.n_contents; ++c) {
    const auto ids = content_sequence(spec, c);
    for (std::size_t s = 0; s < spec.n_styles; ++s) {
      const auto style = spec.style(s);
      auto rng = stream(spec.seed, c, s, 2);
      std::normal_distribution<double> gauss;
      std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
      const double phase = phase_dist(rng);

      SynthSample sample;
      sample.style_id = s;
      sample.content_id = c;
      sample.content_ids = ids;
      const std::size_t t_len = ids.size();
      FrameMatrix mag(t_len, bins);
      sample.f0.assign(t_len, 0.0f);
      sample.vuv.flags.assign(t_len, false);
      for (std::size_t t = 0; t < t_len; ++t) {
        auto row = mag.row(t);
        for (auto& v : row) v = static_cast<float>(kFloorLevel * (0.5 + 0.5 * std::abs(gauss(rng))));
        const std::size_t symbol = ids[t];
        if (is_voiced_symbol(symbol)) {
          const double time = static_cast<double>(t) * frame_sec;
          const double f0 = style.f0_base *
                            (1.0 + style.vibrato_depth *
                                       std::sin(2.0 * std::numbers::pi * style.vibrato_rate * time + phase));
          const double f2 = 1100.0 + 250.0 * static_cast<double>(symbol);
          const double f3 = 2300.0 + 150.0 * static_cast<double>(symbol);
          for (std::size_t h = 1; static_cast<double>(h) * f0 < top; ++h) {
            const double f = static_cast<double>(h) * f0;
            const double formant = gauss_bump(f, f2, kFormantBandwidth) + gauss_bump(f, f3, kFormantBandwidth);
            const double amp = kHarmonicLevel * std::pow(static_cast<double>(h), -style.tilt) *
                               (1.0 + 2.0 * formant);
            const double pos = f / bin_hz;
            const auto k0 = static_cast<std::size_t>(pos);
            const double frac = pos - static_cast<double>(k0);
            row[k0] += static_cast<float>(amp * (1.0 - frac));
            if (k0 + 1 < bins) row[k0 + 1] += static_cast<float>(amp * frac);
          }
          sample.f0[t] = static_cast<float>(f0);
          sample.vuv.flags[t] = true;
        } else {
          const double centre = 3000.0 + 1500.0 * static_cast<double>(symbol - kVoicedSymbols);
          for (std::size_t k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * bin_hz;
            row[k] += static_cast<float>(kNoiseLevel * std::abs(gauss(rng)) *
                                         gauss_bump(f, centre, kFricativeWidth));
          }
        }
      }
      sample.mel = audio::log_mel_from_magnitude(mag, fb, feat.log_floor);
      const std::size_t index = data.samples.size();
      (c + n_eval >= spec.n_contents ? data.eval : data.train).push_back(index);
      data.samples.push_back(std::move(sample));
    }
  }
  return data;
}

VuvFlags energy_ratio_vuv(const FrameMatrix& mel, double threshold) {
  if (mel.cols <= audio::kLowBandBins)
    throw std::invalid_argument("energy_ratio_vuv: mel has too few bins");
  VuvFlags out;
  out.flags.resize(mel.rows);
  for (std::size_t t = 0; t < mel.rows; ++t) {
    double low = 0.0, high = 0.0;
    for (std::size_t c = 0; c < mel.cols; ++c) {
      const double e = std::exp(static_cast<double>(mel.at(t, c)));
      (c < audio::kLowBandBins ? low : high) += e;
    }
    out.flags[t] = low > threshold * high;
  }
  return out;
}

std::vector<double> f0_proxy(const FrameMatrix& mel, int sample_rate) {
  const auto centres = audio::mel_center_hz(sample_rate);
  std::vector<double> out(mel.rows);
  for (std::size_t t = 0; t < mel.rows; ++t) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < audio::kLowBandBins; ++c)
      if (mel.at(t, c) > mel.at(t, best)) best = c;
    out[t] = centres[best];
  }
  return out;
}

double f0_proxy_resolution(int sample_rate) {
  const auto centres = audio::mel_center_hz(sample_rate);
  double worst = centres[0];
  for (std::size_t c = 1; c < audio::kLowBandBins; ++c) worst = std::max(worst, centres[c] - centres[c - 1]);
  return worst;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json index{{"version", 1}, {"train", data.train}, {"eval", data.eval}};
  auto& entries = index["samples"] = nlohmann::json::array();
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const auto& s = data.samples[i];
    const std::string stem = std::to_string(i);
    audio::write_feature_file(dir / (stem + ".mel"), s.mel);
    audio::write_feature_file(dir / (stem + ".vuv"), audio::flags_to_column(s.vuv.flags));
    audio::write_feature_file(dir / (stem + ".f0"), column(s.f0));
    std::vector<float> ids(s.content_ids.begin(), s.content_ids.end());
    audio::write_feature_file(dir / (stem + ".content"), column(ids));
    entries.push_back({{"file", stem}, {"style", s.style_id}, {"content", s.content_id},
                       {"frames", s.frames()}});
  }
  std::ofstream(dir / "index.json") << index.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw std::runtime_error("missing dataset index " + (dir / "index.json").string());
  const auto index = nlohmann::json::parse(in);
  Dataset data;
  data.train = index.at("train").get<std::vector<std::size_t>>();
  data.eval = index.at("eval").get<std::vector<std::size_t>>();
  for (const auto& e : index.at("samples")) {
    const std::string stem = e.at("file");
    SynthSample s;
    s.style_id = e.at("style");
    s.content_id = e.at("content");
    s.mel = audio::read_feature_file(dir / (stem + ".mel"));
    s.vuv.flags = audio::column_to_flags(audio::read_feature_file(dir / (stem + ".vuv")));
    s.f0 = audio::read_feature_file(dir / (stem + ".f0")).values;
    for (float v : audio::read_feature_file(dir / (stem + ".content")).values)
      s.content_ids.push_back(static_cast<std::size_t>(v));
    if (s.vuv.flags.size() != s.frames() || s.f0.size() != s.frames() ||
        s.content_ids.size() != s.frames())
      throw std::runtime_error("dataset sample " + stem + " has inconsistent lengths");
    data.samples.push_back(std::move(s));
  }
  return data;
}

}  // namespace spotlight::lab
