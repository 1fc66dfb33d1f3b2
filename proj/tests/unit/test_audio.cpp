#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "spotlight/audio/feature_file.hpp"
#include "spotlight/audio/features.hpp"
#include "spotlight/audio/pitch.hpp"
#include "spotlight/audio/wav.hpp"

using namespace spotlight::audio;
namespace fs = std::filesystem;

namespace {

Waveform sine(double hz, double amp, std::size_t n, int rate = 22050) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = static_cast<float>(amp * std::sin(2 * std::numbers::pi * hz * i / rate));
  return w;
}

Waveform noise(double rms, std::size_t n, unsigned seed) {
  Waveform w;
  std::mt19937 rng(seed);
  std::normal_distribution<double> d(0.0, rms);
  w.samples.resize(n);
  for (auto& s : w.samples) s = static_cast<float>(std::clamp(d(rng), -1.0, 1.0));
  return w;
}

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "spotlight_audio_test";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

}  // namespace

TEST_CASE("load_wav fixtures") {
  Waveform zeros;
  zeros.samples.assign(2048, 0.0f);
  write_wav(temp_path("zeros.wav"), zeros);
  auto back = load_wav(temp_path("zeros.wav"));
  CHECK(back.sample_rate == 22050);
  REQUIRE(back.samples.size() == 2048);
  for (float s : back.samples) CHECK(s == 0.0f);

  Waveform square;
  square.samples = {-1.0f, 0.5f, -1.0f};
  write_wav(temp_path("square.wav"), square);
  CHECK(load_wav(temp_path("square.wav")).samples[0] == -1.0f);

  write_wav(temp_path("stereo.wav"), zeros, 2);
  try {
    load_wav(temp_path("stereo.wav"));
    FAIL("stereo accepted");
  } catch (const AudioError& e) {
    CHECK(e.code() == AudioErrorCode::kUnsupportedChannels);
    CHECK(std::string(e.what()) == "unsupported channel count: 2");
  }

  try {
    load_wav(temp_path("does_not_exist.wav"));
    FAIL("missing file accepted");
  } catch (const AudioError& e) {
    CHECK(e.code() == AudioErrorCode::kMissingFile);
  }

  // Same header with format tag 3 (IEEE float, 32 bits).
  std::ifstream in(temp_path("zeros.wav"), std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  bytes[20] = 3;
  bytes[34] = 32;
  write_bytes(temp_path("float.wav"), bytes);
  try {
    load_wav(temp_path("float.wav"));
    FAIL("float accepted");
  } catch (const AudioError& e) {
    CHECK(e.code() == AudioErrorCode::kUnsupportedFormat);
  }
  write_bytes(temp_path("junk.wav"), "not a wave file at all");
  CHECK_THROWS_AS(load_wav(temp_path("junk.wav")), AudioError);
}

TEST_CASE("stft fixtures") {
  Waveform silent;
  silent.samples.assign(4096, 0.0f);
  auto mag = stft_magnitude(silent);
  CHECK(mag.rows == frame_count(4096));
  CHECK(mag.rows == 13);
  CHECK(mag.cols == 513);
  for (float v : mag.values) CHECK(v == 0.0f);

  // 430.6640625 Hz = 20 * 22050 / 1024 sits on bin 20.
  auto tone = sine(20.0 * 22050 / 1024, 0.5, 8192);
  auto tmag = stft_magnitude(tone);
  for (std::size_t t = 0; t < tmag.rows; ++t) {
    auto row = tmag.row(t);
    CHECK(std::max_element(row.begin(), row.end()) - row.begin() == 20);
  }

  Waveform shortw;
  shortw.samples.assign(1000, 0.0f);
  CHECK_THROWS_AS(stft_magnitude(shortw), AudioError);
}

TEST_CASE("stft agrees with a direct DFT and Parseval") {
  auto w = sine(523.0, 0.4, 4096);
  for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] += 0.2f * std::sin(0.31 * i);
  auto mag = stft_magnitude(w);
  const auto hann = hann_window(1024);
  const std::size_t t = 2;
  std::vector<double> frame(1024);
  double energy = 0;
  for (std::size_t i = 0; i < 1024; ++i) {
    frame[i] = w.samples[t * 256 + i] * hann[i];
    energy += frame[i] * frame[i];
  }
  double spectral = 0;
  for (std::size_t k = 0; k <= 512; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t i = 0; i < 1024; ++i)
      acc += frame[i] * std::polar(1.0, -2 * std::numbers::pi * k * i / 1024.0);
    CHECK(std::abs(std::abs(acc) - mag.at(t, k)) < 1e-3 * (1 + std::abs(acc)));
    spectral += static_cast<double>(mag.at(t, k)) * mag.at(t, k);
  }
  CHECK(std::abs(spectral - 512 * energy) / (512 * energy) < 1e-2);
}

TEST_CASE("mel spectrogram fixtures") {
  Waveform silent;
  silent.samples.assign(4096, 0.0f);
  auto mel = mel_spectrogram(silent);
  CHECK(mel.frames.cols == 80);
  CHECK(mel.hop == 256);
  CHECK(mel.win == 1024);
  for (float v : mel.frames.values) CHECK(v == doctest::Approx(std::log(1e-5f)));

  auto wn = noise(0.3, 4096, 5);
  auto nmel = mel_spectrogram(wn);
  for (float v : nmel.frames.values) CHECK(v > std::log(1e-5f));

  // Tone on FFT bin 40: the expected mel bin is the filter with the largest
  // weight at that FFT bin.
  auto fb = mel_filterbank(22050);
  std::size_t want = 0;
  for (std::size_t m = 1; m < 80; ++m)
    if (fb.at(m, 40) > fb.at(want, 40)) want = m;
  auto tmel = mel_spectrogram(sine(40.0 * 22050 / 1024, 0.5, 8192));
  for (std::size_t t = 0; t < tmel.frames.rows; ++t) {
    auto row = tmel.frames.row(t);
    auto best = std::max_element(row.begin(), row.end());
    CHECK(static_cast<std::size_t>(best - row.begin()) == want);
    CHECK(std::count(row.begin(), row.end(), *best) == 1);
  }
}

TEST_CASE("mel scale and filterbank shape") {
  CHECK(hz_to_mel(1000.0) == doctest::Approx(15.0));
  CHECK(mel_to_hz(hz_to_mel(3000.0)) == doctest::Approx(3000.0));
  CHECK(hz_to_mel(500.0) == doctest::Approx(7.5));
  auto centers = mel_center_hz(22050);
  CHECK(centers.size() == 80);
  for (std::size_t i = 1; i < centers.size(); ++i) CHECK(centers[i] > centers[i - 1]);
  CHECK(centers.back() < 11025.0);
}

TEST_CASE("f0 and V/UV fixtures") {
  Waveform silent;
  silent.samples.assign(8192, 0.0f);
  auto s = estimate_f0_vuv(silent);
  CHECK(s.vuv.voiced_count() == 0);
  for (float f : s.pitch.f0) CHECK(f == 0.0f);

  auto tone = estimate_f0_vuv(sine(220.0, 0.5, 22050));
  CHECK(tone.vuv.voiced_count() == tone.vuv.flags.size());
  for (float f : tone.pitch.f0) CHECK(std::abs(f - 220.0f) < 3.0f);

  auto nz = estimate_f0_vuv(noise(0.3, 22050, 7));
  const double unvoiced =
      1.0 - static_cast<double>(nz.vuv.voiced_count()) / static_cast<double>(nz.vuv.flags.size());
  CHECK(unvoiced >= 0.9);

  Waveform low_rate = silent;
  low_rate.sample_rate = 4000;
  CHECK_THROWS(estimate_f0_vuv(low_rate));
}

TEST_CASE("pitch invariants: f0 > 0 iff voiced, range, frame agreement") {
  auto w = sine(150.0, 0.3, 16000);
  for (std::size_t i = 8000; i < 16000; ++i) w.samples[i] = 0.0f;
  auto res = estimate_f0_vuv(w);
  auto mel = mel_spectrogram(w);
  CHECK(res.pitch.f0.size() == mel.frames.rows);
  CHECK(res.vuv.flags.size() == mel.frames.rows);
  for (std::size_t t = 0; t < res.vuv.flags.size(); ++t) {
    CHECK((res.pitch.f0[t] > 0) == res.vuv.flags[t]);
    if (res.vuv.flags[t]) CHECK((res.pitch.f0[t] >= 50 && res.pitch.f0[t] <= 600));
  }
  CHECK(res.vuv.voiced_count() > 0);
  CHECK(res.vuv.voiced_count() < res.vuv.flags.size());
}

TEST_CASE("pitch tracker is scale covariant for gains in [0.1, 1]") {
  auto base = sine(180.0, 0.9, 12000);
  auto nz = noise(0.05, 12000, 3);
  for (std::size_t i = 0; i < base.samples.size(); ++i)
    base.samples[i] = (i < 6000 ? base.samples[i] : 0.0f) + nz.samples[i];
  auto ref = estimate_f0_vuv(base);
  for (double gain : {0.1, 0.35, 0.7, 1.0}) {
    Waveform scaled = base;
    for (auto& s : scaled.samples) s = static_cast<float>(s * gain);
    auto res = estimate_f0_vuv(scaled);
    CHECK(res.vuv.flags == ref.vuv.flags);
    for (std::size_t t = 0; t < ref.pitch.f0.size(); ++t)
      CHECK(std::abs(res.pitch.f0[t] - ref.pitch.f0[t]) < 1e-6 * 600);
  }
}

TEST_CASE("stft of hop-aligned concatenation") {
  auto x = sine(300.0, 0.4, 1024 + 3 * 256);
  auto y = noise(0.2, 1024 + 5 * 256, 11);
  Waveform xy = x;
  xy.samples.insert(xy.samples.end(), y.samples.begin(), y.samples.end());
  auto sx = stft_magnitude(x), sy = stft_magnitude(y), sxy = stft_magnitude(xy);
  const std::size_t offset = x.samples.size() / 256;
  for (std::size_t t = 0; t < sx.rows; ++t)
    for (std::size_t k = 0; k < 513; ++k) CHECK(sxy.at(t, k) == sx.at(t, k));
  for (std::size_t t = 0; t < sy.rows; ++t)
    for (std::size_t k = 0; k < 513; ++k) CHECK(sxy.at(offset + t, k) == sy.at(t, k));
}

TEST_CASE("low band slice") {
  FrameMatrix m(2, 80);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t k = 0; k < 80; ++k) m.at(t, k) = static_cast<float>(k);
  auto lb = low_band(m);
  CHECK(lb.cols == 20);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t k = 0; k < 20; ++k) CHECK(lb.at(t, k) == m.at(t, k));
  auto zero = low_band(FrameMatrix(3, 80));
  for (float v : zero.values) CHECK(v == 0.0f);
  CHECK_THROWS(low_band(FrameMatrix(3, 10)));
}

TEST_CASE("SFTR feature files") {
  FrameMatrix m(3, 2);
  for (std::size_t i = 0; i < 6; ++i) m.values[i] = 0.25f * static_cast<float>(i) - 1.0f;
  std::stringstream buf;
  write_feature_file(buf, m);
  CHECK(buf.str().size() == 16 + 6 * 4);
  CHECK(buf.str().substr(0, 4) == "SFTR");
  CHECK(read_feature_file(buf) == m);
  std::vector<bool> flags{true, false, true};
  auto col = flags_to_column(flags);
  CHECK(col.cols == 1);
  CHECK(col.values == std::vector<float>{1.0f, 0.0f, 1.0f});
  CHECK(column_to_flags(col) == flags);
}
