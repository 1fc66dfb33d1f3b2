#include "spotlight/audio/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace spotlight::audio {
namespace {

std::uint32_t le32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put16(std::ostream& out, std::uint16_t v) {
  out.put(static_cast<char>(v & 0xff));
  out.put(static_cast<char>(v >> 8));
}

}  // namespace

Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError(AudioErrorCode::kMissingFile, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw AudioError(AudioErrorCode::kMalformed, "not a RIFF/WAVE file: " + path.string());
  }
  bool have_fmt = false;
  Waveform wave;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      throw AudioError(AudioErrorCode::kMalformed, "truncated chunk in " + path.string());
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw AudioError(AudioErrorCode::kMalformed, "short fmt chunk");
      const std::uint16_t format = le16(bytes.data() + body);
      const std::uint16_t channels = le16(bytes.data() + body + 2);
      const std::uint32_t rate = le32(bytes.data() + body + 4);
      const std::uint16_t bits = le16(bytes.data() + body + 14);
      if (format != 1 || bits != 16) {
        throw AudioError(AudioErrorCode::kUnsupportedFormat,
                         "unsupported sample format (need PCM16): format " +
                             std::to_string(format) + ", " + std::to_string(bits) + " bits");
      }
      if (channels != 1) {
        throw AudioError(AudioErrorCode::kUnsupportedChannels,
                         "unsupported channel count: " + std::to_string(channels));
      }
      wave.sample_rate = static_cast<int>(rate);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw AudioError(AudioErrorCode::kMalformed, "data chunk before fmt");
      const std::size_t n = size / 2;
      wave.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto raw = static_cast<std::int16_t>(le16(bytes.data() + body + 2 * i));
        wave.samples[i] = static_cast<float>(raw) / 32768.0f;
      }
      return wave;
    }
    pos = body + size + (size & 1);
  }
  throw AudioError(AudioErrorCode::kMalformed, "no data chunk in " + path.string());
}

void write_wav(const std::filesystem::path& path, const Waveform& wave, int channels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw AudioError(AudioErrorCode::kMissingFile, "cannot write " + path.string());
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(wave.samples.size() * 2 * static_cast<std::size_t>(channels));
  out.write("RIFF", 4);
  put32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put32(out, 16);
  put16(out, 1);
  put16(out, static_cast<std::uint16_t>(channels));
  put32(out, static_cast<std::uint32_t>(wave.sample_rate));
  put32(out, static_cast<std::uint32_t>(wave.sample_rate * 2 * channels));
  put16(out, static_cast<std::uint16_t>(2 * channels));
  put16(out, 16);
  out.write("data", 4);
  put32(out, data_bytes);
  for (float s : wave.samples) {
    const long q = std::lround(std::clamp(s, -1.0f, 1.0f) * 32768.0f);
    const auto v = static_cast<std::int16_t>(std::clamp(q, -32768L, 32767L));
    for (int c = 0; c < channels; ++c) put16(out, static_cast<std::uint16_t>(v));
  }
}

}  // namespace spotlight::audio
