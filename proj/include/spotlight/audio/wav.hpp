#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace spotlight::audio {

struct Waveform {
  std::vector<float> samples;  // [-1, 1]
  int sample_rate = 22050;
};

enum class AudioErrorCode {
  kMissingFile,
  kMalformed,
  kUnsupportedFormat,
  kUnsupportedChannels,
  kTooShort,
};

class AudioError : public std::runtime_error {
 public:
  AudioError(AudioErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  AudioErrorCode code() const { return code_; }

 private:
  AudioErrorCode code_;
};

/// Reads a RIFF/WAVE PCM16 mono file; samples are scaled by 1/32768.
Waveform load_wav(const std::filesystem::path& path);

/// Writes PCM16 with `channels` interleaved copies of each sample (channels > 1
/// exists to produce fixtures the loader must reject).
void write_wav(const std::filesystem::path& path, const Waveform& wave, int channels = 1);

}  // namespace spotlight::audio
