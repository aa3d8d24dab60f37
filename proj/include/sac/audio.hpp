// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sac {

// M-channel time-domain signal. Channels always share one length.
struct AudioBuffer {
  int sample_rate = 16000;
  std::vector<std::vector<double>> samples;  // [channel][n]

  AudioBuffer() = default;
  AudioBuffer(int channels, std::size_t length, int rate = 16000)
      : sample_rate(rate),
        samples(static_cast<std::size_t>(channels),
                std::vector<double>(length, 0.0)) {}

  int channels() const { return static_cast<int>(samples.size()); }
  std::size_t length() const { return samples.empty() ? 0 : samples[0].size(); }

  std::vector<double>& operator[](int c) {
    return samples[static_cast<std::size_t>(c)];
  }
  const std::vector<double>& operator[](int c) const {
    return samples[static_cast<std::size_t>(c)];
  }

  // Throws std::invalid_argument if channels differ in length or the
  // sample rate is not positive.
  void validate() const;

  AudioBuffer channel(int c) const;
};

enum class WavFormat { pcm16, float32 };

// RIFF/WAVE reader for PCM16 and IEEE float32, little-endian. When
// expected_rate > 0, a differing file sample rate is an error; no resampling.
AudioBuffer read_wav(const std::string& path, int expected_rate = 0);

void write_wav(const std::string& path, const AudioBuffer& x,
               WavFormat format = WavFormat::float32);

}  // namespace sac
