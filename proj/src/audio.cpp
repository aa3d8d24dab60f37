// SPDX-License-Identifier: Apache-2.0
#include "sac/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sac {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void AudioBuffer::validate() const {
  if (sample_rate <= 0) {
    throw std::invalid_argument("AudioBuffer: sample_rate must be positive");
  }
  if (samples.empty()) {
    throw std::invalid_argument("AudioBuffer: no channels");
  }
  const std::size_t len = samples[0].size();
  for (const auto& ch : samples) {
    if (ch.size() != len) {
      throw std::invalid_argument("AudioBuffer: channel lengths differ");
    }
  }
}

AudioBuffer AudioBuffer::channel(int c) const {
  AudioBuffer out;
  out.sample_rate = sample_rate;
  out.samples.push_back(samples.at(static_cast<std::size_t>(c)));
  return out;
}

AudioBuffer read_wav(const std::string& path, int expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("read_wav: cannot open " + path);
  }
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 ||
      std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw std::runtime_error("read_wav: not a RIFF/WAVE file: " + path);
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_len = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = bytes.data() + pos;
    const std::uint32_t len = get_u32(p + pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) {
      throw std::runtime_error("read_wav: truncated chunk in " + path);
    }
    if (std::memcmp(id, "fmt ", 4) == 0 && len >= 16) {
      format = get_u16(p + body);
      channels = get_u16(p + body + 2);
      rate = get_u32(p + body + 4);
      bits = get_u16(p + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = p + body;
      data_len = len;
    }
    pos = body + len + (len & 1);  // chunks are word-aligned
  }

  if (!have_fmt) {
    throw std::runtime_error("read_wav: missing fmt chunk: " + path);
  }
  if (channels == 0) {
    throw std::runtime_error("read_wav: zero channels: " + path);
  }
  const bool pcm16 = (format == kFormatPcm && bits == 16);
  const bool f32 = (format == kFormatFloat && bits == 32);
  if (!pcm16 && !f32) {
    throw std::runtime_error("read_wav: unsupported encoding (format=" +
                             std::to_string(format) + ", bits=" +
                             std::to_string(bits) + "): " + path);
  }
  if (expected_rate > 0 && rate != static_cast<std::uint32_t>(expected_rate)) {
    throw std::runtime_error(
        "read_wav: sample rate " + std::to_string(rate) + " != expected " +
        std::to_string(expected_rate) + ": " + path);
  }
  const std::uint32_t bytes_per_sample = bits / 8u;
  const std::uint32_t frame_bytes = bytes_per_sample * channels;
  const std::uint32_t n = data ? data_len / frame_bytes : 0;
  if (n == 0) {
    throw std::runtime_error("read_wav: no audio data: " + path);
  }

  AudioBuffer out(channels, n, static_cast<int>(rate));
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint16_t c = 0; c < channels; ++c) {
      const unsigned char* s = data + (i * channels + c) * bytes_per_sample;
      if (pcm16) {
        const auto v = static_cast<std::int16_t>(get_u16(s));
        out[c][i] = static_cast<double>(v) / 32767.0;
      } else {
        std::uint32_t u = get_u32(s);
        float f;
        std::memcpy(&f, &u, 4);
        out[c][i] = static_cast<double>(f);
      }
    }
  }
  return out;
}

void write_wav(const std::string& path, const AudioBuffer& x,
               WavFormat format) {
  x.validate();
  if (x.length() == 0) {
    throw std::invalid_argument("write_wav: empty buffer");
  }
  const int channels = x.channels();
  const std::size_t n = x.length();
  const bool pcm = format == WavFormat::pcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const std::uint32_t byte_rate =
      static_cast<std::uint32_t>(x.sample_rate) * channels * (bits / 8);
  const std::uint16_t block_align = static_cast<std::uint16_t>(channels * (bits / 8));
  const std::uint32_t data_len =
      static_cast<std::uint32_t>(n * channels * (bits / 8));

  std::string out;
  out.reserve(data_len + 64);
  out.append("RIFF");
  const std::uint32_t fact_len = pcm ? 0 : 12;  // float needs a fact chunk
  put_u32(out, 4 + 24 + fact_len + 8 + data_len);
  out.append("WAVE");
  out.append("fmt ");
  put_u32(out, 16);
  put_u16(out, pcm ? kFormatPcm : kFormatFloat);
  put_u16(out, static_cast<std::uint16_t>(channels));
  put_u32(out, static_cast<std::uint32_t>(x.sample_rate));
  put_u32(out, byte_rate);
  put_u16(out, block_align);
  put_u16(out, bits);
  if (!pcm) {
    out.append("fact");
    put_u32(out, 4);
    put_u32(out, static_cast<std::uint32_t>(n));
  }
  out.append("data");
  put_u32(out, data_len);

  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < channels; ++c) {
      const double v = x[c][i];
      if (pcm) {
        const double clamped = std::clamp(v, -1.0, 1.0);
        const auto q = static_cast<std::int16_t>(
            std::lround(clamped * 32767.0));
        put_u16(out, static_cast<std::uint16_t>(q));
      } else {
        const float f = static_cast<float>(v);
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        put_u32(out, u);
      }
    }
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw std::runtime_error("write_wav: cannot open " + path);
  }
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) {
    throw std::runtime_error("write_wav: write failed: " + path);
  }
}

}  // namespace sac
