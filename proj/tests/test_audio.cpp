// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "sac/audio.hpp"
#include "testutil.hpp"

using namespace sac;

TEST_CASE("pcm16 write/read round trip stays within one quantization step") {
  const std::string dir = sactest::temp_dir("audio_pcm16");
  const AudioBuffer x = sactest::random_noise(8, 1000, 5);
  write_wav(dir + "/x.wav", x, WavFormat::pcm16);
  const AudioBuffer y = read_wav(dir + "/x.wav", 16000);

  REQUIRE(y.channels() == 8);
  REQUIRE(y.length() == x.length());
  CHECK(y.sample_rate == 16000);
  for (int c = 0; c < 8; ++c) {
    for (std::size_t i = 0; i < x.length(); ++i) {
      CHECK(std::abs(x[c][i] - y[c][i]) <= 1.0 / 32768.0);
    }
  }
}

TEST_CASE("float32 files round trip bit-exactly") {
  const std::string dir = sactest::temp_dir("audio_f32");
  const AudioBuffer x = sactest::random_noise(3, 777, 9);
  write_wav(dir + "/a.wav", x, WavFormat::float32);
  const AudioBuffer y = read_wav(dir + "/a.wav");
  write_wav(dir + "/b.wav", y, WavFormat::float32);

  CHECK(sactest::read_file_bytes(dir + "/a.wav") ==
        sactest::read_file_bytes(dir + "/b.wav"));
  for (std::size_t i = 0; i < x.length(); ++i) {
    CHECK(y[0][i] == static_cast<double>(static_cast<float>(x[0][i])));
  }
}

TEST_CASE("sample rate mismatch is reported, not resampled") {
  const std::string dir = sactest::temp_dir("audio_rate");
  AudioBuffer x = sactest::random_noise(1, 100, 3);
  x.sample_rate = 44100;
  write_wav(dir + "/x.wav", x, WavFormat::pcm16);
  CHECK_THROWS_WITH_AS(read_wav(dir + "/x.wav", 16000),
                       doctest::Contains("sample rate"), std::runtime_error);
  CHECK(read_wav(dir + "/x.wav").sample_rate == 44100);  // no expectation: ok
}

TEST_CASE("zero-length and malformed files are errors") {
  const std::string dir = sactest::temp_dir("audio_bad");
  { std::ofstream os(dir + "/empty.wav", std::ios::binary); }
  CHECK_THROWS_AS(read_wav(dir + "/empty.wav"), std::runtime_error);

  {
    std::ofstream os(dir + "/junk.wav", std::ios::binary);
    os << "RIFFxxxxWAVEjunkjunkjunk";
  }
  CHECK_THROWS_AS(read_wav(dir + "/junk.wav"), std::runtime_error);

  CHECK_THROWS_AS(read_wav(dir + "/missing.wav"), std::runtime_error);

  AudioBuffer empty(1, 0);
  CHECK_THROWS_AS(write_wav(dir + "/none.wav", empty), std::invalid_argument);
}

TEST_CASE("unsupported encodings are rejected") {
  const std::string dir = sactest::temp_dir("audio_enc");
  // Rewrite a valid pcm16 file's format tag to 2 (ADPCM).
  const AudioBuffer x = sactest::random_noise(1, 64, 4);
  write_wav(dir + "/x.wav", x, WavFormat::pcm16);
  auto bytes = sactest::read_file_bytes(dir + "/x.wav");
  bytes[20] = 2;  // fmt chunk format tag
  {
    std::ofstream os(dir + "/bad.wav", std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_WITH_AS(read_wav(dir + "/bad.wav"),
                       doctest::Contains("unsupported"), std::runtime_error);
}
