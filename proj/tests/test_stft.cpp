// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "sac/stft.hpp"
#include "testutil.hpp"

using namespace sac;
using sactest::kPi;

TEST_CASE("stft of zeros is all-zero frames") {
  AudioBuffer x(1, 640);
  const SpectrogramTensor S = stft(x, WindowSpec::codec());
  for (const cplx& v : S.values) {
    CHECK(std::abs(v) == 0.0);
  }
}

TEST_CASE("stft of a bin-aligned cosine matches the direct DFT of the windowed block") {
  const WindowSpec spec = WindowSpec::codec();
  const int n = spec.fft_size;
  AudioBuffer x(1, 4 * static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < x.length(); ++i) {
    x[0][i] = std::cos(2.0 * kPi * 25.0 * static_cast<double>(i) / n);
  }
  const SpectrogramTensor S = stft(x, spec);

  // A steady-state frame: frame t covers padded samples [t*hop, t*hop+n);
  // with head padding of n-hop, frame 2 covers original samples
  // [hop, hop+n), fully inside the signal.
  const int t = 2;
  const std::vector<double> win = spec.hann();
  std::vector<double> block(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::size_t src = static_cast<std::size_t>(spec.hop_size + i);
    block[static_cast<std::size_t>(i)] = x[0][src] * win[static_cast<std::size_t>(i)];
  }
  const auto oracle = sactest::naive_dft(block);

  double total = 0.0;
  double at25 = 0.0;
  for (int f = 0; f < S.bins; ++f) {
    CHECK(std::abs(S.at(0, t, f) - oracle[static_cast<std::size_t>(f)]) < 1e-8);
    const double e = std::norm(S.at(0, t, f));
    total += e;
    if (f == 25) at25 = e;
  }
  // Periodic Hann leaks only into the two neighbor bins; the center bin
  // holds the bulk of the frame energy.
  CHECK(at25 / total > 0.6);
  for (int f = 0; f < S.bins; ++f) {
    if (std::abs(f - 25) > 1) {
      CHECK(std::norm(S.at(0, t, f)) < 1e-16 * total);
    }
  }
}

TEST_CASE("stft of a unit impulse matches window value times twiddle pattern") {
  const WindowSpec spec = WindowSpec::codec();
  const int n = spec.fft_size;
  const int hop = spec.hop_size;
  AudioBuffer x(1, 1024);
  x[0][320] = 1.0;
  const SpectrogramTensor S = stft(x, spec);
  const std::vector<double> win = spec.hann();

  const std::size_t pad = static_cast<std::size_t>(n - hop);
  const std::size_t impulse = pad + 320;
  for (int t = 0; t < S.frames; ++t) {
    const long offset = static_cast<long>(impulse) - static_cast<long>(t) * hop;
    const bool overlaps = offset >= 0 && offset < n;
    for (int f = 0; f < S.bins; ++f) {
      cplx expected(0.0, 0.0);
      if (overlaps) {
        const double a = -2.0 * kPi * f * static_cast<double>(offset) / n;
        expected = win[static_cast<std::size_t>(offset)] *
                   cplx(std::cos(a), std::sin(a));
      }
      CHECK(std::abs(S.at(0, t, f) - expected) < 1e-12);
    }
  }
}

TEST_CASE("istft(stft(x)) reconstructs x for both framings") {
  for (const WindowSpec spec : {WindowSpec::codec(), WindowSpec::metric()}) {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
      const AudioBuffer x = sactest::random_noise(2, 5000 + 321 * seed, seed);
      const AudioBuffer y = istft(stft(x, spec));
      REQUIRE(y.length() == x.length());
      for (int c = 0; c < x.channels(); ++c) {
        CHECK(sactest::max_rel_err(x[c], y[c]) <= 1e-10);
      }
    }
  }
}

TEST_CASE("istft of an all-zero tensor is a zero signal") {
  SpectrogramTensor S(WindowSpec::codec(), 1, stft_frame_count(1000, WindowSpec::codec()),
                      16000, 1000);
  const AudioBuffer y = istft(S);
  REQUIRE(y.length() == 1000);
  CHECK(sactest::max_abs(y[0]) == 0.0);
}

TEST_CASE("stft and istft are linear") {
  const WindowSpec spec = WindowSpec::codec();
  const AudioBuffer x1 = sactest::random_noise(1, 3000, 11);
  const AudioBuffer x2 = sactest::random_noise(1, 3000, 22);
  const double a = 0.37, b = -1.25;

  AudioBuffer mix(1, 3000);
  for (std::size_t i = 0; i < mix.length(); ++i) {
    mix[0][i] = a * x1[0][i] + b * x2[0][i];
  }
  const SpectrogramTensor s1 = stft(x1, spec);
  const SpectrogramTensor s2 = stft(x2, spec);
  const SpectrogramTensor sm = stft(mix, spec);

  double scale = 0.0;
  for (const cplx& v : sm.values) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < sm.values.size(); ++i) {
    CHECK(std::abs(sm.values[i] - (a * s1.values[i] + b * s2.values[i])) <=
          1e-10 * scale);
  }

  // istft linearity on the same tensors.
  SpectrogramTensor combo = s1;
  for (std::size_t i = 0; i < combo.values.size(); ++i) {
    combo.values[i] = a * s1.values[i] + b * s2.values[i];
  }
  const AudioBuffer y = istft(combo);
  const AudioBuffer y1 = istft(s1);
  const AudioBuffer y2 = istft(s2);
  std::vector<double> expect(y.length());
  for (std::size_t i = 0; i < y.length(); ++i) {
    expect[i] = a * y1[0][i] + b * y2[0][i];
  }
  CHECK(sactest::max_rel_err(expect, y[0]) <= 1e-10);
}

TEST_CASE("windowed frame energy matches one-sided spectral energy") {
  const WindowSpec spec = WindowSpec::codec();
  const AudioBuffer x = sactest::make_speech_like(0.3, 77);
  const SpectrogramTensor S = stft(x, spec);
  const std::vector<double> win = spec.hann();
  const int n = spec.fft_size;
  const int hop = spec.hop_size;
  const std::size_t pad = static_cast<std::size_t>(n - hop);

  std::vector<double> padded(static_cast<std::size_t>(S.frames - 1) * hop + n, 0.0);
  for (std::size_t i = 0; i < x.length(); ++i) padded[pad + i] = x[0][i];

  for (int t = 0; t < S.frames; t += 7) {
    double time_energy = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v =
          padded[static_cast<std::size_t>(t) * hop + static_cast<std::size_t>(i)] *
          win[static_cast<std::size_t>(i)];
      time_energy += v * v;
    }
    double spec_energy = std::norm(S.at(0, t, 0)) + std::norm(S.at(0, t, S.bins - 1));
    for (int f = 1; f < S.bins - 1; ++f) {
      spec_energy += 2.0 * std::norm(S.at(0, t, f));
    }
    spec_energy /= n;
    if (time_energy > 0.0) {
      CHECK(std::abs(spec_energy - time_energy) <= 1e-8 * time_energy);
    }
  }
}

TEST_CASE("stft input validation") {
  AudioBuffer empty;
  CHECK_THROWS_AS(stft(empty, WindowSpec::codec()), std::invalid_argument);

  AudioBuffer x(1, 100);
  CHECK_THROWS_AS(stft(x, WindowSpec{640, 77}), std::invalid_argument);
  CHECK_THROWS_AS(stft(x, WindowSpec{641, 320}), std::invalid_argument);
  CHECK_THROWS_AS(stft(x, WindowSpec{0, 0}), std::invalid_argument);
}

TEST_CASE("istft rejects inconsistent tensors") {
  SpectrogramTensor S(WindowSpec::codec(), 1, 4, 16000, 1000);
  S.bins = 100;  // breaks bins == fft/2+1
  CHECK_THROWS_AS(istft(S), std::invalid_argument);

  SpectrogramTensor S2(WindowSpec::codec(), 1, 4, 16000, 100000);
  CHECK_THROWS_AS(istft(S2), std::invalid_argument);  // frames vs length
}
