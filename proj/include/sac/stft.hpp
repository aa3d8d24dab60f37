// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "sac/audio.hpp"

namespace sac {

using cplx = std::complex<double>;

// Analysis/synthesis framing. Hann window (periodic), hop must divide the
// FFT size so overlap-add stays constant.
struct WindowSpec {
  int fft_size = 640;
  int hop_size = 320;

  void validate() const;
  int bins() const { return fft_size / 2 + 1; }
  std::vector<double> hann() const;

  static WindowSpec codec() { return {640, 320}; }
  static WindowSpec metric() { return {2048, 512}; }

  bool operator==(const WindowSpec&) const = default;
};

// Per-channel complex time-frequency grid (one-sided spectrum).
struct SpectrogramTensor {
  WindowSpec spec;
  int sample_rate = 16000;
  int channels = 0;
  int frames = 0;
  int bins = 0;
  std::size_t signal_length = 0;  // pre-padding length, used by istft
  std::vector<cplx> values;       // [(c*frames + t)*bins + f]

  SpectrogramTensor() = default;
  SpectrogramTensor(WindowSpec s, int channels_, int frames_, int rate,
                    std::size_t signal_len)
      : spec(s),
        sample_rate(rate),
        channels(channels_),
        frames(frames_),
        bins(s.bins()),
        signal_length(signal_len),
        values(static_cast<std::size_t>(channels_) * frames_ * s.bins(),
               cplx(0.0, 0.0)) {}

  cplx& at(int c, int t, int f) {
    return values[(static_cast<std::size_t>(c) * frames + t) * bins + f];
  }
  const cplx& at(int c, int t, int f) const {
    return values[(static_cast<std::size_t>(c) * frames + t) * bins + f];
  }

  SpectrogramTensor channel(int c) const;
};

// Head and tail are zero-padded by fft_size - hop_size samples so every input
// sample sits under full window overlap; the tail is additionally padded so
// the last frame is complete.
SpectrogramTensor stft(const AudioBuffer& x, const WindowSpec& spec);

// Weighted overlap-add with per-sample window-energy normalization. Strips
// the stft padding; the result has signal_length samples.
AudioBuffer istft(const SpectrogramTensor& S);

// Number of analysis frames stft produces for a signal of a given length.
int stft_frame_count(std::size_t signal_length, const WindowSpec& spec);

}  // namespace sac
