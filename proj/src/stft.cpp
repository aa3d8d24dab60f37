// SPDX-License-Identifier: Apache-2.0
#include "sac/stft.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <stdexcept>

namespace sac {

namespace {

constexpr double kPi = 3.14159265358979323846;

// FFTW's planner is not thread-safe; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// Real-input FFT of a fixed size. Plans once (FFTW_ESTIMATE keeps the plan
// choice independent of runtime measurements, so results are reproducible).
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    real_ = fftw_alloc_real(static_cast<std::size_t>(n));
    spec_ = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    fwd_ = fftw_plan_dft_r2c_1d(n, real_, spec_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(n, spec_, real_, FFTW_ESTIMATE);
  }

  ~RealFft() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(real_);
    fftw_free(spec_);
  }

  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  void forward(const double* in, cplx* out) {
    for (int i = 0; i < n_; ++i) real_[i] = in[i];
    fftw_execute(fwd_);
    for (int k = 0; k <= n_ / 2; ++k) {
      out[k] = cplx(spec_[k][0], spec_[k][1]);
    }
  }

  // Inverse of forward, including the 1/n normalization.
  void inverse(const cplx* in, double* out) {
    for (int k = 0; k <= n_ / 2; ++k) {
      spec_[k][0] = in[k].real();
      spec_[k][1] = in[k].imag();
    }
    fftw_execute(inv_);
    const double scale = 1.0 / n_;
    for (int i = 0; i < n_; ++i) out[i] = real_[i] * scale;
  }

 private:
  int n_;
  double* real_;
  fftw_complex* spec_;
  fftw_plan fwd_;
  fftw_plan inv_;
};

}  // namespace

void WindowSpec::validate() const {
  if (fft_size <= 0 || hop_size <= 0) {
    throw std::invalid_argument("WindowSpec: sizes must be positive");
  }
  if (fft_size % 2 != 0) {
    throw std::invalid_argument("WindowSpec: fft_size must be even");
  }
  if (fft_size % hop_size != 0) {
    throw std::invalid_argument("WindowSpec: hop_size must divide fft_size");
  }
  if (hop_size > fft_size) {
    throw std::invalid_argument("WindowSpec: hop_size exceeds fft_size");
  }
}

std::vector<double> WindowSpec::hann() const {
  // Periodic (DFT-even) Hann: exact overlap-add at fft/2 and fft/4 hops.
  std::vector<double> w(static_cast<std::size_t>(fft_size));
  for (int i = 0; i < fft_size; ++i) {
    w[static_cast<std::size_t>(i)] =
        0.5 * (1.0 - std::cos(2.0 * kPi * i / fft_size));
  }
  return w;
}

SpectrogramTensor SpectrogramTensor::channel(int c) const {
  SpectrogramTensor out(spec, 1, frames, sample_rate, signal_length);
  for (int t = 0; t < frames; ++t) {
    for (int f = 0; f < bins; ++f) {
      out.at(0, t, f) = at(c, t, f);
    }
  }
  return out;
}

int stft_frame_count(std::size_t signal_length, const WindowSpec& spec) {
  const std::size_t pad = static_cast<std::size_t>(spec.fft_size - spec.hop_size);
  const std::size_t covered = signal_length + 2 * pad;
  // Frames start every hop; the last one is completed by extra tail zeros.
  const std::size_t span = covered - static_cast<std::size_t>(spec.fft_size);
  return static_cast<int>(
      (span + static_cast<std::size_t>(spec.hop_size) - 1) / spec.hop_size + 1);
}

SpectrogramTensor stft(const AudioBuffer& x, const WindowSpec& spec) {
  spec.validate();
  x.validate();
  if (x.length() == 0) {
    throw std::invalid_argument("stft: empty input");
  }

  const int n = spec.fft_size;
  const int hop = spec.hop_size;
  const std::size_t pad = static_cast<std::size_t>(n - hop);
  const int frames = stft_frame_count(x.length(), spec);
  const std::size_t padded_len =
      static_cast<std::size_t>(frames - 1) * hop + static_cast<std::size_t>(n);

  SpectrogramTensor out(spec, x.channels(), frames, x.sample_rate, x.length());
  const std::vector<double> win = spec.hann();

  RealFft fft(n);
  std::vector<double> padded(padded_len, 0.0);
  std::vector<double> block(static_cast<std::size_t>(n));
  std::vector<cplx> bins(static_cast<std::size_t>(spec.bins()));

  for (int c = 0; c < x.channels(); ++c) {
    std::fill(padded.begin(), padded.end(), 0.0);
    const auto& src = x[c];
    for (std::size_t i = 0; i < src.size(); ++i) padded[pad + i] = src[i];

    for (int t = 0; t < frames; ++t) {
      const std::size_t start = static_cast<std::size_t>(t) * hop;
      for (int i = 0; i < n; ++i) {
        block[static_cast<std::size_t>(i)] =
            padded[start + static_cast<std::size_t>(i)] *
            win[static_cast<std::size_t>(i)];
      }
      fft.forward(block.data(), bins.data());
      for (int f = 0; f < spec.bins(); ++f) {
        out.at(c, t, f) = bins[static_cast<std::size_t>(f)];
      }
    }
  }
  return out;
}

AudioBuffer istft(const SpectrogramTensor& S) {
  S.spec.validate();
  if (S.channels <= 0 || S.frames <= 0) {
    throw std::invalid_argument("istft: empty tensor");
  }
  if (S.bins != S.spec.bins()) {
    throw std::invalid_argument("istft: bin count inconsistent with spec");
  }
  if (S.values.size() != static_cast<std::size_t>(S.channels) * S.frames * S.bins) {
    throw std::invalid_argument("istft: tensor storage size mismatch");
  }

  const int n = S.spec.fft_size;
  const int hop = S.spec.hop_size;
  const std::size_t pad = static_cast<std::size_t>(n - hop);
  const std::size_t padded_len =
      static_cast<std::size_t>(S.frames - 1) * hop + static_cast<std::size_t>(n);
  if (S.signal_length == 0 ||
      stft_frame_count(S.signal_length, S.spec) != S.frames) {
    throw std::invalid_argument(
        "istft: signal_length inconsistent with frame count");
  }

  const std::vector<double> win = S.spec.hann();
  std::vector<double> wsum(padded_len, 0.0);
  for (int t = 0; t < S.frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * hop;
    for (int i = 0; i < n; ++i) {
      const double w = win[static_cast<std::size_t>(i)];
      wsum[start + static_cast<std::size_t>(i)] += w * w;
    }
  }

  RealFft fft(n);
  std::vector<double> block(static_cast<std::size_t>(n));
  std::vector<cplx> bins(static_cast<std::size_t>(S.bins));

  AudioBuffer out(S.channels, S.signal_length, S.sample_rate);
  std::vector<double> acc(padded_len);
  for (int c = 0; c < S.channels; ++c) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int t = 0; t < S.frames; ++t) {
      for (int f = 0; f < S.bins; ++f) {
        bins[static_cast<std::size_t>(f)] = S.at(c, t, f);
      }
      fft.inverse(bins.data(), block.data());
      const std::size_t start = static_cast<std::size_t>(t) * hop;
      for (int i = 0; i < n; ++i) {
        acc[start + static_cast<std::size_t>(i)] +=
            block[static_cast<std::size_t>(i)] * win[static_cast<std::size_t>(i)];
      }
    }
    for (std::size_t i = 0; i < S.signal_length; ++i) {
      const double d = wsum[pad + i];
      out[c][i] = d > 0.0 ? acc[pad + i] / d : 0.0;
    }
  }
  return out;
}

}  // namespace sac
