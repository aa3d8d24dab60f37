// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sac/stft.hpp"

namespace sac {

// Contiguous partition of the F frequency bins into bands.
struct BandMap {
  int total_bins = 0;
  std::vector<int> start;  // band b covers [start[b], start[b+1])

  int count() const { return static_cast<int>(start.size()) - 1; }
  int band_of(int f) const;
  int band_begin(int b) const { return start[static_cast<std::size_t>(b)]; }
  int band_end(int b) const { return start[static_cast<std::size_t>(b) + 1]; }
  int band_size(int b) const { return band_end(b) - band_begin(b); }
  void validate() const;

  // Near-equal contiguous bands; the first (bins % n_bands) bands get the
  // extra bin. 321 bins over 6 bands gives [54,54,54,53,53,53].
  static BandMap contiguous(int bins, int n_bands);

  bool operator==(const BandMap&) const = default;
};

// Per-bin M x M outer products X(t,f) X(t,f)^H.
struct SpatialCovariance {
  int frames = 0;
  int bins = 0;
  int channels = 0;
  std::vector<cplx> values;  // [((t*bins)+f)*M*M + i*M + j]

  cplx& at(int t, int f, int i, int j) {
    return values[(static_cast<std::size_t>(t) * bins + f) * channels * channels +
                  static_cast<std::size_t>(i) * channels + j];
  }
  const cplx& at(int t, int f, int i, int j) const {
    return values[(static_cast<std::size_t>(t) * bins + f) * channels * channels +
                  static_cast<std::size_t>(i) * channels + j];
  }
};

SpatialCovariance covariance(const SpectrogramTensor& X);

// Real per-bin feature [Re Phi (row-major), Im Phi (row-major), Re X_ref,
// Im X_ref]; length 2*(M^2+1).
struct FeatureTensor {
  int frames = 0;
  int bins = 0;
  int dim = 0;
  std::vector<double> values;  // [(t*bins + f)*dim + k]

  const double* at(int t, int f) const {
    return values.data() + (static_cast<std::size_t>(t) * bins + f) * dim;
  }
};

FeatureTensor input_feature(const SpectrogramTensor& X, int ref);

// Complex ratio filters: one (2L+1) x (2K+1) tap grid per non-reference
// channel, per time block, per frequency band.
struct CrfTensor {
  int channels_out = 0;  // M - 1
  int frames = 0;        // frame count of the spectrogram the CRF targets
  int L = 4;
  int K = 1;
  int block_len = 10;
  BandMap bands;
  std::vector<cplx> taps;  // [((m*blocks + blk)*n_bands + b)*taps_per + j]
  int degenerate_blocks = 0;

  int blocks() const { return (frames + block_len - 1) / block_len; }
  int taps_per_filter() const { return (2 * L + 1) * (2 * K + 1); }
  int tap_index(int l, int k) const { return (l + L) * (2 * K + 1) + (k + K); }

  cplx& tap(int m, int blk, int band, int l, int k) {
    return taps[((static_cast<std::size_t>(m) * blocks() + blk) * bands.count() +
                 band) * taps_per_filter() + tap_index(l, k)];
  }
  const cplx& tap(int m, int blk, int band, int l, int k) const {
    return taps[((static_cast<std::size_t>(m) * blocks() + blk) * bands.count() +
                 band) * taps_per_filter() + tap_index(l, k)];
  }
  std::size_t filter_offset(int m, int blk, int band) const {
    return ((static_cast<std::size_t>(m) * blocks() + blk) * bands.count() +
            band) * taps_per_filter();
  }
};

// Regularized least-squares CRF fit of every non-reference channel against
// the reference, per (band, block):
//   min_W  sum |X_m(t,f) - sum_{l,k} W(l,k) X_ref(t+l,f+k)|^2 + lambda*|W|^2
// Out-of-range reference bins are zero. lambda = nullopt picks
// 1e-3 * trace(G^H G)/dim; lambda = 0 falls back to 1e-6 * trace/dim when the
// normal matrix is singular and counts the block as degenerate.
CrfTensor estimate_crf(const SpectrogramTensor& X, int ref, int L, int K,
                       int block_len, const BandMap& bands,
                       std::optional<double> lambda = std::nullopt);

// X_hat_m(t,f) = sum_{l,k} W_m(t,f,l,k) X_ref(t+l, f+k), zero-padded outside
// the grid. Returns M-1 synthesized channels.
SpectrogramTensor apply_crf(const CrfTensor& W,
                            const SpectrogramTensor& X_ref);

// Relative transfer function per frequency, from the principal left singular
// vector of the M x T matrix X(f), normalized to the reference entry.
struct Rtf {
  enum class BinState : std::uint8_t { ok = 0, ref_degenerate = 1, invalid = 2 };

  int channels = 0;
  int bins = 0;
  std::vector<cplx> values;          // [f*M + m]
  std::vector<BinState> state;       // per f

  const cplx* at(int f) const {
    return values.data() + static_cast<std::size_t>(f) * channels;
  }
  bool usable(int f) const {
    return state[static_cast<std::size_t>(f)] != BinState::invalid;
  }
};

Rtf rtf_extract(const SpectrogramTensor& X, int ref);

}  // namespace sac
