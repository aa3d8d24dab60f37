// SPDX-License-Identifier: Apache-2.0
#include "sac/spatial.hpp"

#include <Eigen/Dense>

#include <stdexcept>

namespace sac {

namespace {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;

void check_multichannel(const SpectrogramTensor& X) {
  if (X.channels < 2) {
    throw std::invalid_argument("spatial: at least two channels required");
  }
}

}  // namespace

int BandMap::band_of(int f) const {
  for (int b = 0; b < count(); ++b) {
    if (f < band_end(b)) return b;
  }
  throw std::out_of_range("BandMap: bin outside map");
}

void BandMap::validate() const {
  if (count() < 1 || start.front() != 0 || start.back() != total_bins) {
    throw std::invalid_argument("BandMap: does not cover the bin range");
  }
  for (int b = 0; b < count(); ++b) {
    if (band_size(b) <= 0) {
      throw std::invalid_argument("BandMap: empty band");
    }
  }
}

BandMap BandMap::contiguous(int bins, int n_bands) {
  if (bins <= 0 || n_bands <= 0 || n_bands > bins) {
    throw std::invalid_argument("BandMap: invalid partition");
  }
  BandMap m;
  m.total_bins = bins;
  m.start.push_back(0);
  const int base = bins / n_bands;
  const int extra = bins % n_bands;
  for (int b = 0; b < n_bands; ++b) {
    m.start.push_back(m.start.back() + base + (b < extra ? 1 : 0));
  }
  m.validate();
  return m;
}

SpatialCovariance covariance(const SpectrogramTensor& X) {
  check_multichannel(X);
  SpatialCovariance out;
  out.frames = X.frames;
  out.bins = X.bins;
  out.channels = X.channels;
  out.values.resize(static_cast<std::size_t>(X.frames) * X.bins * X.channels *
                    X.channels);
  for (int t = 0; t < X.frames; ++t) {
    for (int f = 0; f < X.bins; ++f) {
      for (int i = 0; i < X.channels; ++i) {
        const cplx xi = X.at(i, t, f);
        for (int j = 0; j < X.channels; ++j) {
          out.at(t, f, i, j) = xi * std::conj(X.at(j, t, f));
        }
      }
    }
  }
  return out;
}

FeatureTensor input_feature(const SpectrogramTensor& X, int ref) {
  check_multichannel(X);
  if (ref < 0 || ref >= X.channels) {
    throw std::invalid_argument("input_feature: reference out of range");
  }
  const int m = X.channels;
  FeatureTensor out;
  out.frames = X.frames;
  out.bins = X.bins;
  out.dim = 2 * (m * m + 1);
  out.values.resize(static_cast<std::size_t>(X.frames) * X.bins * out.dim);

  std::size_t pos = 0;
  for (int t = 0; t < X.frames; ++t) {
    for (int f = 0; f < X.bins; ++f) {
      double* dst = out.values.data() + pos;
      for (int i = 0; i < m; ++i) {
        const cplx xi = X.at(i, t, f);
        for (int j = 0; j < m; ++j) {
          dst[i * m + j] = (xi * std::conj(X.at(j, t, f))).real();
          dst[m * m + i * m + j] = (xi * std::conj(X.at(j, t, f))).imag();
        }
      }
      dst[2 * m * m] = X.at(ref, t, f).real();
      dst[2 * m * m + 1] = X.at(ref, t, f).imag();
      pos += static_cast<std::size_t>(out.dim);
    }
  }
  return out;
}

CrfTensor estimate_crf(const SpectrogramTensor& X, int ref, int L, int K,
                       int block_len, const BandMap& bands,
                       std::optional<double> lambda) {
  check_multichannel(X);
  if (ref < 0 || ref >= X.channels) {
    throw std::invalid_argument("estimate_crf: reference out of range");
  }
  if (L < 0 || K < 0 || block_len < 1) {
    throw std::invalid_argument("estimate_crf: bad filter geometry");
  }
  if (lambda && *lambda < 0.0) {
    throw std::invalid_argument("estimate_crf: lambda must be >= 0");
  }
  bands.validate();
  if (bands.total_bins != X.bins) {
    throw std::invalid_argument("estimate_crf: band map does not match bins");
  }

  CrfTensor W;
  W.channels_out = X.channels - 1;
  W.frames = X.frames;
  W.L = L;
  W.K = K;
  W.block_len = block_len;
  W.bands = bands;
  W.taps.assign(static_cast<std::size_t>(W.channels_out) * W.blocks() *
                    bands.count() * W.taps_per_filter(),
                cplx(0.0, 0.0));

  const int dim = W.taps_per_filter();
  std::vector<int> others;
  for (int ch = 0; ch < X.channels; ++ch) {
    if (ch != ref) others.push_back(ch);
  }

  VectorXcd g(dim);
  for (int blk = 0; blk < W.blocks(); ++blk) {
    const int t0 = blk * block_len;
    const int t1 = std::min(X.frames, t0 + block_len);
    for (int b = 0; b < bands.count(); ++b) {
      MatrixXcd gram = MatrixXcd::Zero(dim, dim);
      MatrixXcd rhs = MatrixXcd::Zero(dim, W.channels_out);
      for (int t = t0; t < t1; ++t) {
        for (int f = bands.band_begin(b); f < bands.band_end(b); ++f) {
          for (int l = -L; l <= L; ++l) {
            for (int k = -K; k <= K; ++k) {
              const int tt = t + l;
              const int ff = f + k;
              g(W.tap_index(l, k)) =
                  (tt >= 0 && tt < X.frames && ff >= 0 && ff < X.bins)
                      ? X.at(ref, tt, ff)
                      : cplx(0.0, 0.0);
            }
          }
          gram.noalias() += g.conjugate() * g.transpose();
          for (int mi = 0; mi < W.channels_out; ++mi) {
            rhs.col(mi).noalias() += g.conjugate() * X.at(others[static_cast<std::size_t>(mi)], t, f);
          }
        }
      }

      const double trace_per_dim = gram.trace().real() / dim;
      double reg;
      bool degenerate = false;
      if (!lambda) {
        reg = 1e-3 * trace_per_dim;
      } else if (*lambda == 0.0) {
        // Singular with no regularization: fall back and report.
        Eigen::SelfAdjointEigenSolver<MatrixXcd> eig(gram);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        if (hi <= 0.0 || lo <= 1e-12 * hi) {
          reg = 1e-6 * trace_per_dim;
          degenerate = true;
        } else {
          reg = 0.0;
        }
      } else {
        reg = *lambda;
      }
      if (degenerate) ++W.degenerate_blocks;

      MatrixXcd a = gram;
      a.diagonal().array() += reg;
      const MatrixXcd sol = a.ldlt().solve(rhs);
      for (int mi = 0; mi < W.channels_out; ++mi) {
        const std::size_t off = W.filter_offset(mi, blk, b);
        for (int j = 0; j < dim; ++j) {
          W.taps[off + static_cast<std::size_t>(j)] = sol(j, mi);
        }
      }
    }
  }
  return W;
}

SpectrogramTensor apply_crf(const CrfTensor& W, const SpectrogramTensor& X_ref) {
  if (X_ref.channels != 1) {
    throw std::invalid_argument("apply_crf: reference tensor must be 1-channel");
  }
  if (W.bands.total_bins != X_ref.bins) {
    throw std::invalid_argument("apply_crf: band map does not match bins");
  }
  if (W.frames != X_ref.frames) {
    throw std::invalid_argument("apply_crf: frame count mismatch");
  }
  if (W.channels_out < 1) {
    throw std::invalid_argument("apply_crf: no output channels");
  }

  SpectrogramTensor out(X_ref.spec, W.channels_out, X_ref.frames,
                        X_ref.sample_rate, X_ref.signal_length);
  for (int m = 0; m < W.channels_out; ++m) {
    for (int t = 0; t < X_ref.frames; ++t) {
      const int blk = std::min(t / W.block_len, W.blocks() - 1);
      for (int f = 0; f < X_ref.bins; ++f) {
        const int b = W.bands.band_of(f);
        const cplx* taps = W.taps.data() + W.filter_offset(m, blk, b);
        cplx acc(0.0, 0.0);
        for (int l = -W.L; l <= W.L; ++l) {
          const int tt = t + l;
          if (tt < 0 || tt >= X_ref.frames) continue;
          for (int k = -W.K; k <= W.K; ++k) {
            const int ff = f + k;
            if (ff < 0 || ff >= X_ref.bins) continue;
            acc += taps[W.tap_index(l, k)] * X_ref.at(0, tt, ff);
          }
        }
        out.at(m, t, f) = acc;
      }
    }
  }
  return out;
}

Rtf rtf_extract(const SpectrogramTensor& X, int ref) {
  check_multichannel(X);
  if (ref < 0 || ref >= X.channels) {
    throw std::invalid_argument("rtf_extract: reference out of range");
  }
  const int m = X.channels;

  Rtf out;
  out.channels = m;
  out.bins = X.bins;
  out.values.assign(static_cast<std::size_t>(X.bins) * m, cplx(0.0, 0.0));
  out.state.assign(static_cast<std::size_t>(X.bins), Rtf::BinState::ok);

  MatrixXcd cov(m, m);
  for (int f = 0; f < X.bins; ++f) {
    cov.setZero();
    for (int t = 0; t < X.frames; ++t) {
      VectorXcd x(m);
      for (int c = 0; c < m; ++c) x(c) = X.at(c, t, f);
      cov.noalias() += x * x.adjoint();
    }
    if (cov.norm() <= 0.0) {
      out.state[static_cast<std::size_t>(f)] = Rtf::BinState::invalid;
      continue;
    }
    Eigen::SelfAdjointEigenSolver<MatrixXcd> eig(cov);
    VectorXcd v = eig.eigenvectors().col(m - 1);  // ascending order

    cplx pivot = v(ref);
    if (std::abs(pivot) < 1e-8 * v.norm()) {
      int best = 0;
      for (int c = 1; c < m; ++c) {
        if (std::abs(v(c)) > std::abs(v(best))) best = c;
      }
      pivot = v(best);
      out.state[static_cast<std::size_t>(f)] = Rtf::BinState::ref_degenerate;
    }
    v /= pivot;
    for (int c = 0; c < m; ++c) {
      out.values[static_cast<std::size_t>(f) * m + c] = v(c);
    }
  }
  return out;
}

}  // namespace sac
