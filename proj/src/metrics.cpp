// SPDX-License-Identifier: Apache-2.0
#include "sac/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

namespace sac {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kSnrClampDb = 100.0;

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;

double sinc_unnormalized(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(x) / x;
}

// Axis coordinate of each microphone relative to the centroid, meters.
std::vector<double> axis_coordinates(const ArrayGeometry& array) {
  const Vec3 axis = array.axis();
  const Vec3 center = array.centroid();
  std::vector<double> coords;
  coords.reserve(array.positions.size());
  for (const auto& p : array.positions) {
    coords.push_back((p[0] - center[0]) * axis[0] + (p[1] - center[1]) * axis[1] +
                     (p[2] - center[2]) * axis[2]);
  }
  return coords;
}

// MVDR weight against the diffuse-field coherence for one direction/bin.
VectorXcd superdirective_weight(const Eigen::LDLT<MatrixXd>& loaded_coherence,
                                const VectorXcd& steering) {
  const Eigen::VectorXd re = loaded_coherence.solve(steering.real());
  const Eigen::VectorXd im = loaded_coherence.solve(steering.imag());
  VectorXcd num(steering.size());
  num.real() = re;
  num.imag() = im;
  const cplx denom = steering.dot(num);  // d^H (G+dI)^-1 d, real positive
  return num / denom.real();
}

double channel_snr_db(const std::vector<double>& x,
                      const std::vector<double>& y) {
  double sig = 0.0, err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sig += x[i] * x[i];
    const double d = x[i] - y[i];
    err += d * d;
  }
  if (sig <= 0.0) {
    if (err <= 0.0) return kSnrClampDb;
    throw std::invalid_argument("snr_db: zero reference signal");
  }
  if (err < 1e-20 * sig) return kSnrClampDb;
  return std::min(kSnrClampDb, 10.0 * std::log10(sig / err));
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::vector<cplx> steering_vector(const ArrayGeometry& array, double theta_rad,
                                  double f_hz, double speed_of_sound) {
  const std::vector<double> coords = axis_coordinates(array);
  std::vector<cplx> d;
  d.reserve(coords.size());
  const double k = 2.0 * kPi * f_hz * std::cos(theta_rad) / speed_of_sound;
  for (double xm : coords) {
    d.emplace_back(std::cos(k * xm), std::sin(k * xm));
  }
  return d;
}

BeamformerBank design_beam_bank(const ArrayGeometry& array, int B,
                                double diagonal_loading, const WindowSpec& spec,
                                int sample_rate) {
  array.validate();
  spec.validate();
  if (B < 1) {
    throw std::invalid_argument("design_beam_bank: B must be >= 1");
  }
  if (diagonal_loading <= 0.0) {
    throw std::invalid_argument("design_beam_bank: diagonal loading must be > 0");
  }

  const int m = array.channels();
  const int bins = spec.bins();
  BeamformerBank bank;
  bank.B = B;
  bank.channels = m;
  bank.bins = bins;
  bank.sample_rate = sample_rate;
  bank.diagonal_loading = diagonal_loading;
  bank.spec = spec;
  bank.weights.resize(static_cast<std::size_t>(B) * bins * m);

  for (int b = 1; b <= B; ++b) {
    const double cosv = 1.0 - 2.0 * static_cast<double>(b) / B;
    bank.cos_dirs.push_back(cosv);
    bank.dirs_deg.push_back(std::acos(std::clamp(cosv, -1.0, 1.0)) * 180.0 / kPi);
  }

  const std::vector<double> coords = axis_coordinates(array);
  const double c = 343.0;
  MatrixXd coherence(m, m);
  for (int f = 0; f < bins; ++f) {
    const double f_hz =
        static_cast<double>(f) * sample_rate / spec.fft_size;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        const Vec3& pi = array.positions[static_cast<std::size_t>(i)];
        const Vec3& pj = array.positions[static_cast<std::size_t>(j)];
        const double dx = pi[0] - pj[0], dy = pi[1] - pj[1], dz = pi[2] - pj[2];
        const double dij = std::sqrt(dx * dx + dy * dy + dz * dz);
        coherence(i, j) = sinc_unnormalized(2.0 * kPi * f_hz * dij / c);
      }
    }
    coherence.diagonal().array() += diagonal_loading;
    const Eigen::LDLT<MatrixXd> solver(coherence);

    for (int b = 0; b < B; ++b) {
      const double theta = std::acos(std::clamp(bank.cos_dirs[static_cast<std::size_t>(b)], -1.0, 1.0));
      const auto d = steering_vector(array, theta, f_hz, c);
      VectorXcd dv(m);
      for (int i = 0; i < m; ++i) dv(i) = d[static_cast<std::size_t>(i)];
      const VectorXcd w = superdirective_weight(solver, dv);
      for (int i = 0; i < m; ++i) {
        bank.weights[(static_cast<std::size_t>(b) * bins + f) * m + i] = w(i);
      }
    }
    coherence.diagonal().array() -= diagonal_loading;
  }
  return bank;
}

SpatialFeature spatial_feature(const AudioBuffer& x,
                               const BeamformerBank& bank) {
  x.validate();
  if (x.channels() != bank.channels) {
    throw std::invalid_argument("spatial_feature: channel count mismatch");
  }
  const SpectrogramTensor X = stft(x, bank.spec);

  SpatialFeature feat;
  feat.B = bank.B;
  feat.bins = bank.bins;
  feat.values.assign(static_cast<std::size_t>(bank.B) * bank.bins, 0.0);

  const double inv_frames = 1.0 / X.frames;
  for (int b = 0; b < bank.B; ++b) {
    for (int f = 0; f < bank.bins; ++f) {
      const cplx* w = bank.weight(b, f);
      double acc = 0.0;
      for (int t = 0; t < X.frames; ++t) {
        cplx y(0.0, 0.0);
        for (int m = 0; m < bank.channels; ++m) {
          y += std::conj(w[m]) * X.at(m, t, f);
        }
        acc += std::abs(y);
      }
      feat.values[static_cast<std::size_t>(b) * bank.bins + f] =
          acc * inv_frames;
    }
  }
  return feat;
}

double spatial_similarity(const SpatialFeature& a, const SpatialFeature& b) {
  if (a.B != b.B || a.bins != b.bins) {
    throw std::invalid_argument("spatial_similarity: feature shape mismatch");
  }
  double sum = 0.0;
  int valid = 0;
  for (int f = 0; f < a.bins; ++f) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int d = 0; d < a.B; ++d) {
      const double va = a.at(d, f);
      const double vb = b.at(d, f);
      dot += va * vb;
      na += va * va;
      nb += vb * vb;
    }
    if (na <= 0.0 || nb <= 0.0) continue;  // silent band on either side
    sum += dot / std::sqrt(na * nb);
    ++valid;
  }
  if (valid == 0) {
    throw std::runtime_error("spatial_similarity: no valid frequency bins");
  }
  return sum / valid;
}

double spatial_similarity(const AudioBuffer& x, const AudioBuffer& x_hat,
                          const BeamformerBank& bank) {
  const auto lx = static_cast<long long>(x.length());
  const auto ly = static_cast<long long>(x_hat.length());
  if (std::abs(lx - ly) > bank.spec.hop_size) {
    throw std::invalid_argument(
        "spatial_similarity: durations differ by more than one frame");
  }
  return spatial_similarity(spatial_feature(x, bank),
                            spatial_feature(x_hat, bank));
}

double rtf_error(const AudioBuffer& x, const AudioBuffer& x_hat,
                 const MetricOptions& opts) {
  x.validate();
  x_hat.validate();
  if (x.channels() != x_hat.channels() || x.channels() < 2) {
    throw std::invalid_argument("rtf_error: need matching multichannel inputs");
  }
  const Rtf a = rtf_extract(stft(x, opts.spec), opts.ref_channel);
  const Rtf b = rtf_extract(stft(x_hat, opts.spec), opts.ref_channel);

  double sum = 0.0;
  int valid = 0;
  for (int f = 0; f < a.bins; ++f) {
    if (!a.usable(f) || !b.usable(f)) continue;
    cplx dot(0.0, 0.0);
    double na = 0.0, nb = 0.0;
    for (int m = 0; m < a.channels; ++m) {
      const cplx va = a.at(f)[m];
      const cplx vb = b.at(f)[m];
      dot += std::conj(vb) * va;
      na += std::norm(va);
      nb += std::norm(vb);
    }
    if (na <= 0.0 || nb <= 0.0) continue;
    const double cosv =
        std::clamp(dot.real() / std::sqrt(na * nb), -1.0, 1.0);
    sum += std::acos(cosv);
    ++valid;
  }
  if (valid == 0) {
    throw std::runtime_error("rtf_error: no valid frequency bins");
  }
  return sum / valid;
}

double music_doa(const AudioBuffer& x, const ArrayGeometry& array,
                 const MetricOptions& opts) {
  x.validate();
  array.validate();
  const int m = array.channels();
  if (x.channels() != m) {
    throw std::invalid_argument("music_doa: channel count mismatch");
  }
  const SpectrogramTensor X = stft(x, opts.spec);
  if (X.frames < m) {
    throw std::invalid_argument("music_doa: too few frames for covariance");
  }

  const double bin_hz =
      static_cast<double>(x.sample_rate) / opts.spec.fft_size;
  const int f_lo = std::max(1, static_cast<int>(std::ceil(opts.music_fmin_hz / bin_hz)));
  const int f_hi = std::min(X.bins - 1,
                            static_cast<int>(std::floor(opts.music_fmax_hz / bin_hz)));
  if (f_lo > f_hi) {
    throw std::invalid_argument("music_doa: empty frequency range");
  }

  const int grid =
      static_cast<int>(std::floor(180.0 / opts.music_grid_step_deg)) + 1;
  std::vector<double> spectrum(static_cast<std::size_t>(grid), 0.0);

  MatrixXcd cov(m, m);
  VectorXcd snapshot(m);
  for (int f = f_lo; f <= f_hi; ++f) {
    cov.setZero();
    for (int t = 0; t < X.frames; ++t) {
      for (int c = 0; c < m; ++c) snapshot(c) = X.at(c, t, f);
      cov.noalias() += snapshot * snapshot.adjoint();
    }
    cov /= static_cast<double>(X.frames);
    if (cov.norm() <= 0.0) continue;

    Eigen::SelfAdjointEigenSolver<MatrixXcd> eig(cov);
    // Noise subspace: all but the dominant eigenvector (ascending order).
    const MatrixXcd noise = eig.eigenvectors().leftCols(m - 1);

    const double f_hz = f * bin_hz;
    for (int g = 0; g < grid; ++g) {
      const double theta = g * opts.music_grid_step_deg * kPi / 180.0;
      const auto sv = steering_vector(array, theta, f_hz);
      VectorXcd d(m);
      for (int i = 0; i < m; ++i) d(i) = sv[static_cast<std::size_t>(i)];
      const double proj = (noise.adjoint() * d).squaredNorm();
      spectrum[static_cast<std::size_t>(g)] += 1.0 / std::max(proj, 1e-12);
    }
  }

  int best = 0;
  for (int g = 1; g < grid; ++g) {
    if (spectrum[static_cast<std::size_t>(g)] > spectrum[static_cast<std::size_t>(best)]) {
      best = g;
    }
  }
  return best * opts.music_grid_step_deg;
}

double snr_db(const AudioBuffer& x, const AudioBuffer& x_hat) {
  x.validate();
  x_hat.validate();
  if (x.channels() != x_hat.channels() || x.length() != x_hat.length()) {
    throw std::invalid_argument("snr_db: shape mismatch");
  }
  double total_sig = 0.0;
  for (int c = 0; c < x.channels(); ++c) {
    for (double v : x[c]) total_sig += v * v;
  }
  if (total_sig <= 0.0) {
    throw std::invalid_argument("snr_db: zero reference signal");
  }
  double acc = 0.0;
  for (int c = 0; c < x.channels(); ++c) {
    acc += channel_snr_db(x[c], x_hat[c]);
  }
  return acc / x.channels();
}

AudioBuffer beamform_to(const AudioBuffer& x, double theta_deg,
                        const ArrayGeometry& array,
                        const MetricOptions& opts) {
  x.validate();
  array.validate();
  if (x.channels() != array.channels()) {
    throw std::invalid_argument("beamform_to: channel count mismatch");
  }
  if (theta_deg < 0.0 || theta_deg > 180.0) {
    throw std::invalid_argument("beamform_to: direction outside [0, 180]");
  }
  if (opts.diagonal_loading <= 0.0) {
    throw std::invalid_argument("beamform_to: diagonal loading must be > 0");
  }

  const int m = array.channels();
  const SpectrogramTensor X = stft(x, opts.spec);
  SpectrogramTensor Y(opts.spec, 1, X.frames, x.sample_rate, x.length());

  const double theta = theta_deg * kPi / 180.0;
  const double c = 343.0;
  MatrixXd coherence(m, m);
  for (int f = 0; f < X.bins; ++f) {
    const double f_hz =
        static_cast<double>(f) * x.sample_rate / opts.spec.fft_size;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        const Vec3& pi = array.positions[static_cast<std::size_t>(i)];
        const Vec3& pj = array.positions[static_cast<std::size_t>(j)];
        const double dx = pi[0] - pj[0], dy = pi[1] - pj[1], dz = pi[2] - pj[2];
        const double dij = std::sqrt(dx * dx + dy * dy + dz * dz);
        coherence(i, j) = sinc_unnormalized(2.0 * kPi * f_hz * dij / c);
      }
    }
    coherence.diagonal().array() += opts.diagonal_loading;
    const Eigen::LDLT<MatrixXd> solver(coherence);
    const auto sv = steering_vector(array, theta, f_hz, c);
    VectorXcd d(m);
    for (int i = 0; i < m; ++i) d(i) = sv[static_cast<std::size_t>(i)];
    const VectorXcd w = superdirective_weight(solver, d);

    for (int t = 0; t < X.frames; ++t) {
      cplx acc(0.0, 0.0);
      for (int i = 0; i < m; ++i) {
        acc += std::conj(w(i)) * X.at(i, t, f);
      }
      Y.at(0, t, f) = acc;
    }
  }
  return istft(Y);
}

void write_metric_csv(const std::string& path,
                      const std::vector<MetricRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw std::runtime_error("write_metric_csv: cannot open " + path);
  }
  os << "id,spatial_similarity,rtf_error_rad,doa_error_deg,snr_db,"
        "beamformed_snr_db\n";
  MetricRow mean;
  for (const auto& r : rows) {
    os << r.id << ',' << fmt(r.spatial_similarity) << ','
       << fmt(r.rtf_error_rad) << ',' << fmt(r.doa_error_deg) << ','
       << fmt(r.snr_db) << ',' << fmt(r.beamformed_snr_db) << '\n';
    mean.spatial_similarity += r.spatial_similarity;
    mean.rtf_error_rad += r.rtf_error_rad;
    mean.doa_error_deg += r.doa_error_deg;
    mean.snr_db += r.snr_db;
    mean.beamformed_snr_db += r.beamformed_snr_db;
  }
  if (!rows.empty()) {
    const double inv = 1.0 / static_cast<double>(rows.size());
    os << "mean," << fmt(mean.spatial_similarity * inv) << ','
       << fmt(mean.rtf_error_rad * inv) << ',' << fmt(mean.doa_error_deg * inv)
       << ',' << fmt(mean.snr_db * inv) << ','
       << fmt(mean.beamformed_snr_db * inv) << '\n';
  }
  if (!os) {
    throw std::runtime_error("write_metric_csv: write failed: " + path);
  }
}

void write_feature_dump_csv(const std::string& path, const std::string& id,
                            const BeamformerBank& bank,
                            const SpatialFeature& reference,
                            const SpatialFeature& decoded,
                            const std::vector<double>& freqs_hz, bool append) {
  std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
  if (!os) {
    throw std::runtime_error("write_feature_dump_csv: cannot open " + path);
  }
  if (!append) {
    os << "id,b,theta_deg,freq_hz,y_reference,y_decoded\n";
  }
  for (double f_hz : freqs_hz) {
    const int f = static_cast<int>(std::lround(
        f_hz * bank.spec.fft_size / bank.sample_rate));
    if (f < 0 || f >= bank.bins) {
      throw std::invalid_argument("write_feature_dump_csv: frequency out of range");
    }
    for (int b = 0; b < bank.B; ++b) {
      os << id << ',' << (b + 1) << ','
         << fmt(bank.dirs_deg[static_cast<std::size_t>(b)]) << ','
         << fmt(f_hz) << ',' << fmt(reference.at(b, f)) << ','
         << fmt(decoded.at(b, f)) << '\n';
    }
  }
  if (!os) {
    throw std::runtime_error("write_feature_dump_csv: write failed: " + path);
  }
}

}  // namespace sac
