// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "sac/room.hpp"
#include "sac/spatial.hpp"
#include "sac/stft.hpp"

namespace sac {

struct MetricOptions {
  WindowSpec spec = WindowSpec::metric();  // 2048/512
  int beam_count = 50;                     // B
  double diagonal_loading = 1e-2;          // delta
  double music_grid_step_deg = 1.0;
  double music_fmin_hz = 300.0;
  double music_fmax_hz = 3500.0;
  int ref_channel = 0;
};

// Superdirective (MVDR against spherically isotropic diffuse noise) weights
// for B directions sampled uniformly in cos(theta): theta_b = arccos(1-2b/B),
// b = 1..B.
struct BeamformerBank {
  int B = 0;
  int channels = 0;
  int bins = 0;
  int sample_rate = 16000;
  double diagonal_loading = 1e-2;
  WindowSpec spec;
  std::vector<double> cos_dirs;    // [b], uniformly spaced, step 2/B
  std::vector<double> dirs_deg;    // [b]
  std::vector<cplx> weights;       // [(b*bins + f)*M + m]

  const cplx* weight(int b, int f) const {
    return weights.data() +
           (static_cast<std::size_t>(b) * bins + f) * channels;
  }
};

BeamformerBank design_beam_bank(const ArrayGeometry& array, int B,
                                double diagonal_loading, const WindowSpec& spec,
                                int sample_rate);

// Far-field steering vector at angle theta (radians from the array axis) for
// bin frequency f_hz, relative to the array centroid.
std::vector<cplx> steering_vector(const ArrayGeometry& array, double theta_rad,
                                  double f_hz, double speed_of_sound = 343.0);

// Y_b(f): time-averaged beamformed magnitude per (direction, frequency).
struct SpatialFeature {
  int B = 0;
  int bins = 0;
  std::vector<double> values;  // [b*bins + f]

  double at(int b, int f) const {
    return values[static_cast<std::size_t>(b) * bins + f];
  }
};

SpatialFeature spatial_feature(const AudioBuffer& x, const BeamformerBank& bank);

// Mean over frequency of the cosine similarity between the two beamspace
// features; frequencies where either feature has zero norm are excluded.
double spatial_similarity(const AudioBuffer& x, const AudioBuffer& x_hat,
                          const BeamformerBank& bank);
double spatial_similarity(const SpatialFeature& a, const SpatialFeature& b);

// Mean over frequency of the angle between reference and estimated RTFs,
// radians in [0, pi].
double rtf_error(const AudioBuffer& x, const AudioBuffer& x_hat,
                 const MetricOptions& opts = {});

// MUSIC grid search over [0, 180] degrees on the frequency-averaged
// pseudospectrum; single dominant source assumed.
double music_doa(const AudioBuffer& x, const ArrayGeometry& array,
                 const MetricOptions& opts = {});

inline double doa_error(double estimated_deg, double truth_deg) {
  return std::abs(estimated_deg - truth_deg);
}

// 10 log10(|x|^2 / |x - x_hat|^2), clamped to +100 dB; channels averaged.
double snr_db(const AudioBuffer& x, const AudioBuffer& x_hat);

// Superdirective beamformer at one direction, applied on the metric STFT.
AudioBuffer beamform_to(const AudioBuffer& x, double theta_deg,
                        const ArrayGeometry& array,
                        const MetricOptions& opts = {});

struct MetricRow {
  std::string id;
  double spatial_similarity = 0.0;
  double rtf_error_rad = 0.0;
  double doa_error_deg = 0.0;
  double snr_db = 0.0;
  double beamformed_snr_db = 0.0;
};

// CSV with one row per utterance plus a final `mean` row.
void write_metric_csv(const std::string& path,
                      const std::vector<MetricRow>& rows);

// Beamspace feature dump at selected frequencies (nearest bins), long format:
// id,b,theta_deg,freq_hz,y_reference,y_decoded.
void write_feature_dump_csv(const std::string& path, const std::string& id,
                            const BeamformerBank& bank,
                            const SpatialFeature& reference,
                            const SpatialFeature& decoded,
                            const std::vector<double>& freqs_hz, bool append);

}  // namespace sac
