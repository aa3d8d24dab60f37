// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sac/audio.hpp"

namespace sac {

using Vec3 = std::array<double, 3>;

// Microphone positions in room coordinates, meters.
struct ArrayGeometry {
  std::vector<Vec3> positions;
  int reference_index = 0;

  int channels() const { return static_cast<int>(positions.size()); }
  Vec3 centroid() const;
  // Unit vector from the first to the last microphone. Only meaningful for
  // linear arrays, which is all this toolkit targets.
  Vec3 axis() const;
  void validate() const;

  // Microphones on a line along +x, neighbor gaps in meters, centered on
  // `center` (midpoint between the end microphones).
  static ArrayGeometry linear(const std::vector<double>& spacings_m,
                              const Vec3& center, int reference_index = 0);
  // The 8-channel non-uniform line used throughout: gaps
  // [2,2,2,14,2,2,2] cm.
  static std::vector<double> default_spacings();
};

struct RoomSpec {
  Vec3 dimensions{6.0, 5.0, 3.0};
  double rt60_target = 0.3;         // seconds, in [0, 0.7]
  Vec3 source_position{2.0, 2.0, 1.5};
  Vec3 array_center{4.0, 3.0, 1.5};
  int max_image_order = -1;         // -1: derived from the decay target
  double speed_of_sound = 343.0;

  void validate(const ArrayGeometry& array) const;
};

// One impulse response per microphone.
struct RIRSet {
  int sample_rate = 16000;
  std::vector<std::vector<double>> responses;

  int channels() const { return static_cast<int>(responses.size()); }
};

// Image-source simulation with uniform wall absorption derived from the RT60
// target (Sabine) and 81-tap windowed-sinc fractional delays.
RIRSet simulate_rir(const RoomSpec& room, const ArrayGeometry& array,
                    int sample_rate = 16000);

// Per-channel convolution of a mono source with the RIR set, jointly
// peak-normalized with a single gain across channels.
AudioBuffer synthesize_mixture(const AudioBuffer& source, const RIRSet& rirs,
                               double peak = 0.99);

// Angle in degrees between the array axis and the direction from the array
// centroid to `point`, in [0, 180].
double ground_truth_doa_deg(const ArrayGeometry& array, const Vec3& point);

struct DatasetConfig {
  int sample_rate = 16000;
  std::vector<double> array_spacings = ArrayGeometry::default_spacings();
  int reference_index = 0;
  double room_min = 3.0;
  double room_max = 10.0;
  double rt60_min = 0.0;
  double rt60_max = 0.7;
  double src_dist_min = 0.5;
  double src_dist_max = 5.0;
  double placement_margin = 0.5;
  double mixture_peak = 0.99;
};

struct DatasetItem {
  std::string id;
  std::string mixture_path;  // relative to the manifest directory
  std::string rir_path;
  double doa_deg = 0.0;
  double rt60_s = 0.0;
};

struct Manifest {
  std::vector<DatasetItem> items;

  void write(const std::string& path) const;
  static Manifest read(const std::string& path);
};

// Renders n reverberant mixtures from the mono WAV corpus under corpus_dir
// into out_dir (mixtures, RIRs, manifest.tsv). Fully determined by seed.
Manifest generate_dataset(const std::string& corpus_dir, int n,
                          const DatasetConfig& config, std::uint64_t seed,
                          const std::string& out_dir);

}  // namespace sac
