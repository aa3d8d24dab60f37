// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sac/codec.hpp"
#include "sac/metrics.hpp"
#include "sac/room.hpp"

namespace sac {

// Plain-text key=value run configuration. Unknown keys are rejected; '#'
// starts a comment. All randomness in a run flows from `seed`.
struct RunConfig {
  std::uint64_t seed = 0;
  CodecConfig codec;
  DatasetConfig dataset;
  MetricOptions metrics;
  std::vector<double> feature_dump_freqs{1000.0, 3000.0};
  int kmeans_iters = 100;
  double kmeans_tol = 1e-6;
  int kmeans_sample_cap = 20000;

  // Applies one key=value assignment; throws on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);

  // Full effective configuration, one key=value per line, fixed order.
  std::string echo() const;
  void write_echo(const std::string& path) const;

  static RunConfig from_file(const std::string& path);

  ArrayGeometry array_at(const Vec3& center) const {
    return ArrayGeometry::linear(dataset.array_spacings, center,
                                 dataset.reference_index);
  }
  KmeansParams kmeans_params() const {
    return KmeansParams{kmeans_iters, kmeans_tol};
  }
};

}  // namespace sac
