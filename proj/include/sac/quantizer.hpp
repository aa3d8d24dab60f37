// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace sac {

struct Codebook {
  int dim = 0;
  std::vector<double> entries;     // row-major, count() x dim
  std::uint64_t trained_on = 0;    // fingerprint of the training vectors

  int count() const {
    return dim == 0 ? 0 : static_cast<int>(entries.size()) / dim;
  }
  const double* entry(int i) const {
    return entries.data() + static_cast<std::size_t>(i) * dim;
  }
  double* entry(int i) {
    return entries.data() + static_cast<std::size_t>(i) * dim;
  }
};

struct KmeansParams {
  int max_iters = 100;
  double tol = 1e-6;  // relative distortion improvement stopping threshold
};

// Lloyd iterations from k-means++ seeding. Empty clusters are reseeded to the
// point farthest from its centroid. Deterministic for a given seed. When
// distortion_trace is given it receives the mean squared distortion measured
// at each assignment step.
Codebook train_kmeans(const double* data, int n, int dim, int entries,
                      const KmeansParams& params, std::uint64_t seed,
                      std::vector<double>* distortion_trace = nullptr);

// Cascade of codebooks sharing one dimension; stage s is trained on the
// residuals left by stages 0..s-1.
struct RvqCoder {
  std::vector<Codebook> stages;

  int dim() const { return stages.empty() ? 0 : stages.front().dim; }
  int stage_count() const { return static_cast<int>(stages.size()); }
  void validate() const;
};

// Trains `stages` codebooks of `entries` each. Every trained codebook has its
// least-used entry replaced by the zero vector, which makes per-stage residual
// energy non-increasing under greedy encoding.
RvqCoder train_rvq(const double* data, int n, int dim, int stages, int entries,
                   const KmeansParams& params, std::uint64_t seed);

// Greedy nearest-entry search per stage on the running residual; ties break
// to the lowest index.
std::vector<int> rvq_encode(const double* v, const RvqCoder& coder);

// Sum of the selected entries. Throws on out-of-range indices.
std::vector<double> rvq_decode(const std::vector<int>& indices,
                               const RvqCoder& coder);

// Mean squared reconstruction error of encode-decode over a vector set,
// using the first `stages` stages (0 = all).
double rvq_distortion(const double* data, int n, int dim,
                      const RvqCoder& coder, int stages = 0);

// SCQB record: magic "SCQB", version u16, stage count u16, N u32, D u32,
// then row-major float32 little-endian entries per stage.
void write_scqb(std::ostream& os, const RvqCoder& coder);
RvqCoder read_scqb(std::istream& is);

}  // namespace sac
