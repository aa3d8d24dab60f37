// SPDX-License-Identifier: Apache-2.0
#include "sac/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "sac/fingerprint.hpp"
#include "sac/rng.hpp"

namespace sac {

namespace {

double sq_dist(const double* a, const double* b, int dim) {
  double acc = 0.0;
  for (int i = 0; i < dim; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

// Nearest codebook entry, lowest index on ties.
int nearest(const double* v, const Codebook& cb, double* best_out = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < cb.count(); ++i) {
    const double d = sq_dist(v, cb.entry(i), cb.dim);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  if (best_out) *best_out = best_d;
  return best;
}

void put_u16(std::ostream& os, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

Codebook train_kmeans(const double* data, int n, int dim, int entries,
                      const KmeansParams& params, std::uint64_t seed,
                      std::vector<double>* distortion_trace) {
  if (n <= 0 || dim <= 0) {
    throw std::invalid_argument("train_kmeans: empty input");
  }
  if (entries <= 0) {
    throw std::invalid_argument("train_kmeans: entries must be positive");
  }
  if (distortion_trace) distortion_trace->clear();

  Rng rng(seed);
  Codebook cb;
  cb.dim = dim;
  cb.entries.assign(static_cast<std::size_t>(entries) * dim, 0.0);
  cb.trained_on = fnv1a64(data, static_cast<std::size_t>(n) * dim * sizeof(double));

  const auto vec = [&](int i) { return data + static_cast<std::size_t>(i) * dim; };

  int jitter_count = 0;
  const auto jitter = [&](double* entry) {
    // Relative nudge, unique per call. Nudged entries never win a tie against
    // the exact copy they came from (lowest index wins), so distortion is
    // unaffected.
    ++jitter_count;
    entry[0] += (std::abs(entry[0]) + 1.0) * 1e-9 * jitter_count;
  };

  // k-means++ seeding; if every remaining point already coincides with a
  // centroid (fewer distinct points than entries), leftover entries become
  // nudged copies of data points.
  std::vector<double> min_d(static_cast<std::size_t>(n),
                            std::numeric_limits<double>::infinity());
  int first = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
  std::memcpy(cb.entry(0), vec(first), sizeof(double) * static_cast<std::size_t>(dim));
  for (int e = 1; e < entries; ++e) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = sq_dist(vec(i), cb.entry(e - 1), dim);
      if (d < min_d[static_cast<std::size_t>(i)]) min_d[static_cast<std::size_t>(i)] = d;
      total += min_d[static_cast<std::size_t>(i)];
    }
    if (total <= 0.0) {
      const int src = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      std::memcpy(cb.entry(e), vec(src), sizeof(double) * static_cast<std::size_t>(dim));
      jitter(cb.entry(e));
      continue;
    }
    const double target = rng.next_double() * total;
    double acc = 0.0;
    int chosen = n - 1;
    for (int i = 0; i < n; ++i) {
      acc += min_d[static_cast<std::size_t>(i)];
      if (acc >= target) {
        chosen = i;
        break;
      }
    }
    std::memcpy(cb.entry(e), vec(chosen), sizeof(double) * static_cast<std::size_t>(dim));
  }

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  std::vector<double> assign_d(static_cast<std::size_t>(n), 0.0);
  std::vector<int> counts(static_cast<std::size_t>(entries), 0);
  std::vector<double> sums(static_cast<std::size_t>(entries) * dim, 0.0);
  double prev_distortion = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < params.max_iters; ++iter) {
    double distortion = 0.0;
    for (int i = 0; i < n; ++i) {
      double d;
      assign[static_cast<std::size_t>(i)] = nearest(vec(i), cb, &d);
      assign_d[static_cast<std::size_t>(i)] = d;
      distortion += d;
    }
    distortion /= n;
    if (distortion_trace) distortion_trace->push_back(distortion);

    std::fill(counts.begin(), counts.end(), 0);
    std::fill(sums.begin(), sums.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      const int a = assign[static_cast<std::size_t>(i)];
      ++counts[static_cast<std::size_t>(a)];
      double* s = sums.data() + static_cast<std::size_t>(a) * dim;
      const double* v = vec(i);
      for (int d = 0; d < dim; ++d) s[d] += v[d];
    }
    for (int e = 0; e < entries; ++e) {
      if (counts[static_cast<std::size_t>(e)] > 0) {
        const double inv = 1.0 / counts[static_cast<std::size_t>(e)];
        double* dst = cb.entry(e);
        const double* s = sums.data() + static_cast<std::size_t>(e) * dim;
        for (int d = 0; d < dim; ++d) dst[d] = s[d] * inv;
      } else {
        // Reseed to the point farthest from its current centroid; with zero
        // residual everywhere, fall back to a nudged copy.
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          if (assign_d[static_cast<std::size_t>(i)] > far_d) {
            far_d = assign_d[static_cast<std::size_t>(i)];
            far = i;
          }
        }
        std::memcpy(cb.entry(e), vec(far), sizeof(double) * static_cast<std::size_t>(dim));
        if (far_d <= 0.0) {
          jitter(cb.entry(e));
        }
        assign_d[static_cast<std::size_t>(far)] = 0.0;
      }
    }

    if (prev_distortion < std::numeric_limits<double>::infinity()) {
      const double improvement =
          prev_distortion > 0.0
              ? (prev_distortion - distortion) / prev_distortion
              : 0.0;
      if (improvement >= 0.0 && improvement < params.tol) break;
    }
    prev_distortion = distortion;
  }

  // Exact duplicates can only come from degenerate data; separate them.
  for (int e = 1; e < entries; ++e) {
    for (int e2 = 0; e2 < e; ++e2) {
      if (std::memcmp(cb.entry(e), cb.entry(e2),
                      sizeof(double) * static_cast<std::size_t>(dim)) == 0) {
        jitter(cb.entry(e));
        e2 = -1;  // recheck against everything
      }
    }
  }
  return cb;
}

void RvqCoder::validate() const {
  if (stages.empty()) {
    throw std::invalid_argument("RvqCoder: no stages");
  }
  for (const auto& s : stages) {
    if (s.dim != dim() || s.count() == 0) {
      throw std::invalid_argument("RvqCoder: inconsistent stages");
    }
  }
}

RvqCoder train_rvq(const double* data, int n, int dim, int stages, int entries,
                   const KmeansParams& params, std::uint64_t seed) {
  if (n <= 0 || dim <= 0) {
    throw std::invalid_argument("train_rvq: empty input");
  }
  if (stages < 1) {
    throw std::invalid_argument("train_rvq: stage count must be >= 1");
  }

  RvqCoder coder;
  std::vector<double> residual(data, data + static_cast<std::size_t>(n) * dim);
  for (int s = 0; s < stages; ++s) {
    Codebook cb = train_kmeans(residual.data(), n, dim, entries, params,
                               mix64(seed ^ (0x5f356495u + static_cast<std::uint64_t>(s))));

    // Replace the least-used entry with the zero vector (skip if a zero entry
    // already exists): keeping the previous residual is then always available
    // to the greedy encoder.
    std::vector<int> use(static_cast<std::size_t>(cb.count()), 0);
    bool has_zero = false;
    for (int e = 0; e < cb.count(); ++e) {
      bool zero = true;
      for (int d = 0; d < dim; ++d) {
        if (cb.entry(e)[d] != 0.0) {
          zero = false;
          break;
        }
      }
      if (zero) {
        has_zero = true;
        break;
      }
    }
    if (!has_zero) {
      for (int i = 0; i < n; ++i) {
        ++use[static_cast<std::size_t>(
            nearest(residual.data() + static_cast<std::size_t>(i) * dim, cb))];
      }
      int least = 0;
      for (int e = 1; e < cb.count(); ++e) {
        if (use[static_cast<std::size_t>(e)] < use[static_cast<std::size_t>(least)]) {
          least = e;
        }
      }
      std::fill(cb.entry(least), cb.entry(least) + dim, 0.0);
    }

    // Residuals for the next stage use the augmented codebook.
    for (int i = 0; i < n; ++i) {
      double* r = residual.data() + static_cast<std::size_t>(i) * dim;
      const double* e = cb.entry(nearest(r, cb));
      for (int d = 0; d < dim; ++d) r[d] -= e[d];
    }
    coder.stages.push_back(std::move(cb));
  }
  coder.validate();
  return coder;
}

std::vector<int> rvq_encode(const double* v, const RvqCoder& coder) {
  coder.validate();
  const int dim = coder.dim();
  std::vector<double> residual(v, v + dim);
  std::vector<int> indices;
  indices.reserve(coder.stages.size());
  for (const auto& cb : coder.stages) {
    const int idx = nearest(residual.data(), cb);
    const double* e = cb.entry(idx);
    for (int d = 0; d < dim; ++d) residual[static_cast<std::size_t>(d)] -= e[d];
    indices.push_back(idx);
  }
  return indices;
}

std::vector<double> rvq_decode(const std::vector<int>& indices,
                               const RvqCoder& coder) {
  coder.validate();
  if (indices.size() != coder.stages.size()) {
    throw std::invalid_argument("rvq_decode: index count != stage count");
  }
  std::vector<double> out(static_cast<std::size_t>(coder.dim()), 0.0);
  for (std::size_t s = 0; s < indices.size(); ++s) {
    const auto& cb = coder.stages[s];
    if (indices[s] < 0 || indices[s] >= cb.count()) {
      throw std::out_of_range("rvq_decode: index out of range");
    }
    const double* e = cb.entry(indices[s]);
    for (int d = 0; d < cb.dim; ++d) out[static_cast<std::size_t>(d)] += e[d];
  }
  return out;
}

double rvq_distortion(const double* data, int n, int dim,
                      const RvqCoder& coder, int stages) {
  coder.validate();
  if (dim != coder.dim()) {
    throw std::invalid_argument("rvq_distortion: dimension mismatch");
  }
  const int use_stages =
      stages <= 0 ? coder.stage_count() : std::min(stages, coder.stage_count());
  double total = 0.0;
  std::vector<double> residual(static_cast<std::size_t>(dim));
  for (int i = 0; i < n; ++i) {
    const double* v = data + static_cast<std::size_t>(i) * dim;
    std::copy(v, v + dim, residual.begin());
    for (int s = 0; s < use_stages; ++s) {
      const auto& cb = coder.stages[static_cast<std::size_t>(s)];
      const double* e = cb.entry(nearest(residual.data(), cb));
      for (int d = 0; d < dim; ++d) residual[static_cast<std::size_t>(d)] -= e[d];
    }
    for (double r : residual) total += r * r;
  }
  return total / n;
}

void write_scqb(std::ostream& os, const RvqCoder& coder) {
  coder.validate();
  const int entries = coder.stages.front().count();
  for (const auto& s : coder.stages) {
    if (s.count() != entries) {
      throw std::invalid_argument("write_scqb: stages differ in entry count");
    }
  }
  os.write("SCQB", 4);
  put_u16(os, 1);  // version
  put_u16(os, static_cast<std::uint16_t>(coder.stage_count()));
  put_u32(os, static_cast<std::uint32_t>(entries));
  put_u32(os, static_cast<std::uint32_t>(coder.dim()));
  for (const auto& s : coder.stages) {
    for (double v : s.entries) {
      const float f = static_cast<float>(v);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      put_u32(os, u);
    }
  }
  if (!os) {
    throw std::runtime_error("write_scqb: write failed");
  }
}

RvqCoder read_scqb(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SCQB", 4) != 0) {
    throw std::runtime_error("read_scqb: bad magic");
  }
  const std::uint16_t version = get_u16(is);
  if (version != 1) {
    throw std::runtime_error("read_scqb: unsupported version " +
                             std::to_string(version));
  }
  const std::uint16_t stages = get_u16(is);
  const std::uint32_t entries = get_u32(is);
  const std::uint32_t dim = get_u32(is);
  if (!is || stages == 0 || entries == 0 || dim == 0) {
    throw std::runtime_error("read_scqb: corrupt header");
  }
  RvqCoder coder;
  for (int s = 0; s < stages; ++s) {
    Codebook cb;
    cb.dim = static_cast<int>(dim);
    cb.entries.resize(static_cast<std::size_t>(entries) * dim);
    for (auto& v : cb.entries) {
      const std::uint32_t u = get_u32(is);
      float f;
      std::memcpy(&f, &u, 4);
      v = static_cast<double>(f);
    }
    if (!is) {
      throw std::runtime_error("read_scqb: truncated entries");
    }
    coder.stages.push_back(std::move(cb));
  }
  coder.validate();
  return coder;
}

}  // namespace sac
