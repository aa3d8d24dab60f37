// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sac/quantizer.hpp"
#include "sac/spatial.hpp"
#include "sac/stft.hpp"

namespace sac {

enum class RefMode : std::uint8_t { subband_rvq = 0, passthrough = 1 };
enum class SpatialMode : std::uint8_t { rvq = 0, bypass = 1 };
// How a reference band frame becomes a fixed-dimension real vector before
// quantization: an orthonormal projection of [Re | Im] of the band bins, or
// of [log10 magnitude | cos | sin] per bin.
enum class RefVectorizer : std::uint8_t { complex_linear = 0, logmag_phase = 1 };

struct CodecConfig {
  int fft = 640;
  int hop = 320;
  int bands = 6;
  int rvq_stages = 2;
  int codebook_size = 1024;
  int crf_l = 4;
  int crf_k = 1;
  int block_len = 10;      // frames per spatial block
  int ref_vector_dim = 32;
  int sample_rate = 16000;
  int ref_channel = 0;
  RefVectorizer ref_vectorizer = RefVectorizer::complex_linear;
  RefMode ref_mode = RefMode::subband_rvq;
  SpatialMode spatial_mode = SpatialMode::rvq;

  void validate() const;
  int bits_per_index() const;  // log2(codebook_size); must be integral
  int frames_per_second() const { return sample_rate / hop; }
  WindowSpec window() const { return {fft, hop}; }
  BandMap band_map() const;
  bool needs_codebooks() const {
    return ref_mode == RefMode::subband_rvq || spatial_mode == SpatialMode::rvq;
  }
};

// Dimension of the flattened per-(block, band) CRF vector:
// 2 * (2L+1)(2K+1) * (M-1).
int crf_vector_dim(const CodecConfig& cfg, int channels);

// Trained quantizers for both branches, one RVQ coder per band. Stored as a
// sequence of SCQB records: reference bands first, spatial bands second.
struct CodebookSet {
  std::vector<RvqCoder> ref_bands;
  std::vector<RvqCoder> spatial_bands;

  std::vector<std::uint8_t> serialize() const;
  std::array<std::uint8_t, 16> fingerprint() const;
  void save(const std::string& path) const;
  static CodebookSet load(const std::string& path);

  // Channel count the spatial codebooks were trained for.
  int spatial_channels(const CodecConfig& cfg) const;
  void validate(const CodecConfig& cfg) const;
};

// Fixed seeded orthonormal projection between raw band vectors and the
// ref_vector_dim space the reference-branch quantizers operate in.
class RefBandProjector {
 public:
  static RefBandProjector make(const CodecConfig& cfg);

  int vector_dim() const { return vec_dim_; }
  const BandMap& bands() const { return map_; }

  // out has vector_dim() entries; bins points at band_size(band) values.
  void project(const cplx* bins, int band, double* out) const;
  // Min-norm preimage of the projection, then back to complex bins.
  void reconstruct(const double* in, int band, cplx* bins) const;

 private:
  struct BandProj {
    int raw_dim = 0;
    std::vector<double> rows;  // vec_dim x raw_dim, orthonormal rows
  };
  RefVectorizer mode_ = RefVectorizer::complex_linear;
  int vec_dim_ = 0;
  BandMap map_;
  std::vector<BandProj> projections_;

  void raw_from_bins(const cplx* bins, int band, double* raw) const;
  void bins_from_raw(const double* raw, int band, cplx* bins) const;
};

// Framed, versioned container for both branches (file magic "SCBS").
struct Bitstream {
  std::uint16_t version = 1;
  std::uint8_t channels = 0;
  CodecConfig config;
  std::uint64_t sample_count = 0;
  std::array<std::uint8_t, 16> codebook_fingerprint{};
  std::uint32_t frame_count = 0;

  std::vector<std::uint16_t> ref_indices;      // [t][band][stage]
  std::vector<cplx> ref_raw;                   // passthrough: [t][bin]
  std::vector<std::uint16_t> spatial_indices;  // [blk][band][stage]
  std::vector<cplx> spatial_raw;               // bypass: [blk][m][band][tap]

  int blocks() const {
    return (static_cast<int>(frame_count) + config.block_len - 1) /
           config.block_len;
  }

  std::vector<std::uint8_t> serialize() const;
  static Bitstream deserialize(const std::vector<std::uint8_t>& bytes);
  void save(const std::string& path) const;
  static Bitstream load(const std::string& path);
};

// Index-bit accounting per the frame-rate formula; header and byte-alignment
// overhead are reported separately.
struct RateReport {
  double ref_bits_per_second = 0.0;
  double spatial_bits_per_second = 0.0;
  std::size_t header_bytes = 0;
  std::size_t ref_payload_bytes = 0;
  std::size_t spatial_payload_bytes = 0;

  double total_kbps() const {
    return (ref_bits_per_second + spatial_bits_per_second) / 1000.0;
  }
};

RateReport rate_report(const Bitstream& bs);

// Branch 1: per frame, per band RVQ indices of the projected band vectors.
std::vector<std::uint16_t> encode_reference(const SpectrogramTensor& X_ref,
                                            const CodecConfig& cfg,
                                            const CodebookSet& cbs);
SpectrogramTensor decode_reference(const std::vector<std::uint16_t>& indices,
                                   const CodecConfig& cfg,
                                   const CodebookSet& cbs, int frames,
                                   std::size_t signal_length);

// Branch 2: least-squares CRFs against the original reference channel.
CrfTensor estimate_spatial_crf(const SpectrogramTensor& X,
                               const CodecConfig& cfg);
// Flattened real vector [Re taps | Im taps] per non-reference channel for one
// (block, band) pair.
std::vector<double> flatten_crf_block(const CrfTensor& W, int blk, int band);
void unflatten_crf_block(const double* v, CrfTensor& W, int blk, int band);
std::vector<std::uint16_t> encode_spatial(const CrfTensor& W,
                                          const CodecConfig& cfg,
                                          const CodebookSet& cbs);
CrfTensor decode_spatial(const std::vector<std::uint16_t>& indices,
                         const CodecConfig& cfg, const CodebookSet& cbs,
                         int channels, int frames);

Bitstream encode(const AudioBuffer& x, const CodecConfig& cfg,
                 const CodebookSet* cbs);
AudioBuffer decode(const Bitstream& bs, const CodebookSet* cbs);

// Per-band training rows harvested from mixtures, for codebook training.
struct TrainingVectors {
  int ref_dim = 0;
  int spatial_dim = 0;
  std::vector<std::vector<double>> ref_bands;      // [band] flattened rows
  std::vector<std::vector<double>> spatial_bands;  // [band] flattened rows
};

void collect_training_vectors(const AudioBuffer& x, const CodecConfig& cfg,
                              TrainingVectors& acc);
// Trains one RVQ coder per band per branch. sample_cap > 0 limits the rows
// per band by deterministic subsampling.
CodebookSet train_codebooks(const TrainingVectors& vectors,
                            const CodecConfig& cfg, const KmeansParams& params,
                            std::uint64_t seed, int sample_cap = 0);

}  // namespace sac
