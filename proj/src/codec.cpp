// SPDX-License-Identifier: Apache-2.0
#include "sac/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sac/fingerprint.hpp"
#include "sac/rng.hpp"

namespace sac {

namespace {

class ByteWriter {
 public:
  std::vector<std::uint8_t> bytes;

  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    u64(u);
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    const auto* p = take(2);
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }
  std::uint32_t u32() {
    const auto* p = take(4);
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    const auto* p = take(8);
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
  }
  double f64() {
    const std::uint64_t u = u64();
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (remaining() < n) {
      throw std::runtime_error("bitstream: unexpected end of data");
    }
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

// 10-bit (or any width up to 16) indices, big-endian within the pack,
// zero-padded to a byte boundary.
void pack_indices(ByteWriter& w, const std::uint16_t* idx, int count, int bits) {
  std::uint64_t acc = 0;
  int acc_bits = 0;
  for (int i = 0; i < count; ++i) {
    acc = (acc << bits) | (idx[i] & ((1ull << bits) - 1ull));
    acc_bits += bits;
    while (acc_bits >= 8) {
      w.u8(static_cast<std::uint8_t>(acc >> (acc_bits - 8)));
      acc_bits -= 8;
      acc &= (1ull << acc_bits) - 1ull;
    }
  }
  if (acc_bits > 0) {
    w.u8(static_cast<std::uint8_t>(acc << (8 - acc_bits)));
  }
}

void unpack_indices(ByteReader& r, std::uint16_t* idx, int count, int bits) {
  const std::size_t nbytes = (static_cast<std::size_t>(count) * bits + 7) / 8;
  const std::uint8_t* p = r.take(nbytes);
  std::uint64_t acc = 0;
  int acc_bits = 0;
  std::size_t byte = 0;
  for (int i = 0; i < count; ++i) {
    while (acc_bits < bits) {
      acc = (acc << 8) | p[byte++];
      acc_bits += 8;
    }
    idx[i] = static_cast<std::uint16_t>((acc >> (acc_bits - bits)) &
                                        ((1ull << bits) - 1ull));
    acc_bits -= bits;
    acc &= (1ull << acc_bits) - 1ull;
  }
}

std::size_t packed_bytes(int count, int bits) {
  return (static_cast<std::size_t>(count) * bits + 7) / 8;
}

std::uint64_t projection_seed(const CodecConfig& cfg, int band) {
  std::uint64_t s = fnv1a64("sac.ref_projection.v1");
  s = mix64(s ^ static_cast<std::uint64_t>(cfg.fft));
  s = mix64(s ^ static_cast<std::uint64_t>(cfg.bands));
  s = mix64(s ^ static_cast<std::uint64_t>(cfg.ref_vector_dim));
  s = mix64(s ^ static_cast<std::uint64_t>(cfg.ref_vectorizer));
  s = mix64(s ^ static_cast<std::uint64_t>(band));
  return s;
}

constexpr double kLogFloor = -4.0;  // -80 dB amplitude floor
constexpr double kLogCeil = 2.0;

}  // namespace

void CodecConfig::validate() const {
  WindowSpec w{fft, hop};
  w.validate();
  if (sample_rate <= 0 || sample_rate % hop != 0) {
    throw std::invalid_argument("CodecConfig: hop must divide sample_rate");
  }
  if (bands < 1 || bands > w.bins()) {
    throw std::invalid_argument("CodecConfig: bad band count");
  }
  if (rvq_stages < 1 || rvq_stages > 64) {
    throw std::invalid_argument("CodecConfig: bad stage count");
  }
  bits_per_index();  // validates codebook_size
  if (crf_l < 0 || crf_k < 0) {
    throw std::invalid_argument("CodecConfig: negative filter half-width");
  }
  if (block_len < 1) {
    throw std::invalid_argument("CodecConfig: block_len must be >= 1");
  }
  if (ref_vector_dim < 1) {
    throw std::invalid_argument("CodecConfig: ref_vector_dim must be >= 1");
  }
  if (ref_channel < 0) {
    throw std::invalid_argument("CodecConfig: ref_channel must be >= 0");
  }
}

int CodecConfig::bits_per_index() const {
  if (codebook_size < 2 || codebook_size > (1 << 16)) {
    throw std::invalid_argument(
        "CodecConfig: codebook_size must be in [2, 65536]");
  }
  int bits = 0;
  int v = codebook_size;
  while (v > 1) {
    if (v & 1) {
      throw std::invalid_argument("CodecConfig: codebook_size must be a power of two");
    }
    v >>= 1;
    ++bits;
  }
  return bits;
}

BandMap CodecConfig::band_map() const {
  return BandMap::contiguous(window().bins(), bands);
}

int crf_vector_dim(const CodecConfig& cfg, int channels) {
  if (channels < 2) {
    throw std::invalid_argument("crf_vector_dim: need at least 2 channels");
  }
  return 2 * (2 * cfg.crf_l + 1) * (2 * cfg.crf_k + 1) * (channels - 1);
}

// ---------------------------------------------------------------------------
// CodebookSet

std::vector<std::uint8_t> CodebookSet::serialize() const {
  std::ostringstream os(std::ios::binary);
  for (const auto& c : ref_bands) write_scqb(os, c);
  for (const auto& c : spatial_bands) write_scqb(os, c);
  const std::string s = os.str();
  return std::vector<std::uint8_t>(s.begin(), s.end());
}

std::array<std::uint8_t, 16> CodebookSet::fingerprint() const {
  const auto bytes = serialize();
  return fnv1a128(bytes.data(), bytes.size());
}

void CodebookSet::save(const std::string& path) const {
  const auto bytes = serialize();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw std::runtime_error("CodebookSet: cannot open " + path);
  }
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) {
    throw std::runtime_error("CodebookSet: write failed: " + path);
  }
}

CodebookSet CodebookSet::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("CodebookSet: cannot open " + path);
  }
  std::vector<RvqCoder> coders;
  while (true) {
    is.peek();
    if (is.eof()) break;
    coders.push_back(read_scqb(is));
  }
  if (coders.empty() || coders.size() % 2 != 0) {
    throw std::runtime_error("CodebookSet: expected an even record count in " +
                             path);
  }
  CodebookSet out;
  const std::size_t half = coders.size() / 2;
  out.ref_bands.assign(coders.begin(), coders.begin() + static_cast<long>(half));
  out.spatial_bands.assign(coders.begin() + static_cast<long>(half), coders.end());
  return out;
}

int CodebookSet::spatial_channels(const CodecConfig& cfg) const {
  if (spatial_bands.empty()) {
    throw std::runtime_error("CodebookSet: no spatial codebooks");
  }
  const int taps = (2 * cfg.crf_l + 1) * (2 * cfg.crf_k + 1);
  const int dim = spatial_bands.front().dim();
  if (dim % (2 * taps) != 0) {
    throw std::runtime_error(
        "CodebookSet: spatial dimension inconsistent with filter geometry");
  }
  return dim / (2 * taps) + 1;
}

void CodebookSet::validate(const CodecConfig& cfg) const {
  if (static_cast<int>(ref_bands.size()) != cfg.bands ||
      static_cast<int>(spatial_bands.size()) != cfg.bands) {
    throw std::runtime_error("CodebookSet: band count does not match config");
  }
  for (const auto& c : ref_bands) {
    c.validate();
    if (c.dim() != cfg.ref_vector_dim ||
        c.stage_count() != cfg.rvq_stages ||
        c.stages.front().count() != cfg.codebook_size) {
      throw std::runtime_error("CodebookSet: reference coder does not match config");
    }
  }
  for (const auto& c : spatial_bands) {
    c.validate();
    if (c.stage_count() != cfg.rvq_stages ||
        c.stages.front().count() != cfg.codebook_size) {
      throw std::runtime_error("CodebookSet: spatial coder does not match config");
    }
  }
}

// ---------------------------------------------------------------------------
// RefBandProjector

RefBandProjector RefBandProjector::make(const CodecConfig& cfg) {
  cfg.validate();
  RefBandProjector p;
  p.mode_ = cfg.ref_vectorizer;
  p.vec_dim_ = cfg.ref_vector_dim;
  p.map_ = cfg.band_map();

  const int per_bin = cfg.ref_vectorizer == RefVectorizer::complex_linear ? 2 : 3;
  for (int b = 0; b < p.map_.count(); ++b) {
    BandProj bp;
    bp.raw_dim = per_bin * p.map_.band_size(b);
    if (bp.raw_dim < p.vec_dim_) {
      throw std::invalid_argument(
          "RefBandProjector: band too small for ref_vector_dim");
    }
    bp.rows.assign(static_cast<std::size_t>(p.vec_dim_) * bp.raw_dim, 0.0);
    Rng rng(projection_seed(cfg, b));
    for (int r = 0; r < p.vec_dim_; ++r) {
      double* row = bp.rows.data() + static_cast<std::size_t>(r) * bp.raw_dim;
      for (int redraw = 0; redraw < 100; ++redraw) {
        for (int d = 0; d < bp.raw_dim; ++d) row[d] = rng.normal();
        // Modified Gram-Schmidt, run twice for orthogonality at double
        // precision.
        for (int pass = 0; pass < 2; ++pass) {
          for (int r2 = 0; r2 < r; ++r2) {
            const double* prev =
                bp.rows.data() + static_cast<std::size_t>(r2) * bp.raw_dim;
            double dot = 0.0;
            for (int d = 0; d < bp.raw_dim; ++d) dot += row[d] * prev[d];
            for (int d = 0; d < bp.raw_dim; ++d) row[d] -= dot * prev[d];
          }
        }
        double norm = 0.0;
        for (int d = 0; d < bp.raw_dim; ++d) norm += row[d] * row[d];
        norm = std::sqrt(norm);
        if (norm > 1e-8) {
          for (int d = 0; d < bp.raw_dim; ++d) row[d] /= norm;
          break;
        }
      }
    }
    p.projections_.push_back(std::move(bp));
  }
  return p;
}

void RefBandProjector::raw_from_bins(const cplx* bins, int band,
                                     double* raw) const {
  const int bs = map_.band_size(band);
  if (mode_ == RefVectorizer::complex_linear) {
    for (int j = 0; j < bs; ++j) {
      raw[j] = bins[j].real();
      raw[bs + j] = bins[j].imag();
    }
  } else {
    for (int j = 0; j < bs; ++j) {
      const double mag = std::abs(bins[j]);
      raw[j] = std::max(std::log10(std::max(mag, 0.0)), kLogFloor);
      if (mag > 0.0) {
        raw[bs + j] = bins[j].real() / mag;
        raw[2 * bs + j] = bins[j].imag() / mag;
      } else {
        raw[bs + j] = 0.0;
        raw[2 * bs + j] = 0.0;
      }
    }
  }
}

void RefBandProjector::bins_from_raw(const double* raw, int band,
                                     cplx* bins) const {
  const int bs = map_.band_size(band);
  if (mode_ == RefVectorizer::complex_linear) {
    for (int j = 0; j < bs; ++j) {
      bins[j] = cplx(raw[j], raw[bs + j]);
    }
  } else {
    for (int j = 0; j < bs; ++j) {
      const double lm = std::clamp(raw[j], kLogFloor, kLogCeil);
      const double mag = std::pow(10.0, lm);
      const double c = raw[bs + j];
      const double s = raw[2 * bs + j];
      const double r = std::hypot(c, s);
      bins[j] = r >= 1e-9 ? cplx(mag * c / r, mag * s / r) : cplx(mag, 0.0);
    }
  }
}

void RefBandProjector::project(const cplx* bins, int band, double* out) const {
  const BandProj& bp = projections_[static_cast<std::size_t>(band)];
  std::vector<double> raw(static_cast<std::size_t>(bp.raw_dim));
  raw_from_bins(bins, band, raw.data());
  for (int r = 0; r < vec_dim_; ++r) {
    const double* row = bp.rows.data() + static_cast<std::size_t>(r) * bp.raw_dim;
    double acc = 0.0;
    for (int d = 0; d < bp.raw_dim; ++d) acc += row[d] * raw[static_cast<std::size_t>(d)];
    out[r] = acc;
  }
}

void RefBandProjector::reconstruct(const double* in, int band,
                                   cplx* bins) const {
  const BandProj& bp = projections_[static_cast<std::size_t>(band)];
  std::vector<double> raw(static_cast<std::size_t>(bp.raw_dim), 0.0);
  for (int r = 0; r < vec_dim_; ++r) {
    const double* row = bp.rows.data() + static_cast<std::size_t>(r) * bp.raw_dim;
    const double v = in[r];
    for (int d = 0; d < bp.raw_dim; ++d) raw[static_cast<std::size_t>(d)] += row[d] * v;
  }
  bins_from_raw(raw.data(), band, bins);
}

// ---------------------------------------------------------------------------
// Branch coding

std::vector<std::uint16_t> encode_reference(const SpectrogramTensor& X_ref,
                                            const CodecConfig& cfg,
                                            const CodebookSet& cbs) {
  if (X_ref.channels != 1) {
    throw std::invalid_argument("encode_reference: expected 1-channel tensor");
  }
  if (X_ref.bins != cfg.window().bins()) {
    throw std::invalid_argument("encode_reference: bin count mismatch");
  }
  cbs.validate(cfg);
  const RefBandProjector proj = RefBandProjector::make(cfg);
  const BandMap& map = proj.bands();

  std::vector<std::uint16_t> out(static_cast<std::size_t>(X_ref.frames) *
                                 cfg.bands * cfg.rvq_stages);
  std::vector<double> vec(static_cast<std::size_t>(cfg.ref_vector_dim));
  std::size_t pos = 0;
  for (int t = 0; t < X_ref.frames; ++t) {
    for (int b = 0; b < cfg.bands; ++b) {
      proj.project(&X_ref.at(0, t, map.band_begin(b)), b, vec.data());
      const auto idx =
          rvq_encode(vec.data(), cbs.ref_bands[static_cast<std::size_t>(b)]);
      for (int s = 0; s < cfg.rvq_stages; ++s) {
        out[pos++] = static_cast<std::uint16_t>(idx[static_cast<std::size_t>(s)]);
      }
    }
  }
  return out;
}

SpectrogramTensor decode_reference(const std::vector<std::uint16_t>& indices,
                                   const CodecConfig& cfg,
                                   const CodebookSet& cbs, int frames,
                                   std::size_t signal_length) {
  cbs.validate(cfg);
  if (indices.size() !=
      static_cast<std::size_t>(frames) * cfg.bands * cfg.rvq_stages) {
    throw std::invalid_argument("decode_reference: index count mismatch");
  }
  const RefBandProjector proj = RefBandProjector::make(cfg);
  const BandMap& map = proj.bands();

  SpectrogramTensor out(cfg.window(), 1, frames, cfg.sample_rate, signal_length);
  std::vector<int> idx(static_cast<std::size_t>(cfg.rvq_stages));
  std::size_t pos = 0;
  for (int t = 0; t < frames; ++t) {
    for (int b = 0; b < cfg.bands; ++b) {
      for (int s = 0; s < cfg.rvq_stages; ++s) {
        idx[static_cast<std::size_t>(s)] = indices[pos++];
      }
      const auto vec =
          rvq_decode(idx, cbs.ref_bands[static_cast<std::size_t>(b)]);
      proj.reconstruct(vec.data(), b, &out.at(0, t, map.band_begin(b)));
    }
  }
  return out;
}

CrfTensor estimate_spatial_crf(const SpectrogramTensor& X,
                               const CodecConfig& cfg) {
  if (X.channels < 2) {
    throw std::invalid_argument("estimate_spatial_crf: need at least 2 channels");
  }
  if (cfg.ref_channel >= X.channels) {
    throw std::invalid_argument("estimate_spatial_crf: ref_channel out of range");
  }
  return estimate_crf(X, cfg.ref_channel, cfg.crf_l, cfg.crf_k, cfg.block_len,
                      cfg.band_map());
}

std::vector<double> flatten_crf_block(const CrfTensor& W, int blk, int band) {
  const int taps = W.taps_per_filter();
  std::vector<double> out(static_cast<std::size_t>(2 * taps * W.channels_out));
  std::size_t re = 0;
  std::size_t im = static_cast<std::size_t>(taps) * W.channels_out;
  for (int m = 0; m < W.channels_out; ++m) {
    const std::size_t off = W.filter_offset(m, blk, band);
    for (int j = 0; j < taps; ++j) {
      out[re++] = W.taps[off + static_cast<std::size_t>(j)].real();
      out[im++] = W.taps[off + static_cast<std::size_t>(j)].imag();
    }
  }
  return out;
}

void unflatten_crf_block(const double* v, CrfTensor& W, int blk, int band) {
  const int taps = W.taps_per_filter();
  std::size_t re = 0;
  std::size_t im = static_cast<std::size_t>(taps) * W.channels_out;
  for (int m = 0; m < W.channels_out; ++m) {
    const std::size_t off = W.filter_offset(m, blk, band);
    for (int j = 0; j < taps; ++j) {
      W.taps[off + static_cast<std::size_t>(j)] = cplx(v[re++], v[im++]);
    }
  }
}

std::vector<std::uint16_t> encode_spatial(const CrfTensor& W,
                                          const CodecConfig& cfg,
                                          const CodebookSet& cbs) {
  cbs.validate(cfg);
  const int want_dim = crf_vector_dim(cfg, W.channels_out + 1);
  if (cbs.spatial_bands.front().dim() != want_dim) {
    throw std::invalid_argument(
        "encode_spatial: channel count does not match trained codebooks");
  }
  if (W.bands.count() != cfg.bands) {
    throw std::invalid_argument("encode_spatial: band count mismatch");
  }

  std::vector<std::uint16_t> out(static_cast<std::size_t>(W.blocks()) *
                                 cfg.bands * cfg.rvq_stages);
  std::size_t pos = 0;
  for (int blk = 0; blk < W.blocks(); ++blk) {
    for (int b = 0; b < cfg.bands; ++b) {
      const auto vec = flatten_crf_block(W, blk, b);
      const auto idx =
          rvq_encode(vec.data(), cbs.spatial_bands[static_cast<std::size_t>(b)]);
      for (int s = 0; s < cfg.rvq_stages; ++s) {
        out[pos++] = static_cast<std::uint16_t>(idx[static_cast<std::size_t>(s)]);
      }
    }
  }
  return out;
}

CrfTensor decode_spatial(const std::vector<std::uint16_t>& indices,
                         const CodecConfig& cfg, const CodebookSet& cbs,
                         int channels, int frames) {
  cbs.validate(cfg);
  CrfTensor W;
  W.channels_out = channels - 1;
  W.frames = frames;
  W.L = cfg.crf_l;
  W.K = cfg.crf_k;
  W.block_len = cfg.block_len;
  W.bands = cfg.band_map();
  W.taps.assign(static_cast<std::size_t>(W.channels_out) * W.blocks() *
                    cfg.bands * W.taps_per_filter(),
                cplx(0.0, 0.0));
  if (indices.size() !=
      static_cast<std::size_t>(W.blocks()) * cfg.bands * cfg.rvq_stages) {
    throw std::invalid_argument("decode_spatial: index count mismatch");
  }
  if (cbs.spatial_bands.front().dim() != crf_vector_dim(cfg, channels)) {
    throw std::invalid_argument(
        "decode_spatial: channel count does not match trained codebooks");
  }

  std::vector<int> idx(static_cast<std::size_t>(cfg.rvq_stages));
  std::size_t pos = 0;
  for (int blk = 0; blk < W.blocks(); ++blk) {
    for (int b = 0; b < cfg.bands; ++b) {
      for (int s = 0; s < cfg.rvq_stages; ++s) {
        idx[static_cast<std::size_t>(s)] = indices[pos++];
      }
      const auto vec =
          rvq_decode(idx, cbs.spatial_bands[static_cast<std::size_t>(b)]);
      unflatten_crf_block(vec.data(), W, blk, b);
    }
  }
  return W;
}

// ---------------------------------------------------------------------------
// Bitstream serialization

std::vector<std::uint8_t> Bitstream::serialize() const {
  ByteWriter w;
  w.raw("SCBS", 4);
  w.u16(version);
  w.u8(channels);
  w.u32(static_cast<std::uint32_t>(config.sample_rate));
  w.u32(static_cast<std::uint32_t>(config.fft));
  w.u32(static_cast<std::uint32_t>(config.hop));
  w.u16(static_cast<std::uint16_t>(config.bands));
  w.u16(static_cast<std::uint16_t>(config.rvq_stages));
  w.u32(static_cast<std::uint32_t>(config.codebook_size));
  w.u16(static_cast<std::uint16_t>(config.crf_l));
  w.u16(static_cast<std::uint16_t>(config.crf_k));
  w.u32(static_cast<std::uint32_t>(config.block_len));
  w.u16(static_cast<std::uint16_t>(config.ref_vector_dim));
  w.u8(static_cast<std::uint8_t>(config.ref_vectorizer));
  w.u8(static_cast<std::uint8_t>(config.ref_mode));
  w.u8(static_cast<std::uint8_t>(config.spatial_mode));
  w.u8(static_cast<std::uint8_t>(config.ref_channel));
  w.u64(sample_count);
  w.raw(codebook_fingerprint.data(), codebook_fingerprint.size());
  w.u32(frame_count);

  const int bins = config.window().bins();
  const int per_frame = config.bands * config.rvq_stages;
  const int bits = config.bits_per_index();
  const int taps = (2 * config.crf_l + 1) * (2 * config.crf_k + 1);
  const int spatial_cplx = (channels - 1) * config.bands * taps;

  for (std::uint32_t t = 0; t < frame_count; ++t) {
    if (config.ref_mode == RefMode::subband_rvq) {
      pack_indices(w, ref_indices.data() + static_cast<std::size_t>(t) * per_frame,
                   per_frame, bits);
    } else {
      for (int f = 0; f < bins; ++f) {
        const cplx& v = ref_raw[static_cast<std::size_t>(t) * bins + f];
        w.f64(v.real());
        w.f64(v.imag());
      }
    }
    if (t % static_cast<std::uint32_t>(config.block_len) == 0) {
      const std::uint32_t blk = t / static_cast<std::uint32_t>(config.block_len);
      if (config.spatial_mode == SpatialMode::rvq) {
        pack_indices(w,
                     spatial_indices.data() + static_cast<std::size_t>(blk) * per_frame,
                     per_frame, bits);
      } else {
        for (int j = 0; j < spatial_cplx; ++j) {
          const cplx& v =
              spatial_raw[static_cast<std::size_t>(blk) * spatial_cplx + j];
          w.f64(v.real());
          w.f64(v.imag());
        }
      }
    }
  }
  return w.bytes;
}

Bitstream Bitstream::deserialize(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  const std::uint8_t* magic = r.take(4);
  if (std::memcmp(magic, "SCBS", 4) != 0) {
    throw std::runtime_error("bitstream: bad magic");
  }
  Bitstream bs;
  bs.version = r.u16();
  if (bs.version != 1) {
    throw std::runtime_error("bitstream: unsupported version " +
                             std::to_string(bs.version));
  }
  bs.channels = r.u8();
  bs.config.sample_rate = static_cast<int>(r.u32());
  bs.config.fft = static_cast<int>(r.u32());
  bs.config.hop = static_cast<int>(r.u32());
  bs.config.bands = r.u16();
  bs.config.rvq_stages = r.u16();
  bs.config.codebook_size = static_cast<int>(r.u32());
  bs.config.crf_l = r.u16();
  bs.config.crf_k = r.u16();
  bs.config.block_len = static_cast<int>(r.u32());
  bs.config.ref_vector_dim = r.u16();
  bs.config.ref_vectorizer = static_cast<RefVectorizer>(r.u8());
  bs.config.ref_mode = static_cast<RefMode>(r.u8());
  bs.config.spatial_mode = static_cast<SpatialMode>(r.u8());
  bs.config.ref_channel = r.u8();
  bs.sample_count = r.u64();
  const std::uint8_t* fp = r.take(16);
  std::copy(fp, fp + 16, bs.codebook_fingerprint.begin());
  bs.frame_count = r.u32();
  bs.config.validate();
  if (bs.channels < 2) {
    throw std::runtime_error("bitstream: channel count must be >= 2");
  }

  const int bins = bs.config.window().bins();
  const int per_frame = bs.config.bands * bs.config.rvq_stages;
  const int bits = bs.config.bits_per_index();
  const int taps = (2 * bs.config.crf_l + 1) * (2 * bs.config.crf_k + 1);
  const int spatial_cplx = (bs.channels - 1) * bs.config.bands * taps;

  if (bs.config.ref_mode == RefMode::subband_rvq) {
    bs.ref_indices.resize(static_cast<std::size_t>(bs.frame_count) * per_frame);
  } else {
    bs.ref_raw.resize(static_cast<std::size_t>(bs.frame_count) * bins);
  }
  const int blocks = bs.blocks();
  if (bs.config.spatial_mode == SpatialMode::rvq) {
    bs.spatial_indices.resize(static_cast<std::size_t>(blocks) * per_frame);
  } else {
    bs.spatial_raw.resize(static_cast<std::size_t>(blocks) * spatial_cplx);
  }

  for (std::uint32_t t = 0; t < bs.frame_count; ++t) {
    try {
      if (bs.config.ref_mode == RefMode::subband_rvq) {
        unpack_indices(r,
                       bs.ref_indices.data() + static_cast<std::size_t>(t) * per_frame,
                       per_frame, bits);
      } else {
        for (int f = 0; f < bins; ++f) {
          const double re = r.f64();
          const double im = r.f64();
          bs.ref_raw[static_cast<std::size_t>(t) * bins + f] = cplx(re, im);
        }
      }
      if (t % static_cast<std::uint32_t>(bs.config.block_len) == 0) {
        const std::uint32_t blk =
            t / static_cast<std::uint32_t>(bs.config.block_len);
        if (bs.config.spatial_mode == SpatialMode::rvq) {
          unpack_indices(
              r, bs.spatial_indices.data() + static_cast<std::size_t>(blk) * per_frame,
              per_frame, bits);
        } else {
          for (int j = 0; j < spatial_cplx; ++j) {
            const double re = r.f64();
            const double im = r.f64();
            bs.spatial_raw[static_cast<std::size_t>(blk) * spatial_cplx + j] =
                cplx(re, im);
          }
        }
      }
    } catch (const std::runtime_error&) {
      throw std::runtime_error(
          "bitstream: truncated payload; last complete frame is " +
          (t == 0 ? std::string("none") : std::to_string(t - 1)) + " of " +
          std::to_string(bs.frame_count) + " frames");
    }
  }
  return bs;
}

void Bitstream::save(const std::string& path) const {
  const auto bytes = serialize();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw std::runtime_error("bitstream: cannot open " + path);
  }
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) {
    throw std::runtime_error("bitstream: write failed: " + path);
  }
}

Bitstream Bitstream::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("bitstream: cannot open " + path);
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

RateReport rate_report(const Bitstream& bs) {
  const CodecConfig& cfg = bs.config;
  RateReport rep;
  rep.header_bytes = 4 + 2 + 1 + 4 + 38 + 16 + 4;

  const int bins = cfg.window().bins();
  const int per_frame = cfg.bands * cfg.rvq_stages;
  const int bits = cfg.bits_per_index();
  const int taps = (2 * cfg.crf_l + 1) * (2 * cfg.crf_k + 1);
  const int spatial_cplx = (bs.channels - 1) * cfg.bands * taps;
  const double duration =
      static_cast<double>(bs.sample_count) / cfg.sample_rate;

  if (cfg.ref_mode == RefMode::subband_rvq) {
    rep.ref_bits_per_second =
        static_cast<double>(cfg.frames_per_second()) * per_frame * bits;
    rep.ref_payload_bytes = bs.frame_count * packed_bytes(per_frame, bits);
  } else {
    rep.ref_payload_bytes =
        static_cast<std::size_t>(bs.frame_count) * bins * 16;
    rep.ref_bits_per_second =
        duration > 0.0 ? static_cast<double>(rep.ref_payload_bytes) * 8.0 / duration
                       : 0.0;
  }
  const double blocks_per_second =
      static_cast<double>(cfg.frames_per_second()) / cfg.block_len;
  if (cfg.spatial_mode == SpatialMode::rvq) {
    rep.spatial_bits_per_second = blocks_per_second * per_frame * bits;
    rep.spatial_payload_bytes =
        static_cast<std::size_t>(bs.blocks()) * packed_bytes(per_frame, bits);
  } else {
    rep.spatial_payload_bytes =
        static_cast<std::size_t>(bs.blocks()) * spatial_cplx * 16;
    rep.spatial_bits_per_second =
        duration > 0.0
            ? static_cast<double>(rep.spatial_payload_bytes) * 8.0 / duration
            : 0.0;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Top-level encode/decode

Bitstream encode(const AudioBuffer& x, const CodecConfig& cfg,
                 const CodebookSet* cbs) {
  cfg.validate();
  x.validate();
  if (x.channels() < 2) {
    throw std::invalid_argument("encode: need at least 2 channels");
  }
  if (x.sample_rate != cfg.sample_rate) {
    throw std::invalid_argument("encode: sample rate does not match config");
  }
  if (cfg.ref_channel >= x.channels()) {
    throw std::invalid_argument("encode: ref_channel out of range");
  }
  if (cfg.needs_codebooks()) {
    if (!cbs) {
      throw std::invalid_argument("encode: quantized modes require codebooks");
    }
    cbs->validate(cfg);
    if (cfg.spatial_mode == SpatialMode::rvq &&
        cbs->spatial_channels(cfg) != x.channels()) {
      throw std::invalid_argument(
          "encode: channel count does not match trained codebooks");
    }
  }

  const SpectrogramTensor X = stft(x, cfg.window());
  const SpectrogramTensor X_ref = X.channel(cfg.ref_channel);

  Bitstream bs;
  bs.channels = static_cast<std::uint8_t>(x.channels());
  bs.config = cfg;
  bs.sample_count = x.length();
  bs.frame_count = static_cast<std::uint32_t>(X.frames);
  if (cbs) bs.codebook_fingerprint = cbs->fingerprint();

  if (cfg.ref_mode == RefMode::subband_rvq) {
    bs.ref_indices = encode_reference(X_ref, cfg, *cbs);
  } else {
    bs.ref_raw.assign(X_ref.values.begin(), X_ref.values.end());
  }

  const CrfTensor W = estimate_spatial_crf(X, cfg);
  if (cfg.spatial_mode == SpatialMode::rvq) {
    bs.spatial_indices = encode_spatial(W, cfg, *cbs);
  } else {
    const int taps = W.taps_per_filter();
    const int spatial_cplx = W.channels_out * cfg.bands * taps;
    bs.spatial_raw.resize(static_cast<std::size_t>(W.blocks()) * spatial_cplx);
    for (int blk = 0; blk < W.blocks(); ++blk) {
      std::size_t pos = static_cast<std::size_t>(blk) * spatial_cplx;
      for (int m = 0; m < W.channels_out; ++m) {
        for (int b = 0; b < cfg.bands; ++b) {
          const std::size_t off = W.filter_offset(m, blk, b);
          for (int j = 0; j < taps; ++j) {
            bs.spatial_raw[pos++] = W.taps[off + static_cast<std::size_t>(j)];
          }
        }
      }
    }
  }
  return bs;
}

AudioBuffer decode(const Bitstream& bs, const CodebookSet* cbs) {
  const CodecConfig& cfg = bs.config;
  cfg.validate();
  if (cfg.needs_codebooks()) {
    if (!cbs) {
      throw std::invalid_argument("decode: quantized modes require codebooks");
    }
    cbs->validate(cfg);
    if (cbs->fingerprint() != bs.codebook_fingerprint) {
      throw std::runtime_error(
          "decode: codebook fingerprint does not match bitstream header");
    }
  }

  const int frames = static_cast<int>(bs.frame_count);
  const int channels = bs.channels;

  // Branch 1: reference channel.
  SpectrogramTensor X_ref;
  if (cfg.ref_mode == RefMode::subband_rvq) {
    X_ref = decode_reference(bs.ref_indices, cfg, *cbs, frames, bs.sample_count);
  } else {
    X_ref = SpectrogramTensor(cfg.window(), 1, frames, cfg.sample_rate,
                              bs.sample_count);
    X_ref.values.assign(bs.ref_raw.begin(), bs.ref_raw.end());
  }

  // Branch 2: complex ratio filters applied to the decoded reference.
  CrfTensor W;
  if (cfg.spatial_mode == SpatialMode::rvq) {
    W = decode_spatial(bs.spatial_indices, cfg, *cbs, channels, frames);
  } else {
    W.channels_out = channels - 1;
    W.frames = frames;
    W.L = cfg.crf_l;
    W.K = cfg.crf_k;
    W.block_len = cfg.block_len;
    W.bands = cfg.band_map();
    const int taps = W.taps_per_filter();
    const int spatial_cplx = W.channels_out * cfg.bands * taps;
    W.taps.assign(static_cast<std::size_t>(W.channels_out) * W.blocks() *
                      cfg.bands * taps,
                  cplx(0.0, 0.0));
    for (int blk = 0; blk < W.blocks(); ++blk) {
      std::size_t pos = static_cast<std::size_t>(blk) * spatial_cplx;
      for (int m = 0; m < W.channels_out; ++m) {
        for (int b = 0; b < cfg.bands; ++b) {
          const std::size_t off = W.filter_offset(m, blk, b);
          for (int j = 0; j < taps; ++j) {
            W.taps[off + static_cast<std::size_t>(j)] = bs.spatial_raw[pos++];
          }
        }
      }
    }
  }

  const SpectrogramTensor X_nonref = apply_crf(W, X_ref);
  const AudioBuffer ref_audio = istft(X_ref);
  const AudioBuffer nonref_audio = istft(X_nonref);

  AudioBuffer out(channels, bs.sample_count, cfg.sample_rate);
  out[cfg.ref_channel] = ref_audio[0];
  int mi = 0;
  for (int c = 0; c < channels; ++c) {
    if (c == cfg.ref_channel) continue;
    out[c] = nonref_audio[mi++];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Codebook training

void collect_training_vectors(const AudioBuffer& x, const CodecConfig& cfg,
                              TrainingVectors& acc) {
  cfg.validate();
  x.validate();
  if (x.channels() < 2) {
    throw std::invalid_argument("collect_training_vectors: need >= 2 channels");
  }
  const int spatial_dim = crf_vector_dim(cfg, x.channels());
  if (acc.ref_bands.empty()) {
    acc.ref_dim = cfg.ref_vector_dim;
    acc.spatial_dim = spatial_dim;
    acc.ref_bands.assign(static_cast<std::size_t>(cfg.bands), {});
    acc.spatial_bands.assign(static_cast<std::size_t>(cfg.bands), {});
  }
  if (acc.spatial_dim != spatial_dim || acc.ref_dim != cfg.ref_vector_dim) {
    throw std::invalid_argument(
        "collect_training_vectors: mixed channel counts or config");
  }

  const SpectrogramTensor X = stft(x, cfg.window());
  const SpectrogramTensor X_ref = X.channel(cfg.ref_channel);
  const RefBandProjector proj = RefBandProjector::make(cfg);
  const BandMap& map = proj.bands();

  std::vector<double> vec(static_cast<std::size_t>(cfg.ref_vector_dim));
  for (int t = 0; t < X.frames; ++t) {
    for (int b = 0; b < cfg.bands; ++b) {
      proj.project(&X_ref.at(0, t, map.band_begin(b)), b, vec.data());
      auto& rows = acc.ref_bands[static_cast<std::size_t>(b)];
      rows.insert(rows.end(), vec.begin(), vec.end());
    }
  }

  const CrfTensor W = estimate_spatial_crf(X, cfg);
  for (int blk = 0; blk < W.blocks(); ++blk) {
    for (int b = 0; b < cfg.bands; ++b) {
      const auto v = flatten_crf_block(W, blk, b);
      auto& rows = acc.spatial_bands[static_cast<std::size_t>(b)];
      rows.insert(rows.end(), v.begin(), v.end());
    }
  }
}

namespace {

// Deterministic row subsample: evenly strided offsets.
std::vector<double> subsample_rows(const std::vector<double>& rows, int dim,
                                   int cap) {
  const int n = static_cast<int>(rows.size()) / dim;
  if (cap <= 0 || n <= cap) return rows;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(cap) * dim);
  for (int i = 0; i < cap; ++i) {
    const int src = static_cast<int>(
        (static_cast<long long>(i) * n) / cap);
    const double* row = rows.data() + static_cast<std::size_t>(src) * dim;
    out.insert(out.end(), row, row + dim);
  }
  return out;
}

}  // namespace

CodebookSet train_codebooks(const TrainingVectors& vectors,
                            const CodecConfig& cfg, const KmeansParams& params,
                            std::uint64_t seed, int sample_cap) {
  if (vectors.ref_bands.empty() || vectors.spatial_bands.empty()) {
    throw std::invalid_argument("train_codebooks: no training vectors");
  }
  CodebookSet out;
  for (int b = 0; b < cfg.bands; ++b) {
    const auto ref =
        subsample_rows(vectors.ref_bands[static_cast<std::size_t>(b)],
                       vectors.ref_dim, sample_cap);
    if (ref.empty()) {
      throw std::invalid_argument("train_codebooks: empty reference band " +
                                  std::to_string(b));
    }
    out.ref_bands.push_back(train_rvq(
        ref.data(), static_cast<int>(ref.size()) / vectors.ref_dim,
        vectors.ref_dim, cfg.rvq_stages, cfg.codebook_size, params,
        mix64(seed ^ (0x1000u + static_cast<std::uint64_t>(b)))));
  }
  for (int b = 0; b < cfg.bands; ++b) {
    const auto sp =
        subsample_rows(vectors.spatial_bands[static_cast<std::size_t>(b)],
                       vectors.spatial_dim, sample_cap);
    if (sp.empty()) {
      throw std::invalid_argument("train_codebooks: empty spatial band " +
                                  std::to_string(b));
    }
    out.spatial_bands.push_back(train_rvq(
        sp.data(), static_cast<int>(sp.size()) / vectors.spatial_dim,
        vectors.spatial_dim, cfg.rvq_stages, cfg.codebook_size, params,
        mix64(seed ^ (0x2000u + static_cast<std::uint64_t>(b)))));
  }
  return out;
}

}  // namespace sac
