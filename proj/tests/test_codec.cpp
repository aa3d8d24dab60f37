// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "sac/codec.hpp"
#include "sac/metrics.hpp"
#include "testutil.hpp"

using namespace sac;

namespace {

// Small, fast configuration for unit tests.
CodecConfig small_config() {
  CodecConfig cfg;
  cfg.codebook_size = 16;
  cfg.block_len = 5;
  return cfg;
}

AudioBuffer test_mixture(int channels, double seconds, std::uint64_t seed) {
  AudioBuffer x = sactest::random_noise(channels, static_cast<std::size_t>(seconds * 16000), seed);
  // Correlate the channels so CRF estimation has structure to find.
  for (int c = 1; c < channels; ++c) {
    for (std::size_t i = x.length() - 1; i > 0; --i) {
      x[c][i] = 0.5 * x[0][i] + 0.3 * x[0][i - 1] + 0.2 * x[c][i];
    }
  }
  return x;
}

CodebookSet quick_train(const AudioBuffer& x, const CodecConfig& cfg,
                        std::uint64_t seed, int cap = 800) {
  TrainingVectors vectors;
  collect_training_vectors(x, cfg, vectors);
  return train_codebooks(vectors, cfg, KmeansParams{4, 1e-4}, seed, cap);
}

}  // namespace

TEST_CASE("codec config accounting") {
  CodecConfig cfg;
  CHECK(cfg.bits_per_index() == 10);
  CHECK(cfg.frames_per_second() == 50);
  CHECK(cfg.window().bins() == 321);

  cfg.codebook_size = 1000;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = CodecConfig{};
  cfg.hop = 333;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = CodecConfig{};
  cfg.block_len = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("reference band projection has orthonormal rows and is a projection") {
  CodecConfig cfg = small_config();
  for (RefVectorizer mode :
       {RefVectorizer::complex_linear, RefVectorizer::logmag_phase}) {
    cfg.ref_vectorizer = mode;
    const RefBandProjector proj = RefBandProjector::make(cfg);
    const BandMap map = cfg.band_map();

    // Project a random band frame twice: reconstruct-then-project must be the
    // identity on the projected coordinates.
    Rng rng(31);
    for (int b = 0; b < cfg.bands; ++b) {
      std::vector<cplx> bins(static_cast<std::size_t>(map.band_size(b)));
      for (auto& v : bins) v = cplx(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
      std::vector<double> y(static_cast<std::size_t>(cfg.ref_vector_dim));
      proj.project(bins.data(), b, y.data());

      std::vector<cplx> rec(bins.size());
      proj.reconstruct(y.data(), b, rec.data());
      std::vector<double> y2(y.size());
      proj.project(rec.data(), b, y2.data());
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (mode == RefVectorizer::complex_linear) {
          CHECK(y2[i] == doctest::Approx(y[i]).epsilon(1e-9));
        }
      }
    }
  }
}

TEST_CASE("encode is deterministic") {
  const CodecConfig cfg = small_config();
  const AudioBuffer x = test_mixture(3, 0.6, 101);
  const CodebookSet cbs = quick_train(x, cfg, 1);

  const auto b1 = encode(x, cfg, &cbs).serialize();
  const auto b2 = encode(x, cfg, &cbs).serialize();
  CHECK(b1 == b2);
}

TEST_CASE("bitstream serialization round trips byte-exactly") {
  CodecConfig cfg = small_config();
  const AudioBuffer x = test_mixture(3, 0.4, 102);
  const CodebookSet cbs = quick_train(x, cfg, 2);

  for (auto modes : {std::pair{RefMode::subband_rvq, SpatialMode::rvq},
                     std::pair{RefMode::passthrough, SpatialMode::rvq},
                     std::pair{RefMode::subband_rvq, SpatialMode::bypass},
                     std::pair{RefMode::passthrough, SpatialMode::bypass}}) {
    cfg.ref_mode = modes.first;
    cfg.spatial_mode = modes.second;
    const Bitstream bs = encode(x, cfg, cfg.needs_codebooks() ? &cbs : nullptr);
    const auto bytes = bs.serialize();
    const Bitstream back = Bitstream::deserialize(bytes);
    CHECK(back.serialize() == bytes);
    CHECK(back.frame_count == bs.frame_count);
    CHECK(back.channels == bs.channels);
    CHECK(back.sample_count == bs.sample_count);
  }
}

TEST_CASE("truncated payload reports the last complete frame") {
  const CodecConfig cfg = small_config();
  const AudioBuffer x = test_mixture(2, 0.5, 103);
  const CodebookSet cbs = quick_train(x, cfg, 3);
  auto bytes = encode(x, cfg, &cbs).serialize();
  bytes.resize(bytes.size() - 7);
  CHECK_THROWS_WITH_AS(Bitstream::deserialize(bytes),
                       doctest::Contains("last complete frame"),
                       std::runtime_error);
}

TEST_CASE("passthrough carries the reference spectrogram bit-exactly") {
  CodecConfig cfg = small_config();
  cfg.ref_mode = RefMode::passthrough;
  cfg.spatial_mode = SpatialMode::bypass;
  const AudioBuffer x = test_mixture(3, 0.4, 104);

  const Bitstream bs = encode(x, cfg, nullptr);
  const Bitstream back = Bitstream::deserialize(bs.serialize());
  const SpectrogramTensor X_ref = stft(x, cfg.window()).channel(cfg.ref_channel);
  REQUIRE(back.ref_raw.size() == X_ref.values.size());
  for (std::size_t i = 0; i < X_ref.values.size(); ++i) {
    CHECK(back.ref_raw[i] == X_ref.values[i]);
  }
}

TEST_CASE("passthrough+bypass decode equals the estimate/apply/istft pipeline") {
  CodecConfig cfg = small_config();
  cfg.ref_mode = RefMode::passthrough;
  cfg.spatial_mode = SpatialMode::bypass;
  const AudioBuffer x = test_mixture(4, 0.5, 105);

  const Bitstream bs = Bitstream::deserialize(encode(x, cfg, nullptr).serialize());
  const AudioBuffer decoded = decode(bs, nullptr);

  const SpectrogramTensor X = stft(x, cfg.window());
  const CrfTensor W = estimate_spatial_crf(X, cfg);
  const SpectrogramTensor X_ref = X.channel(cfg.ref_channel);
  const AudioBuffer ref_audio = istft(X_ref);
  const AudioBuffer nonref_audio = istft(apply_crf(W, X_ref));

  REQUIRE(decoded.channels() == 4);
  REQUIRE(decoded.length() == x.length());
  CHECK(sactest::max_rel_err(ref_audio[0], decoded[cfg.ref_channel]) <= 1e-12);
  int mi = 0;
  for (int c = 0; c < 4; ++c) {
    if (c == cfg.ref_channel) continue;
    CHECK(sactest::max_rel_err(nonref_audio[mi], decoded[c]) <= 1e-12);
    ++mi;
  }
}

TEST_CASE("rate accounting matches the per-frame index formula") {
  CodecConfig cfg;  // paper defaults: 1024 entries, 2 stages, 6 bands
  const AudioBuffer x = test_mixture(2, 10.0, 106);
  const CodebookSet cbs = quick_train(x, cfg, 4, 1200);

  const Bitstream bs = encode(x, cfg, &cbs);
  const RateReport rate = rate_report(bs);

  // Reference branch: 50 frames/s x 6 bands x 2 stages x 10 bits.
  CHECK(rate.ref_bits_per_second == 6000.0);
  // 120 bits per frame is exactly 15 bytes; payload byte count confirms it.
  CHECK(rate.ref_payload_bytes == static_cast<std::size_t>(bs.frame_count) * 15);
  // Spatial branch at the default block_len of 10: 5 blocks/s x 120 bits.
  CHECK(rate.spatial_bits_per_second == 600.0);
  CHECK(rate.spatial_payload_bytes == static_cast<std::size_t>(bs.blocks()) * 15);

  // Serialized size decomposes into header + the two branch payloads.
  CHECK(bs.serialize().size() ==
        rate.header_bytes + rate.ref_payload_bytes + rate.spatial_payload_bytes);

  // Per-frame spatial codes (block_len 1) give the 6+6=12 kbps total.
  CodecConfig per_frame = cfg;
  per_frame.block_len = 1;
  const RateReport rate12 = rate_report(encode(x, per_frame, &cbs));
  CHECK(rate12.ref_bits_per_second == 6000.0);
  CHECK(rate12.spatial_bits_per_second == 6000.0);
  CHECK(rate12.total_kbps() == 12.0);
}

TEST_CASE("decode refuses mismatched codebooks") {
  const CodecConfig cfg = small_config();
  const AudioBuffer x = test_mixture(2, 0.4, 107);
  const CodebookSet cbs = quick_train(x, cfg, 5);
  const CodebookSet other = quick_train(x, cfg, 6);

  const Bitstream bs = encode(x, cfg, &cbs);
  CHECK_THROWS_WITH_AS(decode(bs, &other), doctest::Contains("fingerprint"),
                       std::runtime_error);
  CHECK_THROWS_AS(decode(bs, nullptr), std::invalid_argument);
}

TEST_CASE("encode validates channels and codebooks") {
  const CodecConfig cfg = small_config();
  const AudioBuffer x = test_mixture(3, 0.4, 108);
  const CodebookSet cbs = quick_train(x, cfg, 7);

  CHECK_THROWS_AS(encode(x, cfg, nullptr), std::invalid_argument);

  const AudioBuffer wrong = test_mixture(5, 0.4, 109);
  CHECK_THROWS_AS(encode(wrong, cfg, &cbs), std::invalid_argument);

  AudioBuffer mono(1, 6400);
  CHECK_THROWS_AS(encode(mono, cfg, &cbs), std::invalid_argument);

  AudioBuffer bad_rate = x;
  bad_rate.sample_rate = 8000;
  CHECK_THROWS_AS(encode(bad_rate, cfg, &cbs), std::invalid_argument);
}

TEST_CASE("decoded reference channel is independent of the spatial payload") {
  const CodecConfig cfg = small_config();
  const AudioBuffer x = test_mixture(3, 0.5, 110);
  const CodebookSet cbs = quick_train(x, cfg, 8);

  Bitstream bs = encode(x, cfg, &cbs);
  const AudioBuffer a = decode(bs, &cbs);
  for (auto& idx : bs.spatial_indices) {
    idx = static_cast<std::uint16_t>((idx + 7) % cfg.codebook_size);
  }
  const AudioBuffer b = decode(bs, &cbs);

  for (std::size_t i = 0; i < a.length(); ++i) {
    CHECK(a[cfg.ref_channel][i] == b[cfg.ref_channel][i]);
  }
}

TEST_CASE("quantized spatial branch cannot beat bypass reconstruction") {
  CodecConfig cfg = small_config();
  cfg.ref_mode = RefMode::passthrough;
  const AudioBuffer x = test_mixture(3, 0.6, 111);
  const CodebookSet cbs = quick_train(x, cfg, 9);

  cfg.spatial_mode = SpatialMode::bypass;
  const AudioBuffer bypass = decode(encode(x, cfg, nullptr), nullptr);
  cfg.spatial_mode = SpatialMode::rvq;
  const AudioBuffer quantized = decode(encode(x, cfg, &cbs), &cbs);

  // Compare non-reference reconstruction SNR.
  AudioBuffer truth;
  AudioBuffer got_bypass, got_quant;
  truth.sample_rate = got_bypass.sample_rate = got_quant.sample_rate = 16000;
  for (int c = 0; c < 3; ++c) {
    if (c == cfg.ref_channel) continue;
    truth.samples.push_back(x[c]);
    got_bypass.samples.push_back(bypass[c]);
    got_quant.samples.push_back(quantized[c]);
  }
  CHECK(snr_db(truth, got_bypass) >= snr_db(truth, got_quant) - 1e-9);
}

TEST_CASE("two-stage CRF quantization distortion does not exceed one stage") {
  CodecConfig cfg = small_config();
  const AudioBuffer x = test_mixture(3, 0.7, 112);
  TrainingVectors vectors;
  collect_training_vectors(x, cfg, vectors);

  for (int b = 0; b < cfg.bands; ++b) {
    const auto& rows = vectors.spatial_bands[static_cast<std::size_t>(b)];
    const int n = static_cast<int>(rows.size()) / vectors.spatial_dim;
    const RvqCoder one = train_rvq(rows.data(), n, vectors.spatial_dim, 1,
                                   cfg.codebook_size, KmeansParams{6, 1e-5}, 21);
    const RvqCoder two = train_rvq(rows.data(), n, vectors.spatial_dim, 2,
                                   cfg.codebook_size, KmeansParams{6, 1e-5}, 21);
    const double d1 = rvq_distortion(rows.data(), n, vectors.spatial_dim, one);
    const double d2 = rvq_distortion(rows.data(), n, vectors.spatial_dim, two);
    CHECK(d2 <= d1 * (1.0 + 1e-12));
  }
}

TEST_CASE("trained reference branch beats predicting silence on held-out speech") {
  CodecConfig cfg;  // full 1024-entry configuration
  TrainingVectors vectors;
  for (int i = 0; i < 6; ++i) {
    collect_training_vectors(
        sactest::reverberant_render(i, 5555, 0.2, 0.5, 1.5).mixture, cfg, vectors);
  }
  const CodebookSet cbs =
      train_codebooks(vectors, cfg, KmeansParams{6, 1e-5}, 1, 2500);

  double snr_sum = 0.0;
  for (int i = 6; i < 9; ++i) {
    const AudioBuffer x =
        sactest::reverberant_render(i, 5555, 0.2, 0.5, 1.5).mixture;
    const AudioBuffer decoded = decode(encode(x, cfg, &cbs), &cbs);
    snr_sum += snr_db(x.channel(cfg.ref_channel), decoded.channel(cfg.ref_channel));
  }
  CHECK(snr_sum / 3.0 > 0.0);
}

TEST_CASE("codebook files round trip with a stable fingerprint") {
  const CodecConfig cfg = small_config();
  const AudioBuffer x = test_mixture(2, 0.4, 113);
  const CodebookSet cbs = quick_train(x, cfg, 10);

  const std::string dir = sactest::temp_dir("codec_cbs");
  cbs.save(dir + "/cb.scqb");
  const CodebookSet back = CodebookSet::load(dir + "/cb.scqb");
  CHECK(back.fingerprint() == cbs.fingerprint());
  CHECK(back.ref_bands.size() == cbs.ref_bands.size());
  CHECK(back.spatial_channels(cfg) == 2);
}
