// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: dataset simulation, codebook training, encoding,
// decoding, and spatial metric evaluation.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sac/audio.hpp"
#include "sac/codec.hpp"
#include "sac/config.hpp"
#include "sac/metrics.hpp"
#include "sac/room.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  bool has_seed = false;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path,
                  "key=value run configuration file");
  cmd->add_option("--set", opts.overrides,
                  "override a config key (key=value, repeatable)");
  cmd->add_option("--seed", opts.seed, "override the run seed")
      ->each([&opts](const std::string&) { opts.has_seed = true; });
}

sac::RunConfig load_config(const CommonOpts& opts) {
  sac::RunConfig cfg;
  if (!opts.config_path.empty()) {
    cfg = sac::RunConfig::from_file(opts.config_path);
  }
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("--set expects key=value, got: " + kv);
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opts.has_seed) cfg.seed = opts.seed;
  cfg.codec.validate();
  return cfg;
}

int run_simulate(const CommonOpts& common, const std::string& corpus,
                 const std::string& out_dir, int n) {
  const sac::RunConfig cfg = load_config(common);
  fs::create_directories(out_dir);
  const sac::Manifest manifest =
      sac::generate_dataset(corpus, n, cfg.dataset, cfg.seed, out_dir);
  cfg.write_echo((fs::path(out_dir) / "effective.cfg").string());

  double rt60_sum = 0.0;
  int histogram[6] = {0, 0, 0, 0, 0, 0};
  for (const auto& it : manifest.items) {
    rt60_sum += it.rt60_s;
    int bin = std::min(5, static_cast<int>(it.doa_deg / 30.0));
    ++histogram[bin];
  }
  std::printf("simulate: %zu items -> %s\n", manifest.items.size(),
              out_dir.c_str());
  std::printf("mean rt60: %.3f s\n",
              rt60_sum / static_cast<double>(manifest.items.size()));
  std::printf("doa histogram (30 deg bins): ");
  for (int b = 0; b < 6; ++b) std::printf("%d ", histogram[b]);
  std::printf("\n");
  return 0;
}

int run_train(const CommonOpts& common, const std::string& manifest_path,
              const std::string& out_path) {
  const sac::RunConfig cfg = load_config(common);
  const sac::Manifest manifest = sac::Manifest::read(manifest_path);
  if (manifest.items.empty()) {
    throw std::runtime_error("train-codebooks: manifest has no items");
  }
  const fs::path base = fs::path(manifest_path).parent_path();

  sac::TrainingVectors vectors;
  for (const auto& it : manifest.items) {
    const sac::AudioBuffer x =
        sac::read_wav((base / it.mixture_path).string(), cfg.codec.sample_rate);
    sac::collect_training_vectors(x, cfg.codec, vectors);
  }
  const sac::CodebookSet cbs =
      sac::train_codebooks(vectors, cfg.codec, cfg.kmeans_params(), cfg.seed,
                           cfg.kmeans_sample_cap);
  cbs.save(out_path);
  cfg.write_echo(out_path + ".cfg");

  const auto fp = cbs.fingerprint();
  std::printf("train-codebooks: %d+%d band coders (%d stages x %d entries) -> %s\n",
              static_cast<int>(cbs.ref_bands.size()),
              static_cast<int>(cbs.spatial_bands.size()), cfg.codec.rvq_stages,
              cfg.codec.codebook_size, out_path.c_str());
  std::printf("fingerprint: ");
  for (auto b : fp) std::printf("%02x", b);
  std::printf("\n");
  return 0;
}

int run_encode(const CommonOpts& common, const std::string& codebooks,
               const std::string& in_path, const std::string& out_path) {
  const sac::RunConfig cfg = load_config(common);
  sac::CodebookSet cbs;
  const bool need_cbs = cfg.codec.needs_codebooks();
  if (need_cbs) {
    if (codebooks.empty()) {
      throw std::runtime_error("encode: quantized modes require --codebooks");
    }
    cbs = sac::CodebookSet::load(codebooks);
  }
  const sac::AudioBuffer x = sac::read_wav(in_path, cfg.codec.sample_rate);
  const sac::Bitstream bs =
      sac::encode(x, cfg.codec, need_cbs ? &cbs : nullptr);
  bs.save(out_path);

  const sac::RateReport rate = sac::rate_report(bs);
  std::printf("encode: %s -> %s (%u frames, %d channels)\n", in_path.c_str(),
              out_path.c_str(), bs.frame_count, bs.channels);
  std::printf("payload rate: ref %.3f kbps + spatial %.3f kbps = %.3f kbps\n",
              rate.ref_bits_per_second / 1000.0,
              rate.spatial_bits_per_second / 1000.0, rate.total_kbps());
  std::printf("payload bytes: ref %zu, spatial %zu; header %zu\n",
              rate.ref_payload_bytes, rate.spatial_payload_bytes,
              rate.header_bytes);
  return 0;
}

int run_decode(const std::string& codebooks, const std::string& in_path,
               const std::string& out_path) {
  const sac::Bitstream bs = sac::Bitstream::load(in_path);
  sac::CodebookSet cbs;
  const bool need_cbs = bs.config.needs_codebooks();
  if (need_cbs) {
    if (codebooks.empty()) {
      throw std::runtime_error("decode: quantized modes require --codebooks");
    }
    cbs = sac::CodebookSet::load(codebooks);
  }
  const sac::AudioBuffer x = sac::decode(bs, need_cbs ? &cbs : nullptr);
  sac::write_wav(out_path, x, sac::WavFormat::float32);
  std::printf("decode: %s -> %s (%d channels, %zu samples)\n", in_path.c_str(),
              out_path.c_str(), x.channels(), x.length());
  return 0;
}

int run_eval(const CommonOpts& common, const std::string& manifest_path,
             const std::string& decoded_dir, const std::string& out_csv,
             const std::string& feature_dump) {
  const sac::RunConfig cfg = load_config(common);
  const sac::Manifest manifest = sac::Manifest::read(manifest_path);
  if (manifest.items.empty()) {
    throw std::runtime_error("eval: manifest has no items");
  }
  const fs::path base = fs::path(manifest_path).parent_path();

  const sac::ArrayGeometry array = cfg.array_at({0.0, 0.0, 0.0});
  const sac::BeamformerBank bank = sac::design_beam_bank(
      array, cfg.metrics.beam_count, cfg.metrics.diagonal_loading,
      cfg.metrics.spec, cfg.codec.sample_rate);

  std::vector<sac::MetricRow> rows;
  std::vector<std::string> failures;
  bool dump_started = false;
  for (const auto& it : manifest.items) {
    try {
      const sac::AudioBuffer x =
          sac::read_wav((base / it.mixture_path).string(), cfg.codec.sample_rate);
      const sac::AudioBuffer x_hat = sac::read_wav(
          (fs::path(decoded_dir) / (it.id + ".wav")).string(),
          cfg.codec.sample_rate);
      if (x.channels() != x_hat.channels() || x.length() != x_hat.length()) {
        throw std::runtime_error("decoded shape does not match original");
      }

      sac::MetricRow row;
      row.id = it.id;
      const sac::SpatialFeature feat_x = sac::spatial_feature(x, bank);
      const sac::SpatialFeature feat_hat = sac::spatial_feature(x_hat, bank);
      row.spatial_similarity = sac::spatial_similarity(feat_x, feat_hat);
      row.rtf_error_rad = sac::rtf_error(x, x_hat, cfg.metrics);
      // Estimation shift of the decoded signal relative to the original, so a
      // perfect reconstruction scores zero regardless of the reverberant
      // estimation floor.
      const double doa_x = sac::music_doa(x, array, cfg.metrics);
      const double doa_hat = sac::music_doa(x_hat, array, cfg.metrics);
      row.doa_error_deg = sac::doa_error(doa_hat, doa_x);
      row.snr_db = sac::snr_db(x, x_hat);
      const sac::AudioBuffer beam_x =
          sac::beamform_to(x, it.doa_deg, array, cfg.metrics);
      const sac::AudioBuffer beam_hat =
          sac::beamform_to(x_hat, it.doa_deg, array, cfg.metrics);
      row.beamformed_snr_db = sac::snr_db(beam_x, beam_hat);
      rows.push_back(row);

      if (!feature_dump.empty()) {
        sac::write_feature_dump_csv(feature_dump, it.id, bank, feat_x,
                                    feat_hat, cfg.feature_dump_freqs,
                                    dump_started);
        dump_started = true;
      }
    } catch (const std::exception& e) {
      failures.push_back(it.id + ": " + e.what());
    }
  }

  sac::write_metric_csv(out_csv, rows);
  cfg.write_echo(out_csv + ".cfg");
  std::printf("eval: %zu/%zu items -> %s\n", rows.size(),
              manifest.items.size(), out_csv.c_str());
  if (!failures.empty()) {
    std::fprintf(stderr, "eval: %zu item(s) failed:\n", failures.size());
    for (const auto& f : failures) std::fprintf(stderr, "  %s\n", f.c_str());
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multichannel spatial audio codec and evaluation toolkit"};
  app.require_subcommand(1);

  CommonOpts common;

  auto* simulate = app.add_subcommand(
      "simulate", "render a reverberant multichannel dataset from a mono corpus");
  std::string corpus, out_dir;
  int n = 0;
  add_common(simulate, common);
  simulate->add_option("--corpus", corpus, "directory of mono 16 kHz WAVs")
      ->required();
  simulate->add_option("--out", out_dir, "output directory")->required();
  simulate->add_option("--n", n, "number of utterances")->required();

  auto* train = app.add_subcommand("train-codebooks",
                                   "train per-band RVQ codebooks from a manifest");
  std::string manifest_path, train_out;
  add_common(train, common);
  train->add_option("--manifest", manifest_path, "dataset manifest")->required();
  train->add_option("--out", train_out, "output codebook file")->required();

  auto* encode = app.add_subcommand("encode", "encode a multichannel WAV");
  std::string codebooks, in_path, out_path;
  add_common(encode, common);
  encode->add_option("--codebooks", codebooks, "trained codebook file");
  encode->add_option("--in", in_path, "input WAV")->required();
  encode->add_option("--out", out_path, "output bitstream")->required();

  auto* decode = app.add_subcommand("decode", "decode a bitstream to WAV");
  std::string dec_codebooks, dec_in, dec_out;
  decode->add_option("--codebooks", dec_codebooks, "trained codebook file");
  decode->add_option("--in", dec_in, "input bitstream")->required();
  decode->add_option("--out", dec_out, "output WAV")->required();

  auto* eval = app.add_subcommand(
      "eval", "compare decoded utterances against the originals");
  std::string eval_manifest, decoded_dir, eval_out, feature_dump;
  add_common(eval, common);
  eval->add_option("--manifest", eval_manifest, "dataset manifest")->required();
  eval->add_option("--decoded-dir", decoded_dir, "directory of <id>.wav decodes")
      ->required();
  eval->add_option("--out", eval_out, "output metric CSV")->required();
  eval->add_option("--feature-dump", feature_dump,
                   "also dump beamspace features to this CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return run_simulate(common, corpus, out_dir, n);
    if (train->parsed()) return run_train(common, manifest_path, train_out);
    if (encode->parsed()) return run_encode(common, codebooks, in_path, out_path);
    if (decode->parsed()) return run_decode(dec_codebooks, dec_in, dec_out);
    if (eval->parsed()) {
      return run_eval(common, eval_manifest, decoded_dir, eval_out, feature_dump);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
