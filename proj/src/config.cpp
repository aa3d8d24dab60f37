// SPDX-License-Identifier: Apache-2.0
#include "sac/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sac {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer for " + key + ": " + v);
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for " + key + ": " + v);
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer for " + key + ": " + v);
  }
}

std::vector<double> to_double_list(const std::string& key,
                                   const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(to_double(key, trim(item)));
  }
  if (out.empty()) {
    throw std::invalid_argument("config: empty list for " + key);
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += fmt(v[i]);
  }
  return out;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "seed") {
    seed = to_u64(key, value);
  } else if (key == "sample_rate") {
    codec.sample_rate = to_int(key, value);
    dataset.sample_rate = codec.sample_rate;
  } else if (key == "fft") {
    codec.fft = to_int(key, value);
  } else if (key == "hop") {
    codec.hop = to_int(key, value);
  } else if (key == "bands") {
    codec.bands = to_int(key, value);
  } else if (key == "rvq_stages") {
    codec.rvq_stages = to_int(key, value);
  } else if (key == "codebook_size") {
    codec.codebook_size = to_int(key, value);
  } else if (key == "crf_l") {
    codec.crf_l = to_int(key, value);
  } else if (key == "crf_k") {
    codec.crf_k = to_int(key, value);
  } else if (key == "block_len") {
    codec.block_len = to_int(key, value);
  } else if (key == "ref_vector_dim") {
    codec.ref_vector_dim = to_int(key, value);
  } else if (key == "ref_channel") {
    codec.ref_channel = to_int(key, value);
    dataset.reference_index = codec.ref_channel;
    metrics.ref_channel = codec.ref_channel;
  } else if (key == "ref_vectorizer") {
    if (value == "complex_linear") {
      codec.ref_vectorizer = RefVectorizer::complex_linear;
    } else if (value == "logmag_phase") {
      codec.ref_vectorizer = RefVectorizer::logmag_phase;
    } else {
      throw std::invalid_argument("config: bad ref_vectorizer: " + value);
    }
  } else if (key == "ref_mode") {
    if (value == "subband_rvq") {
      codec.ref_mode = RefMode::subband_rvq;
    } else if (value == "passthrough") {
      codec.ref_mode = RefMode::passthrough;
    } else {
      throw std::invalid_argument("config: bad ref_mode: " + value);
    }
  } else if (key == "spatial_mode") {
    if (value == "rvq") {
      codec.spatial_mode = SpatialMode::rvq;
    } else if (value == "bypass") {
      codec.spatial_mode = SpatialMode::bypass;
    } else {
      throw std::invalid_argument("config: bad spatial_mode: " + value);
    }
  } else if (key == "array_spacings") {
    dataset.array_spacings = to_double_list(key, value);
  } else if (key == "room_min") {
    dataset.room_min = to_double(key, value);
  } else if (key == "room_max") {
    dataset.room_max = to_double(key, value);
  } else if (key == "rt60_min") {
    dataset.rt60_min = to_double(key, value);
  } else if (key == "rt60_max") {
    dataset.rt60_max = to_double(key, value);
  } else if (key == "src_dist_min") {
    dataset.src_dist_min = to_double(key, value);
  } else if (key == "src_dist_max") {
    dataset.src_dist_max = to_double(key, value);
  } else if (key == "placement_margin") {
    dataset.placement_margin = to_double(key, value);
  } else if (key == "mixture_peak") {
    dataset.mixture_peak = to_double(key, value);
  } else if (key == "beam_count") {
    metrics.beam_count = to_int(key, value);
  } else if (key == "beam_delta") {
    metrics.diagonal_loading = to_double(key, value);
  } else if (key == "metric_fft") {
    metrics.spec.fft_size = to_int(key, value);
  } else if (key == "metric_hop") {
    metrics.spec.hop_size = to_int(key, value);
  } else if (key == "music_grid_step") {
    metrics.music_grid_step_deg = to_double(key, value);
  } else if (key == "music_fmin") {
    metrics.music_fmin_hz = to_double(key, value);
  } else if (key == "music_fmax") {
    metrics.music_fmax_hz = to_double(key, value);
  } else if (key == "kmeans_iters") {
    kmeans_iters = to_int(key, value);
  } else if (key == "kmeans_tol") {
    kmeans_tol = to_double(key, value);
  } else if (key == "kmeans_sample_cap") {
    kmeans_sample_cap = to_int(key, value);
  } else if (key == "feature_dump_freqs") {
    feature_dump_freqs = to_double_list(key, value);
  } else {
    throw std::invalid_argument("config: unknown key: " + key);
  }
}

std::string RunConfig::echo() const {
  std::ostringstream os;
  os << "array_spacings=" << join(dataset.array_spacings) << '\n';
  os << "bands=" << codec.bands << '\n';
  os << "beam_count=" << metrics.beam_count << '\n';
  os << "beam_delta=" << fmt(metrics.diagonal_loading) << '\n';
  os << "block_len=" << codec.block_len << '\n';
  os << "codebook_size=" << codec.codebook_size << '\n';
  os << "crf_k=" << codec.crf_k << '\n';
  os << "crf_l=" << codec.crf_l << '\n';
  os << "feature_dump_freqs=" << join(feature_dump_freqs) << '\n';
  os << "fft=" << codec.fft << '\n';
  os << "hop=" << codec.hop << '\n';
  os << "kmeans_iters=" << kmeans_iters << '\n';
  os << "kmeans_sample_cap=" << kmeans_sample_cap << '\n';
  os << "kmeans_tol=" << fmt(kmeans_tol) << '\n';
  os << "metric_fft=" << metrics.spec.fft_size << '\n';
  os << "metric_hop=" << metrics.spec.hop_size << '\n';
  os << "mixture_peak=" << fmt(dataset.mixture_peak) << '\n';
  os << "music_fmax=" << fmt(metrics.music_fmax_hz) << '\n';
  os << "music_fmin=" << fmt(metrics.music_fmin_hz) << '\n';
  os << "music_grid_step=" << fmt(metrics.music_grid_step_deg) << '\n';
  os << "placement_margin=" << fmt(dataset.placement_margin) << '\n';
  os << "ref_channel=" << codec.ref_channel << '\n';
  os << "ref_mode="
     << (codec.ref_mode == RefMode::subband_rvq ? "subband_rvq" : "passthrough")
     << '\n';
  os << "ref_vector_dim=" << codec.ref_vector_dim << '\n';
  os << "ref_vectorizer="
     << (codec.ref_vectorizer == RefVectorizer::complex_linear
             ? "complex_linear"
             : "logmag_phase")
     << '\n';
  os << "room_max=" << fmt(dataset.room_max) << '\n';
  os << "room_min=" << fmt(dataset.room_min) << '\n';
  os << "rt60_max=" << fmt(dataset.rt60_max) << '\n';
  os << "rt60_min=" << fmt(dataset.rt60_min) << '\n';
  os << "rvq_stages=" << codec.rvq_stages << '\n';
  os << "sample_rate=" << codec.sample_rate << '\n';
  os << "seed=" << seed << '\n';
  os << "spatial_mode="
     << (codec.spatial_mode == SpatialMode::rvq ? "rvq" : "bypass") << '\n';
  os << "src_dist_max=" << fmt(dataset.src_dist_max) << '\n';
  os << "src_dist_min=" << fmt(dataset.src_dist_min) << '\n';
  return os.str();
}

void RunConfig::write_echo(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw std::runtime_error("config: cannot write " + path);
  }
  os << echo();
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("config: cannot open " + path);
  }
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: missing '=' at " + path + ":" +
                                  std::to_string(line_no));
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

}  // namespace sac
