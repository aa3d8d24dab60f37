// SPDX-License-Identifier: Apache-2.0
#include "sac/room.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstring>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "sac/rng.hpp"

namespace sac {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kSincHalfWidth = 40;  // 81-tap fractional delay kernel

double dist(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

// Hann-windowed sinc centered at fractional sample position `p`.
void add_tap(std::vector<double>& h, double p, double amplitude) {
  const int lo = std::max(0, static_cast<int>(std::ceil(p)) - kSincHalfWidth);
  const int hi = std::min(static_cast<int>(h.size()) - 1,
                          static_cast<int>(std::floor(p)) + kSincHalfWidth);
  for (int n = lo; n <= hi; ++n) {
    const double x = n - p;
    if (std::abs(x) > kSincHalfWidth) continue;
    const double w = 0.5 * (1.0 + std::cos(kPi * x / (kSincHalfWidth + 1)));
    h[static_cast<std::size_t>(n)] += amplitude * sinc(x) * w;
  }
}

bool inside(const Vec3& p, const Vec3& dims) {
  return p[0] > 0.0 && p[0] < dims[0] && p[1] > 0.0 && p[1] < dims[1] &&
         p[2] > 0.0 && p[2] < dims[2];
}

std::mutex& fft_mutex() {
  static std::mutex m;
  return m;
}

// Linear convolution via one zero-padded real FFT.
std::vector<double> fft_convolve(const std::vector<double>& a,
                                 const std::vector<double>& b) {
  const std::size_t out_len = a.size() + b.size() - 1;
  std::size_t n = 1;
  while (n < out_len) n <<= 1;

  std::lock_guard<std::mutex> lock(fft_mutex());
  double* buf = fftw_alloc_real(n);
  fftw_complex* fa = fftw_alloc_complex(n / 2 + 1);
  fftw_complex* fb = fftw_alloc_complex(n / 2 + 1);
  fftw_plan fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n), buf, fa,
                                       FFTW_ESTIMATE);
  fftw_plan inv = fftw_plan_dft_c2r_1d(static_cast<int>(n), fa, buf,
                                       FFTW_ESTIMATE);

  std::fill(buf, buf + n, 0.0);
  std::copy(a.begin(), a.end(), buf);
  fftw_execute(fwd);
  std::memcpy(fb, fa, sizeof(fftw_complex) * (n / 2 + 1));

  std::fill(buf, buf + n, 0.0);
  std::copy(b.begin(), b.end(), buf);
  fftw_execute(fwd);

  for (std::size_t k = 0; k <= n / 2; ++k) {
    const double re = fa[k][0] * fb[k][0] - fa[k][1] * fb[k][1];
    const double im = fa[k][0] * fb[k][1] + fa[k][1] * fb[k][0];
    fa[k][0] = re;
    fa[k][1] = im;
  }
  fftw_execute(inv);

  std::vector<double> out(out_len);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = buf[i] * scale;

  fftw_destroy_plan(fwd);
  fftw_destroy_plan(inv);
  fftw_free(buf);
  fftw_free(fa);
  fftw_free(fb);
  return out;
}

std::string format_double(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

Vec3 ArrayGeometry::centroid() const {
  Vec3 c{0.0, 0.0, 0.0};
  for (const auto& p : positions) {
    c[0] += p[0];
    c[1] += p[1];
    c[2] += p[2];
  }
  const double inv = 1.0 / static_cast<double>(positions.size());
  return {c[0] * inv, c[1] * inv, c[2] * inv};
}

Vec3 ArrayGeometry::axis() const {
  const Vec3& a = positions.front();
  const Vec3& b = positions.back();
  Vec3 d{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  const double norm = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
  if (norm <= 0.0) {
    throw std::invalid_argument("ArrayGeometry: degenerate axis");
  }
  return {d[0] / norm, d[1] / norm, d[2] / norm};
}

void ArrayGeometry::validate() const {
  if (positions.empty()) {
    throw std::invalid_argument("ArrayGeometry: no microphones");
  }
  if (reference_index < 0 || reference_index >= channels()) {
    throw std::invalid_argument("ArrayGeometry: reference_index out of range");
  }
  for (std::size_t i = 0; i < positions.size(); ++i) {
    for (std::size_t j = i + 1; j < positions.size(); ++j) {
      if (dist(positions[i], positions[j]) <= 0.0) {
        throw std::invalid_argument("ArrayGeometry: coincident microphones");
      }
    }
  }
}

ArrayGeometry ArrayGeometry::linear(const std::vector<double>& spacings_m,
                                    const Vec3& center, int reference_index) {
  ArrayGeometry g;
  g.reference_index = reference_index;
  std::vector<double> offset(spacings_m.size() + 1, 0.0);
  for (std::size_t i = 0; i < spacings_m.size(); ++i) {
    offset[i + 1] = offset[i] + spacings_m[i];
  }
  const double mid = offset.back() / 2.0;
  for (double o : offset) {
    g.positions.push_back({center[0] + o - mid, center[1], center[2]});
  }
  g.validate();
  return g;
}

std::vector<double> ArrayGeometry::default_spacings() {
  return {0.02, 0.02, 0.02, 0.14, 0.02, 0.02, 0.02};
}

void RoomSpec::validate(const ArrayGeometry& array) const {
  for (double d : dimensions) {
    if (d <= 0.0) {
      throw std::invalid_argument("RoomSpec: non-positive dimension");
    }
  }
  if (rt60_target < 0.0 || rt60_target > 0.7) {
    throw std::invalid_argument("RoomSpec: rt60_target outside [0, 0.7]");
  }
  if (!inside(source_position, dimensions)) {
    throw std::invalid_argument("RoomSpec: source outside room");
  }
  for (const auto& p : array.positions) {
    if (!inside(p, dimensions)) {
      throw std::invalid_argument("RoomSpec: microphone outside room");
    }
  }
  if (speed_of_sound <= 0.0) {
    throw std::invalid_argument("RoomSpec: speed_of_sound must be positive");
  }
}

RIRSet simulate_rir(const RoomSpec& room, const ArrayGeometry& array,
                    int sample_rate) {
  array.validate();
  room.validate(array);
  if (sample_rate <= 0) {
    throw std::invalid_argument("simulate_rir: bad sample rate");
  }

  const Vec3 L = room.dimensions;
  const double c = room.speed_of_sound;
  const double fs = sample_rate;

  // Uniform absorption from Sabine's formula; rt60 0 means fully absorptive.
  const double volume = L[0] * L[1] * L[2];
  const double surface = 2.0 * (L[0] * L[1] + L[0] * L[2] + L[1] * L[2]);
  double beta = 0.0;
  if (room.rt60_target > 0.0) {
    const double alpha =
        std::min(1.0, 0.161 * volume / (surface * room.rt60_target));
    beta = std::sqrt(1.0 - alpha);
  }

  int order = room.max_image_order;
  if (order < 0) {
    if (beta <= 0.0) {
      order = 0;
    } else {
      // Smallest order whose cumulative reflection loss reaches 60 dB.
      order = static_cast<int>(std::ceil(-3.0 / std::log10(beta)));
      order = std::clamp(order, 1, 30);
    }
  }

  struct Arrival {
    double delay_samples;
    double amplitude;
  };
  std::vector<std::vector<Arrival>> arrivals(
      static_cast<std::size_t>(array.channels()));

  const int span = order / 2 + 1;
  double max_delay = 0.0;
  for (int nx = -span; nx <= span; ++nx) {
    for (int ny = -span; ny <= span; ++ny) {
      for (int nz = -span; nz <= span; ++nz) {
        for (int q = 0; q < 8; ++q) {
          const int qx = q & 1, qy = (q >> 1) & 1, qz = (q >> 2) & 1;
          const int refl_x = std::abs(nx - qx) + std::abs(nx);
          const int refl_y = std::abs(ny - qy) + std::abs(ny);
          const int refl_z = std::abs(nz - qz) + std::abs(nz);
          const int refl = refl_x + refl_y + refl_z;
          if (refl > order) continue;
          const double gain_refl = std::pow(beta, refl);
          if (gain_refl <= 0.0 && refl > 0) continue;
          const Vec3 img{
              (1 - 2 * qx) * room.source_position[0] + 2.0 * nx * L[0],
              (1 - 2 * qy) * room.source_position[1] + 2.0 * ny * L[1],
              (1 - 2 * qz) * room.source_position[2] + 2.0 * nz * L[2]};
          for (int m = 0; m < array.channels(); ++m) {
            const double d = dist(img, array.positions[static_cast<std::size_t>(m)]);
            const double delay = d / c * fs;
            const double amp = gain_refl / (4.0 * kPi * std::max(d, 1e-3));
            arrivals[static_cast<std::size_t>(m)].push_back({delay, amp});
            max_delay = std::max(max_delay, delay);
          }
        }
      }
    }
  }

  const std::size_t length =
      static_cast<std::size_t>(std::ceil(max_delay)) + kSincHalfWidth + 2;
  RIRSet out;
  out.sample_rate = sample_rate;
  out.responses.assign(static_cast<std::size_t>(array.channels()),
                       std::vector<double>(length, 0.0));
  for (int m = 0; m < array.channels(); ++m) {
    auto& h = out.responses[static_cast<std::size_t>(m)];
    for (const auto& a : arrivals[static_cast<std::size_t>(m)]) {
      add_tap(h, a.delay_samples, a.amplitude);
    }
  }
  return out;
}

AudioBuffer synthesize_mixture(const AudioBuffer& source, const RIRSet& rirs,
                               double peak) {
  source.validate();
  if (source.channels() != 1) {
    throw std::invalid_argument("synthesize_mixture: source must be mono");
  }
  if (source.length() == 0) {
    throw std::invalid_argument("synthesize_mixture: empty source");
  }
  if (source.sample_rate != rirs.sample_rate) {
    throw std::invalid_argument("synthesize_mixture: sample rate mismatch");
  }
  if (rirs.channels() == 0) {
    throw std::invalid_argument("synthesize_mixture: empty RIR set");
  }

  AudioBuffer out;
  out.sample_rate = source.sample_rate;
  double max_abs = 0.0;
  for (int m = 0; m < rirs.channels(); ++m) {
    auto y = fft_convolve(source[0], rirs.responses[static_cast<std::size_t>(m)]);
    for (double v : y) max_abs = std::max(max_abs, std::abs(v));
    out.samples.push_back(std::move(y));
  }
  if (max_abs > 0.0) {
    const double gain = peak / max_abs;
    for (auto& ch : out.samples) {
      for (double& v : ch) v *= gain;
    }
  }
  return out;
}

double ground_truth_doa_deg(const ArrayGeometry& array, const Vec3& point) {
  const Vec3 axis = array.axis();
  const Vec3 center = array.centroid();
  const Vec3 d{point[0] - center[0], point[1] - center[1],
               point[2] - center[2]};
  const double norm = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
  if (norm <= 0.0) {
    throw std::invalid_argument("ground_truth_doa_deg: point at array center");
  }
  const double cosv =
      std::clamp((d[0] * axis[0] + d[1] * axis[1] + d[2] * axis[2]) / norm,
                 -1.0, 1.0);
  return std::acos(cosv) * 180.0 / kPi;
}

void Manifest::write(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw std::runtime_error("Manifest: cannot open " + path);
  }
  os << "# id\tmixture\trir\tdoa_deg\trt60_s\n";
  for (const auto& it : items) {
    os << it.id << '\t' << it.mixture_path << '\t' << it.rir_path << '\t'
       << format_double(it.doa_deg, 6) << '\t' << format_double(it.rt60_s, 6)
       << '\n';
  }
  if (!os) {
    throw std::runtime_error("Manifest: write failed: " + path);
  }
}

Manifest Manifest::read(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("Manifest: cannot open " + path);
  }
  Manifest m;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    DatasetItem it;
    std::string doa, rt60;
    if (!std::getline(ss, it.id, '\t') ||
        !std::getline(ss, it.mixture_path, '\t') ||
        !std::getline(ss, it.rir_path, '\t') || !std::getline(ss, doa, '\t') ||
        !std::getline(ss, rt60)) {
      throw std::runtime_error("Manifest: malformed line: " + line);
    }
    it.doa_deg = std::stod(doa);
    it.rt60_s = std::stod(rt60);
    m.items.push_back(std::move(it));
  }
  return m;
}

Manifest generate_dataset(const std::string& corpus_dir, int n,
                          const DatasetConfig& config, std::uint64_t seed,
                          const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (n <= 0) {
    throw std::invalid_argument("generate_dataset: n must be positive");
  }

  std::vector<std::string> corpus;
  if (fs::is_directory(corpus_dir)) {
    for (const auto& e : fs::directory_iterator(corpus_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".wav") {
        corpus.push_back(e.path().string());
      }
    }
  }
  std::sort(corpus.begin(), corpus.end());
  if (corpus.empty()) {
    throw std::runtime_error("generate_dataset: no .wav files in " +
                             corpus_dir);
  }

  fs::create_directories(fs::path(out_dir) / "mix");
  fs::create_directories(fs::path(out_dir) / "rir");

  const double half_len =
      std::accumulate(config.array_spacings.begin(),
                      config.array_spacings.end(), 0.0) / 2.0;

  Manifest manifest;
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(i));

    RoomSpec room;
    for (int d = 0; d < 3; ++d) {
      room.dimensions[static_cast<std::size_t>(d)] =
          rng.uniform(config.room_min, config.room_max);
    }
    room.rt60_target = rng.uniform(config.rt60_min, config.rt60_max);

    const double margin = config.placement_margin;
    const Vec3 dims = room.dimensions;
    Vec3 center{
        rng.uniform(margin + half_len, dims[0] - margin - half_len),
        rng.uniform(margin, dims[1] - margin),
        rng.uniform(margin, dims[2] - margin)};
    room.array_center = center;
    ArrayGeometry array = ArrayGeometry::linear(config.array_spacings, center,
                                                config.reference_index);

    bool placed = false;
    for (int attempt = 0; attempt < 10000; ++attempt) {
      Vec3 src{rng.uniform(margin, dims[0] - margin),
               rng.uniform(margin, dims[1] - margin),
               rng.uniform(margin, dims[2] - margin)};
      const double d = dist(src, center);
      if (d >= config.src_dist_min && d <= config.src_dist_max) {
        room.source_position = src;
        placed = true;
        break;
      }
    }
    if (!placed) {
      throw std::runtime_error(
          "generate_dataset: could not place source for item " +
          std::to_string(i));
    }

    const std::string& wav =
        corpus[static_cast<std::size_t>(rng.below(corpus.size()))];
    AudioBuffer src = read_wav(wav, config.sample_rate);
    if (src.channels() != 1) {
      throw std::runtime_error("generate_dataset: corpus file not mono: " +
                               wav);
    }

    RIRSet rirs = simulate_rir(room, array, config.sample_rate);
    AudioBuffer mixture = synthesize_mixture(src, rirs, config.mixture_peak);

    char name[32];
    std::snprintf(name, sizeof(name), "utt_%05d", i);
    DatasetItem item;
    item.id = name;
    item.mixture_path = std::string("mix/") + name + ".wav";
    item.rir_path = std::string("rir/") + name + ".wav";
    item.doa_deg = ground_truth_doa_deg(array, room.source_position);
    item.rt60_s = room.rt60_target;

    AudioBuffer rir_buf;
    rir_buf.sample_rate = config.sample_rate;
    rir_buf.samples = rirs.responses;
    write_wav((fs::path(out_dir) / item.mixture_path).string(), mixture,
              WavFormat::float32);
    write_wav((fs::path(out_dir) / item.rir_path).string(), rir_buf,
              WavFormat::float32);
    manifest.items.push_back(std::move(item));
  }

  manifest.write((fs::path(out_dir) / "manifest.tsv").string());
  return manifest;
}

}  // namespace sac
