// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "sac/audio.hpp"
#include "sac/room.hpp"
#include "testutil.hpp"

using namespace sac;

namespace {

RoomSpec big_room() {
  RoomSpec room;
  room.dimensions = {12.0, 9.0, 5.0};
  room.array_center = {6.0, 4.5, 2.0};
  room.source_position = {6.0, 7.0, 2.0};
  return room;
}

}  // namespace

TEST_CASE("order-0 simulation yields a single arrival at the geometric delay") {
  RoomSpec room = big_room();
  room.rt60_target = 0.0;
  room.max_image_order = 0;
  // Mic at 3.43 m from the source: 10 ms at c = 343 -> sample 160.
  room.source_position = {6.0, 4.5 + 3.43, 2.0};
  ArrayGeometry array;
  array.positions = {{6.0, 4.5, 2.0}, {6.2, 4.5, 2.0}};

  const RIRSet rirs = simulate_rir(room, array, 16000);
  const auto& h = rirs.responses[0];
  int peak = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (std::abs(h[i]) > std::abs(h[static_cast<std::size_t>(peak)])) {
      peak = static_cast<int>(i);
    }
  }
  CHECK(peak == 160);
  const double expected = 1.0 / (4.0 * sactest::kPi * 3.43);
  CHECK(h[160] == doctest::Approx(expected).epsilon(1e-9));
  // Exact integer delay: the windowed sinc collapses to one tap.
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (i != 160) CHECK(std::abs(h[i]) < 1e-12);
  }
}

TEST_CASE("full absorption leaves only the direct path regardless of order") {
  RoomSpec room = big_room();
  room.rt60_target = 0.0;  // absorption 1
  room.max_image_order = 6;
  const ArrayGeometry array =
      ArrayGeometry::linear(ArrayGeometry::default_spacings(), room.array_center);
  const RIRSet rirs = simulate_rir(room, array, 16000);

  RoomSpec direct_only = room;
  direct_only.max_image_order = 0;
  const RIRSet direct = simulate_rir(direct_only, array, 16000);

  for (int m = 0; m < array.channels(); ++m) {
    const auto& a = rirs.responses[static_cast<std::size_t>(m)];
    const auto& b = direct.responses[static_cast<std::size_t>(m)];
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(a[i] - b[i]) < 1e-12);
    }
    for (std::size_t i = n; i < a.size(); ++i) {
      CHECK(std::abs(a[i]) < 1e-12);
    }
  }
}

TEST_CASE("simulated decay matches the RT60 target within 20 percent") {
  RoomSpec room;
  room.dimensions = {7.0, 6.0, 3.2};
  room.array_center = {2.5, 3.0, 1.5};
  room.source_position = {5.0, 3.5, 1.6};
  room.rt60_target = 0.5;
  const ArrayGeometry array =
      ArrayGeometry::linear(ArrayGeometry::default_spacings(), room.array_center);

  const RIRSet rirs = simulate_rir(room, array, 16000);
  const double rt60 = sactest::schroeder_rt60(rirs.responses[0], 16000);
  CHECK(rt60 == doctest::Approx(0.5).epsilon(0.2));
}

TEST_CASE("incremental energy per reflection-order group decays under strong absorption") {
  // Holds when absorption dominates the image-count growth; livelier rooms
  // legitimately put more energy in the first reflection groups than in the
  // direct path.
  RoomSpec room;
  room.dimensions = {7.0, 6.0, 3.2};
  room.array_center = {2.5, 3.0, 1.5};
  room.source_position = {5.0, 3.5, 1.6};
  room.rt60_target = 0.3;
  const ArrayGeometry array =
      ArrayGeometry::linear(ArrayGeometry::default_spacings(), room.array_center);

  double prev_total = 0.0;
  double prev_delta = -1.0;
  for (int order = 0; order <= 5; ++order) {
    room.max_image_order = order;
    const RIRSet rirs = simulate_rir(room, array, 16000);
    double energy = 0.0;
    for (double v : rirs.responses[0]) energy += v * v;
    const double delta = energy - prev_total;
    if (prev_delta >= 0.0) {
      CHECK(delta <= prev_delta * (1.0 + 1e-9));
    }
    prev_delta = delta;
    prev_total = energy;
  }
}

TEST_CASE("direct-path arrival time matches geometry per channel") {
  RoomSpec room = big_room();
  room.rt60_target = 0.3;
  const ArrayGeometry array =
      ArrayGeometry::linear(ArrayGeometry::default_spacings(), room.array_center);
  const RIRSet rirs = simulate_rir(room, array, 16000);

  for (int m = 0; m < array.channels(); ++m) {
    const auto& h = rirs.responses[static_cast<std::size_t>(m)];
    std::size_t first = 0;
    const double peak = sactest::max_abs(h);
    while (first < h.size() && std::abs(h[first]) < 1e-3 * peak) ++first;
    const auto& p = array.positions[static_cast<std::size_t>(m)];
    const double dx = p[0] - room.source_position[0];
    const double dy = p[1] - room.source_position[1];
    const double dz = p[2] - room.source_position[2];
    const double expected = std::sqrt(dx * dx + dy * dy + dz * dz) / 343.0 * 16000.0;
    // Within the fractional-delay kernel half-width.
    CHECK(std::abs(static_cast<double>(first) - expected) <= 41.0);
  }
}

TEST_CASE("synthesize_mixture with unit deltas reproduces the source") {
  const AudioBuffer s = sactest::make_speech_like(0.2, 42);
  RIRSet rirs;
  rirs.sample_rate = 16000;
  rirs.responses = {{1.0}, {1.0}, {1.0}};
  const AudioBuffer x = synthesize_mixture(s, rirs, 0.99);

  REQUIRE(x.channels() == 3);
  REQUIRE(x.length() == s.length());
  const double gain = 0.99 / sactest::max_abs(s[0]);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < s.length(); ++i) {
      CHECK(x[c][i] == doctest::Approx(s[0][i] * gain).epsilon(1e-9));
    }
  }
}

TEST_CASE("synthesize_mixture with delayed deltas shifts per channel") {
  const AudioBuffer s = sactest::make_speech_like(0.1, 43);
  RIRSet rirs;
  rirs.sample_rate = 16000;
  rirs.responses = {{1.0}, {0.0, 0.0, 1.0}};
  const AudioBuffer x = synthesize_mixture(s, rirs, 0.5);

  const double gain = 0.5 / sactest::max_abs(s[0]);
  for (std::size_t i = 0; i + 2 < x.length(); ++i) {
    CHECK(x[1][i + 2] == doctest::Approx(s[0][i] * gain).epsilon(1e-9));
  }
}

TEST_CASE("fft convolution matches naive convolution") {
  const AudioBuffer s = sactest::random_noise(1, 700, 7);
  sac::Rng rng(99);
  RIRSet rirs;
  rirs.sample_rate = 16000;
  rirs.responses.emplace_back();
  for (int i = 0; i < 37; ++i) rirs.responses[0].push_back(rng.uniform(-1.0, 1.0));

  const AudioBuffer got = synthesize_mixture(s, rirs, 0.99);
  const auto naive = sactest::naive_convolve(s[0], rirs.responses[0]);
  const double gain = 0.99 / sactest::max_abs(naive);
  std::vector<double> expect(naive.size());
  for (std::size_t i = 0; i < naive.size(); ++i) expect[i] = naive[i] * gain;
  CHECK(sactest::max_rel_err(expect, got[0]) <= 1e-6);
}

TEST_CASE("mixture errors") {
  AudioBuffer s = sactest::make_speech_like(0.05, 1);
  RIRSet rirs;
  rirs.sample_rate = 8000;
  rirs.responses = {{1.0}};
  CHECK_THROWS_AS(synthesize_mixture(s, rirs), std::invalid_argument);

  rirs.sample_rate = 16000;
  AudioBuffer stereo(2, 100);
  CHECK_THROWS_AS(synthesize_mixture(stereo, rirs), std::invalid_argument);
}

TEST_CASE("ground truth DoA follows the axis convention") {
  const ArrayGeometry array =
      ArrayGeometry::linear(ArrayGeometry::default_spacings(), {5.0, 5.0, 2.0});
  CHECK(ground_truth_doa_deg(array, {9.0, 5.0, 2.0}) == doctest::Approx(0.0));
  CHECK(ground_truth_doa_deg(array, {1.0, 5.0, 2.0}) == doctest::Approx(180.0));
  CHECK(ground_truth_doa_deg(array, {5.0, 9.0, 2.0}) == doctest::Approx(90.0));
  CHECK(ground_truth_doa_deg(array, {5.0 + 1.0, 5.0 + 1.0, 2.0}) ==
        doctest::Approx(45.0));
}

TEST_CASE("geometry validation") {
  RoomSpec room = big_room();
  ArrayGeometry array =
      ArrayGeometry::linear(ArrayGeometry::default_spacings(), room.array_center);

  RoomSpec bad = room;
  bad.rt60_target = 0.8;
  CHECK_THROWS_AS(simulate_rir(bad, array, 16000), std::invalid_argument);

  bad = room;
  bad.source_position = {-1.0, 1.0, 1.0};
  CHECK_THROWS_AS(simulate_rir(bad, array, 16000), std::invalid_argument);

  ArrayGeometry outside =
      ArrayGeometry::linear(ArrayGeometry::default_spacings(), {11.95, 4.0, 2.0});
  CHECK_THROWS_AS(simulate_rir(room, outside, 16000), std::invalid_argument);

  ArrayGeometry dup;
  dup.positions = {{1.0, 1.0, 1.0}, {1.0, 1.0, 1.0}};
  CHECK_THROWS_AS(dup.validate(), std::invalid_argument);
}

TEST_CASE("generate_dataset is reproducible and respects its ranges") {
  const std::string corpus = sactest::temp_dir("room_corpus");
  for (int i = 0; i < 3; ++i) {
    write_wav(corpus + "/s" + std::to_string(i) + ".wav",
              sactest::make_speech_like(0.3, 100 + static_cast<std::uint64_t>(i)),
              WavFormat::pcm16);
  }

  DatasetConfig config;
  config.rt60_min = 0.0;
  config.rt60_max = 0.7;
  const std::string out1 = sactest::temp_dir("room_ds1");
  const std::string out2 = sactest::temp_dir("room_ds2");
  const Manifest m1 = generate_dataset(corpus, 4, config, 77, out1);
  const Manifest m2 = generate_dataset(corpus, 4, config, 77, out2);

  CHECK(sactest::read_file_bytes(out1 + "/manifest.tsv") ==
        sactest::read_file_bytes(out2 + "/manifest.tsv"));
  for (const auto& it : m1.items) {
    CHECK(sactest::read_file_bytes(out1 + "/" + it.rir_path) ==
          sactest::read_file_bytes(out2 + "/" + it.rir_path));
    CHECK(sactest::read_file_bytes(out1 + "/" + it.mixture_path) ==
          sactest::read_file_bytes(out2 + "/" + it.mixture_path));
    CHECK(it.rt60_s >= 0.0);
    CHECK(it.rt60_s <= 0.7);
    CHECK(it.doa_deg >= 0.0);
    CHECK(it.doa_deg <= 180.0);
  }

  const Manifest reread = Manifest::read(out1 + "/manifest.tsv");
  REQUIRE(reread.items.size() == m1.items.size());
  CHECK(reread.items[0].id == m1.items[0].id);
  CHECK(reread.items[2].doa_deg == doctest::Approx(m1.items[2].doa_deg).epsilon(1e-6));

  // A different seed changes the data.
  const std::string out3 = sactest::temp_dir("room_ds3");
  generate_dataset(corpus, 4, config, 78, out3);
  CHECK(sactest::read_file_bytes(out1 + "/manifest.tsv") !=
        sactest::read_file_bytes(out3 + "/manifest.tsv"));
}

TEST_CASE("generate_dataset rejects an empty corpus") {
  const std::string corpus = sactest::temp_dir("room_empty");
  const std::string out = sactest::temp_dir("room_empty_out");
  DatasetConfig config;
  CHECK_THROWS_AS(generate_dataset(corpus, 2, config, 1, out),
                  std::runtime_error);
}
