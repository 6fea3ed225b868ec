#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <fstream>

#include "helpers.hpp"
#include "passt/embed.hpp"

using namespace passt;
using testutil::TempDir;
using testutil::sine_wave;

namespace {

PasstModel toy_model(std::uint64_t seed = 5, size_t d = 16, size_t layers = 1) {
  EncoderConfig cfg;
  cfg.d = d;
  cfg.n_layers = layers;
  cfg.n_heads = 2;
  cfg.mlp_ratio = 2.0;
  cfg.n_classes = 4;
  return PasstModel::create(cfg, PatchGeometry{}, mel_preset("hop10ms"), seed);
}

// Independent re-implementation of the per-window level assembly.
std::vector<double> direct_assembly(const Waveform& wav, const PasstModel& model,
                                    const LevelSpec& levels) {
  MelSpectrogram mel = log_mel(wav, model.mel);
  std::vector<double> out;
  if (levels.use_l) {
    for (int m = 0; m < mel.n_mels; ++m) {
      double sum = 0.0;
      for (int t = 0; t < mel.n_frames; ++t) sum += mel.at(m, t);
      out.push_back(sum / mel.n_frames);
    }
  }
  if (levels.use_m || levels.use_h) {
    TokenSequence seq = model.tokenize_mel(mel);
    EncoderOutput enc = encoder_forward(seq, model, RunMode::Eval);
    if (levels.use_m)
      out.insert(out.end(), enc.pooled.data().begin(), enc.pooled.data().end());
    if (levels.use_h)
      out.insert(out.end(), enc.logits.data().begin(), enc.logits.data().end());
  }
  return out;
}

}  // namespace

TEST_CASE("window enumeration matches the reference rule") {
  // 30 s at 50% overlap: starts 0,5,10,15,20 -> exactly 5 windows.
  auto w30 = scene_windows(30 * 32000, 10 * 32000, 5 * 32000);
  REQUIRE(w30.size() == 5);
  for (size_t i = 0; i < 5; ++i) {
    CHECK(w30[i].first == i * 5 * 32000);
    CHECK(w30[i].second == w30[i].first + 10 * 32000);
  }

  // Short clips are a single window.
  auto w3 = scene_windows(3 * 32000, 10 * 32000, 5 * 32000);
  REQUIRE(w3.size() == 1);
  CHECK(w3[0] == std::pair<size_t, size_t>(0, 3 * 32000));

  // 12 s leaves a tail -> one full window plus a partial one.
  auto w12 = scene_windows(12 * 32000, 10 * 32000, 5 * 32000);
  REQUIRE(w12.size() == 2);
  CHECK(w12[1].first == 5 * 32000);
  CHECK(w12[1].second == 12 * 32000);

  // Reference enumeration oracle over assorted lengths.
  for (size_t n : {320001ul, 479999ul, 960000ul, 1000000ul, 1234567ul}) {
    auto windows = scene_windows(n, 320000, 160000);
    // full windows first, all stride-aligned
    for (size_t i = 0; i < windows.size(); ++i) {
      CHECK(windows[i].first == i * 160000);
      CHECK(windows[i].second <= n);
      if (i + 1 < windows.size())
        CHECK(windows[i].second == windows[i].first + 320000);
    }
    // coverage reaches the end exactly once
    CHECK(windows.back().second == n);
  }
}

TEST_CASE("scene embedding of a short clip equals the direct assembly bit-exactly") {
  PasstModel model = toy_model();
  Waveform wav = sine_wave(523.0, 2.0, 32000, 0.4);
  LevelSpec levels;
  levels.use_l = true;
  levels.use_m = true;
  levels.use_h = true;
  EmbeddingMatrix scene = scene_embedding(wav, model, levels);
  auto direct = direct_assembly(wav, model, levels);
  REQUIRE(scene.rows == 1);
  REQUIRE(scene.dim == direct.size());
  for (size_t c = 0; c < scene.dim; ++c) {
    float expect = static_cast<float>(direct[c]);
    float got = scene.at(0, c);
    CHECK(std::memcmp(&expect, &got, sizeof(float)) == 0);
  }
}

TEST_CASE("30 s scene embedding averages exactly 5 windows") {
  PasstModel model = toy_model(8);
  Waveform wav = sine_wave(350.0, 30.0, 32000, 0.3);
  // lay a second tone over the second half so windows differ
  Waveform other = sine_wave(1200.0, 30.0, 32000, 0.2);
  for (size_t i = wav.samples.size() / 2; i < wav.samples.size(); ++i)
    wav.samples[i] += other.samples[i];

  LevelSpec levels;
  levels.use_m = true;
  levels.use_h = false;
  EmbeddingMatrix scene = scene_embedding(wav, model, levels, 10.0, 0.5);

  std::vector<std::vector<double>> window_vecs;
  for (size_t k = 0; k < 5; ++k) {
    Waveform cut;
    cut.sample_rate = 32000;
    size_t begin = k * 5 * 32000;
    cut.samples.assign(wav.samples.begin() + begin,
                       wav.samples.begin() + begin + 10 * 32000);
    window_vecs.push_back(direct_assembly(cut, model, levels));
  }
  for (size_t c = 0; c < scene.dim; ++c) {
    std::vector<double> column;
    for (const auto& v : window_vecs) column.push_back(v[c]);
    float expect = static_cast<float>(exact_sum(column) / 5.0);
    float got = scene.at(0, c);
    CHECK(std::memcmp(&expect, &got, sizeof(float)) == 0);
  }
}

TEST_CASE("window averaging is permutation invariant at the bit level") {
  Rng rng(3);
  std::vector<double> column(11);
  for (double& v : column) v = rng.normal(0.0, 2.0);
  double mean1 = exact_sum(column) / 11.0;
  for (int shuffle = 0; shuffle < 20; ++shuffle) {
    auto perm = rng.permutation(column.size());
    std::vector<double> shuffled;
    for (size_t i : perm) shuffled.push_back(column[i]);
    double mean2 = exact_sum(shuffled) / 11.0;
    CHECK(std::memcmp(&mean1, &mean2, sizeof(double)) == 0);
  }
}

TEST_CASE("level dimension arithmetic for the base geometry") {
  EncoderConfig base = encoder_base_config();
  LevelSpec mh;
  mh.use_l = false;
  mh.use_m = true;
  mh.use_h = true;
  CHECK(level_dim(mh, base, 128, false) == 768 + 527);  // 1295

  LevelSpec lm;
  lm.use_l = true;
  lm.use_m = true;
  lm.use_h = false;
  // 2RF concatenates both receptive fields: 2 * (640 + 768) = 2816
  CHECK(2 * level_dim(lm, base, 128, true) == 2816);
}

TEST_CASE("timestamp embeddings: counts, spacing, and 2RF width") {
  PasstModel model = toy_model(9);
  Waveform wav = sine_wave(600.0, 120.0, 32000, 0.3);  // 2 minutes
  LevelSpec levels;
  levels.use_m = true;
  levels.use_h = false;
  RFSpec rf;
  rf.rf_ms = {160};
  rf.hop_ms = 50;
  EmbeddingMatrix ts = timestamp_embeddings(wav, model, levels, rf);
  CHECK(ts.rows == 2400);  // 120000 ms / 50 ms
  REQUIRE(ts.timestamps_ms.size() == 2400);
  for (size_t k = 0; k < ts.rows; ++k)
    CHECK(ts.timestamps_ms[k] == 50.0 * static_cast<double>(k));

  // 2RF on a short clip: dim doubles
  Waveform short_wav = sine_wave(600.0, 1.0, 32000, 0.3);
  RFSpec rf2 = parse_rf("2rf");
  LevelSpec lm;
  lm.use_l = true;
  lm.use_m = true;
  lm.use_h = false;
  EmbeddingMatrix ts2 = timestamp_embeddings(short_wav, model, lm, rf2);
  CHECK(ts2.dim == 2 * (5 * 128 + model.config.d));
  CHECK(ts2.rows == 20);
}

TEST_CASE("timestamp at 0 ms with rf 640 is finite and deterministic") {
  PasstModel model = toy_model(10);
  Waveform wav = sine_wave(500.0, 0.7, 32000, 0.4);
  LevelSpec levels;
  levels.use_l = true;
  levels.use_m = true;
  levels.use_h = true;
  RFSpec rf;
  rf.rf_ms = {640};
  EmbeddingMatrix a = timestamp_embeddings(wav, model, levels, rf);
  EmbeddingMatrix b = timestamp_embeddings(wav, model, levels, rf);
  for (float v : a.data) CHECK(std::isfinite(v));
  CHECK(std::memcmp(a.data.data(), b.data.data(),
                    a.data.size() * sizeof(float)) == 0);
}

TEST_CASE("rf below one patch column is rejected") {
  PasstModel model = toy_model(11);
  Waveform wav = sine_wave(500.0, 1.0, 32000, 0.4);
  LevelSpec levels;
  RFSpec rf;
  rf.rf_ms = {150};  // 15 mel frames at hop10ms, patch needs 16
  CHECK_THROWS_AS(timestamp_embeddings(wav, model, levels, rf), Error);
}

TEST_CASE("empty audio and empty level spec are rejected") {
  PasstModel model = toy_model(12);
  Waveform empty;
  empty.sample_rate = 32000;
  CHECK_THROWS_AS(scene_embedding(empty, model, LevelSpec{}), Error);
  LevelSpec none;
  none.use_l = none.use_m = none.use_h = false;
  Waveform wav = sine_wave(440.0, 1.0, 32000);
  CHECK_THROWS_AS(scene_embedding(wav, model, none), Error);
}

TEST_CASE("embedding files round-trip bit-exactly") {
  TempDir dir("embed");
  PasstModel model = toy_model(13);
  Waveform wav = sine_wave(700.0, 1.5, 32000, 0.4);
  LevelSpec levels;
  levels.use_l = true;
  RFSpec rf;
  EmbeddingMatrix ts = timestamp_embeddings(wav, model, levels, rf);
  ts.descriptor.checkpoint_id = "cafebabe";
  save_embeddings(ts, dir.file("x.pemb"));
  EmbeddingMatrix loaded = load_embeddings(dir.file("x.pemb"));
  CHECK(loaded.rows == ts.rows);
  CHECK(loaded.dim == ts.dim);
  CHECK(loaded.descriptor.mode == "timestamp");
  CHECK(loaded.descriptor.checkpoint_id == "cafebabe");
  CHECK(std::memcmp(loaded.data.data(), ts.data.data(),
                    ts.data.size() * sizeof(float)) == 0);
  CHECK(std::memcmp(loaded.timestamps_ms.data(), ts.timestamps_ms.data(),
                    ts.timestamps_ms.size() * sizeof(double)) == 0);

  // corrupt magic
  {
    std::fstream f(dir.file("x.pemb"),
                   std::ios::binary | std::ios::in | std::ios::out);
    f.put('Z');
  }
  try {
    load_embeddings(dir.file("x.pemb"));
    FAIL("expected format error");
  } catch (const Error& e) {
    CHECK(e.kind() == "format");
  }
}

TEST_CASE("scene L level is the per-bin temporal mean") {
  PasstModel model = toy_model(14);
  Waveform wav = sine_wave(880.0, 1.0, 32000, 0.5);
  LevelSpec levels;
  levels.use_l = true;
  levels.use_m = false;
  levels.use_h = false;
  EmbeddingMatrix scene = scene_embedding(wav, model, levels);
  REQUIRE(scene.dim == 128);
  MelSpectrogram mel = log_mel(wav, model.mel);
  for (int m = 0; m < 128; ++m) {
    double sum = 0.0;
    for (int t = 0; t < mel.n_frames; ++t) sum += mel.at(m, t);
    CHECK(scene.at(0, m) == static_cast<float>(sum / mel.n_frames));
  }
}
