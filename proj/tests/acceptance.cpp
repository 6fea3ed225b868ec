// Acceptance suite: runs every release criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion. Criterion 6 is directional and
// reported but not gating. Exit code 0 iff all gating criteria pass.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "passt/bench.hpp"
#include "passt/checkpoint.hpp"
#include "passt/embed.hpp"
#include "passt/probe.hpp"
#include "passt/synth.hpp"

using namespace passt;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, double seconds,
            bool soft = false) {
  const char* tag = pass ? "PASS" : (soft ? "VIOLATED (soft, reported)" : "FAIL");
  std::printf("criterion %2d: %-26s %s  [%.1fs]\n", criterion, tag, what.c_str(),
              seconds);
  std::fflush(stdout);
  if (!pass && !soft) ++g_failures;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

fs::path scratch_dir() {
  auto dir = fs::temp_directory_path() / "passt_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---- 1: exact sequence accounting ----

void criterion_1() {
  auto start = Clock::now();
  BenchConfig cfg;
  cfg.encoder = bench_model_config();
  cfg.timing = false;
  BenchReport r = run_bench(cfg);
  auto near = [](size_t got, size_t want) {
    return got + 2 >= want && got <= want + 2;
  };
  bool pass = r.presets.size() == 3;
  // hop10ms row counts include the two special tokens; the finer presets
  // are quoted as patch tokens.
  pass = pass && near(r.presets[0].total_tokens, 1190);
  pass = pass && near(r.presets[0].total_tokens_patchout, 474);
  pass = pass && near(r.presets[1].patch_tokens, 2388);
  pass = pass && near(r.presets[1].patch_tokens_patchout, 594);
  pass = pass && near(r.presets[2].patch_tokens, 3828);
  pass = pass && near(r.presets[2].patch_tokens_patchout, 1014);
  double secs = seconds_since(start);
  pass = pass && secs < 1.0;
  report(1, pass, "sequence accounting 1190/474, 2388/594, 3828/1014", secs);
}

// ---- 2: patchout speedup ordering ----

void criterion_2() {
  auto start = Clock::now();
  BenchConfig cfg;
  cfg.encoder = bench_model_config();  // d=64, 4 layers
  cfg.trials = 3;
  cfg.warmup = 1;
  BenchReport r = run_bench(cfg);
  double s10 = r.presets[0].speedup;
  double s5 = r.presets[1].speedup;
  double s3 = r.presets[2].speedup;
  bool pass = s10 >= 2.0 && s10 < s5 && s5 < s3;
  double secs = seconds_since(start);
  pass = pass && secs < 600.0;
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "speedups %.2fx < %.2fx < %.2fx (floor 2.0 at hop10ms)", s10, s5,
                s3);
  report(2, pass, buf, secs);
}

// ---- 3: gradient integrity ----

void criterion_3() {
  auto start = Clock::now();
  bool pass = true;

  // every primitive at eps 1e-5
  Rng rng(7);
  auto rnd = [&](std::vector<size_t> shape, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.normal(0.0, scale);
    t.set_requires_grad(true);
    return t;
  };
  Tensor a = rnd({3, 4}), b = rnd({3, 4}), w = rnd({4, 5}), v = rnd({4});
  Tensor gamma = rnd({4}, 0.5), beta = rnd({4}, 0.5);
  Tensor q = rnd({5, 6}, 0.7), k = rnd({5, 6}, 0.7), val = rnd({5, 6}, 0.7);
  Tensor ce_t({3, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 1});
  std::vector<std::pair<const char*, double>> checks;
  auto fd = [&](std::function<Tensor()> f, std::vector<Tensor> params) {
    return finite_diff_check(f, params, 1e-5);
  };
  checks.emplace_back("matmul", fd([&] { return ops::sum(ops::matmul(a, w)); }, {a, w}));
  checks.emplace_back("add", fd([&] { return ops::sum(ops::add(a, b)); }, {a, b}));
  checks.emplace_back("add_rowvec", fd([&] { return ops::sum(ops::add_rowvec(a, v)); }, {a, v}));
  checks.emplace_back("mul", fd([&] { return ops::sum(ops::mul(a, b)); }, {a, b}));
  checks.emplace_back("scale", fd([&] { return ops::sum(ops::scale(a, 1.3)); }, {a}));
  checks.emplace_back("mean_axis", fd([&] { return ops::sum(ops::mean_axis(a, 0)); }, {a}));
  checks.emplace_back("softmax", fd([&] { return ops::sum(ops::mul(ops::softmax(a), b)); }, {a, b}));
  checks.emplace_back("layer_norm", fd([&] {
    return ops::sum(ops::mul(ops::layer_norm(a, gamma, beta), b));
  }, {a, gamma, beta, b}));
  checks.emplace_back("gelu", fd([&] { return ops::sum(ops::gelu(a)); }, {a}));
  checks.emplace_back("relu", fd([&] { return ops::sum(ops::mul(ops::relu(a), b)); }, {a, b}));
  checks.emplace_back("concat", fd([&] { return ops::sum(ops::concat_rows({a, b})); }, {a, b}));
  checks.emplace_back("slice", fd([&] { return ops::sum(ops::slice_rows(a, 1, 2)); }, {a}));
  checks.emplace_back("gather", fd([&] { return ops::sum(ops::gather_rows(a, {0, 2, 2})); }, {a}));
  checks.emplace_back("attention", fd([&] {
    return ops::sum(ops::mul(ops::multi_head_attention(q, k, val, 2), q));
  }, {q, k, val}));
  checks.emplace_back("cross_entropy", fd([&] { return ops::cross_entropy(a, ce_t); }, {a}));
  checks.emplace_back("bce", fd([&] { return ops::binary_cross_entropy(a, ce_t); }, {a}));
  double worst_prim = 0.0;
  for (auto& [name, err] : checks) worst_prim = std::max(worst_prim, err);
  pass = pass && worst_prim < 1e-4;

  // end-to-end toy train loss over every model parameter (augmentations
  // off; patchout reseeded per evaluation so the loss is deterministic)
  EncoderConfig enc;
  enc.d = 16;
  enc.n_layers = 2;
  enc.n_heads = 2;
  enc.mlp_ratio = 2.0;
  enc.n_classes = 4;
  PasstModel model = PasstModel::create(enc, PatchGeometry{}, mel_preset("hop10ms"), 5);
  // Check at a generic parameter point: the fresh-init C/D rows are ~0.02
  // vectors whose layer norm has third derivatives ~(1/0.02)^3, far beyond
  // what a central difference can resolve at any step size.
  Rng jitter(77);
  for (auto& t : model.params())
    for (double& x : t.data()) x += jitter.normal(0.0, 0.3);
  MelSpectrogram mel;
  mel.n_mels = 128;
  mel.n_frames = 30;
  mel.config = mel_preset("hop10ms");
  mel.values.assign(128 * 30, 0.0);
  Rng mel_rng(9);
  for (double& x : mel.values) x = mel_rng.normal(-8.0, 2.0);
  Tensor target({1, 4}, {0.0, 0.0, 1.0, 0.0});
  PatchoutSpec po;
  po.mode = PatchoutMode::Structured;
  po.f_drop = 3;
  po.t_drop = 1;
  auto loss_fn = [&]() {
    Rng po_rng(123);
    TokenSequence seq = model.tokenize_mel(mel);
    PatchoutResult res = apply_patchout(seq, po, po_rng);
    EncoderOutput out = encoder_forward(res.seq, model, RunMode::Eval);
    return ops::cross_entropy(out.logits, target);
  };
  // composite-loss step size: see the gradient-integrity unit test
  double e2e = finite_diff_check(loss_fn, model.params(), 3e-4);
  pass = pass && e2e < 1e-4;

  double secs = seconds_since(start);
  pass = pass && secs < 120.0;
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "max rel err: primitives %.2e, end-to-end train loss %.2e",
                worst_prim, e2e);
  report(3, pass, buf, secs);
}

// ---- 4: DSP exactness ----

void criterion_4() {
  auto start = Clock::now();
  bool pass = true;
  MelConfig cfg = mel_preset("hop10ms");

  // 10 s at 32 kHz, hop 320 -> exactly 1000 frames
  Waveform ten;
  ten.sample_rate = 32000;
  ten.samples.resize(320000);
  Rng rng(3);
  for (double& s : ten.samples) s = 0.1 * rng.normal();
  MelSpectrogram mel10 = log_mel(ten, cfg);
  pass = pass && mel10.n_mels == 128 && mel10.n_frames == 1000;

  // 1 kHz sine argmax in the filterbank-oracle bin (interior frames)
  auto centers = mel_filter_centers(cfg);
  int oracle = 0;
  for (int m = 1; m < cfg.n_mels; ++m)
    if (std::abs(centers[m] - 1000.0) < std::abs(centers[oracle] - 1000.0))
      oracle = m;
  Waveform sine;
  sine.sample_rate = 32000;
  sine.samples.resize(32000);
  for (size_t i = 0; i < sine.samples.size(); ++i)
    sine.samples[i] = 0.6 * std::sin(2.0 * 3.14159265358979323846 * 1000.0 *
                                     static_cast<double>(i) / 32000.0);
  MelSpectrogram smel = log_mel(sine, cfg);
  int margin = cfg.window_length / (2 * cfg.hop_length) + 1;
  for (int t = margin; t < smel.n_frames - margin; ++t) {
    int argmax = 0;
    for (int m = 1; m < smel.n_mels; ++m)
      if (smel.at(m, t) > smel.at(argmax, t)) argmax = m;
    pass = pass && argmax == oracle;
  }

  // shift-by-hop covariance, bit-exact on interior frames
  const int k = 2;
  Waveform shifted;
  shifted.sample_rate = 32000;
  shifted.samples.assign(static_cast<size_t>(k) * cfg.hop_length, 0.0);
  shifted.samples.insert(shifted.samples.end(), ten.samples.begin(),
                         ten.samples.end());
  MelSpectrogram mel_shift = log_mel(shifted, cfg);
  for (int t = margin; t < mel10.n_frames - margin - k; ++t)
    for (int m = 0; m < 128; ++m) {
      double lhs = mel10.at(m, t);
      double rhs = mel_shift.at(m, t + k);
      pass = pass && std::memcmp(&lhs, &rhs, sizeof(double)) == 0;
    }

  double secs = seconds_since(start);
  pass = pass && secs < 30.0;
  report(4, pass, "mel frames, tone argmax oracle, shift covariance", secs);
}

// ---- 5: end-to-end toy pipeline ----

void criterion_5(const fs::path& scratch) {
  auto start = Clock::now();
  std::string ds = (scratch / "pitch").string();
  SynthSpec spec;
  spec.n_clips = 400;
  spec.n_classes = 8;
  spec.clip_seconds = 1.0;
  spec.seed = 7;
  TaskManifest manifest = gen_pitch_task(spec, ds);

  TrainConfig cfg;
  cfg.encoder = encoder_toy_config();
  cfg.patchout.mode = PatchoutMode::Structured;
  cfg.patchout.f_drop = 4;
  cfg.patchout.t_drop = 3;
  cfg.epochs = 12;
  cfg.batch_size = 16;
  cfg.lr = 1e-3;
  cfg.seed = 11;
  TrainResult train = train_on_manifest(manifest, ds, cfg);

  // probe on frozen M-level scene embeddings
  LevelSpec levels;
  levels.use_l = false;
  levels.use_m = true;
  levels.use_h = false;
  auto embed_split = [&](const std::vector<ClipEntry>& clips) {
    EmbeddingMatrix all;
    for (size_t i = 0; i < clips.size(); ++i) {
      Waveform w = load_wav(clip_path(ds, clips[i].file));
      EmbeddingMatrix one = scene_embedding(w, train.model, levels);
      if (i == 0) {
        all = one;
      } else {
        all.data.insert(all.data.end(), one.data.begin(), one.data.end());
        all.rows += 1;
      }
    }
    return all;
  };
  auto targets = [&](const std::vector<ClipEntry>& clips) {
    std::vector<std::vector<double>> y;
    for (const auto& c : clips) {
      std::vector<double> row(8, 0.0);
      row[manifest.label_index(c.label)] = 1.0;
      y.push_back(std::move(row));
    }
    return y;
  };
  EmbeddingMatrix tr = embed_split(manifest.train);
  EmbeddingMatrix va = embed_split(manifest.valid);
  EmbeddingMatrix te = embed_split(manifest.test);
  ProbeConfig pc;
  pc.epochs = 100;
  pc.seed = 3;
  ProbeResult probe = train_probe(tr, targets(manifest.train), va,
                                  targets(manifest.valid), pc, false);
  std::vector<size_t> test_idx;
  for (const auto& c : manifest.test)
    test_idx.push_back(manifest.label_index(c.label));
  double probe_acc = accuracy(probe_scores(probe.model, te), test_idx);

  double secs = seconds_since(start);
  bool pass = train.test_accuracy >= 0.90 && probe_acc >= 0.85 && secs < 900.0;
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "model test acc %.3f (>= 0.90), M-probe acc %.3f (>= 0.85)",
                train.test_accuracy, probe_acc);
  report(5, pass, buf, secs);
}

// ---- 6: regularization direction (soft) ----

void criterion_6(const fs::path& scratch) {
  auto start = Clock::now();
  std::string ds = (scratch / "noisy").string();
  SynthSpec spec;
  spec.n_clips = 80;
  spec.n_classes = 8;
  spec.clip_seconds = 1.0;
  spec.snr_db_min = -12.0;
  spec.snr_db_max = -2.0;
  spec.seed = 17;
  TaskManifest manifest = gen_pitch_task(spec, ds);

  auto run = [&](bool with_patchout, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.encoder = encoder_toy_config();
    if (with_patchout) {
      cfg.patchout.mode = PatchoutMode::Structured;
      // time columns only: the pitch classes live in a couple of mel rows,
      // so frequency-row drops would delete the class evidence outright
      cfg.patchout.f_drop = 0;
      cfg.patchout.t_drop = 4;
    }
    cfg.epochs = 30;
    cfg.batch_size = 16;
    cfg.lr = 1e-3;
    cfg.seed = seed;
    return train_on_manifest(manifest, ds, cfg).test_accuracy;
  };
  std::vector<double> with, without;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    with.push_back(run(true, seed));
    without.push_back(run(false, seed));
  }
  std::sort(with.begin(), with.end());
  std::sort(without.begin(), without.end());
  bool pass = with[1] >= without[1];
  double secs = seconds_since(start);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "median test acc with patchout %.3f vs without %.3f", with[1],
                without[1]);
  report(6, pass, buf, secs, /*soft=*/true);
}

// ---- 7: metric oracles ----

double ap_oracle(const std::vector<double>& scores, const std::vector<int>& targets) {
  size_t n = scores.size();
  std::vector<bool> used(n, false);
  size_t positives = 0;
  for (int t : targets) positives += t != 0;
  double ap = 0.0;
  size_t hits = 0;
  for (size_t rank = 1; rank <= n; ++rank) {
    long best = -1;
    for (size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      if (best < 0 || scores[i] > scores[static_cast<size_t>(best)])
        best = static_cast<long>(i);
    }
    used[static_cast<size_t>(best)] = true;
    if (targets[static_cast<size_t>(best)]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(rank);
    }
  }
  return positives ? ap / static_cast<double>(positives) : 0.0;
}

void criterion_7() {
  auto start = Clock::now();
  bool pass = true;

  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    size_t n = 8, classes = 4;
    std::vector<std::vector<double>> scores(n, std::vector<double>(classes));
    std::vector<std::vector<int>> targets(n, std::vector<int>(classes));
    bool any = false;
    for (size_t i = 0; i < n; ++i)
      for (size_t c = 0; c < classes; ++c) {
        scores[i][c] = std::round(rng.uniform01() * 4.0) / 4.0;
        targets[i][c] = rng.uniform01() < 0.3;
        any = any || targets[i][c];
      }
    if (!any) targets[0][0] = 1;
    double expected = 0.0;
    size_t included = 0;
    for (size_t c = 0; c < classes; ++c) {
      std::vector<double> col(n);
      std::vector<int> tgt(n);
      size_t pos = 0;
      for (size_t i = 0; i < n; ++i) {
        col[i] = scores[i][c];
        tgt[i] = targets[i][c];
        pos += targets[i][c];
      }
      if (!pos) continue;
      expected += ap_oracle(col, tgt);
      ++included;
    }
    expected /= static_cast<double>(included);
    pass = pass && mean_average_precision(scores, targets) == expected;
  }

  // onset fixtures, including the tolerance pair
  std::vector<double> times(60);
  for (size_t i = 0; i < times.size(); ++i) times[i] = 50.0 * static_cast<double>(i);
  std::vector<EventLabel> refs{{1000.0, 1500.0, "tone"}};
  std::vector<std::vector<double>> probs(times.size(), std::vector<double>(1, 0.0));
  for (size_t i = 0; i < times.size(); ++i)
    if (times[i] >= 1100.0 && times[i] <= 1600.0) probs[i][0] = 1.0;
  pass = pass && onset_f1(probs, times, refs, {"tone"}, 0.5, 60, 200).f1 == 1.0;
  pass = pass && onset_f1(probs, times, refs, {"tone"}, 0.5, 60, 50).f1 == 0.0;
  std::vector<std::vector<double>> exact(times.size(), std::vector<double>(1, 0.0));
  for (size_t i = 0; i < times.size(); ++i)
    if (times[i] >= 1000.0 && times[i] <= 1500.0) exact[i][0] = 1.0;
  pass = pass && onset_f1(exact, times, refs, {"tone"}).f1 == 1.0;

  double secs = seconds_since(start);
  pass = pass && secs < 60.0;
  report(7, pass, "mAP brute-force oracle x200, onset F1 fixtures", secs);
}

// ---- 8: windowing consistency ----

void criterion_8() {
  auto start = Clock::now();
  bool pass = true;
  EncoderConfig enc;
  enc.d = 16;
  enc.n_layers = 1;
  enc.n_heads = 2;
  enc.mlp_ratio = 2.0;
  enc.n_classes = 4;
  PasstModel model = PasstModel::create(enc, PatchGeometry{}, mel_preset("hop10ms"), 21);

  // short clip: one window, equal to the direct forward assembly
  Waveform wav;
  wav.sample_rate = 32000;
  wav.samples.resize(64000);
  Rng rng(2);
  for (double& s : wav.samples) s = 0.3 * rng.normal();
  LevelSpec levels;
  levels.use_l = true;
  levels.use_m = true;
  levels.use_h = true;
  EmbeddingMatrix scene = scene_embedding(wav, model, levels);
  {
    MelSpectrogram mel = log_mel(wav, model.mel);
    std::vector<double> direct;
    for (int m = 0; m < mel.n_mels; ++m) {
      double sum = 0.0;
      for (int t = 0; t < mel.n_frames; ++t) sum += mel.at(m, t);
      direct.push_back(sum / mel.n_frames);
    }
    TokenSequence seq = model.tokenize_mel(mel);
    EncoderOutput out = encoder_forward(seq, model, RunMode::Eval);
    direct.insert(direct.end(), out.pooled.data().begin(), out.pooled.data().end());
    direct.insert(direct.end(), out.logits.data().begin(), out.logits.data().end());
    pass = pass && scene.dim == direct.size();
    for (size_t c = 0; c < scene.dim && pass; ++c) {
      float want = static_cast<float>(direct[c]);
      float got = scene.at(0, c);
      pass = std::memcmp(&want, &got, sizeof(float)) == 0;
    }
  }

  // 30 s at overlap 0.5 -> exactly 5 windows
  auto windows = scene_windows(30 * 32000, 10 * 32000, 5 * 32000);
  pass = pass && windows.size() == 5;

  // frequency table contribution identical across clip lengths
  {
    PositionalTables tables;
    tables.freq_table = Tensor({12, 8});
    Rng trng(4);
    for (double& v : tables.freq_table.data()) v = trng.normal();
    tables.time_table = Tensor({99, 8});
    tables.token_enc = Tensor({2, 8});
    Tensor proj_w({256, 8});
    Tensor proj_b({8});
    auto fake_mel = [&](int frames, std::uint64_t seed) {
      MelSpectrogram mel;
      mel.n_mels = 128;
      mel.n_frames = frames;
      mel.config = mel_preset("hop10ms");
      mel.values.resize(static_cast<size_t>(128) * frames);
      Rng r(seed);
      for (double& v : mel.values) v = r.normal(-10.0, 3.0);
      return mel;
    };
    TokenSequence long_seq =
        tokenize(patch_grid(fake_mel(1000, 1), PatchGeometry{}), proj_w, proj_b, tables);
    TokenSequence short_seq =
        tokenize(patch_grid(fake_mel(100, 2), PatchGeometry{}), proj_w, proj_b, tables);
    for (size_t i = 2; i < long_seq.size() && pass; ++i)
      for (size_t j = 2; j < short_seq.size() && pass; ++j) {
        if (long_seq.coords[i].f != short_seq.coords[j].f) continue;
        pass = std::memcmp(&long_seq.tokens.data()[i * 8],
                           &short_seq.tokens.data()[j * 8], 8 * sizeof(double)) == 0;
      }
  }

  double secs = seconds_since(start);
  report(8, pass, "single-window bit-exactness, 5-window split, freq table reuse",
         secs);
}

// ---- 9: normalization and category buckets ----

void criterion_9() {
  auto start = Clock::now();
  bool pass = true;

  std::vector<TaskScore> raw{
      {"beehive_states", 0.7, "general"},
      {"beijing_opera_percussion", 0.7, "music"},
      {"crema_d", 0.7, "speech"},
      {"dcase_2016_task2", 0.7, "general"},
      {"esc_50", 0.7, "general"},
      {"fsd50k", 0.7, "general"},
      {"gtzan_genre", 0.7, "music"},
      {"gtzan_music_speech", 0.7, "general"},
      {"gunshot_triangulation", 0.7, "general"},
      {"libricount", 0.7, "speech"},
      {"maestro_5h", 0.7, "music"},
      {"mridangam_stroke", 0.7, "music"},
      {"mridangam_tonic", 0.7, "music"},
      {"nsynth_pitch_5h", 0.7, "music"},
      {"nsynth_pitch_50h", 0.7, "music"},
      {"speech_commands_5h", 0.7, "speech"},
      {"speech_commands_full", 0.7, "speech"},
      {"vocal_imitations", 0.7, "general"},
      {"voxlingua107_top10", 0.7, "speech"},
  };
  std::map<std::string, double> ref;
  for (const auto& t : raw) ref[t.task] = 0.7;  // raw == reference max
  ScoreReport all_ones = normalize_and_aggregate(raw, ref);
  for (const auto& s : all_ones.scores) pass = pass && s.normalized == 1.0;
  pass = pass && all_ones.categories.size() == 3;
  for (const auto& c : all_ones.categories) {
    pass = pass && c.median == 1.0;
    if (c.category == "speech") pass = pass && c.count == 5;
    if (c.category == "music") pass = pass && c.count == 7;
    if (c.category == "general") pass = pass && c.count == 7;
  }

  std::vector<TaskScore> fixture{{"t1", 0.9, "general"},
                                 {"t2", 0.8, "general"},
                                 {"t3", 1.0, "general"}};
  std::map<std::string, double> ones{{"t1", 1.0}, {"t2", 1.0}, {"t3", 1.0}};
  ScoreReport stats = normalize_and_aggregate(fixture, ones);
  pass = pass && std::abs(stats.categories[0].median - 0.9) < 1e-12;
  pass = pass && std::abs(stats.categories[0].min - 0.8) < 1e-12;
  pass = pass && std::abs(stats.categories[0].max - 1.0) < 1e-12;

  double secs = seconds_since(start);
  report(9, pass, "reference-max normalization, buckets 5/7/7, hand stats", secs);
}

// ---- 10: format round trips ----

void criterion_10(const fs::path& scratch) {
  auto start = Clock::now();
  bool pass = true;
  EncoderConfig enc;
  enc.d = 16;
  enc.n_layers = 1;
  enc.n_heads = 2;
  enc.mlp_ratio = 2.0;
  enc.n_classes = 3;
  PasstModel model = PasstModel::create(enc, PatchGeometry{}, mel_preset("hop10ms"), 31);
  std::string ckpt = (scratch / "rt.ckpt").string();
  save_checkpoint(model, ckpt);
  PasstModel loaded = load_checkpoint(ckpt);
  auto a = model.named_params();
  auto b = loaded.named_params();
  pass = pass && a.size() == b.size();
  for (size_t i = 0; i < a.size() && pass; ++i)
    pass = std::memcmp(a[i].second.data().data(), b[i].second.data().data(),
                       a[i].second.numel() * sizeof(double)) == 0;

  Waveform wav;
  wav.sample_rate = 32000;
  wav.samples.resize(32000, 0.0);
  Rng rng(6);
  for (double& s : wav.samples) s = 0.2 * rng.normal();
  LevelSpec levels;
  levels.use_m = true;
  EmbeddingMatrix emb = scene_embedding(wav, model, levels);
  std::string pemb = (scratch / "rt.pemb").string();
  save_embeddings(emb, pemb);
  EmbeddingMatrix emb2 = load_embeddings(pemb);
  pass = pass && emb2.rows == emb.rows && emb2.dim == emb.dim;
  pass = pass && std::memcmp(emb2.data.data(), emb.data.data(),
                             emb.data.size() * sizeof(float)) == 0;

  // corrupted magics and versions are structured format errors
  for (const std::string& path : {ckpt, pemb}) {
    auto corrupt = [&](size_t offset, const std::string& out_name) {
      std::ifstream in(path, std::ios::binary);
      std::string bytes((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
      bytes[offset] = 'Z';
      std::ofstream out((scratch / out_name).string(), std::ios::binary);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    };
    for (size_t offset : {size_t{0}, size_t{8}}) {
      std::string name = "corrupt_" + std::to_string(offset);
      corrupt(offset, name);
      bool threw = false;
      try {
        if (path == ckpt) load_checkpoint((scratch / name).string());
        else load_embeddings((scratch / name).string());
      } catch (const Error& e) {
        threw = e.kind() == "format";
      }
      pass = pass && threw;
    }
  }

  double secs = seconds_since(start);
  pass = pass && secs < 10.0;
  report(10, pass, "checkpoint + embedding round trips, corrupt headers rejected",
         secs);
}

}  // namespace

int main() {
  auto scratch = scratch_dir();
  auto start = Clock::now();
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5(scratch);
  criterion_6(scratch);
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10(scratch);
  std::printf("acceptance: %d gating failure(s), total %.1fs\n", g_failures,
              seconds_since(start));
  fs::remove_all(scratch);
  return g_failures == 0 ? 0 : 1;
}
