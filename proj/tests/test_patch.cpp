#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <set>

#include "passt/encoder.hpp"
#include "passt/patchout.hpp"

using namespace passt;

namespace {

MelSpectrogram fake_mel(int n_mels, int n_frames, std::uint64_t seed) {
  MelSpectrogram mel;
  mel.n_mels = n_mels;
  mel.n_frames = n_frames;
  mel.config = mel_preset("hop10ms");
  mel.values.resize(static_cast<size_t>(n_mels) * n_frames);
  Rng rng(seed);
  for (double& v : mel.values) v = rng.normal(-10.0, 3.0);
  return mel;
}

PositionalTables zero_tables(int grid_f, int grid_t_max, size_t d) {
  PositionalTables t;
  t.freq_table = Tensor({static_cast<size_t>(grid_f), d});
  t.time_table = Tensor({static_cast<size_t>(grid_t_max), d});
  t.token_enc = Tensor({2, d});
  return t;
}

// Synthetic token sequence with recognizable row contents.
TokenSequence make_seq(int grid_f, int grid_t, size_t d = 4) {
  TokenSequence seq;
  seq.grid_f = grid_f;
  seq.grid_t = grid_t;
  size_t n = static_cast<size_t>(grid_f) * grid_t + 2;
  seq.tokens = Tensor({n, d});
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j)
      seq.tokens.data()[i * d + j] = static_cast<double>(i * 1000 + j);
  seq.coords.push_back({TokenKind::Classification, -1, -1});
  seq.coords.push_back({TokenKind::Distillation, -1, -1});
  for (int t = 0; t < grid_t; ++t)
    for (int f = 0; f < grid_f; ++f)
      seq.coords.push_back({TokenKind::Patch, f, t});
  return seq;
}

}  // namespace

TEST_CASE("patch grid counts match the reference geometry") {
  PatchGeometry geom;
  CHECK(geom.grid_f(128) == 12);
  CHECK(geom.grid_t(1000) == 99);
  CHECK(geom.grid_t(2000) == 199);
  CHECK(geom.grid_t(3200) == 319);

  PatchGrid g = patch_grid(fake_mel(128, 1000, 1), geom);
  CHECK(g.grid_f * g.grid_t == 1188);
  CHECK(g.patches.dim(0) == 1188);
  CHECK(g.patches.dim(1) == 256);

  PatchGrid tiny = patch_grid(fake_mel(128, 16, 2), geom);
  CHECK(tiny.grid_f == 12);
  CHECK(tiny.grid_t == 1);

  PatchGrid five_ms = patch_grid(fake_mel(128, 2000, 3), geom);
  CHECK(five_ms.grid_f * five_ms.grid_t == 2388);
}

TEST_CASE("patch grid rejects inputs shorter than one patch") {
  PatchGeometry geom;
  CHECK_THROWS_AS(patch_grid(fake_mel(128, 15, 4), geom), Error);
}

TEST_CASE("patch coordinates round-trip to the exact mel sub-rectangle") {
  PatchGeometry geom;
  MelSpectrogram mel = fake_mel(128, 163, 5);
  PatchGrid g = patch_grid(mel, geom);
  for (int f = 0; f < g.grid_f; f += 3) {
    for (int t = 0; t < g.grid_t; t += 5) {
      size_t row = static_cast<size_t>(f) * g.grid_t + t;
      for (int i = 0; i < geom.patch_f; ++i)
        for (int j = 0; j < geom.patch_t; ++j) {
          double expect = mel.at(f * geom.stride_f + i, t * geom.stride_t + j);
          double got = g.patches.data()[row * 256 + i * geom.patch_t + j];
          CHECK(got == expect);
        }
    }
  }
}

TEST_CASE("tokenize: counts, order, and crop behaviour") {
  PatchGeometry geom;
  size_t d = 8;
  Rng rng(7);
  Tensor proj_w({256, d});
  for (double& v : proj_w.data()) v = rng.normal(0, 0.05);
  Tensor proj_b({d});
  PositionalTables tables = zero_tables(12, 99, d);
  for (double& v : tables.freq_table.data()) v = rng.normal(0, 1);
  for (double& v : tables.time_table.data()) v = rng.normal(0, 1);

  MelSpectrogram mel10s = fake_mel(128, 1000, 11);
  TokenSequence full = tokenize(patch_grid(mel10s, geom), proj_w, proj_b, tables);
  CHECK(full.size() == 1190);  // 12*99 + 2
  CHECK(full.grid_t == 99);
  // t-major, f-minor patch order
  CHECK(full.coords[2].f == 0);
  CHECK(full.coords[2].t == 0);
  CHECK(full.coords[3].f == 1);
  CHECK(full.coords[3].t == 0);
  CHECK(full.coords[2 + 12].f == 0);
  CHECK(full.coords[2 + 12].t == 1);

  // 1 s clip: 100 frames -> 9 time positions; only time rows 0..8 consulted.
  MelSpectrogram mel1s = fake_mel(128, 100, 12);
  TokenSequence cropped =
      tokenize(patch_grid(mel1s, geom), proj_w, proj_b, tables);
  CHECK(cropped.grid_t == 9);
  CHECK(cropped.size() == 12 * 9 + 2);

  // A clip longer than the time table must be windowed upstream.
  MelSpectrogram too_long = fake_mel(128, 1200, 13);
  CHECK_THROWS_AS(tokenize(patch_grid(too_long, geom), proj_w, proj_b, tables),
                  Error);
}

TEST_CASE("frequency encoding contribution is identical across clip lengths") {
  PatchGeometry geom;
  size_t d = 8;
  Rng rng(21);
  Tensor proj_w({256, d});  // zero projection isolates the positional terms
  Tensor proj_b({d});
  PositionalTables tables = zero_tables(12, 99, d);
  for (double& v : tables.freq_table.data()) v = rng.normal(0, 1);

  TokenSequence a = tokenize(patch_grid(fake_mel(128, 1000, 1), geom), proj_w,
                             proj_b, tables);
  TokenSequence b = tokenize(patch_grid(fake_mel(128, 100, 2), geom), proj_w,
                             proj_b, tables);
  for (size_t ia = 2; ia < a.size(); ++ia) {
    for (size_t ib = 2; ib < b.size(); ++ib) {
      if (a.coords[ia].f != b.coords[ib].f) continue;
      for (size_t j = 0; j < d; ++j) {
        double va = a.tokens.data()[ia * d + j];
        double vb = b.tokens.data()[ib * d + j];
        CHECK(std::memcmp(&va, &vb, sizeof(double)) == 0);
      }
    }
  }
}

TEST_CASE("zero projection and tables leave only learned token encodings") {
  PatchGeometry geom;
  size_t d = 6;
  Tensor proj_w({256, d});
  Tensor proj_b({d});
  PositionalTables tables = zero_tables(12, 99, d);
  Rng rng(3);
  for (double& v : tables.token_enc.data()) v = rng.normal(0, 1);

  TokenSequence seq =
      tokenize(patch_grid(fake_mel(128, 200, 9), geom), proj_w, proj_b, tables);
  for (size_t j = 0; j < d; ++j) {
    CHECK(seq.tokens.data()[0 * d + j] == tables.token_enc.data()[0 * d + j]);
    CHECK(seq.tokens.data()[1 * d + j] == tables.token_enc.data()[1 * d + j]);
  }
  for (size_t i = 2; i < seq.size(); ++i)
    for (size_t j = 0; j < d; ++j) CHECK(seq.tokens.data()[i * d + j] == 0.0);
}

TEST_CASE("crop consistency: equal audio prefix gives equal shared tokens") {
  PatchGeometry geom;
  size_t d = 8;
  Rng rng(33);
  Tensor proj_w({256, d});
  for (double& v : proj_w.data()) v = rng.normal(0, 0.05);
  Tensor proj_b({d});
  for (double& v : proj_b.data()) v = rng.normal(0, 0.05);
  PositionalTables tables = zero_tables(12, 99, d);
  for (double& v : tables.freq_table.data()) v = rng.normal(0, 1);
  for (double& v : tables.time_table.data()) v = rng.normal(0, 1);
  for (double& v : tables.token_enc.data()) v = rng.normal(0, 1);

  MelSpectrogram long_mel = fake_mel(128, 500, 77);
  MelSpectrogram prefix = long_mel;
  prefix.n_frames = 300;
  prefix.values.resize(static_cast<size_t>(128) * 300);
  for (int m = 0; m < 128; ++m)
    for (int t = 0; t < 300; ++t) prefix.at(m, t) = long_mel.at(m, t);

  TokenSequence a = tokenize(patch_grid(long_mel, geom), proj_w, proj_b, tables);
  TokenSequence b = tokenize(patch_grid(prefix, geom), proj_w, proj_b, tables);
  // every token of the prefix clip appears bit-identically in the long clip
  size_t d_ = d;
  for (size_t ib = 0; ib < b.size(); ++ib) {
    const TokenCoord& c = b.coords[ib];
    size_t ia;
    if (c.kind != TokenKind::Patch) {
      ia = ib;
    } else {
      ia = 2 + static_cast<size_t>(c.t) * a.grid_f + c.f;
    }
    for (size_t j = 0; j < d_; ++j) {
      double va = a.tokens.data()[ia * d_ + j];
      double vb = b.tokens.data()[ib * d_ + j];
      CHECK(std::memcmp(&va, &vb, sizeof(double)) == 0);
    }
  }
}

// ---- patchout ----

TEST_CASE("structured patchout: reference token counts") {
  Rng rng(5);
  TokenSequence seq = make_seq(12, 99);
  PatchoutSpec spec;
  spec.mode = PatchoutMode::Structured;
  spec.f_drop = 4;
  spec.t_drop = 40;
  PatchoutResult res = structured_patchout(seq, spec, rng);
  CHECK(res.seq.size() == 8 * 59 + 2);  // 474
  CHECK(res.kept_f.size() == 8);
  CHECK(res.kept_t.size() == 59);

  PatchoutSpec none;
  none.mode = PatchoutMode::Structured;
  PatchoutResult identity = structured_patchout(seq, none, rng);
  CHECK(identity.seq.size() == 1190);

  TokenSequence five_ms = make_seq(12, 199);
  PatchoutSpec spec5;
  spec5.mode = PatchoutMode::Structured;
  spec5.f_drop = 6;
  spec5.t_drop = 100;
  PatchoutResult res5 = structured_patchout(five_ms, spec5, rng);
  CHECK(res5.seq.size() - 2 == 594);  // 6 * 99 patch tokens
}

TEST_CASE("unstructured patchout: counts and boundaries") {
  Rng rng(6);
  TokenSequence seq = make_seq(12, 99);
  PatchoutSpec spec;
  spec.mode = PatchoutMode::Unstructured;

  spec.u_drop = 0;
  CHECK(unstructured_patchout(seq, spec, rng).seq.size() == 1190);

  spec.u_drop = 12 * 99 - 1;
  PatchoutResult res = unstructured_patchout(seq, spec, rng);
  CHECK(res.seq.size() == 3);  // C, D, one survivor
  CHECK(res.seq.coords[0].kind == TokenKind::Classification);
  CHECK(res.seq.coords[1].kind == TokenKind::Distillation);

  spec.u_drop = 716;
  CHECK(unstructured_patchout(seq, spec, rng).seq.size() == 474);

  spec.u_drop = 12 * 99;  // out of bounds
  CHECK_THROWS_AS(unstructured_patchout(seq, spec, rng), Error);
}

TEST_CASE("patchout off is bit-identical") {
  Rng rng(9);
  TokenSequence seq = make_seq(5, 7);
  PatchoutSpec spec;  // mode Off
  PatchoutResult res = apply_patchout(seq, spec, rng);
  REQUIRE(res.seq.size() == seq.size());
  CHECK(std::memcmp(res.seq.tokens.data().data(), seq.tokens.data().data(),
                    seq.tokens.numel() * sizeof(double)) == 0);
}

TEST_CASE("patchout keeps encodings and coordinates of survivors") {
  Rng rng(10);
  TokenSequence seq = make_seq(6, 8);
  PatchoutSpec spec;
  spec.mode = PatchoutMode::Structured;
  spec.f_drop = 2;
  spec.t_drop = 3;
  PatchoutResult res = structured_patchout(seq, spec, rng);
  size_t d = seq.tokens.dim(1);
  for (size_t i = 0; i < res.kept_tokens.size(); ++i) {
    size_t src = res.kept_tokens[i];
    CHECK(res.seq.coords[i].f == seq.coords[src].f);
    CHECK(res.seq.coords[i].t == seq.coords[src].t);
    for (size_t j = 0; j < d; ++j)
      CHECK(res.seq.tokens.data()[i * d + j] == seq.tokens.data()[src * d + j]);
  }
  // dropped rows/cols never appear among survivor coords
  std::set<int> kept_f(res.kept_f.begin(), res.kept_f.end());
  std::set<int> kept_t(res.kept_t.begin(), res.kept_t.end());
  for (const auto& c : res.seq.coords) {
    if (c.kind != TokenKind::Patch) continue;
    CHECK(kept_f.count(c.f) == 1);
    CHECK(kept_t.count(c.t) == 1);
  }
}

TEST_CASE("patchout determinism under a fixed seed") {
  TokenSequence seq = make_seq(12, 30);
  PatchoutSpec spec;
  spec.mode = PatchoutMode::Structured;
  spec.f_drop = 3;
  spec.t_drop = 10;
  Rng r1(77), r2(77), r3(78);
  auto a = structured_patchout(seq, spec, r1);
  auto b = structured_patchout(seq, spec, r2);
  auto c = structured_patchout(seq, spec, r3);
  CHECK(a.kept_f == b.kept_f);
  CHECK(a.kept_t == b.kept_t);
  CHECK(a.kept_tokens == b.kept_tokens);
  CHECK(a.kept_t != c.kept_t);  // different seed, different draw
}

TEST_CASE("patchout drop frequencies are binomially plausible") {
  const int grid_f = 12, grid_t = 20, f_drop = 4, t_drop = 5;
  const int draws = 2000;
  TokenSequence seq = make_seq(grid_f, grid_t, 2);
  PatchoutSpec spec;
  spec.mode = PatchoutMode::Structured;
  spec.f_drop = f_drop;
  spec.t_drop = t_drop;
  Rng rng(123);
  std::vector<int> f_dropped(grid_f, 0), t_dropped(grid_t, 0);
  for (int it = 0; it < draws; ++it) {
    auto res = structured_patchout(seq, spec, rng);
    std::set<size_t> kf(res.kept_f.begin(), res.kept_f.end());
    std::set<size_t> kt(res.kept_t.begin(), res.kept_t.end());
    for (int f = 0; f < grid_f; ++f)
      if (!kf.count(f)) ++f_dropped[f];
    for (int t = 0; t < grid_t; ++t)
      if (!kt.count(t)) ++t_dropped[t];
  }
  auto in_band = [&](int count, double p) {
    double mean = draws * p;
    double sigma = std::sqrt(draws * p * (1 - p));
    return count >= mean - 3 * sigma && count <= mean + 3 * sigma;
  };
  for (int f = 0; f < grid_f; ++f)
    CHECK(in_band(f_dropped[f], static_cast<double>(f_drop) / grid_f));
  for (int t = 0; t < grid_t; ++t)
    CHECK(in_band(t_dropped[t], static_cast<double>(t_drop) / grid_t));
}

TEST_CASE("dropped positional rows receive zero gradient") {
  PatchGeometry geom;
  MelConfig mel_cfg = mel_preset("hop10ms");
  EncoderConfig enc = encoder_toy_config();
  enc.d = 16;
  enc.n_layers = 0;
  PasstModel model = PasstModel::create(enc, geom, mel_cfg, 42);

  MelSpectrogram mel = fake_mel(128, 300, 50);  // grid_t = 29
  PatchoutSpec spec;
  spec.mode = PatchoutMode::Structured;
  spec.f_drop = 5;
  spec.t_drop = 11;
  Rng rng(1);
  model.zero_grad();
  GradTape tape;
  PatchoutResult res;
  {
    GradTape::Scope scope(tape);
    TokenSequence seq = model.tokenize_mel(mel);
    res = apply_patchout(seq, spec, rng);
    tape.backward(ops::sum(res.seq.tokens));
  }
  std::set<size_t> kept_f(res.kept_f.begin(), res.kept_f.end());
  std::set<size_t> kept_t(res.kept_t.begin(), res.kept_t.end());
  const auto& fg = model.pos.freq_table.grad();
  size_t d = enc.d;
  for (size_t f = 0; f < model.pos.freq_table.dim(0); ++f) {
    double sum = 0.0;
    for (size_t j = 0; j < d; ++j) sum += std::abs(fg[f * d + j]);
    if (kept_f.count(f)) CHECK(sum > 0.0);
    else CHECK(sum == 0.0);
  }
  const auto& tg = model.pos.time_table.grad();
  for (size_t t = 0; t < 29; ++t) {
    double sum = 0.0;
    for (size_t j = 0; j < d; ++j) sum += std::abs(tg[t * d + j]);
    if (kept_t.count(t)) CHECK(sum > 0.0);
    else CHECK(sum == 0.0);
  }
}
