#include "passt/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace passt {

void EncoderConfig::validate() const {
  if (d == 0 || n_heads == 0 || d % n_heads != 0)
    throw Error("shape", "encoder config: d must be divisible by n_heads");
  if (n_classes < 1) throw Error("bounds", "encoder config: n_classes >= 1");
  if (dropout < 0.0 || dropout >= 1.0)
    throw Error("bounds", "encoder config: dropout in [0, 1)");
}

EncoderConfig encoder_toy_config() {
  EncoderConfig cfg;
  cfg.d = 64;
  cfg.n_layers = 2;
  cfg.n_heads = 4;
  cfg.mlp_ratio = 4.0;
  cfg.n_classes = 8;
  return cfg;
}

EncoderConfig encoder_base_config() {
  EncoderConfig cfg;
  cfg.d = 768;
  cfg.n_layers = 12;
  cfg.n_heads = 12;
  cfg.mlp_ratio = 4.0;
  cfg.n_classes = 527;
  return cfg;
}

namespace {

Tensor init_normal(std::vector<size_t> shape, Rng& rng, double stddev = 0.02) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

// Xavier/Glorot for weight matrices so block outputs carry O(1) signal at
// init; positional tables stay at the N(0, 0.02^2) convention.
Tensor init_xavier(size_t fan_in, size_t fan_out, Rng& rng) {
  double stddev = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  return init_normal({fan_in, fan_out}, rng, stddev);
}

}  // namespace

PasstModel PasstModel::create(const EncoderConfig& cfg,
                              const PatchGeometry& geom, const MelConfig& mel,
                              std::uint64_t seed) {
  cfg.validate();
  geom.validate();
  mel.validate();
  Rng rng(seed);
  PasstModel m;
  m.config = cfg;
  m.geometry = geom;
  m.mel = mel;
  m.grid_f = geom.grid_f(mel.n_mels);
  // The time table covers a 10-second training clip at this preset.
  int frames_10s = 10 * mel.sample_rate / mel.hop_length;
  m.grid_t_max = geom.grid_t(frames_10s);

  size_t d = cfg.d;
  size_t pd = geom.patch_dim();
  m.proj_weight = init_xavier(pd, d, rng);
  m.proj_bias = Tensor({d});
  m.pos.freq_table = init_normal({static_cast<size_t>(m.grid_f), d}, rng);
  m.pos.time_table = init_normal({static_cast<size_t>(m.grid_t_max), d}, rng);
  m.pos.token_enc = init_normal({2, d}, rng);
  size_t hidden = cfg.mlp_hidden();
  for (size_t i = 0; i < cfg.n_layers; ++i) {
    EncoderBlock b;
    b.ln1_gamma = Tensor({d}, 1.0);
    b.ln1_beta = Tensor({d});
    b.wq = init_xavier(d, d, rng);
    b.bq = Tensor({d});
    b.wk = init_xavier(d, d, rng);
    b.wv = init_xavier(d, d, rng);
    b.bv = Tensor({d});
    b.wo = init_xavier(d, d, rng);
    b.bo = Tensor({d});
    b.ln2_gamma = Tensor({d}, 1.0);
    b.ln2_beta = Tensor({d});
    b.w1 = init_xavier(d, hidden, rng);
    b.b1 = Tensor({hidden});
    b.w2 = init_xavier(hidden, d, rng);
    b.b2 = Tensor({d});
    m.blocks.push_back(std::move(b));
  }
  m.final_ln_gamma = Tensor({d}, 1.0);
  m.final_ln_beta = Tensor({d});
  m.head_weight = init_xavier(d, cfg.n_classes, rng);
  m.head_bias = Tensor({cfg.n_classes});
  m.set_requires_grad(true);
  return m;
}

std::vector<std::pair<std::string, Tensor>> PasstModel::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("patch_proj.weight", proj_weight);
  out.emplace_back("patch_proj.bias", proj_bias);
  out.emplace_back("pos.freq", pos.freq_table);
  out.emplace_back("pos.time", pos.time_table);
  out.emplace_back("pos.token", pos.token_enc);
  for (size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    std::string p = "block" + std::to_string(i) + ".";
    out.emplace_back(p + "ln1.gamma", b.ln1_gamma);
    out.emplace_back(p + "ln1.beta", b.ln1_beta);
    out.emplace_back(p + "attn.wq", b.wq);
    out.emplace_back(p + "attn.bq", b.bq);
    out.emplace_back(p + "attn.wk", b.wk);
    out.emplace_back(p + "attn.wv", b.wv);
    out.emplace_back(p + "attn.bv", b.bv);
    out.emplace_back(p + "attn.wo", b.wo);
    out.emplace_back(p + "attn.bo", b.bo);
    out.emplace_back(p + "ln2.gamma", b.ln2_gamma);
    out.emplace_back(p + "ln2.beta", b.ln2_beta);
    out.emplace_back(p + "mlp.w1", b.w1);
    out.emplace_back(p + "mlp.b1", b.b1);
    out.emplace_back(p + "mlp.w2", b.w2);
    out.emplace_back(p + "mlp.b2", b.b2);
  }
  out.emplace_back("final_ln.gamma", final_ln_gamma);
  out.emplace_back("final_ln.beta", final_ln_beta);
  out.emplace_back("head.weight", head_weight);
  out.emplace_back("head.bias", head_bias);
  return out;
}

std::vector<Tensor> PasstModel::params() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

void PasstModel::set_requires_grad(bool v) {
  for (auto& t : params()) t.set_requires_grad(v);
}

void PasstModel::zero_grad() {
  for (auto& t : params()) t.zero_grad();
}

TokenSequence PasstModel::tokenize_mel(const MelSpectrogram& m) const {
  PatchGrid grid = patch_grid(m, geometry);
  return tokenize(grid, proj_weight, proj_bias, pos);
}

namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return ops::add_rowvec(ops::matmul(x, w), b);
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  Tensor mask(x.shape());
  double keep = 1.0 - rate;
  for (double& v : mask.data())
    v = rng.uniform01() < rate ? 0.0 : 1.0 / keep;
  return ops::mul(x, mask);
}

}  // namespace

EncoderOutput encoder_forward(const TokenSequence& seq, const PasstModel& model,
                              RunMode mode, Rng* rng, AttnCapture* capture) {
  const EncoderConfig& cfg = model.config;
  if (seq.tokens.dim(1) != cfg.d)
    throw Error("shape", "encoder_forward: token dim " +
                             std::to_string(seq.tokens.dim(1)) +
                             " != model d " + std::to_string(cfg.d));
  bool use_dropout = mode == RunMode::Train && cfg.dropout > 0.0;
  if (use_dropout && rng == nullptr)
    throw Error("usage", "encoder_forward: train-mode dropout needs an rng");
  if (capture) capture->rowsums.clear();

  Tensor x = seq.tokens;
  for (const auto& b : model.blocks) {
    Tensor h = ops::layer_norm(x, b.ln1_gamma, b.ln1_beta);
    Tensor q = linear(h, b.wq, b.bq);
    Tensor k = ops::matmul(h, b.wk);
    Tensor v = linear(h, b.wv, b.bv);
    std::vector<std::vector<double>> rowsums;
    Tensor attn = ops::multi_head_attention(
        q, k, v, cfg.n_heads, capture ? &rowsums : nullptr);
    if (capture) capture->rowsums.push_back(std::move(rowsums));
    Tensor attn_out = linear(attn, b.wo, b.bo);
    if (use_dropout) attn_out = dropout(attn_out, cfg.dropout, *rng);
    x = ops::add(x, attn_out);

    Tensor h2 = ops::layer_norm(x, b.ln2_gamma, b.ln2_beta);
    Tensor m1 = ops::gelu(linear(h2, b.w1, b.b1));
    Tensor m2 = linear(m1, b.w2, b.b2);
    if (use_dropout) m2 = dropout(m2, cfg.dropout, *rng);
    x = ops::add(x, m2);
  }

  EncoderOutput out;
  // An empty encoder is the identity map; the final norm caps the block stack.
  out.token_states =
      model.blocks.empty()
          ? x
          : ops::layer_norm(x, model.final_ln_gamma, model.final_ln_beta);
  Tensor c_state = ops::slice_rows(out.token_states, 0, 1);
  Tensor d_state = ops::slice_rows(out.token_states, 1, 1);
  out.pooled = ops::scale(ops::add(c_state, d_state), 0.5);
  out.logits = linear(out.pooled, model.head_weight, model.head_bias);
  return out;
}

CostReport attention_cost(size_t n, const EncoderConfig& cfg) {
  if (n < 1) throw Error("bounds", "attention_cost: n must be >= 1");
  cfg.validate();
  CostReport r;
  r.n = n;
  auto nn = static_cast<unsigned long long>(n) * n;
  r.score_entries_per_layer = nn * cfg.n_heads;
  r.score_entries_total = r.score_entries_per_layer * cfg.n_layers;
  r.attention_macs = 2ull * nn * cfg.d * cfg.n_layers;
  unsigned long long per_layer_linear =
      4ull * n * cfg.d * cfg.d + 2ull * n * cfg.d * cfg.mlp_hidden();
  r.linear_macs = per_layer_linear * cfg.n_layers +
                  static_cast<unsigned long long>(cfg.d) * cfg.n_classes;
  r.total_macs = r.attention_macs + r.linear_macs;
  // Transient attention buffers dominate at long n: two n^2 score matrices
  // live at once, plus per-layer (n, d) states and the MLP hidden.
  r.peak_activation_elements =
      2ull * nn +
      cfg.n_layers * (6ull * n * cfg.d + static_cast<unsigned long long>(n) *
                                             cfg.mlp_hidden());
  return r;
}

// ---- augmentation + training ----

AugmentConfig augment_off() {
  AugmentConfig cfg;
  cfg.mixup = false;
  cfg.specaugment = false;
  cfg.roll = false;
  cfg.gain = false;
  return cfg;
}

void mixup_pair(MelSpectrogram& a, std::vector<double>& label_a,
                const MelSpectrogram& b, const std::vector<double>& label_b,
                double lambda) {
  if (a.values.size() != b.values.size())
    throw Error("shape", "mixup: mel shapes differ");
  if (label_a.size() != label_b.size())
    throw Error("shape", "mixup: label sizes differ");
  for (size_t i = 0; i < a.values.size(); ++i)
    a.values[i] = lambda * a.values[i] + (1.0 - lambda) * b.values[i];
  for (size_t i = 0; i < label_a.size(); ++i)
    label_a[i] = lambda * label_a[i] + (1.0 - lambda) * label_b[i];
}

void spec_augment(MelSpectrogram& mel, const AugmentConfig& cfg, Rng& rng) {
  int max_t = std::max(
      1, static_cast<int>(mel.n_frames * cfg.time_stripe_frac));
  for (int s = 0; s < cfg.time_stripes; ++s) {
    int width = static_cast<int>(rng.uniform_below(max_t + 1));
    if (width == 0 || width >= mel.n_frames) continue;
    int start = static_cast<int>(rng.uniform_below(mel.n_frames - width + 1));
    for (int m = 0; m < mel.n_mels; ++m)
      for (int t = start; t < start + width; ++t) mel.at(m, t) = 0.0;
  }
  for (int s = 0; s < cfg.freq_stripes; ++s) {
    int width = static_cast<int>(
        rng.uniform_below(static_cast<std::uint64_t>(cfg.freq_stripe_bins) + 1));
    if (width == 0 || width >= mel.n_mels) continue;
    int start = static_cast<int>(rng.uniform_below(mel.n_mels - width + 1));
    for (int m = start; m < start + width; ++m)
      for (int t = 0; t < mel.n_frames; ++t) mel.at(m, t) = 0.0;
  }
}

void roll_waveform(Waveform& wav, long shift) {
  size_t n = wav.samples.size();
  if (n == 0) return;
  long k = ((shift % static_cast<long>(n)) + static_cast<long>(n)) %
           static_cast<long>(n);
  std::rotate(wav.samples.begin(), wav.samples.begin() + (n - k),
              wav.samples.end());
}

void apply_gain(Waveform& wav, double db) {
  double g = std::pow(10.0, db / 20.0);
  for (double& s : wav.samples) s *= g;
}

double train_step(const std::vector<TrainItem>& batch, PasstModel& model,
                  const PatchoutSpec& patchout, const AugmentConfig& augment,
                  AdamW& opt, Rng& rng, bool multilabel) {
  if (batch.empty()) throw Error("bounds", "train_step: empty batch");
  size_t n_classes = model.config.n_classes;
  for (const auto& item : batch)
    if (item.label.size() != n_classes)
      throw Error("shape", "train_step: label size " +
                               std::to_string(item.label.size()) +
                               " != n_classes " + std::to_string(n_classes));

  // Augment copies; the caller's mels stay untouched.
  std::vector<MelSpectrogram> mels;
  std::vector<std::vector<double>> labels;
  mels.reserve(batch.size());
  for (const auto& item : batch) {
    mels.push_back(item.mel);
    labels.push_back(item.label);
  }
  if (augment.mixup && batch.size() > 1) {
    for (size_t i = 0; i < mels.size(); ++i) {
      double lambda = rng.beta(augment.mixup_alpha, augment.mixup_alpha);
      // Blend towards the dominant side so the first sample stays primary.
      lambda = std::max(lambda, 1.0 - lambda);
      size_t j = rng.uniform_below(mels.size());
      if (j == i) continue;
      mixup_pair(mels[i], labels[i], batch[j].mel, batch[j].label, lambda);
    }
  }
  if (augment.specaugment)
    for (auto& m : mels) spec_augment(m, augment, rng);

  opt.zero_grad();
  GradTape tape;
  double loss_value = 0.0;
  {
    GradTape::Scope scope(tape);
    Tensor total;
    for (size_t i = 0; i < mels.size(); ++i) {
      TokenSequence seq = model.tokenize_mel(mels[i]);
      PatchoutResult po = apply_patchout(seq, patchout, rng);
      EncoderOutput out = encoder_forward(po.seq, model, RunMode::Train, &rng);
      Tensor target({1, n_classes}, labels[i]);
      Tensor loss_i = multilabel
                          ? ops::binary_cross_entropy(out.logits, target)
                          : ops::cross_entropy(out.logits, target);
      total = total.defined() ? ops::add(total, loss_i) : loss_i;
    }
    Tensor loss = ops::scale(total, 1.0 / static_cast<double>(mels.size()));
    loss_value = loss.value();
    tape.backward(loss);
  }
  opt.step();
  return loss_value;
}

}  // namespace passt
