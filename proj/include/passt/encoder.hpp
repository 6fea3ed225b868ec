#pragma once

#include <string>
#include <utility>
#include <vector>

#include "passt/optim.hpp"
#include "passt/patch_embed.hpp"
#include "passt/patchout.hpp"

namespace passt {

struct EncoderConfig {
  size_t d = 64;
  size_t n_layers = 2;
  size_t n_heads = 4;
  double mlp_ratio = 4.0;
  size_t n_classes = 8;
  double dropout = 0.0;

  size_t mlp_hidden() const {
    return static_cast<size_t>(static_cast<double>(d) * mlp_ratio);
  }
  void validate() const;
};

// Geometry presets. "toy" is the desk-scale config used in the tests and the
// benchmark; "base" mirrors a DeiT-B-sized model (d=768, 12 layers, 12 heads,
// 527 classes).
EncoderConfig encoder_toy_config();
EncoderConfig encoder_base_config();

// Attention carries no key bias: a constant added to every key shifts each
// softmax row uniformly and cannot affect the output.
struct EncoderBlock {
  Tensor ln1_gamma, ln1_beta;
  Tensor wq, bq, wk, wv, bv, wo, bo;
  Tensor ln2_gamma, ln2_beta;
  Tensor w1, b1, w2, b2;
};

// The full model: patch projection, positional tables, encoder blocks, and
// classifier head, with the mel/patch geometry it was built for.
struct PasstModel {
  EncoderConfig config;
  PatchGeometry geometry;
  MelConfig mel;
  int grid_f = 0;       // frequency patch positions (from mel.n_mels)
  int grid_t_max = 0;   // time positions covered by the time table (10 s clip)

  Tensor proj_weight;  // (patch_dim, d)
  Tensor proj_bias;    // (d)
  PositionalTables pos;
  std::vector<EncoderBlock> blocks;
  Tensor final_ln_gamma, final_ln_beta;
  Tensor head_weight;  // (d, n_classes)
  Tensor head_bias;    // (n_classes)

  // Builds all parameter tensors: weights and positional tables from
  // N(0, 0.02^2), biases zero, layer-norm gains one.
  static PasstModel create(const EncoderConfig& cfg, const PatchGeometry& geom,
                           const MelConfig& mel, std::uint64_t seed);

  std::vector<std::pair<std::string, Tensor>> named_params() const;
  std::vector<Tensor> params() const;
  void set_requires_grad(bool v);
  void zero_grad();

  TokenSequence tokenize_mel(const MelSpectrogram& m) const;
};

struct EncoderOutput {
  Tensor token_states;  // (n, d) final-layer states
  Tensor pooled;        // (1, d) mean of final C and D states
  Tensor logits;        // (1, n_classes)
};

// Per-layer, per-head attention row sums captured during forward (eval
// diagnostics; rows of every attention matrix must sum to 1).
struct AttnCapture {
  std::vector<std::vector<std::vector<double>>> rowsums;  // [layer][head][row]
};

enum class RunMode { Eval, Train };

// Pre-norm blocks, GELU MLP, final layer norm; logits from the mean of the
// final C and D states. Deterministic in eval mode; dropout (if configured)
// is active only in train mode and draws from rng.
EncoderOutput encoder_forward(const TokenSequence& seq, const PasstModel& model,
                              RunMode mode = RunMode::Eval, Rng* rng = nullptr,
                              AttnCapture* capture = nullptr);

// Closed-form cost accounting for a sequence of length n. The attention
// term scales exactly with n^2.
struct CostReport {
  size_t n = 0;
  unsigned long long score_entries_per_layer = 0;  // n_heads * n^2
  unsigned long long score_entries_total = 0;
  unsigned long long attention_macs = 0;  // 2 * n^2 * d per layer (QK^T, AV)
  unsigned long long linear_macs = 0;     // projections + MLP + head
  unsigned long long total_macs = 0;
  unsigned long long peak_activation_elements = 0;
};

CostReport attention_cost(size_t n, const EncoderConfig& cfg);

// ---- training ----

struct AugmentConfig {
  bool mixup = true;
  double mixup_alpha = 0.3;
  bool specaugment = true;
  int time_stripes = 2;
  double time_stripe_frac = 0.10;  // max stripe width as a fraction of frames
  int freq_stripes = 2;
  int freq_stripe_bins = 8;  // max stripe width in mel bins
  // Waveform-level augments, applied where clips are synthesized/loaded.
  bool roll = false;
  double roll_max_frac = 0.1;
  bool gain = false;
  double gain_max_db = 6.0;
};

AugmentConfig augment_off();

struct TrainItem {
  MelSpectrogram mel;
  std::vector<double> label;  // one-hot (multiclass) or multi-hot (multilabel)
};

// One optimization step over a batch: mixup + SpecAugment on mel copies,
// tokenize, Patchout, forward, mean CE/BCE loss, backward, AdamW update.
// Returns the batch loss.
double train_step(const std::vector<TrainItem>& batch, PasstModel& model,
                  const PatchoutSpec& patchout, const AugmentConfig& augment,
                  AdamW& opt, Rng& rng, bool multilabel = false);

// Augmentation pieces (exposed for tests).
void mixup_pair(MelSpectrogram& a, std::vector<double>& label_a,
                const MelSpectrogram& b, const std::vector<double>& label_b,
                double lambda);
void spec_augment(MelSpectrogram& mel, const AugmentConfig& cfg, Rng& rng);
void roll_waveform(Waveform& wav, long shift);
void apply_gain(Waveform& wav, double db);

}  // namespace passt
