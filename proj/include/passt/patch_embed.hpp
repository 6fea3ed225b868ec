#pragma once

#include <vector>

#include "passt/mel.hpp"
#include "passt/tensor.hpp"

namespace passt {

struct PatchGeometry {
  int patch_f = 16;
  int patch_t = 16;
  int stride_f = 10;
  int stride_t = 10;

  int grid_f(int n_mels) const { return (n_mels - patch_f) / stride_f + 1; }
  int grid_t(int n_frames) const { return (n_frames - patch_t) / stride_t + 1; }
  int patch_dim() const { return patch_f * patch_t; }
  void validate() const;
};

// Patches cut from a mel spectrogram, flattened row-major (mel-bin major,
// then frame). Rows ordered by (f, t): row = f * grid_t + t. The tensor is a
// constant (gradients never flow into audio).
struct PatchGrid {
  PatchGeometry geometry;
  int grid_f = 0;
  int grid_t = 0;
  Tensor patches;  // (grid_f * grid_t, patch_f * patch_t)
};

PatchGrid patch_grid(const MelSpectrogram& mel, const PatchGeometry& geometry);

// Learned positional encodings: frequency rows are length-independent; only
// the time table is cropped for shorter clips. token_enc rows 0/1 are the
// classification and distillation token embeddings.
struct PositionalTables {
  Tensor freq_table;  // (grid_f, d)
  Tensor time_table;  // (grid_t_max, d)
  Tensor token_enc;   // (2, d)
};

enum class TokenKind { Classification, Distillation, Patch };

struct TokenCoord {
  TokenKind kind;
  int f = -1;
  int t = -1;
};

// Transformer input: C, D, then patch tokens in t-major/f-minor order, each
// patch token = projection(patch) + freq_table[f] + time_table[t].
struct TokenSequence {
  Tensor tokens;  // (n, d)
  std::vector<TokenCoord> coords;
  PatchGeometry geometry;
  int grid_f = 0;
  int grid_t = 0;

  size_t size() const { return coords.size(); }
};

TokenSequence tokenize(const PatchGrid& grid, const Tensor& proj_weight,
                       const Tensor& proj_bias, const PositionalTables& tables);

}  // namespace passt
