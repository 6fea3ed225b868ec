#pragma once

#include <vector>

#include "passt/patch_embed.hpp"
#include "passt/rng.hpp"

namespace passt {

enum class PatchoutMode { Off, Structured, Unstructured };

struct PatchoutSpec {
  PatchoutMode mode = PatchoutMode::Off;
  int f_drop = 0;  // frequency rows to remove (structured)
  int t_drop = 0;  // time columns to remove (structured)
  int u_drop = 0;  // patch count to remove (unstructured)
};

struct PatchoutResult {
  TokenSequence seq;
  std::vector<size_t> kept_f;  // structured: retained rows (ascending)
  std::vector<size_t> kept_t;  // structured: retained columns (ascending)
  std::vector<size_t> kept_tokens;  // indices into the input sequence
};

// Drops whole rows/columns of the patch grid, sampled uniformly without
// replacement. C and D are always retained; survivors keep their original
// encodings and coordinates. Mode Off returns the input unchanged.
PatchoutResult structured_patchout(const TokenSequence& seq,
                                   const PatchoutSpec& spec, Rng& rng);

// Drops u_drop patch tokens chosen uniformly regardless of position.
PatchoutResult unstructured_patchout(const TokenSequence& seq,
                                     const PatchoutSpec& spec, Rng& rng);

// Dispatch on spec.mode; Off is the identity (inference path).
PatchoutResult apply_patchout(const TokenSequence& seq, const PatchoutSpec& spec,
                              Rng& rng);

}  // namespace passt
