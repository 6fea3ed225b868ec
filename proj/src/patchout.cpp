#include "passt/patchout.hpp"

#include <algorithm>
#include <numeric>

namespace passt {

namespace {

PatchoutResult identity(const TokenSequence& seq) {
  PatchoutResult res;
  res.seq = seq;
  res.kept_tokens.resize(seq.size());
  std::iota(res.kept_tokens.begin(), res.kept_tokens.end(), size_t{0});
  res.kept_f.resize(seq.grid_f);
  std::iota(res.kept_f.begin(), res.kept_f.end(), size_t{0});
  res.kept_t.resize(seq.grid_t);
  std::iota(res.kept_t.begin(), res.kept_t.end(), size_t{0});
  return res;
}

// Subset selection of token rows; gather keeps gradients flowing to the
// retained rows only, so dropped positional-table rows see zero gradient.
PatchoutResult select(const TokenSequence& seq, std::vector<size_t> kept,
                      std::vector<size_t> kept_f, std::vector<size_t> kept_t) {
  PatchoutResult res;
  res.kept_tokens = std::move(kept);
  res.kept_f = std::move(kept_f);
  res.kept_t = std::move(kept_t);
  res.seq.tokens = ops::gather_rows(seq.tokens, res.kept_tokens);
  res.seq.geometry = seq.geometry;
  res.seq.grid_f = seq.grid_f;
  res.seq.grid_t = seq.grid_t;
  res.seq.coords.reserve(res.kept_tokens.size());
  for (size_t i : res.kept_tokens) res.seq.coords.push_back(seq.coords[i]);
  return res;
}

}  // namespace

PatchoutResult structured_patchout(const TokenSequence& seq,
                                   const PatchoutSpec& spec, Rng& rng) {
  if (spec.mode != PatchoutMode::Structured)
    throw Error("usage", "structured_patchout: spec mode is not structured");
  if (spec.f_drop < 0 || spec.f_drop >= seq.grid_f)
    throw Error("bounds", "structured_patchout: f_drop " +
                              std::to_string(spec.f_drop) + " not in [0, " +
                              std::to_string(seq.grid_f) + ")");
  if (spec.t_drop < 0 || spec.t_drop >= seq.grid_t)
    throw Error("bounds", "structured_patchout: t_drop " +
                              std::to_string(spec.t_drop) + " not in [0, " +
                              std::to_string(seq.grid_t) + ")");

  auto dropped_f = rng.sample_without_replacement(seq.grid_f, spec.f_drop);
  auto dropped_t = rng.sample_without_replacement(seq.grid_t, spec.t_drop);
  std::vector<bool> drop_f(seq.grid_f, false), drop_t(seq.grid_t, false);
  for (size_t f : dropped_f) drop_f[f] = true;
  for (size_t t : dropped_t) drop_t[t] = true;

  std::vector<size_t> kept, kept_f, kept_t;
  for (int f = 0; f < seq.grid_f; ++f)
    if (!drop_f[f]) kept_f.push_back(f);
  for (int t = 0; t < seq.grid_t; ++t)
    if (!drop_t[t]) kept_t.push_back(t);
  for (size_t i = 0; i < seq.size(); ++i) {
    const TokenCoord& c = seq.coords[i];
    if (c.kind != TokenKind::Patch || (!drop_f[c.f] && !drop_t[c.t]))
      kept.push_back(i);
  }
  return select(seq, std::move(kept), std::move(kept_f), std::move(kept_t));
}

PatchoutResult unstructured_patchout(const TokenSequence& seq,
                                     const PatchoutSpec& spec, Rng& rng) {
  if (spec.mode != PatchoutMode::Unstructured)
    throw Error("usage", "unstructured_patchout: spec mode is not unstructured");
  long n_patches = static_cast<long>(seq.size()) - 2;
  if (spec.u_drop < 0 || spec.u_drop >= n_patches)
    throw Error("bounds", "unstructured_patchout: u_drop " +
                              std::to_string(spec.u_drop) + " not in [0, " +
                              std::to_string(n_patches) + ")");

  auto dropped =
      rng.sample_without_replacement(n_patches, spec.u_drop);  // patch-relative
  std::vector<bool> drop(seq.size(), false);
  for (size_t p : dropped) drop[p + 2] = true;  // tokens 0/1 are C/D
  std::vector<size_t> kept;
  for (size_t i = 0; i < seq.size(); ++i)
    if (!drop[i]) kept.push_back(i);

  std::vector<size_t> all_f(seq.grid_f), all_t(seq.grid_t);
  std::iota(all_f.begin(), all_f.end(), size_t{0});
  std::iota(all_t.begin(), all_t.end(), size_t{0});
  return select(seq, std::move(kept), std::move(all_f), std::move(all_t));
}

PatchoutResult apply_patchout(const TokenSequence& seq, const PatchoutSpec& spec,
                              Rng& rng) {
  switch (spec.mode) {
    case PatchoutMode::Off: return identity(seq);
    case PatchoutMode::Structured: return structured_patchout(seq, spec, rng);
    case PatchoutMode::Unstructured: return unstructured_patchout(seq, spec, rng);
  }
  throw Error("usage", "apply_patchout: unknown mode");
}

}  // namespace passt
