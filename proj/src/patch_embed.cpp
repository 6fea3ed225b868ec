#include "passt/patch_embed.hpp"

namespace passt {

void PatchGeometry::validate() const {
  if (patch_f <= 0 || patch_t <= 0 || stride_f <= 0 || stride_t <= 0)
    throw Error("bounds", "patch geometry: sizes and strides must be > 0");
}

PatchGrid patch_grid(const MelSpectrogram& mel, const PatchGeometry& geometry) {
  geometry.validate();
  if (mel.n_frames < geometry.patch_t)
    throw Error("bounds", "patch_grid: input has " +
                              std::to_string(mel.n_frames) +
                              " frames, need at least " +
                              std::to_string(geometry.patch_t));
  if (mel.n_mels < geometry.patch_f)
    throw Error("bounds", "patch_grid: input has fewer mel bins than patch_f");

  PatchGrid grid;
  grid.geometry = geometry;
  grid.grid_f = geometry.grid_f(mel.n_mels);
  grid.grid_t = geometry.grid_t(mel.n_frames);
  size_t n_patches = static_cast<size_t>(grid.grid_f) * grid.grid_t;
  size_t dim = geometry.patch_dim();
  grid.patches = Tensor({n_patches, dim});
  auto& out = grid.patches.data();
  for (int f = 0; f < grid.grid_f; ++f) {
    for (int t = 0; t < grid.grid_t; ++t) {
      size_t row = static_cast<size_t>(f) * grid.grid_t + t;
      int f0 = f * geometry.stride_f;
      int t0 = t * geometry.stride_t;
      for (int i = 0; i < geometry.patch_f; ++i)
        for (int j = 0; j < geometry.patch_t; ++j)
          out[row * dim + i * geometry.patch_t + j] = mel.at(f0 + i, t0 + j);
    }
  }
  return grid;
}

TokenSequence tokenize(const PatchGrid& grid, const Tensor& proj_weight,
                       const Tensor& proj_bias,
                       const PositionalTables& tables) {
  if (proj_weight.dim(0) != static_cast<size_t>(grid.geometry.patch_dim()))
    throw Error("shape", "tokenize: projection expects patch dim " +
                             std::to_string(grid.geometry.patch_dim()));
  if (tables.freq_table.dim(0) != static_cast<size_t>(grid.grid_f))
    throw Error("shape", "tokenize: freq table has " +
                             std::to_string(tables.freq_table.dim(0)) +
                             " rows, grid needs " + std::to_string(grid.grid_f));
  if (static_cast<size_t>(grid.grid_t) > tables.time_table.dim(0))
    throw Error("bounds",
                "tokenize: clip needs " + std::to_string(grid.grid_t) +
                    " time positions but the time table covers only " +
                    std::to_string(tables.time_table.dim(0)) +
                    "; window longer inputs first");

  size_t n_patches = static_cast<size_t>(grid.grid_f) * grid.grid_t;
  // Token order is t-major: token i covers (f = i % grid_f, t = i / grid_f);
  // the grid rows are (f, t)-ordered, so reorder while gathering.
  std::vector<size_t> grid_row(n_patches), f_idx(n_patches), t_idx(n_patches);
  for (size_t i = 0; i < n_patches; ++i) {
    size_t f = i % grid.grid_f;
    size_t t = i / grid.grid_f;
    grid_row[i] = f * grid.grid_t + t;
    f_idx[i] = f;
    t_idx[i] = t;
  }
  Tensor patches_ordered = ops::gather_rows(grid.patches, grid_row);
  Tensor projected =
      ops::add_rowvec(ops::matmul(patches_ordered, proj_weight), proj_bias);
  Tensor with_freq =
      ops::add(projected, ops::gather_rows(tables.freq_table, f_idx));
  Tensor patch_tokens =
      ops::add(with_freq, ops::gather_rows(tables.time_table, t_idx));

  TokenSequence seq;
  seq.tokens = ops::concat_rows({tables.token_enc, patch_tokens});
  seq.geometry = grid.geometry;
  seq.grid_f = grid.grid_f;
  seq.grid_t = grid.grid_t;
  seq.coords.reserve(n_patches + 2);
  seq.coords.push_back({TokenKind::Classification, -1, -1});
  seq.coords.push_back({TokenKind::Distillation, -1, -1});
  for (size_t i = 0; i < n_patches; ++i)
    seq.coords.push_back(
        {TokenKind::Patch, static_cast<int>(f_idx[i]), static_cast<int>(t_idx[i])});
  return seq;
}

}  // namespace passt
