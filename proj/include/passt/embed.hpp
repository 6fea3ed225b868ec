#pragma once

#include <string>
#include <vector>

#include "passt/encoder.hpp"

namespace passt {

// Which representation levels go into an embedding row, concatenated in the
// fixed order L, M, H (and RF 160 before RF 640 in 2RF mode).
struct LevelSpec {
  bool use_l = false;  // mel features
  bool use_m = true;   // pooled C/D state (dim d)
  bool use_h = true;   // classifier logits (dim n_classes)

  void validate() const {
    if (!use_l && !use_m && !use_h)
      throw Error("usage", "level spec: at least one of L/M/H required");
  }
};

LevelSpec parse_levels(const std::string& spec);  // e.g. "L,M" or "M,H"
std::string levels_to_string(const LevelSpec& levels);

struct RFSpec {
  std::vector<int> rf_ms = {160};  // {160}, {640}, or {160, 640} for 2RF
  int hop_ms = 50;
};

RFSpec parse_rf(const std::string& spec);  // "160" | "640" | "2rf"

// L-level dimensionality: per-bin temporal mean for scenes, a flattened
// 5-frame window around the timestamp otherwise.
inline constexpr int kTimestampMelFrames = 5;

size_t level_dim(const LevelSpec& levels, const EncoderConfig& cfg, int n_mels,
                 bool timestamp_mode);

struct EmbeddingDescriptor {
  std::string mode;  // "scene" | "timestamp"
  LevelSpec levels;
  std::vector<int> rf_ms;  // timestamp mode
  int hop_ms = 0;          // timestamp mode
  double window_s = 0.0;   // scene mode
  double overlap = 0.0;    // scene mode
  std::string checkpoint_id;
  std::string mel_preset;
  size_t dim = 0;
};

// Rows are float32 (the on-disk format); assembly happens in doubles and is
// narrowed once per row.
struct EmbeddingMatrix {
  size_t rows = 0;
  size_t dim = 0;
  std::vector<float> data;               // row-major
  std::vector<double> timestamps_ms;     // timestamp mode only
  EmbeddingDescriptor descriptor;

  float at(size_t r, size_t c) const { return data[r * dim + c]; }
  std::vector<double> row_as_double(size_t r) const;
};

// Scene embedding: one row summarizing the clip. Clips no longer than
// window_s go through a single forward with cropped time encoding; longer
// clips are split into window_s windows with stride window_s*(1-overlap),
// a partial tail window is kept when the full windows do not reach the end,
// and the per-window vectors are averaged with an order-independent exact
// sum.
EmbeddingMatrix scene_embedding(const Waveform& wav, const PasstModel& model,
                                const LevelSpec& levels, double window_s = 10.0,
                                double overlap = 0.5);

// Timestamp embeddings: one row per hop_ms step from 0 to the clip end; for
// each timestamp an rf_ms window centered on it (zero-padded at the edges)
// runs through the model; 2RF concatenates the 160 ms and 640 ms rows.
EmbeddingMatrix timestamp_embeddings(const Waveform& wav,
                                     const PasstModel& model,
                                     const LevelSpec& levels, const RFSpec& rf);

// Embedding container: magic "PSSTEMBD", u32 LE version, u64 LE
// length-prefixed JSON descriptor, rows x dim float32 LE, then (timestamp
// mode) rows float64 LE timestamps.
inline constexpr char kEmbedMagic[8] = {'P', 'S', 'S', 'T', 'E', 'M', 'B', 'D'};
inline constexpr std::uint32_t kEmbedVersion = 1;

void save_embeddings(const EmbeddingMatrix& matrix, const std::string& path);
EmbeddingMatrix load_embeddings(const std::string& path);

// Exposed window arithmetic (tested against a reference enumeration).
std::vector<std::pair<size_t, size_t>> scene_windows(size_t n_samples,
                                                     size_t window_samples,
                                                     size_t stride_samples);

}  // namespace passt
