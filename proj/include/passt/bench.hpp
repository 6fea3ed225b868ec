#pragma once

#include <string>
#include <vector>

#include "passt/trainer.hpp"

namespace passt {

struct BenchConfig {
  EncoderConfig encoder;  // defaults to the toy-base bench model below
  PatchGeometry geometry;
  int trials = 5;
  int warmup = 2;
  double clip_seconds = 10.0;
  std::uint64_t seed = 1;
  bool timing = true;  // false: exact sequence accounting only
};

// d=64, 4 layers: small enough to time on a desk, deep enough that the
// attention term dominates at full sequence length.
EncoderConfig bench_model_config();

// Structured Patchout amounts per preset: hop10ms drops (4, 40),
// hop5ms (6, 100), hop3ms (6, 150).
PatchoutSpec bench_patchout_for(const std::string& preset);

struct TimingStats {
  double median_ms = 0.0;
  double iqr_ms = 0.0;
  int trials = 0;
  int warmup = 0;
};

struct PresetBench {
  std::string preset;
  int n_frames = 0;
  int grid_f = 0;
  int grid_t = 0;
  size_t patch_tokens = 0;
  size_t total_tokens = 0;  // + C and D
  PatchoutSpec patchout;
  size_t patch_tokens_patchout = 0;
  size_t total_tokens_patchout = 0;
  CostReport cost_full;
  CostReport cost_patchout;
  // filled when timing is on
  TimingStats train_full;
  TimingStats train_patchout;
  double speedup = 0.0;
  TimingStats eval_forward;
  double eval_samples_per_s = 0.0;
};

struct BenchReport {
  std::vector<PresetBench> presets;  // hop10ms, hop5ms, hop3ms
  EncoderConfig encoder;
  int trials = 0;
  int warmup = 0;
  bool timed = false;
};

// Exact sequence accounting for the three presets (10 s clips), plus
// median-of-trials train-step and eval-forward timing when enabled.
BenchReport run_bench(const BenchConfig& cfg);

std::string bench_report_to_json(const BenchReport& report);

}  // namespace passt
