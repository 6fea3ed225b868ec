#include "passt/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "passt/json_io.hpp"

namespace passt {

using nlohmann::json;

EncoderConfig bench_model_config() {
  EncoderConfig cfg;
  cfg.d = 64;
  cfg.n_layers = 4;
  cfg.n_heads = 4;
  cfg.mlp_ratio = 4.0;
  cfg.n_classes = 8;
  return cfg;
}

PatchoutSpec bench_patchout_for(const std::string& preset) {
  PatchoutSpec spec;
  spec.mode = PatchoutMode::Structured;
  if (preset == "hop10ms") {
    spec.f_drop = 4;
    spec.t_drop = 40;
  } else if (preset == "hop5ms") {
    spec.f_drop = 6;
    spec.t_drop = 100;
  } else if (preset == "hop3ms") {
    spec.f_drop = 6;
    spec.t_drop = 150;
  } else {
    throw Error("usage", "no bench patchout amounts for preset " + preset);
  }
  return spec;
}

namespace {

using Clock = std::chrono::steady_clock;

TimingStats stats_of(std::vector<double> samples, int warmup) {
  TimingStats s;
  s.trials = static_cast<int>(samples.size());
  s.warmup = warmup;
  std::sort(samples.begin(), samples.end());
  size_t n = samples.size();
  auto quantile = [&](double p) {
    double pos = p * static_cast<double>(n - 1);
    auto lo = static_cast<size_t>(pos);
    double frac = pos - static_cast<double>(lo);
    return lo + 1 < n ? samples[lo] + frac * (samples[lo + 1] - samples[lo])
                      : samples.back();
  };
  s.median_ms = quantile(0.5);
  s.iqr_ms = quantile(0.75) - quantile(0.25);
  return s;
}

double time_once(const std::function<void()>& fn) {
  auto start = Clock::now();
  fn();
  auto stop = Clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count();
}

TimingStats measure(const std::function<void()>& fn, int trials, int warmup) {
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> samples;
  samples.reserve(trials);
  for (int i = 0; i < trials; ++i) samples.push_back(time_once(fn));
  return stats_of(std::move(samples), warmup);
}

}  // namespace

BenchReport run_bench(const BenchConfig& cfg) {
  if (cfg.timing && cfg.trials < 3)
    throw Error("bounds", "bench: need at least 3 trials");
  BenchReport report;
  report.encoder = cfg.encoder;
  report.trials = cfg.trials;
  report.warmup = cfg.warmup;
  report.timed = cfg.timing;

  for (const std::string preset : {"hop10ms", "hop5ms", "hop3ms"}) {
    MelConfig mel_cfg = mel_preset(preset);
    PresetBench pb;
    pb.preset = preset;
    pb.n_frames = static_cast<int>(cfg.clip_seconds * mel_cfg.sample_rate /
                                   mel_cfg.hop_length);
    pb.grid_f = cfg.geometry.grid_f(mel_cfg.n_mels);
    pb.grid_t = cfg.geometry.grid_t(pb.n_frames);
    pb.patch_tokens = static_cast<size_t>(pb.grid_f) * pb.grid_t;
    pb.total_tokens = pb.patch_tokens + 2;
    pb.patchout = bench_patchout_for(preset);
    pb.patch_tokens_patchout =
        static_cast<size_t>(pb.grid_f - pb.patchout.f_drop) *
        (pb.grid_t - pb.patchout.t_drop);
    pb.total_tokens_patchout = pb.patch_tokens_patchout + 2;
    pb.cost_full = attention_cost(pb.total_tokens, cfg.encoder);
    pb.cost_patchout = attention_cost(pb.total_tokens_patchout, cfg.encoder);

    if (cfg.timing) {
      PasstModel model =
          PasstModel::create(cfg.encoder, cfg.geometry, mel_cfg, cfg.seed);
      // One fixed 10-second noise clip. Throughput is audio-in to
      // update-done, so the mel frontend runs inside the timed region the
      // same way a training loop would ingest raw clips.
      Rng rng(cfg.seed);
      Waveform wav;
      wav.sample_rate = mel_cfg.sample_rate;
      wav.samples.resize(
          static_cast<size_t>(cfg.clip_seconds * mel_cfg.sample_rate));
      for (double& v : wav.samples) v = rng.normal(0.0, 0.1);
      std::vector<double> label(cfg.encoder.n_classes, 0.0);
      label[0] = 1.0;

      AdamWConfig ocfg;
      AdamW opt(model.params(), ocfg);
      Rng step_rng(cfg.seed + 1);
      PatchoutSpec off;
      auto timed_step = [&](const PatchoutSpec& spec) {
        std::vector<TrainItem> batch{{log_mel(wav, mel_cfg), label}};
        train_step(batch, model, spec, augment_off(), opt, step_rng);
      };
      pb.train_full =
          measure([&] { timed_step(off); }, cfg.trials, cfg.warmup);
      pb.train_patchout =
          measure([&] { timed_step(pb.patchout); }, cfg.trials, cfg.warmup);
      pb.speedup = pb.train_full.median_ms / pb.train_patchout.median_ms;

      pb.eval_forward = measure(
          [&] {
            TokenSequence seq = model.tokenize_mel(log_mel(wav, mel_cfg));
            encoder_forward(seq, model, RunMode::Eval);
          },
          cfg.trials, cfg.warmup);
      pb.eval_samples_per_s = 1000.0 / pb.eval_forward.median_ms;
    }
    report.presets.push_back(std::move(pb));
  }
  return report;
}

namespace {

json cost_to_json(const CostReport& c) {
  return json{{"n", c.n},
              {"score_entries_per_layer", c.score_entries_per_layer},
              {"score_entries_total", c.score_entries_total},
              {"attention_macs", c.attention_macs},
              {"linear_macs", c.linear_macs},
              {"total_macs", c.total_macs},
              {"peak_activation_elements", c.peak_activation_elements}};
}

json timing_to_json(const TimingStats& t) {
  return json{{"median_ms", t.median_ms},
              {"iqr_ms", t.iqr_ms},
              {"trials", t.trials},
              {"warmup", t.warmup}};
}

}  // namespace

std::string bench_report_to_json(const BenchReport& report) {
  json presets = json::array();
  for (const auto& pb : report.presets) {
    json j{{"preset", pb.preset},
           {"n_frames", pb.n_frames},
           {"grid_f", pb.grid_f},
           {"grid_t", pb.grid_t},
           {"patch_tokens", pb.patch_tokens},
           {"total_tokens", pb.total_tokens},
           {"patchout", pb.patchout},
           {"patch_tokens_patchout", pb.patch_tokens_patchout},
           {"total_tokens_patchout", pb.total_tokens_patchout},
           {"cost_full", cost_to_json(pb.cost_full)},
           {"cost_patchout", cost_to_json(pb.cost_patchout)}};
    if (report.timed) {
      j["train_full"] = timing_to_json(pb.train_full);
      j["train_patchout"] = timing_to_json(pb.train_patchout);
      j["speedup"] = pb.speedup;
      j["eval_forward"] = timing_to_json(pb.eval_forward);
      j["eval_samples_per_s"] = pb.eval_samples_per_s;
    }
    presets.push_back(std::move(j));
  }
  return json{{"presets", presets},
              {"encoder", report.encoder},
              {"trials", report.trials},
              {"warmup", report.warmup},
              {"timed", report.timed}}
      .dump(2);
}

}  // namespace passt
