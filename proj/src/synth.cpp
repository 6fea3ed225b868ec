#include "passt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "passt/audio.hpp"
#include "passt/rng.hpp"

namespace passt {

using nlohmann::json;

void SynthSpec::validate() const {
  if (n_clips < 5) throw Error("bounds", "synth: need at least 5 clips");
  if (kind == Kind::PitchClass && n_classes < 2)
    throw Error("bounds", "synth: pitch task needs >= 2 classes");
  if (kind == Kind::EventDetect && clip_seconds < 2.0)
    throw Error("bounds", "synth: event clips must be >= 2 s");
  if (snr_db_min > snr_db_max) throw Error("bounds", "synth: SNR range inverted");
}

double pitch_class_frequency(int k) {
  return 220.0 * std::pow(2.0, static_cast<double>(k) / 8.0);
}

namespace {

double signal_rms(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

void add_noise_at_snr(std::vector<double>& x, double snr_db, Rng& rng) {
  double rms = signal_rms(x);
  if (rms == 0.0) rms = 1e-4;
  double noise_std = rms / std::pow(10.0, snr_db / 20.0);
  for (double& v : x) v += rng.normal(0.0, noise_std);
}

void normalize_peak(std::vector<double>& x, double peak = 0.9) {
  double mx = 0.0;
  for (double v : x) mx = std::max(mx, std::abs(v));
  if (mx > peak)
    for (double& v : x) v *= peak / mx;
}

// Stratified 60/20/20 split of per-class clip lists.
void assign_splits(TaskManifest& manifest,
                   const std::vector<std::vector<ClipEntry>>& per_class) {
  for (const auto& clips : per_class) {
    size_t n = clips.size();
    size_t n_train = (n * 6 + 5) / 10;  // round so 50 -> 30/10/10
    size_t n_valid = (n - n_train) / 2;
    for (size_t i = 0; i < n; ++i) {
      if (i < n_train) manifest.train.push_back(clips[i]);
      else if (i < n_train + n_valid) manifest.valid.push_back(clips[i]);
      else manifest.test.push_back(clips[i]);
    }
  }
}

void write_labels_json(const TaskManifest& manifest, const std::string& out_dir) {
  json entries = json::array();
  for (const auto* split : {&manifest.train, &manifest.valid, &manifest.test}) {
    for (const auto& clip : *split) {
      json entry{{"file", clip.file}};
      if (manifest.task_type == TaskType::SceneMulticlass) {
        entry["label"] = clip.label;
      } else if (manifest.task_type == TaskType::TimestampEvent) {
        json events = json::array();
        for (const auto& e : clip.events)
          events.push_back({{"onset_ms", e.onset_ms},
                            {"offset_ms", e.offset_ms},
                            {"label", e.label}});
        entry["events"] = events;
      }
      entries.push_back(entry);
    }
  }
  std::ofstream out((std::filesystem::path(out_dir) / "labels.json").string());
  out << entries.dump(2) << "\n";
}

}  // namespace

TaskManifest gen_pitch_task(const SynthSpec& spec, const std::string& out_dir) {
  spec.validate();
  Rng rng(spec.seed);
  auto audio_dir = std::filesystem::path(out_dir) / "audio";
  std::filesystem::create_directories(audio_dir);

  TaskManifest manifest;
  manifest.name = "synth-pitch";
  manifest.task_type = TaskType::SceneMulticlass;
  manifest.category = "music";
  manifest.metric = MetricKind::Accuracy;
  char buf[32];
  for (int k = 0; k < spec.n_classes; ++k) {
    std::snprintf(buf, sizeof buf, "pitch_%02d", k);
    manifest.labels.emplace_back(buf);
  }

  auto n_samples = static_cast<size_t>(spec.clip_seconds * spec.sample_rate);
  std::vector<std::vector<ClipEntry>> per_class(spec.n_classes);
  for (int i = 0; i < spec.n_clips; ++i) {
    int cls = i % spec.n_classes;
    double f0 = pitch_class_frequency(cls);
    double gain = rng.uniform(0.3, 0.7);
    double snr = rng.uniform(spec.snr_db_min, spec.snr_db_max);

    std::vector<double> x(n_samples, 0.0);
    const double harmonics[3] = {1.0, 0.4, 0.2};
    for (int h = 0; h < 3; ++h) {
      double freq = f0 * (h + 1);
      double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      double amp = gain * harmonics[h];
      for (size_t s = 0; s < n_samples; ++s)
        x[s] += amp * std::sin(2.0 * std::numbers::pi * freq * s /
                                   spec.sample_rate +
                               phase);
    }
    add_noise_at_snr(x, snr, rng);
    normalize_peak(x);

    std::snprintf(buf, sizeof buf, "clip_%04d.wav", i);
    Waveform wav{std::move(x), spec.sample_rate};
    save_wav((audio_dir / buf).string(), wav);
    ClipEntry clip;
    clip.file = std::string("audio/") + buf;
    clip.label = manifest.labels[cls];
    per_class[cls].push_back(std::move(clip));
  }
  assign_splits(manifest, per_class);
  write_labels_json(manifest, out_dir);
  save_manifest(manifest,
                (std::filesystem::path(out_dir) / "manifest.json").string());
  return manifest;
}

TaskManifest gen_event_task(const SynthSpec& spec, const std::string& out_dir) {
  spec.validate();
  Rng rng(spec.seed);
  auto audio_dir = std::filesystem::path(out_dir) / "audio";
  std::filesystem::create_directories(audio_dir);

  TaskManifest manifest;
  manifest.name = "synth-events";
  manifest.task_type = TaskType::TimestampEvent;
  manifest.category = "general";
  manifest.metric = MetricKind::OnsetF1;
  int n_classes = std::max(1, spec.n_classes);
  char buf[32];
  for (int k = 0; k < n_classes; ++k) {
    std::snprintf(buf, sizeof buf, "tone_%02d", k);
    manifest.labels.emplace_back(buf);
  }

  auto n_samples = static_cast<size_t>(spec.clip_seconds * spec.sample_rate);
  const double min_gap_ms = 250.0;
  const double ramp_ms = 10.0;
  auto ms_to_samples = [&](double ms) {
    return static_cast<size_t>(ms * spec.sample_rate / 1000.0);
  };

  // One flat list; stratification is meaningless for event sets.
  std::vector<std::vector<ClipEntry>> all(1);
  for (int i = 0; i < spec.n_clips; ++i) {
    std::vector<double> x(n_samples);
    for (double& v : x) v = rng.normal(0.0, 0.01);

    ClipEntry clip;
    int want = spec.max_events_per_clip == 0
                   ? 0
                   : 1 + static_cast<int>(
                             rng.uniform_below(spec.max_events_per_clip));
    // Rejection-sample non-overlapping events >= min_gap apart.
    std::vector<std::pair<double, double>> placed;  // onset, offset (ms)
    for (int e = 0; e < want; ++e) {
      double dur_ms = rng.uniform(250.0, 450.0);
      for (int attempt = 0; attempt < 64; ++attempt) {
        double onset_ms =
            rng.uniform(ramp_ms, spec.clip_seconds * 1000.0 - dur_ms - ramp_ms);
        bool clear = true;
        for (auto [o, f] : placed)
          if (onset_ms < f + min_gap_ms && o < onset_ms + dur_ms + min_gap_ms)
            clear = false;
        if (!clear) continue;
        placed.emplace_back(onset_ms, onset_ms + dur_ms);
        int cls = static_cast<int>(rng.uniform_below(n_classes));
        double freq = 800.0 + 400.0 * cls;
        double amp = rng.uniform(0.25, 0.5);
        double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        size_t begin = ms_to_samples(onset_ms);
        size_t len = ms_to_samples(dur_ms);
        size_t ramp = ms_to_samples(ramp_ms);
        for (size_t s = 0; s < len && begin + s < n_samples; ++s) {
          double env = 1.0;
          if (s < ramp)
            env = 0.5 - 0.5 * std::cos(std::numbers::pi * s / ramp);
          else if (s + ramp > len)
            env = 0.5 - 0.5 * std::cos(std::numbers::pi * (len - s) / ramp);
          x[begin + s] += env * amp *
                          std::sin(2.0 * std::numbers::pi * freq * s /
                                       spec.sample_rate +
                                   phase);
        }
        clip.events.push_back(
            {onset_ms, onset_ms + dur_ms, manifest.labels[cls]});
        break;
      }
    }
    std::sort(clip.events.begin(), clip.events.end(),
              [](const EventLabel& a, const EventLabel& b) {
                return a.onset_ms < b.onset_ms;
              });
    normalize_peak(x);
    std::snprintf(buf, sizeof buf, "clip_%04d.wav", i);
    save_wav((audio_dir / buf).string(), Waveform{std::move(x), spec.sample_rate});
    clip.file = std::string("audio/") + buf;
    all[0].push_back(std::move(clip));
  }
  assign_splits(manifest, all);
  write_labels_json(manifest, out_dir);
  save_manifest(manifest,
                (std::filesystem::path(out_dir) / "manifest.json").string());
  return manifest;
}

}  // namespace passt
