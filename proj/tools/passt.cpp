#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "passt/bench.hpp"
#include "passt/checkpoint.hpp"
#include "passt/json_io.hpp"
#include "passt/probe.hpp"
#include "passt/synth.hpp"

using namespace passt;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void emit(const std::string& payload, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << payload << "\n";
  } else {
    std::ofstream out(out_path);
    if (!out) throw Error("io", "cannot write " + out_path);
    out << payload << "\n";
  }
}

std::string checkpoint_id_of(const std::string& path) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(file_checksum(path)));
  return buf;
}

// ---- synth ----

struct SynthArgs {
  std::string kind = "pitch";
  std::string out_dir;
  SynthSpec spec;
};

int run_synth(const SynthArgs& args) {
  SynthSpec spec = args.spec;
  spec.kind = args.kind == "event" ? SynthSpec::Kind::EventDetect
                                   : SynthSpec::Kind::PitchClass;
  TaskManifest manifest = spec.kind == SynthSpec::Kind::PitchClass
                              ? gen_pitch_task(spec, args.out_dir)
                              : gen_event_task(spec, args.out_dir);
  json j{{"dataset", args.out_dir},
         {"task", manifest.name},
         {"task_type", task_type_name(manifest.task_type)},
         {"labels", manifest.labels},
         {"splits",
          {{"train", manifest.train.size()},
           {"valid", manifest.valid.size()},
           {"test", manifest.test.size()}}}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

// ---- train-toy ----

struct TrainArgs {
  std::string data_dir;
  std::string out_ckpt;
  std::string config_path;
  TrainConfig cfg;
};

int run_train(const TrainArgs& args) {
  TrainConfig cfg = args.cfg;
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw Error("io", "cannot open config " + args.config_path);
    json j;
    in >> j;
    if (j.contains("encoder")) cfg.encoder = j["encoder"].get<EncoderConfig>();
    if (j.contains("geometry")) cfg.geometry = j["geometry"].get<PatchGeometry>();
    if (j.contains("mel_preset")) cfg.mel_preset = j["mel_preset"];
    if (j.contains("patchout")) cfg.patchout = j["patchout"].get<PatchoutSpec>();
    if (j.contains("augment")) cfg.augment = j["augment"].get<AugmentConfig>();
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.seed = j.value("seed", cfg.seed);
  }
  TaskManifest manifest =
      load_manifest((fs::path(args.data_dir) / "manifest.json").string());
  TrainResult result = train_on_manifest(manifest, args.data_dir, cfg);
  save_checkpoint(result.model, args.out_ckpt);
  json j{{"checkpoint", args.out_ckpt},
         {"task", manifest.name},
         {"epochs", cfg.epochs},
         {"epoch_losses", result.epoch_losses},
         {"valid_accuracy", result.valid_accuracy},
         {"test_accuracy", result.test_accuracy}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

// ---- extraction ----

struct ExtractArgs {
  std::string ckpt;
  std::string audio;
  std::string manifest_dir;
  std::string out;
  std::string levels = "M,H";
  std::string rf = "160";
  std::string hop_preset;  // optional contract check
  int hop_ms = 50;
  double window_s = 10.0;
  double overlap = 0.5;
  size_t expect_d = 0;
  bool timestamp = false;
};

int run_extract(const ExtractArgs& args) {
  PasstModel model = load_checkpoint(args.ckpt);
  if (args.expect_d) require_model_dim(model, args.expect_d);
  if (!args.hop_preset.empty() && model.mel.preset != args.hop_preset)
    throw Error("state", "checkpoint was built at preset '" + model.mel.preset +
                             "' but the run expects '" + args.hop_preset + "'");
  LevelSpec levels = parse_levels(args.levels);
  std::string ckpt_id = checkpoint_id_of(args.ckpt);

  auto extract_one = [&](const std::string& wav_path) {
    Waveform wav = load_wav(wav_path);
    if (wav.sample_rate != model.mel.sample_rate)
      wav = resample(wav, model.mel.sample_rate);
    EmbeddingMatrix m;
    if (args.timestamp) {
      RFSpec rf = parse_rf(args.rf);
      rf.hop_ms = args.hop_ms;
      m = timestamp_embeddings(wav, model, levels, rf);
    } else {
      m = scene_embedding(wav, model, levels, args.window_s, args.overlap);
    }
    m.descriptor.checkpoint_id = ckpt_id;
    return m;
  };

  if (!args.audio.empty()) {
    EmbeddingMatrix m = extract_one(args.audio);
    if (args.out.empty()) throw Error("usage", "--out is required");
    save_embeddings(m, args.out);
    json j{{"out", args.out},
           {"rows", m.rows},
           {"dim", m.dim},
           {"mode", m.descriptor.mode},
           {"levels", levels_to_string(levels)},
           {"checkpoint_id", ckpt_id}};
    std::cout << j.dump(2) << "\n";
    return 0;
  }

  // manifest mode: one file per split (scene) / per clip (timestamp)
  TaskManifest manifest =
      load_manifest((fs::path(args.manifest_dir) / "manifest.json").string());
  fs::create_directories(args.out);
  json report{{"out", args.out}, {"mode", args.timestamp ? "timestamp" : "scene"}};
  for (const std::string split : {"train", "valid", "test"}) {
    const auto& clips = manifest.split(split);
    if (clips.empty()) continue;
    if (args.timestamp) {
      fs::create_directories(fs::path(args.out) / split);
      for (const auto& clip : clips) {
        EmbeddingMatrix m =
            extract_one((fs::path(args.manifest_dir) / clip.file).string());
        std::string stem = fs::path(clip.file).stem().string();
        save_embeddings(m,
                        (fs::path(args.out) / split / (stem + ".pemb")).string());
      }
      report["splits"][split] = clips.size();
    } else {
      EmbeddingMatrix all;
      for (size_t i = 0; i < clips.size(); ++i) {
        EmbeddingMatrix one =
            extract_one((fs::path(args.manifest_dir) / clips[i].file).string());
        if (i == 0) {
          all = one;
          all.data.reserve(clips.size() * one.dim);
        } else {
          if (one.dim != all.dim) throw Error("state", "row width drifted");
          all.data.insert(all.data.end(), one.data.begin(), one.data.end());
          all.rows += 1;
        }
      }
      save_embeddings(all, (fs::path(args.out) / (split + ".pemb")).string());
      report["splits"][split] = clips.size();
    }
  }
  std::cout << report.dump(2) << "\n";
  return 0;
}

// ---- probe ----

struct ProbeArgs {
  std::string manifest_dir;
  std::string embeds;
  std::string out;
  ProbeConfig cfg;
  double threshold = 0.5;
  double min_dur_ms = 60.0;
  double tol_ms = 200.0;
};

std::vector<std::vector<double>> scene_targets(const TaskManifest& manifest,
                                               const std::vector<ClipEntry>& clips) {
  std::vector<std::vector<double>> y;
  for (const auto& clip : clips) {
    std::vector<double> row(manifest.labels.size(), 0.0);
    if (manifest.task_type == TaskType::SceneMulticlass)
      row[manifest.label_index(clip.label)] = 1.0;
    else
      for (const auto& l : clip.labels) row[manifest.label_index(l)] = 1.0;
    y.push_back(std::move(row));
  }
  return y;
}

int run_probe_scene(const TaskManifest& manifest, const ProbeArgs& args) {
  bool multilabel = manifest.task_type == TaskType::SceneMultilabel;
  auto load_split = [&](const std::string& split) {
    return load_embeddings((fs::path(args.embeds) / (split + ".pemb")).string());
  };
  EmbeddingMatrix train_x = load_split("train");
  EmbeddingMatrix valid_x = load_split("valid");
  EmbeddingMatrix test_x = load_split("test");
  auto train_y = scene_targets(manifest, manifest.train);
  auto valid_y = scene_targets(manifest, manifest.valid);
  auto test_y = scene_targets(manifest, manifest.test);

  ProbeResult probe =
      train_probe(train_x, train_y, valid_x, valid_y, args.cfg, multilabel);
  Tensor logits = probe_scores(probe.model, test_x);

  double raw = 0.0;
  if (manifest.metric == MetricKind::Accuracy) {
    std::vector<size_t> idx;
    for (const auto& clip : manifest.test)
      idx.push_back(manifest.label_index(clip.label));
    raw = accuracy(logits, idx);
  } else if (manifest.metric == MetricKind::MeanAveragePrecision) {
    std::vector<std::vector<double>> scores(test_x.rows);
    std::vector<std::vector<int>> targets(test_x.rows);
    for (size_t i = 0; i < test_x.rows; ++i) {
      for (size_t c = 0; c < manifest.labels.size(); ++c) {
        scores[i].push_back(logits.at(i, c));
        targets[i].push_back(test_y[i][c] > 0.5 ? 1 : 0);
      }
    }
    raw = mean_average_precision(scores, targets);
  } else {
    throw Error("usage", "onset_f1 requires timestamp embeddings");
  }

  json j{{"task", manifest.name},
         {"metric", metric_name(manifest.metric)},
         {"raw_score", raw},
         {"category", manifest.category},
         {"best_epoch", probe.best_epoch},
         {"embedding_dim", train_x.dim}};
  emit(j.dump(2), args.out);
  return 0;
}

int run_probe_events(const TaskManifest& manifest, const ProbeArgs& args) {
  size_t classes = manifest.labels.size();
  auto clip_stem = [](const ClipEntry& clip) {
    return fs::path(clip.file).stem().string();
  };
  auto load_clip = [&](const std::string& split, const ClipEntry& clip) {
    return load_embeddings(
        (fs::path(args.embeds) / split / (clip_stem(clip) + ".pemb")).string());
  };
  // Frame-level activity targets from the event ground truth.
  auto frame_targets = [&](const ClipEntry& clip, const EmbeddingMatrix& m) {
    std::vector<std::vector<double>> y(m.rows, std::vector<double>(classes, 0.0));
    for (const auto& e : clip.events) {
      size_t cls = manifest.label_index(e.label);
      for (size_t r = 0; r < m.rows; ++r)
        if (m.timestamps_ms[r] >= e.onset_ms && m.timestamps_ms[r] <= e.offset_ms)
          y[r][cls] = 1.0;
    }
    return y;
  };

  auto gather = [&](const std::string& split, const std::vector<ClipEntry>& clips,
                    EmbeddingMatrix& x, std::vector<std::vector<double>>& y) {
    bool first = true;
    for (const auto& clip : clips) {
      EmbeddingMatrix m = load_clip(split, clip);
      auto targets = frame_targets(clip, m);
      if (first) {
        x = m;
        x.timestamps_ms.clear();
        first = false;
      } else {
        if (m.dim != x.dim) throw Error("state", "embedding width drifted");
        x.data.insert(x.data.end(), m.data.begin(), m.data.end());
        x.rows += m.rows;
      }
      for (auto& row : targets) y.push_back(std::move(row));
    }
  };

  EmbeddingMatrix train_x, valid_x;
  std::vector<std::vector<double>> train_y, valid_y;
  gather("train", manifest.train, train_x, train_y);
  gather("valid", manifest.valid, valid_x, valid_y);

  ProbeResult probe =
      train_probe(train_x, train_y, valid_x, valid_y, args.cfg, /*multilabel=*/true);

  // Decode and score each test clip, micro-averaging the counts.
  size_t tp = 0, fp = 0, fn = 0;
  for (const auto& clip : manifest.test) {
    EmbeddingMatrix m = load_clip("test", clip);
    Tensor logits = probe_scores(probe.model, m);
    std::vector<std::vector<double>> probs(m.rows, std::vector<double>(classes));
    for (size_t r = 0; r < m.rows; ++r)
      for (size_t c = 0; c < classes; ++c)
        probs[r][c] = 1.0 / (1.0 + std::exp(-logits.at(r, c)));
    OnsetScore s = onset_f1(probs, m.timestamps_ms, clip.events, manifest.labels,
                            args.threshold, args.min_dur_ms, args.tol_ms);
    tp += s.tp;
    fp += s.fp;
    fn += s.fn;
  }
  double f1 = (2.0 * tp + fp + fn) == 0 ? 1.0 : 2.0 * tp / (2.0 * tp + fp + fn);

  json j{{"task", manifest.name},
         {"metric", metric_name(manifest.metric)},
         {"raw_score", f1},
         {"category", manifest.category},
         {"counts", {{"tp", tp}, {"fp", fp}, {"fn", fn}}},
         {"best_epoch", probe.best_epoch}};
  emit(j.dump(2), args.out);
  return 0;
}

int run_probe(const ProbeArgs& args) {
  TaskManifest manifest =
      load_manifest((fs::path(args.manifest_dir) / "manifest.json").string());
  return manifest.task_type == TaskType::TimestampEvent
             ? run_probe_events(manifest, args)
             : run_probe_scene(manifest, args);
}

// ---- report ----

struct ReportArgs {
  std::string scores_path;
  std::string reference_path;
  std::string out;
  std::string csv;
  std::string stats_csv;
};

int run_report(const ReportArgs& args) {
  std::ifstream sin(args.scores_path);
  if (!sin) throw Error("io", "cannot open " + args.scores_path);
  json scores_json;
  sin >> scores_json;
  std::vector<TaskScore> raw;
  for (const auto& s : scores_json)
    raw.push_back({s.at("task").get<std::string>(), s.at("raw").get<double>(),
                   s.at("category").get<std::string>()});

  std::ifstream rin(args.reference_path);
  if (!rin) throw Error("io", "cannot open " + args.reference_path);
  json ref_json;
  rin >> ref_json;
  std::map<std::string, double> ref;
  for (auto it = ref_json.begin(); it != ref_json.end(); ++it)
    ref[it.key()] = it.value().get<double>();

  ScoreReport report = normalize_and_aggregate(raw, ref);
  emit(score_report_to_json(report), args.out);
  if (!args.csv.empty()) {
    std::ofstream out(args.csv);
    out << score_report_to_csv(report);
  }
  if (!args.stats_csv.empty()) {
    std::ofstream out(args.stats_csv);
    out << category_stats_to_csv(report);
  }
  return 0;
}

// ---- bench ----

struct BenchArgs {
  BenchConfig cfg;
  std::string out;
};

int run_bench_cmd(const BenchArgs& args) {
  BenchReport report = run_bench(args.cfg);
  emit(bench_report_to_json(report), args.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patchout audio transformer toolkit"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--kind", synth_args.kind, "pitch | event")
      ->check(CLI::IsMember({"pitch", "event"}));
  synth->add_option("--out", synth_args.out_dir, "output dataset directory")
      ->required();
  synth->add_option("--clips", synth_args.spec.n_clips);
  synth->add_option("--classes", synth_args.spec.n_classes);
  synth->add_option("--clip-seconds", synth_args.spec.clip_seconds);
  synth->add_option("--snr-min", synth_args.spec.snr_db_min);
  synth->add_option("--snr-max", synth_args.spec.snr_db_max);
  synth->add_option("--seed", synth_args.spec.seed);
  synth->add_option("--max-events", synth_args.spec.max_events_per_clip);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train-toy", "Train a toy model on a manifest");
  train->add_option("--data", train_args.data_dir, "dataset directory")->required();
  train->add_option("--out", train_args.out_ckpt, "checkpoint path")->required();
  train->add_option("--config", train_args.config_path, "training config JSON");
  train->add_option("--d", train_args.cfg.encoder.d);
  train->add_option("--layers", train_args.cfg.encoder.n_layers);
  train->add_option("--heads", train_args.cfg.encoder.n_heads);
  train->add_option("--mlp-ratio", train_args.cfg.encoder.mlp_ratio);
  train->add_option("--epochs", train_args.cfg.epochs);
  train->add_option("--batch", train_args.cfg.batch_size);
  train->add_option("--lr", train_args.cfg.lr);
  train->add_option("--wd", train_args.cfg.weight_decay);
  train->add_option("--seed", train_args.cfg.seed);
  train->add_option("--preset", train_args.cfg.mel_preset)
      ->check(CLI::IsMember({"hop10ms", "hop5ms", "hop3ms"}));
  std::string patchout_mode = "structured";
  train->add_option("--patchout", patchout_mode)
      ->check(CLI::IsMember({"off", "structured", "unstructured"}));
  train->add_option("--f-drop", train_args.cfg.patchout.f_drop);
  train->add_option("--t-drop", train_args.cfg.patchout.t_drop);
  train->add_option("--u-drop", train_args.cfg.patchout.u_drop);
  bool no_mixup = false, no_specaugment = false, use_roll = false, use_gain = false;
  train->add_flag("--no-mixup", no_mixup);
  train->add_flag("--no-specaugment", no_specaugment);
  train->add_flag("--roll", use_roll);
  train->add_flag("--gain", use_gain);

  ExtractArgs scene_args;
  auto* escene = app.add_subcommand("extract-scene", "Scene embeddings");
  escene->add_option("--ckpt", scene_args.ckpt)->required();
  escene->add_option("--audio", scene_args.audio, "single audio file");
  escene->add_option("--manifest", scene_args.manifest_dir, "dataset directory");
  escene->add_option("--out", scene_args.out)->required();
  escene->add_option("--levels", scene_args.levels, "comma list of L,M,H");
  escene->add_option("--window", scene_args.window_s);
  escene->add_option("--overlap", scene_args.overlap);
  escene->add_option("--hop-preset", scene_args.hop_preset,
                     "expected checkpoint preset");
  escene->add_option("--expect-d", scene_args.expect_d);

  ExtractArgs ts_args;
  ts_args.timestamp = true;
  ts_args.levels = "L,M";
  auto* ets = app.add_subcommand("extract-timestamp", "Timestamp embeddings");
  ets->add_option("--ckpt", ts_args.ckpt)->required();
  ets->add_option("--audio", ts_args.audio);
  ets->add_option("--manifest", ts_args.manifest_dir);
  ets->add_option("--out", ts_args.out)->required();
  ets->add_option("--levels", ts_args.levels);
  ets->add_option("--rf", ts_args.rf)->check(CLI::IsMember({"160", "640", "2rf"}));
  ets->add_option("--hop-ms", ts_args.hop_ms);
  ets->add_option("--hop-preset", ts_args.hop_preset);
  ets->add_option("--expect-d", ts_args.expect_d);

  ProbeArgs probe_args;
  auto* probe = app.add_subcommand("probe", "Train and score a probe");
  probe->add_option("--manifest", probe_args.manifest_dir)->required();
  probe->add_option("--embeds", probe_args.embeds)->required();
  probe->add_option("--out", probe_args.out);
  std::vector<size_t> hidden;
  probe->add_option("--hidden", hidden, "hidden layer sizes");
  probe->add_option("--epochs", probe_args.cfg.epochs);
  probe->add_option("--batch", probe_args.cfg.batch_size);
  probe->add_option("--lr", probe_args.cfg.lr);
  probe->add_option("--patience", probe_args.cfg.patience);
  probe->add_option("--seed", probe_args.cfg.seed);
  probe->add_option("--threshold", probe_args.threshold);
  probe->add_option("--min-dur", probe_args.min_dur_ms);
  probe->add_option("--tol", probe_args.tol_ms);

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "Normalize and aggregate scores");
  report->add_option("--scores", report_args.scores_path)->required();
  report->add_option("--reference", report_args.reference_path)->required();
  report->add_option("--out", report_args.out);
  report->add_option("--csv", report_args.csv);
  report->add_option("--stats-csv", report_args.stats_csv);

  BenchArgs bench_args;
  bench_args.cfg.encoder = bench_model_config();
  auto* bench = app.add_subcommand("bench", "Sequence accounting and throughput");
  bench->add_option("--trials", bench_args.cfg.trials);
  bench->add_option("--warmup", bench_args.cfg.warmup);
  bench->add_option("--d", bench_args.cfg.encoder.d);
  bench->add_option("--layers", bench_args.cfg.encoder.n_layers);
  bench->add_option("--heads", bench_args.cfg.encoder.n_heads);
  bench->add_option("--mlp-ratio", bench_args.cfg.encoder.mlp_ratio);
  bench->add_option("--seed", bench_args.cfg.seed);
  bench->add_option("--out", bench_args.out);
  bool accounting_only = false;
  bench->add_flag("--accounting-only", accounting_only,
                  "skip throughput measurement");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << app.help() << "\n";
    json err{{"error", {{"kind", "usage"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 2;
  }

  try {
    if (*synth) return run_synth(synth_args);
    if (*train) {
      PatchoutSpec& po = train_args.cfg.patchout;
      po.mode = patchout_mode == "off" ? PatchoutMode::Off
                : patchout_mode == "structured" ? PatchoutMode::Structured
                                                : PatchoutMode::Unstructured;
      if (no_mixup) train_args.cfg.augment.mixup = false;
      if (no_specaugment) train_args.cfg.augment.specaugment = false;
      train_args.cfg.augment.roll = use_roll;
      train_args.cfg.augment.gain = use_gain;
      return run_train(train_args);
    }
    if (*escene) {
      if (scene_args.audio.empty() == scene_args.manifest_dir.empty())
        throw Error("usage", "give exactly one of --audio or --manifest");
      return run_extract(scene_args);
    }
    if (*ets) {
      if (ts_args.audio.empty() == ts_args.manifest_dir.empty())
        throw Error("usage", "give exactly one of --audio or --manifest");
      return run_extract(ts_args);
    }
    if (*probe) {
      if (!hidden.empty()) probe_args.cfg.hidden = hidden;
      return run_probe(probe_args);
    }
    if (*report) return run_report(report_args);
    if (*bench) {
      bench_args.cfg.timing = !accounting_only;
      return run_bench_cmd(bench_args);
    }
  } catch (const Error& e) {
    json err{{"error", {{"kind", e.kind()}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return e.kind() == "usage" ? 2 : 1;
  } catch (const std::exception& e) {
    json err{{"error", {{"kind", "runtime"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 2;
}
