#include "passt/trainer.hpp"

#include <algorithm>
#include <filesystem>

namespace passt {

std::string clip_path(const std::string& data_root, const std::string& file) {
  return (std::filesystem::path(data_root) / file).string();
}

namespace {

std::vector<double> one_hot(const TaskManifest& manifest, const ClipEntry& clip) {
  std::vector<double> label(manifest.labels.size(), 0.0);
  if (manifest.task_type == TaskType::SceneMulticlass) {
    label[manifest.label_index(clip.label)] = 1.0;
  } else {
    for (const auto& l : clip.labels) label[manifest.label_index(l)] = 1.0;
  }
  return label;
}

MelSpectrogram clip_mel(const Waveform& wav, const MelConfig& cfg,
                        const AugmentConfig& augment, Rng* rng) {
  if (rng != nullptr && (augment.roll || augment.gain)) {
    Waveform copy = wav;
    if (augment.roll) {
      auto max_shift = static_cast<long>(augment.roll_max_frac *
                                         static_cast<double>(copy.samples.size()));
      if (max_shift > 0) {
        long shift = static_cast<long>(rng->uniform_below(2 * max_shift + 1)) -
                     max_shift;
        roll_waveform(copy, shift);
      }
    }
    if (augment.gain)
      apply_gain(copy, rng->uniform(-augment.gain_max_db, augment.gain_max_db));
    return log_mel(copy, cfg);
  }
  return log_mel(wav, cfg);
}

}  // namespace

TrainResult train_on_manifest(const TaskManifest& manifest,
                              const std::string& data_root,
                              const TrainConfig& cfg) {
  manifest.validate();
  bool multilabel = manifest.task_type == TaskType::SceneMultilabel;
  if (manifest.task_type == TaskType::TimestampEvent)
    throw Error("usage", "train_on_manifest handles scene tasks only");

  EncoderConfig enc = cfg.encoder;
  enc.n_classes = manifest.labels.size();
  MelConfig mel_cfg = mel_preset(cfg.mel_preset);
  TrainResult result{
      PasstModel::create(enc, cfg.geometry, mel_cfg, cfg.seed), {}, {}, 0.0};
  PasstModel& model = result.model;

  // Load training audio once; mels are rebuilt per epoch only when
  // waveform-level augmentation varies them.
  std::vector<Waveform> waves;
  std::vector<std::vector<double>> labels;
  for (const auto& clip : manifest.train) {
    waves.push_back(load_wav(clip_path(data_root, clip.file)));
    labels.push_back(one_hot(manifest, clip));
  }
  if (waves.empty()) throw Error("bounds", "train split is empty");
  bool wave_augment = cfg.augment.roll || cfg.augment.gain;
  Rng rng(cfg.seed);

  std::vector<MelSpectrogram> cached;
  if (!wave_augment) {
    cached.reserve(waves.size());
    for (const auto& w : waves) cached.push_back(log_mel(w, mel_cfg));
  }

  AdamWConfig ocfg;
  ocfg.lr = cfg.lr;
  ocfg.weight_decay = cfg.weight_decay;
  AdamW opt(model.params(), ocfg);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<MelSpectrogram> epoch_mels;
    if (wave_augment) {
      epoch_mels.reserve(waves.size());
      for (const auto& w : waves)
        epoch_mels.push_back(clip_mel(w, mel_cfg, cfg.augment, &rng));
    }
    const std::vector<MelSpectrogram>& mels = wave_augment ? epoch_mels : cached;

    auto order = rng.permutation(waves.size());
    double loss_sum = 0.0;
    size_t steps = 0;
    for (size_t at = 0; at < order.size(); at += cfg.batch_size) {
      std::vector<TrainItem> batch;
      for (size_t i = at; i < std::min(order.size(), at + cfg.batch_size); ++i)
        batch.push_back({mels[order[i]], labels[order[i]]});
      loss_sum += train_step(batch, model, cfg.patchout, cfg.augment, opt, rng,
                             multilabel);
      ++steps;
    }
    result.epoch_losses.push_back(loss_sum / static_cast<double>(steps));
    result.valid_accuracy.push_back(
        manifest.valid.empty()
            ? 0.0
            : evaluate_accuracy(model, manifest, data_root, "valid"));
  }
  result.test_accuracy =
      manifest.test.empty()
          ? 0.0
          : evaluate_accuracy(model, manifest, data_root, "test");
  return result;
}

double evaluate_accuracy(const PasstModel& model, const TaskManifest& manifest,
                         const std::string& data_root,
                         const std::string& split) {
  const auto& clips = manifest.split(split);
  if (clips.empty()) throw Error("bounds", "split '" + split + "' is empty");
  size_t correct = 0;
  for (const auto& clip : clips) {
    Waveform wav = load_wav(clip_path(data_root, clip.file));
    MelSpectrogram mel = log_mel(wav, model.mel);
    TokenSequence seq = model.tokenize_mel(mel);
    EncoderOutput out = encoder_forward(seq, model, RunMode::Eval);
    size_t argmax = 0;
    for (size_t c = 1; c < out.logits.numel(); ++c)
      if (out.logits.data()[c] > out.logits.data()[argmax]) argmax = c;
    if (argmax == manifest.label_index(clip.label)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(clips.size());
}

}  // namespace passt
