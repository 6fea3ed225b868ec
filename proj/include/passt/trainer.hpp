#pragma once

#include <string>
#include <vector>

#include "passt/encoder.hpp"
#include "passt/manifest.hpp"

namespace passt {

struct TrainConfig {
  EncoderConfig encoder;
  PatchGeometry geometry;
  std::string mel_preset = "hop10ms";
  PatchoutSpec patchout;
  AugmentConfig augment;
  int epochs = 25;
  size_t batch_size = 16;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  std::uint64_t seed = 7;
};

struct TrainResult {
  PasstModel model;
  std::vector<double> epoch_losses;      // mean train-step loss per epoch
  std::vector<double> valid_accuracy;    // per epoch
  double test_accuracy = 0.0;
};

// Supervised training of a fresh model on a manifest-described dataset.
// Mels are precomputed once per clip unless waveform-level augmentation
// (roll/gain) is enabled, in which case they are rebuilt each epoch.
TrainResult train_on_manifest(const TaskManifest& manifest,
                              const std::string& data_root,
                              const TrainConfig& cfg);

// Argmax accuracy of a frozen model over a manifest split.
double evaluate_accuracy(const PasstModel& model, const TaskManifest& manifest,
                         const std::string& data_root,
                         const std::string& split);

// Resolve a manifest-relative audio path.
std::string clip_path(const std::string& data_root, const std::string& file);

}  // namespace passt
