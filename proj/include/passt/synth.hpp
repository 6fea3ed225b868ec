#pragma once

#include <string>

#include "passt/manifest.hpp"

namespace passt {

// Fully synthetic datasets so the train -> extract -> probe -> report chain
// runs end-to-end without external audio.
struct SynthSpec {
  enum class Kind { PitchClass, EventDetect };
  Kind kind = Kind::PitchClass;
  int n_clips = 400;
  double clip_seconds = 1.0;
  int n_classes = 8;
  double snr_db_min = 20.0;
  double snr_db_max = 40.0;
  std::uint64_t seed = 7;
  int sample_rate = 32000;
  int max_events_per_clip = 4;  // event task

  void validate() const;
};

// Pitch classification: class k is a tone at 220 * 2^(k/8) Hz with two
// harmonics, random phase and gain, and additive noise at a sampled SNR.
// Splits are stratified 60/20/20 per class. Writes <dir>/audio/*.wav,
// <dir>/labels.json and <dir>/manifest.json; returns the manifest.
TaskManifest gen_pitch_task(const SynthSpec& spec, const std::string& out_dir);

// Event detection: background noise with non-overlapping tone bursts
// (10 ms raised-cosine ramps, >= 250 ms apart, fully inside the clip);
// ground-truth onset/offset/label lists in ms.
TaskManifest gen_event_task(const SynthSpec& spec, const std::string& out_dir);

// Class fundamental of the pitch task (exposed for oracle tests).
double pitch_class_frequency(int k);

}  // namespace passt
