#pragma once

#include <string>
#include <vector>

#include "passt/common.hpp"

namespace passt {

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 0;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Reads RIFF/WAVE PCM 16-bit (mono or stereo). Stereo is averaged to mono;
// samples are scaled by 1/32768.
Waveform load_wav(const std::string& path);

// Writes mono PCM 16-bit; samples are clamped to [-1, 1] and rounded.
void save_wav(const std::string& path, const Waveform& wav);

// Linear-interpolation resample; output length = round(n * target / source).
// The identity rate returns a bit-identical copy.
Waveform resample(const Waveform& wav, int target_rate);

}  // namespace passt
