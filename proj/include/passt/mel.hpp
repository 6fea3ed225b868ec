#pragma once

#include <string>
#include <vector>

#include "passt/audio.hpp"

namespace passt {

struct MelConfig {
  int sample_rate = 32000;
  int window_length = 800;  // 25 ms at 32 kHz
  int hop_length = 320;     // 10 ms at 32 kHz
  int n_mels = 128;
  double fmin = 0.0;
  double fmax = 16000.0;
  double log_floor = 1e-10;
  std::string preset;  // "hop10ms" | "hop5ms" | "hop3ms" | "" (custom)

  void validate() const;
};

// Named presets: the window stays 25 ms (800 samples) for all three; only the
// hop changes. "hop3ms" is 100 samples (3.125 ms at 32 kHz), the hop that
// yields 3200 frames for 10 s and hence a 319-position time grid.
MelConfig mel_preset(const std::string& name);

struct MelSpectrogram {
  int n_mels = 0;
  int n_frames = 0;
  std::vector<double> values;  // row-major: values[bin * n_frames + frame]
  MelConfig config;

  double at(int bin, int frame) const {
    return values[static_cast<size_t>(bin) * n_frames + frame];
  }
  double& at(int bin, int frame) {
    return values[static_cast<size_t>(bin) * n_frames + frame];
  }
};

// Center-padded (reflect) STFT magnitudes through an HTK-mel triangular
// filterbank, then ln(max(energy, log_floor)). Frame i is centered on sample
// i * hop, so n_frames == floor(n_samples / hop).
MelSpectrogram log_mel(const Waveform& wav, const MelConfig& cfg);

// Center frequency (Hz) of each mel filter; the test oracle for locating
// pure tones.
std::vector<double> mel_filter_centers(const MelConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

namespace detail {
// In-place iterative radix-2 FFT over interleaved complex (re, im) pairs;
// n must be a power of two.
void fft_pow2(std::vector<double>& re, std::vector<double>& im);
}  // namespace detail

}  // namespace passt
