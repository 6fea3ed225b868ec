#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>

#include "passt/audio.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0;; ++i) {
      path_ = base / ("passt_" + tag + "_" + std::to_string(::getpid()) + "_" +
                      std::to_string(i));
      if (std::filesystem::create_directory(path_)) break;
    }
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  std::filesystem::path path_;
};

inline passt::Waveform sine_wave(double freq_hz, double seconds, int rate,
                                 double amplitude = 0.5, double phase = 0.0) {
  passt::Waveform w;
  w.sample_rate = rate;
  auto n = static_cast<size_t>(seconds * rate);
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i)
    w.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * freq_hz *
                                            static_cast<double>(i) / rate +
                                        phase);
  return w;
}

}  // namespace testutil
