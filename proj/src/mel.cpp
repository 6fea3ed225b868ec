#include "passt/mel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace passt {

void MelConfig::validate() const {
  if (sample_rate <= 0) throw Error("bounds", "mel: sample_rate must be > 0");
  if (window_length < hop_length)
    throw Error("bounds", "mel: window_length must be >= hop_length");
  if (hop_length <= 0) throw Error("bounds", "mel: hop_length must be > 0");
  if (n_mels < 1) throw Error("bounds", "mel: n_mels must be >= 1");
  if (!(fmin < fmax) || fmax > sample_rate / 2.0)
    throw Error("bounds", "mel: need fmin < fmax <= sample_rate/2");
  if (log_floor <= 0) throw Error("bounds", "mel: log_floor must be > 0");
}

MelConfig mel_preset(const std::string& name) {
  MelConfig cfg;
  cfg.preset = name;
  if (name == "hop10ms") cfg.hop_length = 320;
  else if (name == "hop5ms") cfg.hop_length = 160;
  else if (name == "hop3ms") cfg.hop_length = 100;
  else throw Error("usage", "unknown mel preset: " + name);
  return cfg;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

namespace detail {

void fft_pow2(std::vector<double>& re, std::vector<double>& im) {
  size_t n = re.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw Error("bounds", "fft: size must be a power of two");
  // bit-reversal permutation
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    double wr = std::cos(ang), wi = std::sin(ang);
    for (size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (size_t j = 0; j < len / 2; ++j) {
        size_t a = i + j, b = i + j + len / 2;
        double tr = re[b] * cr - im[b] * ci;
        double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

}  // namespace detail

namespace {

size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Reflect index into [0, n), mirroring about the endpoints without repeating
// them (folds repeatedly for very short inputs).
size_t reflect_index(long i, long n) {
  if (n == 1) return 0;
  long period = 2 * (n - 1);
  long m = i % period;
  if (m < 0) m += period;
  if (m >= n) m = period - m;
  return static_cast<size_t>(m);
}

// weights[m][k] over rfft bins for triangular HTK-mel filters.
std::vector<std::vector<double>> build_filterbank(const MelConfig& cfg,
                                                  size_t nfft) {
  size_t n_bins = nfft / 2 + 1;
  double mel_lo = hz_to_mel(cfg.fmin);
  double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> mel_points(cfg.n_mels + 2);
  for (int m = 0; m < cfg.n_mels + 2; ++m)
    mel_points[m] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (cfg.n_mels + 1.0));
  std::vector<std::vector<double>> w(cfg.n_mels,
                                     std::vector<double>(n_bins, 0.0));
  double bin_hz = static_cast<double>(cfg.sample_rate) / nfft;
  for (int m = 0; m < cfg.n_mels; ++m) {
    double lo = mel_points[m], c = mel_points[m + 1], hi = mel_points[m + 2];
    for (size_t k = 0; k < n_bins; ++k) {
      double f = k * bin_hz;
      double rising = (f - lo) / (c - lo);
      double falling = (hi - f) / (hi - c);
      w[m][k] = std::max(0.0, std::min(rising, falling));
    }
  }
  return w;
}

}  // namespace

std::vector<double> mel_filter_centers(const MelConfig& cfg) {
  double mel_lo = hz_to_mel(cfg.fmin);
  double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> centers(cfg.n_mels);
  for (int m = 0; m < cfg.n_mels; ++m)
    centers[m] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) / (cfg.n_mels + 1.0));
  return centers;
}

MelSpectrogram log_mel(const Waveform& wav, const MelConfig& cfg) {
  cfg.validate();
  if (wav.sample_rate != cfg.sample_rate)
    throw Error("state", "log_mel: waveform rate " +
                             std::to_string(wav.sample_rate) +
                             " != config rate " +
                             std::to_string(cfg.sample_rate));
  long n = static_cast<long>(wav.samples.size());
  if (n < cfg.hop_length)
    throw Error("bounds", "log_mel: waveform shorter than one hop");

  int n_frames = static_cast<int>(n / cfg.hop_length);
  // Doubled zero-padding: at the minimal power-of-two size the low-frequency
  // mel triangles span barely one FFT bin, which quantizes their responses.
  size_t nfft = 2 * next_pow2(static_cast<size_t>(cfg.window_length));
  size_t n_bins = nfft / 2 + 1;

  std::vector<double> window(cfg.window_length);
  for (int j = 0; j < cfg.window_length; ++j)
    window[j] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * j /
                                     cfg.window_length);

  auto filters = build_filterbank(cfg, nfft);

  MelSpectrogram mel;
  mel.n_mels = cfg.n_mels;
  mel.n_frames = n_frames;
  mel.config = cfg;
  mel.values.assign(static_cast<size_t>(cfg.n_mels) * n_frames, 0.0);

  std::vector<double> re(nfft), im(nfft), mag(n_bins);
  long half = cfg.window_length / 2;
  for (int t = 0; t < n_frames; ++t) {
    long center = static_cast<long>(t) * cfg.hop_length;
    std::fill(re.begin(), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    for (int j = 0; j < cfg.window_length; ++j) {
      long src = center - half + j;
      re[j] = wav.samples[reflect_index(src, n)] * window[j];
    }
    detail::fft_pow2(re, im);
    for (size_t k = 0; k < n_bins; ++k)
      mag[k] = std::hypot(re[k], im[k]);
    for (int m = 0; m < cfg.n_mels; ++m) {
      const auto& wm = filters[m];
      double energy = 0.0;
      for (size_t k = 0; k < n_bins; ++k) energy += wm[k] * mag[k];
      mel.at(m, t) = std::log(std::max(energy, cfg.log_floor));
    }
  }
  return mel;
}

}  // namespace passt
