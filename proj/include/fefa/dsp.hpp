#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "fefa/matrix.hpp"
#include "fefa/rng.hpp"

namespace fefa {

struct Waveform {
  std::vector<double> samples;  // nominal range [-1, 1]
  int sample_rate_hz = 16000;
};

enum class WindowKind { hann };

enum class NoiseDist { gaussian, uniform };

struct SpectrogramConfig {
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int fft_size = 512;
  WindowKind window_kind = WindowKind::hann;

  int bins() const { return fft_size / 2 + 1; }
  int window_samples(int sample_rate_hz) const {
    return static_cast<int>(std::lround(window_ms * sample_rate_hz / 1000.0));
  }
  int hop_samples(int sample_rate_hz) const {
    return static_cast<int>(std::lround(hop_ms * sample_rate_hz / 1000.0));
  }

  void validate(int sample_rate_hz) const {
    if (hop_ms <= 0.0 || hop_ms > window_ms)
      throw std::invalid_argument("spectrogram config: need 0 < hop_ms <= window_ms");
    if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0)
      throw std::invalid_argument("spectrogram config: fft_size must be a power of two");
    if (window_samples(sample_rate_hz) > fft_size)
      throw std::invalid_argument("spectrogram config: window longer than fft_size");
    if (window_samples(sample_rate_hz) < 2)
      throw std::invalid_argument("spectrogram config: window shorter than 2 samples");
  }
};

// bins x frames power spectrogram. values[i][t] = |X_t[i]|^2, no further
// normalization.
struct Spectrogram {
  Matrix values;
  std::vector<double> bin_center_hz;
  double frame_hop_s = 0.0;

  std::size_t bins() const { return values.rows; }
  std::size_t frames() const { return values.cols; }
};

inline double signal_power(const std::vector<double>& x) {
  double p = 0.0;
  for (double v : x) p += v * v;
  return p;
}

// ---------------------------------------------------------------------------
// Framing and windowing

// Slices the signal into overlapping frames. Frame k starts at sample k*hop;
// a trailing remainder shorter than one window is discarded.
inline Matrix frame_signal(const Waveform& wave, const SpectrogramConfig& cfg) {
  cfg.validate(wave.sample_rate_hz);
  const std::size_t win = static_cast<std::size_t>(cfg.window_samples(wave.sample_rate_hz));
  const std::size_t hop = static_cast<std::size_t>(cfg.hop_samples(wave.sample_rate_hz));
  const std::size_t len = wave.samples.size();
  if (len < win)
    throw std::invalid_argument("frame_signal: input shorter than one window (" +
                                std::to_string(len) + " < " + std::to_string(win) + ")");
  const std::size_t frames = 1 + (len - win) / hop;
  Matrix out(frames, win);
  for (std::size_t k = 0; k < frames; ++k) {
    const double* src = wave.samples.data() + k * hop;
    double* dst = out.row(k);
    for (std::size_t i = 0; i < win; ++i) dst[i] = src[i];
  }
  return out;
}

// Periodic Hann: w[n] = 0.5 * (1 - cos(2*pi*n / N)).
inline std::vector<double> window_coefficients(std::size_t n, WindowKind kind) {
  if (n < 2) throw std::invalid_argument("window: need at least 2 samples");
  std::vector<double> w(n);
  switch (kind) {
    case WindowKind::hann:
      for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(i) /
                                     static_cast<double>(n)));
      break;
  }
  return w;
}

inline std::vector<double> apply_window(const std::vector<double>& frame,
                                        WindowKind kind) {
  const auto w = window_coefficients(frame.size(), kind);
  std::vector<double> out(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) out[i] = frame[i] * w[i];
  return out;
}

// ---------------------------------------------------------------------------
// FFT and power spectrum

namespace detail {

// Iterative radix-2 Cooley-Tukey, in place. n must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

}  // namespace detail

// One-sided squared-magnitude spectrum of a frame zero-padded to fft_size.
inline std::vector<double> power_spectrum(const std::vector<double>& windowed_frame,
                                          int fft_size) {
  if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0)
    throw std::invalid_argument("power_spectrum: fft_size must be a power of two");
  if (windowed_frame.size() > static_cast<std::size_t>(fft_size))
    throw std::invalid_argument("power_spectrum: frame longer than fft_size");
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(fft_size),
                                        std::complex<double>(0.0, 0.0));
  for (std::size_t i = 0; i < windowed_frame.size(); ++i) buf[i] = windowed_frame[i];
  detail::fft_radix2(buf);
  std::vector<double> out(static_cast<std::size_t>(fft_size) / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::norm(buf[k]);
  return out;
}

// Full pipeline: frame -> window -> |FFT|^2 per frame, columns are frames.
inline Spectrogram spectrogram(const Waveform& wave, const SpectrogramConfig& cfg) {
  const Matrix frames = frame_signal(wave, cfg);
  const auto w = window_coefficients(frames.cols, cfg.window_kind);
  const std::size_t bins = static_cast<std::size_t>(cfg.bins());

  Spectrogram spec;
  spec.values = Matrix(bins, frames.rows);
  spec.frame_hop_s = cfg.hop_samples(wave.sample_rate_hz) /
                     static_cast<double>(wave.sample_rate_hz);
  spec.bin_center_hz.resize(bins);
  for (std::size_t k = 0; k < bins; ++k)
    spec.bin_center_hz[k] = static_cast<double>(k) * wave.sample_rate_hz /
                            static_cast<double>(cfg.fft_size);

  std::vector<double> windowed(frames.cols);
  for (std::size_t t = 0; t < frames.rows; ++t) {
    const double* f = frames.row(t);
    for (std::size_t i = 0; i < frames.cols; ++i) windowed[i] = f[i] * w[i];
    const auto p = power_spectrum(windowed, cfg.fft_size);
    for (std::size_t k = 0; k < bins; ++k) spec.values.at(k, t) = p[k];
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Synthetic noise

constexpr double kInfiniteSnrDb = std::numeric_limits<double>::infinity();

// Adds zero-mean unit-variance noise scaled so the realized SNR equals
// snr_db exactly. snr_db = +inf is the no-noise sentinel.
inline Waveform add_noise(const Waveform& wave, double snr_db, NoiseDist dist,
                          std::uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0.0) return wave;
  const double p_signal = signal_power(wave.samples);
  if (p_signal <= 0.0)
    throw std::invalid_argument("add_noise: zero-power input, SNR undefined");

  Rng rng(seed);
  std::vector<double> noise(wave.samples.size());
  const double sqrt3 = std::sqrt(3.0);
  for (double& v : noise) {
    v = dist == NoiseDist::gaussian ? rng.gaussian()
                                    : rng.uniform(-sqrt3, sqrt3);
  }
  const double p_noise = signal_power(noise);
  if (p_noise <= 0.0) throw std::runtime_error("add_noise: degenerate noise draw");
  const double alpha =
      std::sqrt(p_signal / (std::pow(10.0, snr_db / 10.0) * p_noise));

  Waveform out = wave;
  for (std::size_t i = 0; i < noise.size(); ++i) out.samples[i] += alpha * noise[i];
  return out;
}

// 10*log10(sum clean^2 / sum (noisy-clean)^2); +inf if the signals match.
inline double measure_snr(const Waveform& clean, const Waveform& noisy) {
  if (clean.samples.size() != noisy.samples.size())
    throw std::invalid_argument("measure_snr: length mismatch");
  const double p_signal = signal_power(clean.samples);
  if (p_signal <= 0.0)
    throw std::invalid_argument("measure_snr: clean signal has zero power");
  double p_noise = 0.0;
  for (std::size_t i = 0; i < clean.samples.size(); ++i) {
    const double d = noisy.samples[i] - clean.samples[i];
    p_noise += d * d;
  }
  if (p_noise == 0.0) return kInfiniteSnrDb;
  return 10.0 * std::log10(p_signal / p_noise);
}

}  // namespace fefa
