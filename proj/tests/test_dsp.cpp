#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>

#include "fefa/dsp.hpp"
#include "fefa/rng.hpp"
#include "fefa/wav.hpp"

using namespace fefa;
using Catch::Approx;

namespace {

Waveform make_wave(std::size_t n, int sr = 16000, double value = 0.0) {
  Waveform w;
  w.sample_rate_hz = sr;
  w.samples.assign(n, value);
  return w;
}

// O(N^2) reference DFT, independent of the radix-2 path under test.
std::vector<double> naive_power_spectrum(const std::vector<double>& x, int fft_size) {
  std::vector<double> out(static_cast<std::size_t>(fft_size) / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t n = 0; n < x.size(); ++n) {
      const double ang = -2.0 * M_PI * static_cast<double>(k) *
                         static_cast<double>(n) / fft_size;
      acc += x[n] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = std::norm(acc);
  }
  return out;
}

}  // namespace

TEST_CASE("frame_signal frame arithmetic", "[dsp]") {
  SpectrogramConfig cfg;  // 400-sample window, 160-sample hop at 16 kHz

  SECTION("exactly one window fits") {
    const Matrix frames = frame_signal(make_wave(400), cfg);
    REQUIRE(frames.rows == 1);
    REQUIRE(frames.cols == 400);
  }
  SECTION("1 + floor((720-400)/160) = 3 frames") {
    const Matrix frames = frame_signal(make_wave(720), cfg);
    REQUIRE(frames.rows == 3);
  }
  SECTION("input shorter than one window") {
    REQUIRE_THROWS_AS(frame_signal(make_wave(399), cfg), std::invalid_argument);
  }
  SECTION("frame k starts at sample k*hop") {
    Waveform w = make_wave(720);
    for (std::size_t i = 0; i < w.samples.size(); ++i)
      w.samples[i] = static_cast<double>(i);
    const Matrix frames = frame_signal(w, cfg);
    REQUIRE(frames.at(1, 0) == 160.0);
    REQUIRE(frames.at(2, 399) == 320.0 + 399.0);
  }
}

TEST_CASE("periodic Hann window", "[dsp]") {
  SECTION("all-ones frame, N=4") {
    const auto out = apply_window({1.0, 1.0, 1.0, 1.0}, WindowKind::hann);
    REQUIRE(out[0] == Approx(0.0).margin(1e-15));
    REQUIRE(out[1] == Approx(0.5).margin(1e-15));
    REQUIRE(out[2] == Approx(1.0).margin(1e-15));
    REQUIRE(out[3] == Approx(0.5).margin(1e-15));
  }
  SECTION("zero frame stays zero") {
    const auto out = apply_window(std::vector<double>(16, 0.0), WindowKind::hann);
    for (double v : out) REQUIRE(v == 0.0);
  }
  SECTION("w[0] = 0 for any N") {
    for (std::size_t n : {2, 5, 64, 400})
      REQUIRE(window_coefficients(n, WindowKind::hann)[0] == 0.0);
  }
}

TEST_CASE("power spectrum", "[dsp]") {
  SECTION("zero frame") {
    const auto out = power_spectrum(std::vector<double>(64, 0.0), 64);
    REQUIRE(out.size() == 33);
    for (double v : out) REQUIRE(v == 0.0);
  }
  SECTION("bin-aligned cosine, rectangular path") {
    const int n = 64;
    const int k0 = 5;
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = std::cos(2.0 * M_PI * k0 * i / n);
    const auto out = power_spectrum(x, n);
    REQUIRE(out[k0] == Approx((n / 2.0) * (n / 2.0)).epsilon(1e-12));
    for (int k = 0; k <= n / 2; ++k)
      if (k != k0) REQUIRE(out[k] < 1e-18 * out[k0]);
  }
  SECTION("matches the naive DFT on random frames") {
    Rng rng(77);
    for (int trial = 0; trial < 8; ++trial) {
      std::vector<double> x(40 + rng.below(24));
      for (double& v : x) v = rng.uniform(-1.0, 1.0);
      const auto fast = power_spectrum(x, 64);
      const auto slow = naive_power_spectrum(x, 64);
      for (std::size_t k = 0; k < fast.size(); ++k)
        REQUIRE(fast[k] == Approx(slow[k]).margin(1e-9));
    }
  }
  SECTION("one-sided Parseval identity on random frames") {
    Rng rng(78);
    const int n = 512;
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> x(n);
      for (double& v : x) v = rng.uniform(-1.0, 1.0);
      const auto out = power_spectrum(x, n);
      double lhs = out[0] + out[n / 2];
      for (int k = 1; k < n / 2; ++k) lhs += 2.0 * out[k];
      double energy = 0.0;
      for (double v : x) energy += v * v;
      REQUIRE(lhs == Approx(n * energy).epsilon(1e-9));
    }
  }
  SECTION("frame longer than fft_size") {
    REQUIRE_THROWS_AS(power_spectrum(std::vector<double>(65, 1.0), 64),
                      std::invalid_argument);
  }
}

TEST_CASE("spectrogram pipeline", "[dsp]") {
  SpectrogramConfig cfg;

  SECTION("one second of 16 kHz audio, defaults") {
    Rng rng(5);
    Waveform w = make_wave(16000);
    for (double& v : w.samples) v = rng.uniform(-0.5, 0.5);
    const Spectrogram spec = spectrogram(w, cfg);
    REQUIRE(spec.bins() == 257);
    REQUIRE(spec.frames() == 98);
    REQUIRE(spec.bin_center_hz.front() == 0.0);
    REQUIRE(spec.bin_center_hz.back() == Approx(8000.0));
    for (double v : spec.values.data) {
      REQUIRE(v >= 0.0);
      REQUIRE(std::isfinite(v));
    }
  }
  SECTION("zero waveform gives an all-zero spectrogram") {
    const Spectrogram spec = spectrogram(make_wave(16000), cfg);
    for (double v : spec.values.data) REQUIRE(v == 0.0);
  }
  SECTION("determinism: identical input, identical bits") {
    Rng rng(6);
    Waveform w = make_wave(4000);
    for (double& v : w.samples) v = rng.uniform(-1.0, 1.0);
    const Spectrogram a = spectrogram(w, cfg);
    const Spectrogram b = spectrogram(w, cfg);
    REQUIRE(a.values.data == b.values.data);
  }
  SECTION("shift by one hop shifts columns by one, bit-exactly") {
    Rng rng(7);
    Waveform w = make_wave(4000);
    for (double& v : w.samples) v = rng.uniform(-1.0, 1.0);
    Waveform shifted;
    shifted.sample_rate_hz = w.sample_rate_hz;
    shifted.samples.assign(w.samples.begin() + 160, w.samples.end());
    const Spectrogram a = spectrogram(w, cfg);
    const Spectrogram b = spectrogram(shifted, cfg);
    for (std::size_t k = 0; k < a.bins(); ++k)
      for (std::size_t t = 0; t < b.frames(); ++t)
        REQUIRE(a.values.at(k, t + 1) == b.values.at(k, t));
  }
}

TEST_CASE("add_noise hits the requested SNR exactly", "[dsp]") {
  Rng rng(9);
  Waveform w = make_wave(8000);
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    w.samples[i] = 0.4 * std::sin(2.0 * M_PI * 220.0 * i / 16000.0);

  SECTION("0 dB means equal signal and noise power") {
    const Waveform noisy = add_noise(w, 0.0, NoiseDist::gaussian, 42);
    double p_noise = 0.0;
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
      const double d = noisy.samples[i] - w.samples[i];
      p_noise += d * d;
    }
    REQUIRE(p_noise == Approx(signal_power(w.samples)).epsilon(1e-12));
  }
  SECTION("infinite SNR sentinel is a no-op") {
    const Waveform noisy = add_noise(w, kInfiniteSnrDb, NoiseDist::uniform, 42);
    REQUIRE(noisy.samples == w.samples);
  }
  SECTION("round trip through measure_snr, both distributions") {
    for (NoiseDist dist : {NoiseDist::gaussian, NoiseDist::uniform}) {
      REQUIRE(measure_snr(w, add_noise(w, 20.0, dist, 1)) == Approx(20.0).margin(1e-9));
      REQUIRE(measure_snr(w, add_noise(w, 50.0, dist, 2)) == Approx(50.0).margin(1e-9));
    }
  }
  SECTION("same seed, same bits; different seed, different noise") {
    const Waveform a = add_noise(w, 10.0, NoiseDist::gaussian, 7);
    const Waveform b = add_noise(w, 10.0, NoiseDist::gaussian, 7);
    const Waveform c = add_noise(w, 10.0, NoiseDist::gaussian, 8);
    REQUIRE(a.samples == b.samples);
    REQUIRE(a.samples != c.samples);
  }
  SECTION("zero-power input is rejected") {
    REQUIRE_THROWS_AS(add_noise(make_wave(100), 10.0, NoiseDist::gaussian, 1),
                      std::invalid_argument);
  }
}

TEST_CASE("measure_snr edge cases", "[dsp]") {
  Waveform w = make_wave(100, 16000, 0.5);
  SECTION("identical signals report the infinite sentinel") {
    REQUIRE(std::isinf(measure_snr(w, w)));
  }
  SECTION("noise power equal to signal power is 0 dB") {
    Waveform noisy = w;
    for (double& v : noisy.samples) v += 0.5;
    REQUIRE(measure_snr(w, noisy) == Approx(0.0).margin(1e-12));
  }
  SECTION("length mismatch") {
    REQUIRE_THROWS_AS(measure_snr(w, make_wave(99, 16000, 0.5)),
                      std::invalid_argument);
  }
}

TEST_CASE("WAV round trip", "[dsp]") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "fefa_wav_test";
  fs::create_directories(dir);
  const std::string path = (dir / "tone.wav").string();

  Waveform w = make_wave(2000, 8000);
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    w.samples[i] = 0.25 * std::sin(2.0 * M_PI * 440.0 * i / 8000.0);

  write_wav(path, w);
  const Waveform r = read_wav(path);
  REQUIRE(r.sample_rate_hz == 8000);
  REQUIRE(r.samples.size() == w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    REQUIRE(r.samples[i] == Approx(w.samples[i]).margin(1.0 / 32768.0));

  SECTION("rejects garbage") {
    const std::string bad = (dir / "bad.wav").string();
    std::FILE* f = std::fopen(bad.c_str(), "wb");
    std::fputs("this is not audio", f);
    std::fclose(f);
    REQUIRE_THROWS_AS(read_wav(bad), InputError);
  }
  fs::remove_all(dir);
}
