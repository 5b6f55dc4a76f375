#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fefa/dsp.hpp"
#include "fefa/rng.hpp"

namespace fefa {

// Synthetic harmonic speakers. Each speaker is a fixed fundamental plus a
// fixed harmonic amplitude profile, so speaker identity lives in a known set
// of frequency bins.
struct SyntheticCorpusSpec {
  int n_speakers = 8;
  int utterances_per_speaker = 200;
  double duration_s = 1.0;
  int sample_rate_hz = 16000;
  int harmonics_per_speaker = 4;
  double f0_min_hz = 120.0;
  double f0_max_hz = 320.0;
  double jitter_pct = 3.0;
  double utterance_noise_snr_db = 30.0;  // +inf disables background noise
  std::uint64_t seed = 1;

  void validate() const {
    if (n_speakers < 1 || utterances_per_speaker < 1 || harmonics_per_speaker < 1)
      throw std::invalid_argument("corpus spec: counts must be >= 1");
    if (duration_s <= 0.0 || sample_rate_hz <= 0)
      throw std::invalid_argument("corpus spec: bad duration or sample rate");
    if (f0_min_hz <= 0.0 || f0_max_hz <= f0_min_hz ||
        f0_max_hz >= sample_rate_hz / 2.0)
      throw std::invalid_argument("corpus spec: f0 range must lie in (0, Nyquist)");
    if (jitter_pct < 0.0)
      throw std::invalid_argument("corpus spec: jitter must be >= 0");
  }
};

struct Utterance {
  Waveform wave;
  int speaker = 0;
  int index = 0;  // per-speaker utterance index
  bool train_split = true;
};

struct SpeakerProfile {
  double f0_hz = 0.0;
  std::vector<double> harmonic_amps;
};

struct Corpus {
  SyntheticCorpusSpec spec;
  std::vector<SpeakerProfile> speakers;
  std::vector<Utterance> utterances;

  std::vector<const Utterance*> split(bool train) const {
    std::vector<const Utterance*> out;
    for (const auto& u : utterances)
      if (u.train_split == train) out.push_back(&u);
    return out;
  }
};

// Deterministic per seed. Speaker fundamentals are drawn one per stratum of
// the f0 range (middle 80% of each stratum) so speakers stay separated;
// amplitude profiles are uniform in [0.3, 1]. Utterances add per-utterance
// f0 jitter, random phases, a raised-cosine fade, and background noise at
// the configured SNR. The last 20% of each speaker's utterances form the
// test split.
inline Corpus generate_corpus(const SyntheticCorpusSpec& spec) {
  spec.validate();
  Corpus corpus;
  corpus.spec = spec;

  Rng speaker_rng(mix_seed(spec.seed, 0x5e11a1));
  const double stratum = (spec.f0_max_hz - spec.f0_min_hz) / spec.n_speakers;
  for (int s = 0; s < spec.n_speakers; ++s) {
    SpeakerProfile prof;
    prof.f0_hz = spec.f0_min_hz + (s + 0.1 + 0.8 * speaker_rng.uniform()) * stratum;
    prof.harmonic_amps.resize(spec.harmonics_per_speaker);
    for (double& a : prof.harmonic_amps) a = speaker_rng.uniform(0.3, 1.0);
    corpus.speakers.push_back(prof);
  }

  const double nyquist = spec.sample_rate_hz / 2.0;
  const double max_jitter = 1.0 + spec.jitter_pct / 100.0;
  for (const auto& prof : corpus.speakers) {
    const double top = prof.f0_hz * max_jitter * spec.harmonics_per_speaker;
    if (top >= nyquist)
      throw std::invalid_argument("generate_corpus: harmonic above Nyquist (" +
                                  std::to_string(top) + " Hz)");
  }

  const std::size_t n_samples = static_cast<std::size_t>(
      std::lround(spec.duration_s * spec.sample_rate_hz));
  const int n_train = (spec.utterances_per_speaker * 4) / 5;
  const std::size_t fade = std::min<std::size_t>(n_samples / 2,
      static_cast<std::size_t>(spec.sample_rate_hz / 100));  // 10 ms fade

  for (int s = 0; s < spec.n_speakers; ++s) {
    const SpeakerProfile& prof = corpus.speakers[s];
    for (int u = 0; u < spec.utterances_per_speaker; ++u) {
      Rng rng(mix_seed(spec.seed, 0x077e71, static_cast<std::uint64_t>(s),
                       static_cast<std::uint64_t>(u)));
      const double jitter = spec.jitter_pct / 100.0 * rng.uniform(-1.0, 1.0);
      const double f0 = prof.f0_hz * (1.0 + jitter);

      Utterance utt;
      utt.speaker = s;
      utt.index = u;
      utt.train_split = u < n_train;
      utt.wave.sample_rate_hz = spec.sample_rate_hz;
      utt.wave.samples.assign(n_samples, 0.0);

      const double dt = 1.0 / spec.sample_rate_hz;
      for (int harm = 0; harm < spec.harmonics_per_speaker; ++harm) {
        const double freq = f0 * (harm + 1);
        const double amp = prof.harmonic_amps[static_cast<std::size_t>(harm)] /
                           spec.harmonics_per_speaker;
        const double phase = rng.uniform(0.0, 2.0 * M_PI);
        const double omega = 2.0 * M_PI * freq;
        for (std::size_t t = 0; t < n_samples; ++t)
          utt.wave.samples[t] += amp * std::sin(omega * t * dt + phase);
      }
      for (std::size_t t = 0; t < fade; ++t) {
        const double g = 0.5 * (1.0 - std::cos(M_PI * t / static_cast<double>(fade)));
        utt.wave.samples[t] *= g;
        utt.wave.samples[n_samples - 1 - t] *= g;
      }
      if (std::isfinite(spec.utterance_noise_snr_db)) {
        utt.wave = add_noise(utt.wave, spec.utterance_noise_snr_db,
                             NoiseDist::gaussian,
                             mix_seed(spec.seed, 0xba5e11, static_cast<std::uint64_t>(s),
                                      static_cast<std::uint64_t>(u)));
      }
      corpus.utterances.push_back(std::move(utt));
    }
  }
  return corpus;
}

}  // namespace fefa
