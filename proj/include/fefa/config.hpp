#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fefa/corpus.hpp"
#include "fefa/dsp.hpp"
#include "fefa/errors.hpp"
#include "fefa/model.hpp"
#include "fefa/train.hpp"

namespace fefa {

// Flat key-value run configuration. Every knob of the pipeline lives here;
// unknown keys are rejected so a config can never silently drift.
struct RunConfig {
  SpectrogramConfig dsp;
  SyntheticCorpusSpec corpus;

  // model
  Backbone backbone = Backbone::vgg_m;
  FefaMode fefa = FefaMode::none;
  ScaleMode scale_mode = ScaleMode::preserve;
  int fefa_local_window = 0;
  int embedding_dim = 32;
  std::uint64_t seed = 1;  // model init + shuffle order

  // training
  int epochs = 8;
  int batch_size = 16;
  CyclicalLrSchedule sched;

  // evaluation
  std::size_t n_trials = 400;
  std::uint64_t trial_seed = 7;
  std::uint64_t noise_seed = 99;
  std::vector<double> snr_list{20.0, 50.0, 100.0};
  std::vector<NoiseDist> noise_dists{NoiseDist::gaussian, NoiseDist::uniform};

  ModelSpec model_spec() const {
    ModelSpec spec;
    spec.backbone = backbone;
    spec.fefa = fefa;
    spec.scale_mode = scale_mode;
    spec.fefa_local_window = fefa_local_window;
    spec.n_classes = corpus.n_speakers;
    spec.embedding_dim = embedding_dim;
    spec.input_bins = dsp.bins();
    spec.seed = seed;
    return spec;
  }

  TrainConfig train_config() const {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.sched = sched;
    cfg.seed = seed;
    return cfg;
  }

  void validate() const {
    try {
      corpus.validate();
      dsp.validate(corpus.sample_rate_hz);
      model_spec().validate();
      train_config().validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (corpus.n_speakers < 2) throw ConfigError("config: need >= 2 speakers");
    if (n_trials < 2) throw ConfigError("config: n_trials must be >= 2");
    if (snr_list.empty()) throw ConfigError("config: snr_list must not be empty");
    if (noise_dists.empty()) throw ConfigError("config: noise_dists must not be empty");
  }

  // Canonical serialization of the data contract: the spectrogram front end
  // and the synthetic corpus. Its hash is stored in checkpoints so evaluating
  // under different data fails loudly. Model shape and optimizer settings are
  // recorded in the checkpoint manifest instead; that lets one config verify
  // the baseline and attention variants of the same experiment, across seeds.
  std::string canonical_data_text() const {
    char buf[64];
    std::string out;
    auto put = [&](const char* key, const std::string& v) {
      out += key;
      out += '=';
      out += v;
      out += '\n';
    };
    auto putd = [&](const char* key, double v) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      put(key, buf);
    };
    putd("window_ms", dsp.window_ms);
    putd("hop_ms", dsp.hop_ms);
    put("fft_size", std::to_string(dsp.fft_size));
    put("n_speakers", std::to_string(corpus.n_speakers));
    put("utterances_per_speaker", std::to_string(corpus.utterances_per_speaker));
    putd("duration_s", corpus.duration_s);
    put("sample_rate_hz", std::to_string(corpus.sample_rate_hz));
    put("harmonics_per_speaker", std::to_string(corpus.harmonics_per_speaker));
    putd("f0_min_hz", corpus.f0_min_hz);
    putd("f0_max_hz", corpus.f0_max_hz);
    putd("jitter_pct", corpus.jitter_pct);
    putd("utterance_noise_snr_db", corpus.utterance_noise_snr_db);
    put("corpus_seed", std::to_string(corpus.seed));
    return out;
  }

  std::uint64_t train_hash() const {
    const std::string text = canonical_data_text();
    return fnv1a64(text.data(), text.size());
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for '" + key + "': " + v);
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for '" + key + "': " + v);
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: bad seed for '" + key + "': " + v);
  }
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

}  // namespace detail

inline Backbone parse_backbone(const std::string& v) {
  if (v == "vgg_m") return Backbone::vgg_m;
  if (v == "resnet_m") return Backbone::resnet_m;
  if (v == "seresnet_m") return Backbone::seresnet_m;
  throw ConfigError("config: unknown backbone '" + v + "'");
}

inline FefaMode parse_fefa_mode(const std::string& v) {
  if (v == "none") return FefaMode::none;
  if (v == "single") return FefaMode::single;
  if (v == "multi") return FefaMode::multi;
  throw ConfigError("config: unknown fefa mode '" + v + "'");
}

inline ScaleMode parse_scale_mode(const std::string& v) {
  if (v == "preserve") return ScaleMode::preserve;
  if (v == "literal") return ScaleMode::literal;
  throw ConfigError("config: unknown scale mode '" + v + "'");
}

inline NoiseDist parse_noise_dist(const std::string& v) {
  if (v == "gaussian") return NoiseDist::gaussian;
  if (v == "uniform") return NoiseDist::uniform;
  throw ConfigError("config: unknown noise distribution '" + v + "'");
}

// `key = value` lines; '#' starts a comment; unknown keys are errors.
inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.resize(hash);
    const std::string line = detail::trim(raw);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(line_no) +
                        " is not 'key = value': " + line);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config: empty key or value at line " + std::to_string(line_no));

    if (key == "window_ms") cfg.dsp.window_ms = detail::parse_double(key, value);
    else if (key == "hop_ms") cfg.dsp.hop_ms = detail::parse_double(key, value);
    else if (key == "fft_size") cfg.dsp.fft_size = static_cast<int>(detail::parse_int(key, value));
    else if (key == "n_speakers") cfg.corpus.n_speakers = static_cast<int>(detail::parse_int(key, value));
    else if (key == "utterances_per_speaker") cfg.corpus.utterances_per_speaker = static_cast<int>(detail::parse_int(key, value));
    else if (key == "duration_s") cfg.corpus.duration_s = detail::parse_double(key, value);
    else if (key == "sample_rate_hz") cfg.corpus.sample_rate_hz = static_cast<int>(detail::parse_int(key, value));
    else if (key == "harmonics_per_speaker") cfg.corpus.harmonics_per_speaker = static_cast<int>(detail::parse_int(key, value));
    else if (key == "f0_min_hz") cfg.corpus.f0_min_hz = detail::parse_double(key, value);
    else if (key == "f0_max_hz") cfg.corpus.f0_max_hz = detail::parse_double(key, value);
    else if (key == "jitter_pct") cfg.corpus.jitter_pct = detail::parse_double(key, value);
    else if (key == "utterance_noise_snr_db") cfg.corpus.utterance_noise_snr_db = detail::parse_double(key, value);
    else if (key == "corpus_seed") cfg.corpus.seed = detail::parse_u64(key, value);
    else if (key == "backbone") cfg.backbone = parse_backbone(value);
    else if (key == "fefa") cfg.fefa = parse_fefa_mode(value);
    else if (key == "scale_mode") cfg.scale_mode = parse_scale_mode(value);
    else if (key == "fefa_local_window") cfg.fefa_local_window = static_cast<int>(detail::parse_int(key, value));
    else if (key == "embedding_dim") cfg.embedding_dim = static_cast<int>(detail::parse_int(key, value));
    else if (key == "seed") cfg.seed = detail::parse_u64(key, value);
    else if (key == "epochs") cfg.epochs = static_cast<int>(detail::parse_int(key, value));
    else if (key == "batch_size") cfg.batch_size = static_cast<int>(detail::parse_int(key, value));
    else if (key == "base_lr") cfg.sched.base_lr = detail::parse_double(key, value);
    else if (key == "max_lr") cfg.sched.max_lr = detail::parse_double(key, value);
    else if (key == "lr_step_size") cfg.sched.step_size = static_cast<std::size_t>(detail::parse_int(key, value));
    else if (key == "n_trials") cfg.n_trials = static_cast<std::size_t>(detail::parse_int(key, value));
    else if (key == "trial_seed") cfg.trial_seed = detail::parse_u64(key, value);
    else if (key == "noise_seed") cfg.noise_seed = detail::parse_u64(key, value);
    else if (key == "snr_list") {
      cfg.snr_list.clear();
      for (const auto& item : detail::split(value, ','))
        cfg.snr_list.push_back(detail::parse_double(key, item));
    } else if (key == "noise_dists") {
      cfg.noise_dists.clear();
      for (const auto& item : detail::split(value, ','))
        cfg.noise_dists.push_back(parse_noise_dist(item));
    } else {
      throw ConfigError("config: unknown key '" + key + "' at line " +
                        std::to_string(line_no));
    }
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("config: cannot open " + path);
  std::ostringstream body;
  body << in.rdbuf();
  return parse_config_text(body.str());
}

}  // namespace fefa
