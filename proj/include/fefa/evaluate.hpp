#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "fefa/attention.hpp"
#include "fefa/corpus.hpp"
#include "fefa/eer.hpp"
#include "fefa/io.hpp"
#include "fefa/model.hpp"
#include "fefa/train.hpp"

namespace fefa {

// L2-normalized affine output of the embedding layer.
inline Vec embed_features(Model& model, const Tensor4& features) {
  Matrix embedding;
  model.forward(features, /*training=*/false, &embedding);
  Vec out(embedding.data);
  const double norm = l2_norm(out);
  if (norm > 0.0)
    for (double& v : out) v /= norm;
  return out;
}

inline Vec embed_wave(Model& model, const Waveform& wave, const SpectrogramConfig& cfg) {
  return embed_features(model, features_from_wave(wave, cfg));
}

// Embeddings for a pool of utterance tensors, batched, in pool order.
inline std::vector<Vec> embed_pool(Model& model, const std::vector<Tensor4>& xs,
                                   std::size_t batch_size = 32) {
  std::vector<Vec> out(xs.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < xs.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(xs.size(), start + batch_size); ++i)
      idx.push_back(i);
    const Tensor4 batch = stack_batch(xs, idx);
    Matrix embedding;
    model.forward(batch, /*training=*/false, &embedding);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      Vec e(embedding.cols);
      std::copy(embedding.row(i), embedding.row(i) + embedding.cols, e.begin());
      const double norm = l2_norm(e);
      if (norm > 0.0)
        for (double& v : e) v /= norm;
      out[idx[i]] = std::move(e);
    }
  }
  return out;
}

struct EvalResult {
  double accuracy_pct = 0.0;
  double eer_pct = 0.0;
};

// Top-1 accuracy on the test pool plus EER of cosine trial scores, from one
// batched inference pass that yields logits and embeddings together.
inline EvalResult evaluate(Model& model, const std::vector<Tensor4>& test_x,
                           const std::vector<int>& test_y, const TrialSet& trials) {
  if (test_x.empty()) throw std::invalid_argument("evaluate: empty test pool");
  std::size_t correct = 0;
  std::vector<Vec> embeddings(test_x.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < test_x.size(); start += 32) {
    idx.clear();
    for (std::size_t i = start; i < std::min(test_x.size(), start + 32); ++i)
      idx.push_back(i);
    const Tensor4 batch = stack_batch(test_x, idx);
    Matrix embedding;
    const Matrix logits = model.forward(batch, /*training=*/false, &embedding);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (argmax_row(logits, i) == static_cast<std::size_t>(test_y[idx[i]])) ++correct;
      Vec e(embedding.cols);
      std::copy(embedding.row(i), embedding.row(i) + embedding.cols, e.begin());
      const double norm = l2_norm(e);
      if (norm > 0.0)
        for (double& v : e) v /= norm;
      embeddings[idx[i]] = std::move(e);
    }
  }

  EvalResult r;
  r.accuracy_pct =
      100.0 * static_cast<double>(correct) / static_cast<double>(test_x.size());
  std::vector<double> scores;
  std::vector<bool> labels;
  scores.reserve(trials.trials.size());
  for (const Trial& t : trials.trials) {
    scores.push_back(cosine_similarity(embeddings[t.utt_a], embeddings[t.utt_b]));
    labels.push_back(t.same_speaker);
  }
  r.eer_pct = 100.0 * compute_eer(scores, labels);
  return r;
}

// ---------------------------------------------------------------------------
// Noise robustness sweep

struct EvalRow {
  std::string variant;   // "baseline" or "fefa"
  std::string backbone;
  std::string dist;      // "none", "gaussian", "uniform"
  double snr_db = kInfiniteSnrDb;
  double accuracy_pct = 0.0;   // median over seeds
  double eer_pct = 0.0;        // median over seeds
  double delta_eer_pct = 0.0;  // median over per-seed 100*(clean-noisy)/clean
  std::string seeds;           // semicolon-joined model seeds
};

struct EvalReport {
  std::vector<EvalRow> rows;
};

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Sign convention: degradation is negative. A clean EER of zero maps a
// worsened noisy EER to -inf and an unchanged one to 0.
inline double delta_eer_pct(double clean_pct, double noisy_pct) {
  if (clean_pct > 0.0) return 100.0 * (clean_pct - noisy_pct) / clean_pct;
  if (noisy_pct == 0.0) return 0.0;
  return -std::numeric_limits<double>::infinity();
}

inline std::string dist_name(NoiseDist d) {
  return d == NoiseDist::gaussian ? "gaussian" : "uniform";
}

struct SweepVariant {
  std::string name;            // row label
  std::vector<Model*> models;  // one per training seed, clean-trained
};

// Test-time corruption protocol: for each (distribution, SNR) both sides of
// every trial are corrupted with utterance-keyed noise that is identical
// across variants and seeds, then accuracy and EER are re-measured.
inline EvalReport robustness_sweep(const std::vector<SweepVariant>& variants,
                                   const Corpus& corpus, const TrialSet& trials,
                                   const std::vector<double>& snr_list,
                                   const std::vector<NoiseDist>& dists,
                                   const SpectrogramConfig& dsp_cfg,
                                   std::uint64_t noise_seed,
                                   const std::vector<std::uint64_t>& seeds_used) {
  const auto test_split = corpus.split(/*train=*/false);
  if (test_split.empty()) throw std::invalid_argument("robustness_sweep: empty test split");

  std::string seeds_str;
  for (std::size_t i = 0; i < seeds_used.size(); ++i) {
    if (i) seeds_str += ';';
    seeds_str += std::to_string(seeds_used[i]);
  }

  std::vector<Tensor4> clean_x;
  std::vector<int> test_y;
  for (const Utterance* u : test_split) {
    clean_x.push_back(features_from_wave(u->wave, dsp_cfg));
    test_y.push_back(u->speaker);
  }

  EvalReport report;
  std::vector<std::vector<double>> clean_eer(variants.size());

  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    const SweepVariant& variant = variants[vi];
    if (variant.models.empty())
      throw std::invalid_argument("robustness_sweep: variant without models");
    std::vector<double> accs, eers;
    for (Model* model : variant.models) {
      const EvalResult r = evaluate(*model, clean_x, test_y, trials);
      accs.push_back(r.accuracy_pct);
      eers.push_back(r.eer_pct);
    }
    clean_eer[vi] = eers;
    EvalRow row;
    row.variant = variant.name;
    row.backbone = to_string(variant.models[0]->spec.backbone);
    row.dist = "none";
    row.snr_db = kInfiniteSnrDb;
    row.accuracy_pct = median(accs);
    row.eer_pct = median(eers);
    row.delta_eer_pct = 0.0;
    row.seeds = seeds_str;
    report.rows.push_back(row);
  }

  for (const NoiseDist dist : dists) {
    for (const double snr : snr_list) {
      std::vector<Tensor4> noisy_x;
      noisy_x.reserve(test_split.size());
      const std::uint64_t snr_key =
          std::isfinite(snr)
              ? static_cast<std::uint64_t>(std::llround(snr * 1000.0))
              : ~0ull;
      for (std::size_t i = 0; i < test_split.size(); ++i) {
        const Utterance* u = test_split[i];
        const std::uint64_t seed =
            mix_seed(noise_seed, static_cast<std::uint64_t>(u->speaker) << 32 |
                                     static_cast<std::uint64_t>(u->index),
                     static_cast<std::uint64_t>(dist), snr_key);
        noisy_x.push_back(
            features_from_wave(add_noise(u->wave, snr, dist, seed), dsp_cfg));
      }
      for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        const SweepVariant& variant = variants[vi];
        std::vector<double> accs, eers, deltas;
        for (std::size_t si = 0; si < variant.models.size(); ++si) {
          const EvalResult r = evaluate(*variant.models[si], noisy_x, test_y, trials);
          accs.push_back(r.accuracy_pct);
          eers.push_back(r.eer_pct);
          deltas.push_back(delta_eer_pct(clean_eer[vi][si], r.eer_pct));
        }
        EvalRow row;
        row.variant = variant.name;
        row.backbone = to_string(variant.models[0]->spec.backbone);
        row.dist = dist_name(dist);
        row.snr_db = snr;
        row.accuracy_pct = median(accs);
        row.eer_pct = median(eers);
        row.delta_eer_pct = median(deltas);
        row.seeds = seeds_str;
        report.rows.push_back(row);
      }
    }
  }
  return report;
}

inline std::string eval_report_csv(const EvalReport& report) {
  std::string out = "variant,backbone,dist,snr_db,accuracy_pct,eer_pct,delta_eer_pct,seeds\n";
  char buf[256];
  for (const EvalRow& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%g,%.6f,%.6f,%.6f,%s\n",
                  r.variant.c_str(), r.backbone.c_str(), r.dist.c_str(), r.snr_db,
                  r.accuracy_pct, r.eer_pct, r.delta_eer_pct, r.seeds.c_str());
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Attention inspection

struct AttentionHeatmap {
  std::vector<std::string> placement_names;
  std::vector<Vec> placement_p;
  Matrix enhanced;  // input placement's re-weighting applied to the raw power spectrogram
};

// Runs one utterance through the model and collects every placement's
// attention weights. Errors on FEFA-free models.
inline AttentionHeatmap attention_heatmap(Model& model, const Waveform& wave,
                                          const SpectrogramConfig& cfg) {
  if (model.fefa_layers().empty())
    throw std::invalid_argument("attention_heatmap: model has no attention placements");
  const Spectrogram raw = spectrogram(wave, cfg);
  const Tensor4 features = features_from_wave(wave, cfg);
  // Training-mode forward so each placement keeps its per-sample cache.
  model.forward(features, /*training=*/true);

  AttentionHeatmap out;
  for (const FefaLayer* layer : model.fefa_layers()) {
    out.placement_names.push_back(layer->name());
    out.placement_p.push_back(layer->cache(0).p);
  }
  const AttentionWeights input_p{out.placement_p.front()};
  out.enhanced = apply_attention(raw.values, input_p,
                                 model.fefa_layers().front()->scale_mode());
  return out;
}

inline std::string attention_csv(const AttentionHeatmap& hm) {
  std::string out;
  for (std::size_t i = 0; i < hm.placement_names.size(); ++i) {
    out += hm.placement_names[i];
    for (double v : hm.placement_p[i]) out += "," + format_double("%.9e", v);
    out += '\n';
  }
  return out;
}

}  // namespace fefa
