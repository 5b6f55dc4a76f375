#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fefa/corpus.hpp"
#include "fefa/dsp.hpp"
#include "fefa/model.hpp"
#include "fefa/optim.hpp"

namespace fefa {

// Model input features: log(1 + power spectrogram) as a 1 x 1 x bins x frames
// tensor. The compression keeps activations in a trainable range without
// touching the attention math, which is feature-agnostic.
inline Tensor4 features_from_wave(const Waveform& wave, const SpectrogramConfig& cfg) {
  const Spectrogram spec = spectrogram(wave, cfg);
  Tensor4 x(1, 1, spec.bins(), spec.frames());
  for (std::size_t i = 0; i < spec.values.data.size(); ++i)
    x.data[i] = std::log1p(spec.values.data[i]);
  return x;
}

struct Dataset {
  std::vector<Tensor4> train_x;
  std::vector<int> train_y;
  std::vector<Tensor4> test_x;
  std::vector<int> test_y;
  std::size_t bins = 0;
  std::size_t frames = 0;
};

inline Dataset featurize_corpus(const Corpus& corpus, const SpectrogramConfig& cfg) {
  Dataset ds;
  for (const Utterance& utt : corpus.utterances) {
    Tensor4 x = features_from_wave(utt.wave, cfg);
    ds.bins = x.h;
    ds.frames = x.w;
    if (utt.train_split) {
      ds.train_x.push_back(std::move(x));
      ds.train_y.push_back(utt.speaker);
    } else {
      ds.test_x.push_back(std::move(x));
      ds.test_y.push_back(utt.speaker);
    }
  }
  return ds;
}

inline Tensor4 stack_batch(const std::vector<Tensor4>& pool,
                           const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("stack_batch: empty batch");
  const Tensor4& first = pool[indices[0]];
  Tensor4 out(indices.size(), first.c, first.h, first.w);
  const std::size_t sample = first.c * first.h * first.w;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Tensor4& x = pool[indices[i]];
    if (x.c != first.c || x.h != first.h || x.w != first.w)
      throw std::invalid_argument("stack_batch: inhomogeneous shapes");
    std::copy(x.data.begin(), x.data.end(), out.data.begin() + i * sample);
  }
  return out;
}

struct TrainConfig {
  int epochs = 8;
  int batch_size = 16;
  CyclicalLrSchedule sched;
  std::uint64_t seed = 1;  // shuffle order; model init comes from ModelSpec

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    sched.validate();
  }
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc_pct = 0.0;
  double test_acc_pct = 0.0;
};

inline std::size_t argmax_row(const Matrix& m, std::size_t row) {
  const double* r = m.row(row);
  std::size_t best = 0;
  for (std::size_t j = 1; j < m.cols; ++j)
    if (r[j] > r[best]) best = j;
  return best;
}

// Top-1 accuracy (%) over a pool of single-utterance tensors, running the
// model in inference mode batch by batch.
inline double classification_accuracy(Model& model, const std::vector<Tensor4>& xs,
                                      const std::vector<int>& ys,
                                      std::size_t batch_size = 32) {
  if (xs.empty()) throw std::invalid_argument("classification_accuracy: empty pool");
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < xs.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(xs.size(), start + batch_size); ++i)
      idx.push_back(i);
    const Tensor4 batch = stack_batch(xs, idx);
    const Matrix logits = model.forward(batch, /*training=*/false);
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (argmax_row(logits, i) == static_cast<std::size_t>(ys[idx[i]])) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(xs.size());
}

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
};

// Cross-entropy speaker classification with Adam and a triangular cyclical
// learning rate. Deterministic given (model seed, shuffle seed, data).
inline TrainResult train(const ModelSpec& model_spec, const Dataset& data,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (data.train_x.empty()) throw std::invalid_argument("train: empty training split");

  TrainResult result;
  result.model = build_model(model_spec);
  Model& model = result.model;

  auto refs = model.params();
  AdamState adam;
  {
    std::vector<std::size_t> sizes;
    for (const auto& r : refs) sizes.push_back(r.size);
    adam.init(sizes);
  }

  std::vector<std::size_t> order(data.train_x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::size_t iter = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 0xe90c4, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double loss_sum = 0.0;
    std::size_t seen = 0, correct = 0;
    double last_lr = 0.0;
    std::vector<std::size_t> batch_idx;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      batch_idx.clear();
      for (std::size_t i = start;
           i < std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size)); ++i)
        batch_idx.push_back(order[i]);

      const Tensor4 batch = stack_batch(data.train_x, batch_idx);
      std::vector<int> labels(batch_idx.size());
      for (std::size_t i = 0; i < batch_idx.size(); ++i)
        labels[i] = data.train_y[batch_idx[i]];

      const double lr = cyclical_lr(iter, cfg.sched);
      last_lr = lr;
      const Matrix logits = model.forward(batch, /*training=*/true);
      Matrix grad_logits;
      const double loss = softmax_cross_entropy(logits, labels, grad_logits);
      if (!std::isfinite(loss))
        throw std::runtime_error("train: non-finite loss at iteration " +
                                 std::to_string(iter) + " (epoch " +
                                 std::to_string(epoch) + ")");
      model.zero_grads();
      model.backward(grad_logits);
      for (std::size_t slot = 0; slot < refs.size(); ++slot)
        adam_update_slot(slot, refs[slot].data, refs[slot].grad, refs[slot].size,
                         adam, lr);
      ++adam.step;

      loss_sum += loss * static_cast<double>(batch_idx.size());
      for (std::size_t i = 0; i < batch_idx.size(); ++i)
        if (argmax_row(logits, i) == static_cast<std::size_t>(labels[i])) ++correct;
      seen += batch_idx.size();
      ++iter;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = last_lr;
    entry.train_loss = loss_sum / static_cast<double>(seen);
    entry.train_acc_pct = 100.0 * static_cast<double>(correct) / static_cast<double>(seen);
    entry.test_acc_pct = data.test_x.empty()
                             ? 0.0
                             : classification_accuracy(model, data.test_x, data.test_y);
    result.log.push_back(entry);
  }
  return result;
}

inline std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,lr,train_loss,train_acc,test_acc\n";
  char buf[160];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.9e,%.9e,%.4f,%.4f\n", e.epoch, e.lr,
                  e.train_loss, e.train_acc_pct, e.test_acc_pct);
    out += buf;
  }
  return out;
}

}  // namespace fefa
