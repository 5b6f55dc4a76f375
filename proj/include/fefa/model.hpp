#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fefa/attention.hpp"
#include "fefa/layers.hpp"
#include "fefa/rng.hpp"

namespace fefa {

enum class Backbone { vgg_m, resnet_m, seresnet_m };
enum class FefaMode { none, single, multi };

inline const char* to_string(Backbone b) {
  switch (b) {
    case Backbone::vgg_m: return "vgg_m";
    case Backbone::resnet_m: return "resnet_m";
    case Backbone::seresnet_m: return "seresnet_m";
  }
  return "?";
}

inline const char* to_string(FefaMode m) {
  switch (m) {
    case FefaMode::none: return "none";
    case FefaMode::single: return "single";
    case FefaMode::multi: return "multi";
  }
  return "?";
}

inline const char* to_string(ScaleMode m) {
  return m == ScaleMode::preserve ? "preserve" : "literal";
}

struct ModelSpec {
  Backbone backbone = Backbone::vgg_m;
  FefaMode fefa = FefaMode::none;
  ScaleMode scale_mode = ScaleMode::preserve;
  int fefa_local_window = 0;  // 0 = full connectivity
  int n_classes = 8;
  int embedding_dim = 32;
  int input_bins = 257;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_classes < 2) throw std::invalid_argument("model spec: n_classes must be >= 2");
    if (embedding_dim < 1)
      throw std::invalid_argument("model spec: embedding_dim must be >= 1");
    if (input_bins < 8)
      throw std::invalid_argument("model spec: input_bins must be >= 8");
    if (fefa_local_window < 0 || (fefa_local_window > 0 && fefa_local_window % 2 == 0))
      throw std::invalid_argument("model spec: local window must be odd");
  }
};

// Named view of one parameter tensor and its gradient buffer.
struct ParamRef {
  std::string name;
  std::vector<std::size_t> shape;
  double* data;
  double* grad;
  std::size_t size;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor4 forward(const Tensor4& x, bool training) = 0;
  virtual Tensor4 backward(const Tensor4& grad_out) = 0;
  virtual void collect_params(std::vector<ParamRef>& out) {}
};

namespace detail {

inline void he_uniform(Rng& rng, double* data, std::size_t size, std::size_t fan_in) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < size; ++i) data[i] = rng.uniform(-limit, limit);
}

inline ParamRef make_ref(std::string name, std::vector<std::size_t> shape,
                         std::vector<double>& data, std::vector<double>& grad) {
  return ParamRef{std::move(name), std::move(shape), data.data(), grad.data(),
                  data.size()};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Layer objects. Each owns its parameters, gradient buffers, and the forward
// caches the backward pass needs. Training is single-writer: forward with
// training=true, then one backward.

class ConvLayer final : public Layer {
 public:
  ConvLayer(std::string name, std::size_t c_in, std::size_t c_out, int ksize,
            int stride, Rng& rng)
      : name_(std::move(name)),
        stride_(stride),
        kernels_(c_out, c_in, static_cast<std::size_t>(ksize),
                 static_cast<std::size_t>(ksize)),
        bias_(c_out, 0.0),
        kernels_grad_(c_out, c_in, static_cast<std::size_t>(ksize),
                      static_cast<std::size_t>(ksize)),
        bias_grad_(c_out, 0.0) {
    detail::he_uniform(rng, kernels_.data.data(), kernels_.data.size(),
                       c_in * static_cast<std::size_t>(ksize * ksize));
  }

  Tensor4 forward(const Tensor4& x, bool training) override {
    if (training) input_ = x;
    return conv2d_forward(x, kernels_, bias_, stride_);
  }

  Tensor4 backward(const Tensor4& grad_out) override {
    if (input_.size() == 0) throw std::logic_error("conv backward without forward");
    Tensor4 grad_in, grad_k;
    Vec grad_b;
    conv2d_backward(input_, kernels_, stride_, grad_out, grad_in, grad_k, grad_b);
    for (std::size_t i = 0; i < grad_k.data.size(); ++i)
      kernels_grad_.data[i] += grad_k.data[i];
    for (std::size_t i = 0; i < grad_b.size(); ++i) bias_grad_[i] += grad_b[i];
    return grad_in;
  }

  void collect_params(std::vector<ParamRef>& out) override {
    out.push_back(detail::make_ref(name_ + ".kernel",
                                   {kernels_.n, kernels_.c, kernels_.h, kernels_.w},
                                   kernels_.data, kernels_grad_.data));
    out.push_back(detail::make_ref(name_ + ".bias", {bias_.size()}, bias_, bias_grad_));
  }

 private:
  std::string name_;
  int stride_;
  Tensor4 kernels_;
  Vec bias_;
  Tensor4 kernels_grad_;
  Vec bias_grad_;
  Tensor4 input_;
};

class ReluLayer final : public Layer {
 public:
  Tensor4 forward(const Tensor4& x, bool training) override {
    if (training) input_ = x;
    return relu_forward(x);
  }
  Tensor4 backward(const Tensor4& grad_out) override {
    return relu_backward(input_, grad_out);
  }

 private:
  Tensor4 input_;
};

class MaxPoolLayer final : public Layer {
 public:
  Tensor4 forward(const Tensor4& x, bool training) override {
    std::vector<std::size_t> argmax;
    Tensor4 out = maxpool2x2_forward(x, argmax);
    if (training) {
      input_ = x;
      argmax_ = std::move(argmax);
    }
    return out;
  }
  Tensor4 backward(const Tensor4& grad_out) override {
    return maxpool2x2_backward(input_, argmax_, grad_out);
  }

 private:
  Tensor4 input_;
  std::vector<std::size_t> argmax_;
};

class GlobalAvgPoolLayer final : public Layer {
 public:
  Tensor4 forward(const Tensor4& x, bool training) override {
    if (training) input_ = x;
    return global_avg_pool_forward(x);
  }
  Tensor4 backward(const Tensor4& grad_out) override {
    return global_avg_pool_backward(input_, grad_out);
  }

 private:
  Tensor4 input_;
};

class DenseLayer final : public Layer {
 public:
  DenseLayer(std::string name, std::size_t d_in, std::size_t d_out, Rng& rng)
      : name_(std::move(name)),
        weights_(d_out, d_in),
        bias_(d_out, 0.0),
        weights_grad_(d_out, d_in),
        bias_grad_(d_out, 0.0) {
    detail::he_uniform(rng, weights_.data.data(), weights_.data.size(), d_in);
  }

  Tensor4 forward(const Tensor4& x, bool training) override {
    if (training) input_ = x;
    return dense_forward(x, weights_, bias_);
  }

  Tensor4 backward(const Tensor4& grad_out) override {
    Tensor4 grad_in;
    Matrix grad_w;
    Vec grad_b;
    dense_backward(input_, weights_, grad_out, grad_in, grad_w, grad_b);
    for (std::size_t i = 0; i < grad_w.data.size(); ++i)
      weights_grad_.data[i] += grad_w.data[i];
    for (std::size_t i = 0; i < grad_b.size(); ++i) bias_grad_[i] += grad_b[i];
    return grad_in;
  }

  void collect_params(std::vector<ParamRef>& out) override {
    out.push_back(detail::make_ref(name_ + ".weight", {weights_.rows, weights_.cols},
                                   weights_.data, weights_grad_.data));
    out.push_back(detail::make_ref(name_ + ".bias", {bias_.size()}, bias_, bias_grad_));
  }

 private:
  std::string name_;
  Matrix weights_;
  Vec bias_;
  Matrix weights_grad_;
  Vec bias_grad_;
  Tensor4 input_;
};

// One attention placement applied per sample over the batch. All samples
// share the kernel parameters; gradients accumulate across the batch in
// batch order.
class FefaLayer final : public Layer {
 public:
  FefaLayer(std::string name, std::size_t bins, int local_window, ScaleMode mode)
      : name_(std::move(name)),
        params_(FefaParams::zeros(bins, local_window, name_)),
        mode_(mode),
        weights_grad_(params_.weights.rows, params_.weights.cols),
        bias_grad_(params_.bias.size(), 0.0) {}

  Tensor4 forward(const Tensor4& x, bool training) override {
    if (x.h != params_.bins_out())
      throw std::invalid_argument(name_ + ": input height mismatch");
    Tensor4 out(x.n, x.c, x.h, x.w);
    if (training) caches_.assign(x.n, FefaCache{});
    const std::size_t sample = x.c * x.h * x.w;
    for (std::size_t n = 0; n < x.n; ++n) {
      FefaCache scratch;
      FefaCache& cache = training ? caches_[n] : scratch;
      fefa_forward_chw(x.data.data() + n * sample, x.c, x.h, x.w, params_, mode_,
                       out.data.data() + n * sample, cache);
    }
    return out;
  }

  Tensor4 backward(const Tensor4& grad_out) override {
    if (caches_.size() != grad_out.n)
      throw std::logic_error(name_ + ": backward without matching forward");
    Tensor4 grad_in(grad_out.n, grad_out.c, grad_out.h, grad_out.w);
    const std::size_t sample = grad_out.c * grad_out.h * grad_out.w;
    std::vector<double> upstream(sample);
    for (std::size_t n = 0; n < grad_out.n; ++n) {
      std::copy(grad_out.data.begin() + n * sample,
                grad_out.data.begin() + (n + 1) * sample, upstream.begin());
      FefaGrads g = fefa_backward(upstream, caches_[n], params_);
      for (std::size_t i = 0; i < g.grad_weights.data.size(); ++i)
        weights_grad_.data[i] += g.grad_weights.data[i];
      for (std::size_t i = 0; i < g.grad_bias.size(); ++i)
        bias_grad_[i] += g.grad_bias[i];
      std::copy(g.grad_input.begin(), g.grad_input.end(),
                grad_in.data.begin() + n * sample);
    }
    return grad_in;
  }

  void collect_params(std::vector<ParamRef>& out) override {
    out.push_back(detail::make_ref(name_ + ".weights",
                                   {params_.weights.rows, params_.weights.cols},
                                   params_.weights.data, weights_grad_.data));
    out.push_back(detail::make_ref(name_ + ".bias", {params_.bias.size()},
                                   params_.bias, bias_grad_));
  }

  const FefaParams& params() const { return params_; }
  ScaleMode scale_mode() const { return mode_; }
  const std::string& name() const { return name_; }

  // Per-sample cache of the most recent training-mode forward.
  const FefaCache& cache(std::size_t n) const {
    if (n >= caches_.size())
      throw std::logic_error(name_ + ": no cached forward for sample");
    return caches_[n];
  }

 private:
  std::string name_;
  FefaParams params_;
  ScaleMode mode_;
  Matrix weights_grad_;
  Vec bias_grad_;
  std::vector<FefaCache> caches_;
};

// conv-relu-conv (+ optional SE) with identity or 1x1-projection shortcut,
// ReLU after the add.
class ResidualBlockLayer final : public Layer {
 public:
  ResidualBlockLayer(const std::string& name, std::size_t c_in, std::size_t c_out,
                     int stride, bool with_se, Rng& rng)
      : name_(name),
        conv1_(name + ".conv1", c_in, c_out, 3, stride, rng),
        conv2_(name + ".conv2", c_out, c_out, 3, 1, rng),
        with_se_(with_se) {
    if (c_in != c_out || stride != 1)
      proj_ = std::make_unique<ConvLayer>(name + ".proj", c_in, c_out, 1, stride, rng);
    if (with_se_) {
      constexpr std::size_t kReduction = 4;
      if (c_out % kReduction != 0)
        throw std::invalid_argument(name + ": channels not divisible by SE reduction");
      const std::size_t hidden = c_out / kReduction;
      se_.w1 = Matrix(hidden, c_out);
      se_.b1.assign(hidden, 0.0);
      se_.w2 = Matrix(c_out, hidden);
      se_.b2.assign(c_out, 0.0);
      detail::he_uniform(rng, se_.w1.data.data(), se_.w1.data.size(), c_out);
      detail::he_uniform(rng, se_.w2.data.data(), se_.w2.data.size(), hidden);
      se_grads_.w1 = Matrix(hidden, c_out);
      se_grads_.b1.assign(hidden, 0.0);
      se_grads_.w2 = Matrix(c_out, hidden);
      se_grads_.b2.assign(c_out, 0.0);
    }
  }

  Tensor4 forward(const Tensor4& x, bool training) override {
    Tensor4 y1 = conv1_.forward(x, training);
    if (training) y1_ = y1;
    Tensor4 a1 = relu_forward(y1);
    Tensor4 z = conv2_.forward(a1, training);
    if (with_se_) {
      SeCache scratch;
      z = se_block_forward(z, se_, training ? se_cache_ : scratch);
    }
    Tensor4 shortcut = proj_ ? proj_->forward(x, training) : x;
    Tensor4 sum = residual_add(z, shortcut);
    if (training) sum_ = sum;
    return relu_forward(sum);
  }

  Tensor4 backward(const Tensor4& grad_out) override {
    Tensor4 grad_sum = relu_backward(sum_, grad_out);
    Tensor4 grad_z = grad_sum;
    if (with_se_) {
      // Accumulate into the stable gradient buffers that collect_params
      // already handed out.
      SeParams local;
      grad_z = se_block_backward(se_, se_cache_, grad_z, local);
      for (std::size_t i = 0; i < local.w1.data.size(); ++i)
        se_grads_.w1.data[i] += local.w1.data[i];
      for (std::size_t i = 0; i < local.b1.size(); ++i)
        se_grads_.b1[i] += local.b1[i];
      for (std::size_t i = 0; i < local.w2.data.size(); ++i)
        se_grads_.w2.data[i] += local.w2.data[i];
      for (std::size_t i = 0; i < local.b2.size(); ++i)
        se_grads_.b2[i] += local.b2[i];
    }
    Tensor4 grad_a1 = conv2_.backward(grad_z);
    Tensor4 grad_y1 = relu_backward(y1_, grad_a1);
    Tensor4 grad_x = conv1_.backward(grad_y1);
    Tensor4 grad_short = proj_ ? proj_->backward(grad_sum) : grad_sum;
    for (std::size_t i = 0; i < grad_x.data.size(); ++i)
      grad_x.data[i] += grad_short.data[i];
    return grad_x;
  }

  void collect_params(std::vector<ParamRef>& out) override {
    conv1_.collect_params(out);
    conv2_.collect_params(out);
    if (proj_) proj_->collect_params(out);
    if (with_se_) {
      out.push_back(detail::make_ref(name_ + ".se.w1", {se_.w1.rows, se_.w1.cols},
                                     se_.w1.data, se_grads_.w1.data));
      out.push_back(detail::make_ref(name_ + ".se.b1", {se_.b1.size()}, se_.b1,
                                     se_grads_.b1));
      out.push_back(detail::make_ref(name_ + ".se.w2", {se_.w2.rows, se_.w2.cols},
                                     se_.w2.data, se_grads_.w2.data));
      out.push_back(detail::make_ref(name_ + ".se.b2", {se_.b2.size()}, se_.b2,
                                     se_grads_.b2));
    }
  }

 private:
  std::string name_;
  ConvLayer conv1_;
  ConvLayer conv2_;
  std::unique_ptr<ConvLayer> proj_;
  bool with_se_;
  SeParams se_;
  SeParams se_grads_;
  SeCache se_cache_;
  Tensor4 y1_;
  Tensor4 sum_;
};

// ---------------------------------------------------------------------------
// Model: a layer stack with the classification head. The embedding is the
// affine output of the penultimate dense layer.

class Model {
 public:
  ModelSpec spec;
  std::vector<std::unique_ptr<Layer>> layers;
  int embed_layer = -1;

  // Returns logits as an N x n_classes matrix; optionally captures the
  // embedding (N x embedding_dim).
  Matrix forward(const Tensor4& input, bool training, Matrix* embedding = nullptr) {
    Tensor4 x = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i]->forward(x, training);
      if (embedding != nullptr && static_cast<int>(i) == embed_layer) {
        *embedding = Matrix(x.n, x.c);
        std::copy(x.data.begin(), x.data.end(), embedding->data.begin());
      }
    }
    Matrix logits(x.n, x.c);
    std::copy(x.data.begin(), x.data.end(), logits.data.begin());
    return logits;
  }

  void backward(const Matrix& grad_logits) {
    Tensor4 g(grad_logits.rows, grad_logits.cols, 1, 1);
    std::copy(grad_logits.data.begin(), grad_logits.data.end(), g.data.begin());
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) g = (*it)->backward(g);
  }

  std::vector<ParamRef> params() {
    std::vector<ParamRef> out;
    for (auto& layer : layers) layer->collect_params(out);
    return out;
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for (const auto& p : params()) n += p.size;
    return n;
  }

  void zero_grads() {
    for (auto& p : params()) std::fill(p.grad, p.grad + p.size, 0.0);
  }

  std::vector<const FefaLayer*> fefa_layers() const {
    std::vector<const FefaLayer*> out;
    for (const auto& layer : layers)
      if (const auto* f = dynamic_cast<const FefaLayer*>(layer.get()))
        out.push_back(f);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Builders

// Heights (frequency-bin counts) at which FEFA placements sit for a spec:
// the input itself, and for multi mode also every point where the spatial
// dimensions change.
inline std::vector<std::size_t> fefa_placement_bins(const ModelSpec& spec) {
  spec.validate();
  if (spec.fefa == FefaMode::none) return {};
  std::vector<std::size_t> bins{static_cast<std::size_t>(spec.input_bins)};
  if (spec.fefa == FefaMode::single) return bins;
  std::size_t h = static_cast<std::size_t>(spec.input_bins);
  switch (spec.backbone) {
    case Backbone::vgg_m:
      for (int stage = 0; stage < 3; ++stage) {
        h /= 2;  // maxpool
        bins.push_back(h);
      }
      break;
    case Backbone::resnet_m:
    case Backbone::seresnet_m:
      for (int stage = 0; stage < 2; ++stage) {
        h = (h + 1) / 2;  // stride-2 convolution
        bins.push_back(h);
      }
      break;
  }
  return bins;
}

inline Model build_model(const ModelSpec& spec) {
  spec.validate();
  Model model;
  model.spec = spec;
  Rng rng(spec.seed);

  const auto placements = fefa_placement_bins(spec);
  std::size_t placement_idx = 0;
  auto maybe_fefa = [&](const std::string& name, std::size_t expect_bins) {
    if (placement_idx < placements.size() && placements[placement_idx] == expect_bins) {
      model.layers.push_back(std::make_unique<FefaLayer>(
          name, expect_bins, spec.fefa_local_window, spec.scale_mode));
      ++placement_idx;
    }
  };

  std::size_t h = static_cast<std::size_t>(spec.input_bins);
  maybe_fefa("fefa.input", h);

  const std::size_t widths[3] = {8, 16, 32};
  switch (spec.backbone) {
    case Backbone::vgg_m: {
      std::size_t c_in = 1;
      for (int s = 0; s < 3; ++s) {
        const std::string name = "stage" + std::to_string(s + 1);
        model.layers.push_back(
            std::make_unique<ConvLayer>(name + ".conv", c_in, widths[s], 3, 1, rng));
        model.layers.push_back(std::make_unique<ReluLayer>());
        model.layers.push_back(std::make_unique<MaxPoolLayer>());
        c_in = widths[s];
        h /= 2;
        maybe_fefa("fefa." + name, h);
      }
      break;
    }
    case Backbone::resnet_m:
    case Backbone::seresnet_m: {
      const bool with_se = spec.backbone == Backbone::seresnet_m;
      model.layers.push_back(std::make_unique<ConvLayer>("stem", 1, widths[0], 3, 1, rng));
      model.layers.push_back(std::make_unique<ReluLayer>());
      model.layers.push_back(std::make_unique<ResidualBlockLayer>(
          "stage1", widths[0], widths[0], 1, with_se, rng));
      for (int s = 1; s < 3; ++s) {
        const std::string name = "stage" + std::to_string(s + 1);
        model.layers.push_back(std::make_unique<ResidualBlockLayer>(
            name, widths[s - 1], widths[s], 2, with_se, rng));
        h = (h + 1) / 2;
        maybe_fefa("fefa." + name, h);
      }
      break;
    }
  }

  model.layers.push_back(std::make_unique<GlobalAvgPoolLayer>());
  model.layers.push_back(std::make_unique<DenseLayer>(
      "head.embed", widths[2], static_cast<std::size_t>(spec.embedding_dim), rng));
  model.embed_layer = static_cast<int>(model.layers.size()) - 1;
  model.layers.push_back(std::make_unique<ReluLayer>());
  model.layers.push_back(std::make_unique<DenseLayer>(
      "head.classify", static_cast<std::size_t>(spec.embedding_dim),
      static_cast<std::size_t>(spec.n_classes), rng));
  return model;
}

}  // namespace fefa
