#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fefa/attention.hpp"
#include "fefa/layers.hpp"
#include "fefa/model.hpp"
#include "fefa/rng.hpp"

namespace fefa {

// Central finite-difference checks of every analytic backward. The checks
// evaluate forward passes only, so they stay independent of the gradient
// code they verify.

constexpr double kFdEpsilon = 1e-5;

inline double grad_rel_err(double analytic, double numeric) {
  const double scale = std::max(1.0, std::abs(analytic) + std::abs(numeric));
  return std::abs(analytic - numeric) / scale;
}

// Central difference of a scalar function along one coordinate.
inline double central_diff(const std::function<double()>& loss, double& x,
                           double eps = kFdEpsilon) {
  const double saved = x;
  x = saved + eps;
  const double hi = loss();
  x = saved - eps;
  const double lo = loss();
  x = saved;
  return (hi - lo) / (2.0 * eps);
}

// Compares an analytic gradient against finite differences entry by entry.
inline double max_err_over(const std::function<double()>& loss, double* data,
                           const double* analytic, std::size_t size) {
  double worst = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double fd = central_diff(loss, data[i]);
    worst = std::max(worst, grad_rel_err(analytic[i], fd));
  }
  return worst;
}

namespace gradcheck {

inline void fill_uniform(Rng& rng, std::vector<double>& v, double lo = -1.0,
                         double hi = 1.0) {
  for (double& x : v) x = rng.uniform(lo, hi);
}

inline double dot_all(const std::vector<double>& a, const std::vector<double>& b) {
  return dot(a.data(), b.data(), a.size());
}

inline double check_conv(Rng& rng, int ksize, int stride) {
  const std::size_t n = 1 + rng.below(2), cin = 1 + rng.below(3),
                    cout = 1 + rng.below(3), h = 3 + rng.below(4),
                    w = 3 + rng.below(4);
  Tensor4 input(n, cin, h, w), kernels(cout, cin, ksize, ksize);
  Vec bias(cout);
  fill_uniform(rng, input.data);
  fill_uniform(rng, kernels.data);
  fill_uniform(rng, bias);
  Tensor4 probe = conv2d_forward(input, kernels, bias, stride);
  Tensor4 upstream(probe.n, probe.c, probe.h, probe.w);
  fill_uniform(rng, upstream.data);

  auto loss = [&]() {
    return dot_all(conv2d_forward(input, kernels, bias, stride).data, upstream.data);
  };
  Tensor4 gi, gk;
  Vec gb;
  conv2d_backward(input, kernels, stride, upstream, gi, gk, gb);

  double worst = max_err_over(loss, input.data.data(), gi.data.data(), input.size());
  worst = std::max(worst, max_err_over(loss, kernels.data.data(), gk.data.data(),
                                       kernels.size()));
  worst = std::max(worst, max_err_over(loss, bias.data(), gb.data(), bias.size()));
  return worst;
}

inline double check_relu(Rng& rng) {
  Tensor4 input(1 + rng.below(2), 1 + rng.below(3), 2 + rng.below(4), 2 + rng.below(4));
  fill_uniform(rng, input.data);
  Tensor4 upstream(input.n, input.c, input.h, input.w);
  fill_uniform(rng, upstream.data);
  auto loss = [&]() { return dot_all(relu_forward(input).data, upstream.data); };
  const Tensor4 grad = relu_backward(input, upstream);
  return max_err_over(loss, input.data.data(), grad.data.data(), input.size());
}

inline double check_maxpool(Rng& rng) {
  Tensor4 input(1 + rng.below(2), 1 + rng.below(2), 4 + rng.below(3), 4 + rng.below(3));
  fill_uniform(rng, input.data, -10.0, 10.0);
  std::vector<std::size_t> argmax;
  Tensor4 probe = maxpool2x2_forward(input, argmax);
  Tensor4 upstream(probe.n, probe.c, probe.h, probe.w);
  fill_uniform(rng, upstream.data);
  auto loss = [&]() {
    std::vector<std::size_t> am;
    return dot_all(maxpool2x2_forward(input, am).data, upstream.data);
  };
  const Tensor4 grad = maxpool2x2_backward(input, argmax, upstream);
  return max_err_over(loss, input.data.data(), grad.data.data(), input.size());
}

inline double check_gap(Rng& rng) {
  Tensor4 input(1 + rng.below(2), 1 + rng.below(3), 2 + rng.below(4), 2 + rng.below(4));
  fill_uniform(rng, input.data);
  Tensor4 upstream(input.n, input.c, 1, 1);
  fill_uniform(rng, upstream.data);
  auto loss = [&]() { return dot_all(global_avg_pool_forward(input).data, upstream.data); };
  const Tensor4 grad = global_avg_pool_backward(input, upstream);
  return max_err_over(loss, input.data.data(), grad.data.data(), input.size());
}

inline double check_dense(Rng& rng) {
  const std::size_t n = 1 + rng.below(3), din = 2 + rng.below(5), dout = 1 + rng.below(5);
  Tensor4 input(n, din, 1, 1);
  Matrix weights(dout, din);
  Vec bias(dout);
  fill_uniform(rng, input.data);
  fill_uniform(rng, weights.data);
  fill_uniform(rng, bias);
  Tensor4 upstream(n, dout, 1, 1);
  fill_uniform(rng, upstream.data);
  auto loss = [&]() { return dot_all(dense_forward(input, weights, bias).data, upstream.data); };
  Tensor4 gi;
  Matrix gw;
  Vec gb;
  dense_backward(input, weights, upstream, gi, gw, gb);
  double worst = max_err_over(loss, input.data.data(), gi.data.data(), input.size());
  worst = std::max(worst, max_err_over(loss, weights.data.data(), gw.data.data(),
                                       weights.data.size()));
  worst = std::max(worst, max_err_over(loss, bias.data(), gb.data(), bias.size()));
  return worst;
}

inline double check_residual_add(Rng& rng) {
  Tensor4 a(1 + rng.below(2), 1 + rng.below(3), 2 + rng.below(3), 2 + rng.below(3));
  Tensor4 b(a.n, a.c, a.h, a.w);
  fill_uniform(rng, a.data);
  fill_uniform(rng, b.data);
  Tensor4 upstream(a.n, a.c, a.h, a.w);
  fill_uniform(rng, upstream.data);
  auto loss = [&]() { return dot_all(residual_add(a, b).data, upstream.data); };
  // d(a+b)/da = d(a+b)/db = identity, so upstream itself is the gradient.
  double worst = max_err_over(loss, a.data.data(), upstream.data.data(), a.size());
  worst = std::max(worst, max_err_over(loss, b.data.data(), upstream.data.data(), b.size()));
  return worst;
}

inline double check_se(Rng& rng) {
  const std::size_t c = 4 * (1 + rng.below(2));  // divisible by the reduction
  Tensor4 input(1 + rng.below(2), c, 2 + rng.below(3), 2 + rng.below(3));
  fill_uniform(rng, input.data);
  SeParams params;
  params.w1 = Matrix(c / 4, c);
  params.b1.assign(c / 4, 0.0);
  params.w2 = Matrix(c, c / 4);
  params.b2.assign(c, 0.0);
  fill_uniform(rng, params.w1.data);
  fill_uniform(rng, params.b1);
  fill_uniform(rng, params.w2.data);
  fill_uniform(rng, params.b2);
  Tensor4 upstream(input.n, input.c, input.h, input.w);
  fill_uniform(rng, upstream.data);

  auto loss = [&]() {
    SeCache cache;
    return dot_all(se_block_forward(input, params, cache).data, upstream.data);
  };
  SeCache cache;
  se_block_forward(input, params, cache);
  SeParams grads;
  const Tensor4 gi = se_block_backward(params, cache, upstream, grads);

  double worst = max_err_over(loss, input.data.data(), gi.data.data(), input.size());
  worst = std::max(worst, max_err_over(loss, params.w1.data.data(),
                                       grads.w1.data.data(), params.w1.data.size()));
  worst = std::max(worst, max_err_over(loss, params.b1.data(), grads.b1.data(),
                                       params.b1.size()));
  worst = std::max(worst, max_err_over(loss, params.w2.data.data(),
                                       grads.w2.data.data(), params.w2.data.size()));
  worst = std::max(worst, max_err_over(loss, params.b2.data(), grads.b2.data(),
                                       params.b2.size()));
  return worst;
}

inline double check_softmax_ce(Rng& rng) {
  const std::size_t n = 2 + rng.below(3), k = 2 + rng.below(4);
  Matrix logits(n, k);
  fill_uniform(rng, logits.data, -2.0, 2.0);
  std::vector<int> labels(n);
  for (auto& l : labels) l = static_cast<int>(rng.below(k));
  auto loss = [&]() {
    Matrix g;
    return softmax_cross_entropy(logits, labels, g);
  };
  Matrix grad;
  softmax_cross_entropy(logits, labels, grad);
  return max_err_over(loss, logits.data.data(), grad.data.data(), logits.data.size());
}

inline double check_fefa(Rng& rng, bool tensor_path, int local_window,
                         ScaleMode mode) {
  const std::size_t bins = 4 + rng.below(6);
  const std::size_t frames = 2 + rng.below(5);
  const std::size_t channels = tensor_path ? 2 + rng.below(2) : 1;
  FefaParams params = FefaParams::zeros(bins, local_window);
  fill_uniform(rng, params.weights.data, -0.5, 0.5);
  fill_uniform(rng, params.bias, -0.5, 0.5);
  // Local connectivity: clear the structurally absent edge taps.
  if (params.is_local()) {
    const int half = local_window / 2;
    for (int i = 0; i < static_cast<int>(bins); ++i)
      for (int k = 0; k < local_window; ++k) {
        const int j = i - half + k;
        if (j < 0 || j >= static_cast<int>(bins))
          params.weights.at(static_cast<std::size_t>(i), static_cast<std::size_t>(k)) = 0.0;
      }
  }

  std::vector<double> input(channels * bins * frames);
  fill_uniform(rng, input, 0.0, 2.0);
  std::vector<double> upstream(input.size());
  fill_uniform(rng, upstream);

  auto loss = [&]() {
    if (tensor_path) {
      std::vector<double> out(input.size());
      FefaCache cache;
      fefa_forward_chw(input.data(), channels, bins, frames, params, mode,
                       out.data(), cache);
      return dot_all(out, upstream);
    }
    Matrix m(bins, frames);
    m.data = input;
    return dot_all(fefa_forward(m, params, mode).first.data, upstream);
  };

  FefaCache cache;
  if (tensor_path) {
    std::vector<double> out(input.size());
    fefa_forward_chw(input.data(), channels, bins, frames, params, mode,
                     out.data(), cache);
  } else {
    Matrix m(bins, frames);
    m.data = input;
    cache = fefa_forward(m, params, mode).second;
  }
  const FefaGrads grads = fefa_backward(upstream, cache, params);

  double worst = max_err_over(loss, input.data(), grads.grad_input.data(), input.size());
  worst = std::max(worst, max_err_over(loss, params.weights.data.data(),
                                       grads.grad_weights.data.data(),
                                       params.weights.data.size()));
  worst = std::max(worst, max_err_over(loss, params.bias.data(),
                                       grads.grad_bias.data(), params.bias.size()));
  return worst;
}

// End-to-end: analytic parameter gradients of the cross-entropy loss versus
// finite differences on a sample of entries from every parameter tensor.
inline double check_model(Rng& rng, Backbone backbone, FefaMode mode,
                          std::size_t entries_per_tensor = 3) {
  ModelSpec spec;
  spec.backbone = backbone;
  spec.fefa = mode;
  spec.n_classes = 3;
  spec.embedding_dim = 6;
  spec.input_bins = 16;
  spec.seed = rng.next_u64();
  Model model = build_model(spec);

  Tensor4 input(2, 1, 16, 12);
  fill_uniform(rng, input.data, 0.0, 2.0);
  std::vector<int> labels{static_cast<int>(rng.below(3)), static_cast<int>(rng.below(3))};

  // Non-zero attention weights so the check runs at a generic point.
  auto refs = model.params();
  for (auto& r : refs)
    if (r.name.rfind("fefa.", 0) == 0)
      for (std::size_t i = 0; i < r.size; ++i) r.data[i] = rng.uniform(-0.2, 0.2);

  auto loss = [&]() {
    Matrix grad;
    return softmax_cross_entropy(model.forward(input, false), labels, grad);
  };

  model.zero_grads();
  Matrix grad_logits;
  softmax_cross_entropy(model.forward(input, true), labels, grad_logits);
  model.backward(grad_logits);

  double worst = 0.0;
  for (auto& r : refs) {
    for (std::size_t k = 0; k < std::min(entries_per_tensor, r.size); ++k) {
      const std::size_t i = r.size <= entries_per_tensor ? k : rng.below(r.size);
      const double fd = central_diff(loss, r.data[i]);
      worst = std::max(worst, grad_rel_err(r.grad[i], fd));
    }
  }
  return worst;
}

}  // namespace gradcheck

struct GradCheckReport {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 1e-5;
  std::size_t instances = 0;
  bool pass() const { return max_rel_err <= tolerance; }
};

// Runs every layer/op check over `instances` random instances each, plus the
// end-to-end model checks at the looser end-to-end tolerance.
inline std::vector<GradCheckReport> run_gradient_suite(std::uint64_t seed,
                                                       std::size_t instances = 10) {
  using namespace gradcheck;
  std::vector<GradCheckReport> reports;
  auto run = [&](const std::string& name, double tol, auto&& fn) {
    Rng rng(mix_seed(seed, fnv1a64(name.data(), name.size())));
    GradCheckReport r;
    r.name = name;
    r.tolerance = tol;
    r.instances = instances;
    for (std::size_t i = 0; i < instances; ++i)
      r.max_rel_err = std::max(r.max_rel_err, fn(rng));
    reports.push_back(r);
  };

  run("conv3x3_stride1", 1e-5, [](Rng& r) { return check_conv(r, 3, 1); });
  run("conv3x3_stride2", 1e-5, [](Rng& r) { return check_conv(r, 3, 2); });
  run("conv1x1_stride1", 1e-5, [](Rng& r) { return check_conv(r, 1, 1); });
  run("conv1x1_stride2", 1e-5, [](Rng& r) { return check_conv(r, 1, 2); });
  run("relu", 1e-5, [](Rng& r) { return check_relu(r); });
  run("maxpool2x2", 1e-5, [](Rng& r) { return check_maxpool(r); });
  run("global_avg_pool", 1e-5, [](Rng& r) { return check_gap(r); });
  run("dense", 1e-5, [](Rng& r) { return check_dense(r); });
  run("residual_add", 1e-5, [](Rng& r) { return check_residual_add(r); });
  run("se_block", 1e-5, [](Rng& r) { return check_se(r); });
  run("softmax_cross_entropy", 1e-6, [](Rng& r) { return check_softmax_ce(r); });
  run("fefa_matrix_full", 1e-5,
      [](Rng& r) { return check_fefa(r, false, 0, ScaleMode::preserve); });
  run("fefa_matrix_full_literal", 1e-5,
      [](Rng& r) { return check_fefa(r, false, 0, ScaleMode::literal); });
  run("fefa_matrix_local3", 1e-5,
      [](Rng& r) { return check_fefa(r, false, 3, ScaleMode::preserve); });
  run("fefa_tensor_full", 1e-5,
      [](Rng& r) { return check_fefa(r, true, 0, ScaleMode::preserve); });
  run("fefa_tensor_local3", 1e-5,
      [](Rng& r) { return check_fefa(r, true, 3, ScaleMode::preserve); });

  const struct {
    const char* name;
    Backbone backbone;
    FefaMode mode;
  } model_cases[] = {
      {"model_vgg_m", Backbone::vgg_m, FefaMode::none},
      {"model_vgg_m_fefa_single", Backbone::vgg_m, FefaMode::single},
      {"model_vgg_m_fefa_multi", Backbone::vgg_m, FefaMode::multi},
      {"model_resnet_m", Backbone::resnet_m, FefaMode::none},
      {"model_resnet_m_fefa_single", Backbone::resnet_m, FefaMode::single},
      {"model_resnet_m_fefa_multi", Backbone::resnet_m, FefaMode::multi},
      {"model_seresnet_m", Backbone::seresnet_m, FefaMode::none},
      {"model_seresnet_m_fefa_single", Backbone::seresnet_m, FefaMode::single},
      {"model_seresnet_m_fefa_multi", Backbone::seresnet_m, FefaMode::multi},
  };
  for (const auto& c : model_cases)
    run(c.name, 1e-4,
        [&](Rng& r) { return check_model(r, c.backbone, c.mode); });
  return reports;
}

}  // namespace fefa
