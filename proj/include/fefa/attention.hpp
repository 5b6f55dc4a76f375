#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fefa/matrix.hpp"
#include "fefa/tensor.hpp"

namespace fefa {

// Per-frequency-bin attention. A squeeze reduces the input to one value per
// bin, a single affine kernel scores the bins, a softmax turns the scores
// into a probability per bin, and the input is re-weighted bin by bin.

enum class ScaleMode { preserve, literal };

// Kernel weights of one placement. Full connectivity stores a bins x bins
// weight matrix; local(w) stores bins x w with each row holding the taps of a
// centered window, clamped at the edges (out-of-range taps stay zero and are
// never touched).
struct FefaParams {
  Matrix weights;
  Vec bias;
  int local_window = 0;  // 0 = full connectivity, otherwise odd window width
  std::string placement_id;

  std::size_t bins_out() const { return bias.size(); }
  bool is_local() const { return local_window > 0; }

  static FefaParams zeros(std::size_t bins, int local_window = 0,
                          std::string placement_id = {}) {
    FefaParams p;
    p.local_window = local_window;
    p.placement_id = std::move(placement_id);
    p.bias.assign(bins, 0.0);
    p.weights = Matrix(bins, local_window > 0
                                 ? static_cast<std::size_t>(local_window)
                                 : bins);
    p.validate();
    return p;
  }

  void validate() const {
    if (bias.empty()) throw std::invalid_argument("FefaParams: bins_out must be >= 1");
    if (local_window < 0 || (local_window > 0 && local_window % 2 == 0))
      throw std::invalid_argument("FefaParams: local window must be odd");
    if (local_window > static_cast<int>(bias.size()))
      throw std::invalid_argument("FefaParams: local window wider than bins");
    const std::size_t conn =
        is_local() ? static_cast<std::size_t>(local_window) : bias.size();
    if (weights.rows != bias.size() || weights.cols != conn)
      throw std::invalid_argument("FefaParams: weight shape mismatch");
    if (!all_finite(weights) || !all_finite(bias))
      throw std::invalid_argument("FefaParams: non-finite parameter");
  }
};

struct AttentionWeights {
  Vec p;
};

// Everything the backward pass needs from one forward call.
struct FefaCache {
  bool tensor_path = false;
  std::size_t channels = 1;  // 1 for the matrix path
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<double> input;  // copy of the forward input, row-major
  Vec squeezed;
  Vec logits;
  Vec p;
  double scale = 1.0;
};

struct FefaGrads {
  std::vector<double> grad_input;  // same layout as the forward input
  Matrix grad_weights;
  Vec grad_bias;
};

// ---------------------------------------------------------------------------
// Stages

// Mean over time: one value per bin.
inline Vec squeeze_time(const Matrix& spec) {
  if (spec.rows == 0 || spec.cols == 0)
    throw std::invalid_argument("squeeze_time: empty input");
  Vec out(spec.rows);
  const double inv = 1.0 / static_cast<double>(spec.cols);
  for (std::size_t i = 0; i < spec.rows; ++i) {
    double s = 0.0;
    const double* r = spec.row(i);
    for (std::size_t t = 0; t < spec.cols; ++t) s += r[t];
    out[i] = s * inv;
  }
  return out;
}

// Mean over channels: collapses C x H x W to H x W.
inline Matrix squeeze_channels(const double* x, std::size_t c, std::size_t h,
                               std::size_t w) {
  if (c == 0 || h == 0 || w == 0)
    throw std::invalid_argument("squeeze_channels: empty input");
  Matrix out(h, w);
  const std::size_t plane = h * w;
  for (std::size_t ic = 0; ic < c; ++ic) {
    const double* src = x + ic * plane;
    for (std::size_t i = 0; i < plane; ++i) out.data[i] += src[i];
  }
  const double inv = 1.0 / static_cast<double>(c);
  for (double& v : out.data) v *= inv;
  return out;
}

inline Matrix squeeze_channels(const Tensor4& fmap) {
  if (fmap.n != 1)
    throw std::invalid_argument("squeeze_channels: expected a single sample");
  return squeeze_channels(fmap.data.data(), fmap.c, fmap.h, fmap.w);
}

// Affine scoring kernel. Full: logits = W * squeezed + bias. Local(w):
// each output sees a centered window of the input, clamped at the edges.
inline Vec kernel_forward(const Vec& squeezed, const FefaParams& params) {
  params.validate();
  const std::size_t bins = params.bins_out();
  if (squeezed.size() != bins)
    throw std::invalid_argument("kernel_forward: dimension mismatch");
  Vec logits(bins);
  if (!params.is_local()) {
    for (std::size_t i = 0; i < bins; ++i)
      logits[i] = dot(params.weights.row(i), squeezed.data(), bins) + params.bias[i];
  } else {
    const int w = params.local_window;
    const int half = w / 2;
    const int n = static_cast<int>(bins);
    for (int i = 0; i < n; ++i) {
      double s = params.bias[static_cast<std::size_t>(i)];
      const double* row = params.weights.row(static_cast<std::size_t>(i));
      for (int k = 0; k < w; ++k) {
        const int j = i - half + k;
        if (j >= 0 && j < n) s += row[k] * squeezed[static_cast<std::size_t>(j)];
      }
      logits[static_cast<std::size_t>(i)] = s;
    }
  }
  return logits;
}

// Max-subtracted softmax in double precision.
inline AttentionWeights softmax(const Vec& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  for (double v : logits)
    if (std::isnan(v)) throw std::invalid_argument("softmax: NaN logit");
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  AttentionWeights out;
  out.p.resize(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.p[i] = std::exp(logits[i] - mx);
    sum += out.p[i];
  }
  for (double& v : out.p) v /= sum;
  return out;
}

inline double scale_constant(ScaleMode mode, std::size_t bins) {
  return mode == ScaleMode::preserve ? static_cast<double>(bins) : 1.0;
}

// out[i,t] = c * p_i * spec[i,t]. preserve mode picks c = bins so uniform
// attention is an exact identity.
inline Matrix apply_attention(const Matrix& spec, const AttentionWeights& attn,
                              ScaleMode mode) {
  if (attn.p.size() != spec.rows)
    throw std::invalid_argument("apply_attention: dimension mismatch");
  const double c = scale_constant(mode, spec.rows);
  Matrix out(spec.rows, spec.cols);
  for (std::size_t i = 0; i < spec.rows; ++i) {
    const double g = c * attn.p[i];
    const double* src = spec.row(i);
    double* dst = out.row(i);
    for (std::size_t t = 0; t < spec.cols; ++t) dst[t] = g * src[t];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward

// Matrix path: squeeze over time, score, softmax, re-weight rows.
inline std::pair<Matrix, FefaCache> fefa_forward(const Matrix& spec,
                                                 const FefaParams& params,
                                                 ScaleMode mode) {
  if (params.bins_out() != spec.rows)
    throw std::invalid_argument("fefa_forward: params sized for " +
                                std::to_string(params.bins_out()) + " bins, input has " +
                                std::to_string(spec.rows));
  FefaCache cache;
  cache.tensor_path = false;
  cache.channels = 1;
  cache.bins = spec.rows;
  cache.frames = spec.cols;
  cache.input = spec.data;
  cache.squeezed = squeeze_time(spec);
  cache.logits = kernel_forward(cache.squeezed, params);
  cache.p = softmax(cache.logits).p;
  cache.scale = scale_constant(mode, spec.rows);

  AttentionWeights attn{cache.p};
  return {apply_attention(spec, attn, mode), std::move(cache)};
}

// Tensor path: squeeze channels, then time, score the H bins, re-weight
// every channel's rows by the same p.
inline void fefa_forward_chw(const double* x, std::size_t c, std::size_t h,
                             std::size_t w, const FefaParams& params,
                             ScaleMode mode, double* out, FefaCache& cache) {
  if (params.bins_out() != h)
    throw std::invalid_argument("fefa_forward: params/bins mismatch on tensor path");
  cache.tensor_path = true;
  cache.channels = c;
  cache.bins = h;
  cache.frames = w;
  cache.input.assign(x, x + c * h * w);
  cache.squeezed = squeeze_time(squeeze_channels(x, c, h, w));
  cache.logits = kernel_forward(cache.squeezed, params);
  cache.p = softmax(cache.logits).p;
  cache.scale = scale_constant(mode, h);

  for (std::size_t ic = 0; ic < c; ++ic) {
    for (std::size_t ih = 0; ih < h; ++ih) {
      const double g = cache.scale * cache.p[ih];
      const double* src = x + (ic * h + ih) * w;
      double* dst = out + (ic * h + ih) * w;
      for (std::size_t iw = 0; iw < w; ++iw) dst[iw] = g * src[iw];
    }
  }
}

inline std::pair<Tensor4, FefaCache> fefa_forward(const Tensor4& input,
                                                  const FefaParams& params,
                                                  ScaleMode mode) {
  if (input.n != 1)
    throw std::invalid_argument("fefa_forward: tensor path expects a single sample");
  Tensor4 out(input.n, input.c, input.h, input.w);
  FefaCache cache;
  fefa_forward_chw(input.data.data(), input.c, input.h, input.w, params, mode,
                   out.data.data(), cache);
  return {std::move(out), std::move(cache)};
}

// ---------------------------------------------------------------------------
// Backward

namespace detail {

// Shared tail of both paths: push the per-bin attention gradient through the
// softmax Jacobian (diag(p) - p p^T), the kernel, and the squeeze.
// Returns grad wrt the squeezed vector; fills grad_weights/grad_bias.
inline Vec fefa_backward_kernel(const Vec& grad_p, const FefaCache& cache,
                                const FefaParams& params, Matrix& grad_weights,
                                Vec& grad_bias) {
  const std::size_t bins = cache.bins;
  double inner = 0.0;
  for (std::size_t i = 0; i < bins; ++i) inner += cache.p[i] * grad_p[i];
  Vec grad_logits(bins);
  for (std::size_t i = 0; i < bins; ++i)
    grad_logits[i] = cache.p[i] * (grad_p[i] - inner);

  grad_bias = grad_logits;
  grad_weights = Matrix(params.weights.rows, params.weights.cols);
  Vec grad_squeezed(bins, 0.0);
  if (!params.is_local()) {
    for (std::size_t i = 0; i < bins; ++i) {
      const double gz = grad_logits[i];
      const double* wrow = params.weights.row(i);
      double* gw = grad_weights.row(i);
      for (std::size_t j = 0; j < bins; ++j) {
        gw[j] = gz * cache.squeezed[j];
        grad_squeezed[j] += wrow[j] * gz;
      }
    }
  } else {
    const int w = params.local_window;
    const int half = w / 2;
    const int n = static_cast<int>(bins);
    for (int i = 0; i < n; ++i) {
      const double gz = grad_logits[static_cast<std::size_t>(i)];
      const double* wrow = params.weights.row(static_cast<std::size_t>(i));
      double* gw = grad_weights.row(static_cast<std::size_t>(i));
      for (int k = 0; k < w; ++k) {
        const int j = i - half + k;
        if (j < 0 || j >= n) continue;
        gw[k] = gz * cache.squeezed[static_cast<std::size_t>(j)];
        grad_squeezed[static_cast<std::size_t>(j)] += wrow[k] * gz;
      }
    }
  }
  return grad_squeezed;
}

}  // namespace detail

// Exact reverse-mode gradients of L = sum(upstream .* output) wrt the input,
// the kernel weights, and the bias.
inline FefaGrads fefa_backward(const std::vector<double>& upstream,
                               const FefaCache& cache, const FefaParams& params) {
  const std::size_t c = cache.channels;
  const std::size_t bins = cache.bins;
  const std::size_t frames = cache.frames;
  if (upstream.size() != c * bins * frames || cache.input.size() != upstream.size())
    throw std::invalid_argument("fefa_backward: cache/shape mismatch");
  if (params.bins_out() != bins)
    throw std::invalid_argument("fefa_backward: params mismatch with cache");

  // dL/dp_i = scale * sum over (channel, frame) of upstream .* input in bin i.
  Vec grad_p(bins, 0.0);
  for (std::size_t ic = 0; ic < c; ++ic) {
    for (std::size_t i = 0; i < bins; ++i) {
      const double* g = upstream.data() + (ic * bins + i) * frames;
      const double* x = cache.input.data() + (ic * bins + i) * frames;
      grad_p[i] += cache.scale * dot(g, x, frames);
    }
  }

  FefaGrads out;
  const Vec grad_squeezed =
      detail::fefa_backward_kernel(grad_p, cache, params, out.grad_weights,
                                   out.grad_bias);

  // Direct path through the re-weighting plus the averaged squeeze path.
  out.grad_input.resize(upstream.size());
  const double inv_ct = 1.0 / static_cast<double>(c * frames);
  for (std::size_t ic = 0; ic < c; ++ic) {
    for (std::size_t i = 0; i < bins; ++i) {
      const double direct = cache.scale * cache.p[i];
      const double squeeze_term = grad_squeezed[i] * inv_ct;
      const double* g = upstream.data() + (ic * bins + i) * frames;
      double* gi = out.grad_input.data() + (ic * bins + i) * frames;
      for (std::size_t t = 0; t < frames; ++t)
        gi[t] = direct * g[t] + squeeze_term;
    }
  }
  return out;
}

inline FefaGrads fefa_backward(const Matrix& upstream, const FefaCache& cache,
                               const FefaParams& params) {
  if (cache.tensor_path || upstream.rows != cache.bins || upstream.cols != cache.frames)
    throw std::invalid_argument("fefa_backward: upstream shape mismatch");
  return fefa_backward(upstream.data, cache, params);
}

// ---------------------------------------------------------------------------
// Reference memory-query attention baseline

struct BaselineAttnParams {
  Matrix w_key;  // key_dim x query_dim
  std::vector<std::pair<Vec, Vec>> memory;  // (key, value) tuples
};

// score_i = key_i . (W * query); p = softmax(scores); out = sum p_i value_i.
inline Vec baseline_soft_attention(const BaselineAttnParams& params, const Vec& query) {
  if (params.memory.empty())
    throw std::invalid_argument("baseline_soft_attention: empty memory");
  if (params.w_key.cols != query.size())
    throw std::invalid_argument("baseline_soft_attention: query dimension mismatch");
  Vec projected(params.w_key.rows, 0.0);
  for (std::size_t i = 0; i < params.w_key.rows; ++i)
    projected[i] = dot(params.w_key.row(i), query.data(), query.size());

  Vec scores(params.memory.size());
  for (std::size_t i = 0; i < params.memory.size(); ++i) {
    const Vec& key = params.memory[i].first;
    if (key.size() != projected.size())
      throw std::invalid_argument("baseline_soft_attention: key dimension mismatch");
    scores[i] = dot(key.data(), projected.data(), key.size());
  }
  const Vec p = softmax(scores).p;

  const std::size_t value_dim = params.memory[0].second.size();
  Vec out(value_dim, 0.0);
  for (std::size_t i = 0; i < params.memory.size(); ++i) {
    const Vec& value = params.memory[i].second;
    if (value.size() != value_dim)
      throw std::invalid_argument("baseline_soft_attention: value dimension mismatch");
    for (std::size_t d = 0; d < value_dim; ++d) out[d] += p[i] * value[d];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Complexity counters

// Number of instantiated parameters. Local connectivity counts only the
// taps that survive edge clamping.
inline std::size_t param_count(const FefaParams& params) {
  const std::size_t bins = params.bins_out();
  if (!params.is_local()) return bins * bins + bins;
  const int w = params.local_window;
  const int half = w / 2;
  const int n = static_cast<int>(bins);
  std::size_t taps = 0;
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    taps += static_cast<std::size_t>(hi - lo + 1);
  }
  return taps + bins;
}

// Multiply-accumulate count of one forward pass, by stage. Each softmax exp
// counts as one.
struct MacCount {
  std::size_t squeeze_channels = 0;
  std::size_t squeeze_time = 0;
  std::size_t kernel = 0;
  std::size_t softmax = 0;
  std::size_t apply = 0;
  std::size_t total() const {
    return squeeze_channels + squeeze_time + kernel + softmax + apply;
  }
};

inline MacCount count_macs(const FefaParams& params, std::size_t bins,
                           std::size_t frames, std::size_t channels = 1) {
  if (params.bins_out() != bins)
    throw std::invalid_argument("count_macs: params/bins mismatch");
  MacCount m;
  m.squeeze_channels = channels > 1 ? channels * bins * frames : 0;
  m.squeeze_time = bins * frames;
  m.kernel = params.is_local() ? param_count(params) - bins : bins * bins;
  m.softmax = bins;
  m.apply = channels * bins * frames;
  return m;
}

}  // namespace fefa
