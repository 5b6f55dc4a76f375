#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "fefa/matrix.hpp"
#include "fefa/tensor.hpp"

namespace fefa {

// Differentiable layer primitives. Each op is a pure function pair: a
// forward and a backward that produces exact gradients of
// L = sum(upstream .* output). Layout is N x C x H x W throughout.

// ---------------------------------------------------------------------------
// Convolution: square kernels (1x1 or 3x3), zero padding k/2, stride 1 or 2.
// Output spatial size is ceil(dim / stride).

inline void check_conv_args(const Tensor4& input, const Tensor4& kernels,
                            const Vec& bias, int stride) {
  if (kernels.h != kernels.w || (kernels.h != 1 && kernels.h != 3))
    throw std::invalid_argument("conv2d: kernel must be 1x1 or 3x3");
  if (kernels.c != input.c)
    throw std::invalid_argument("conv2d: input channel mismatch");
  if (bias.size() != kernels.n)
    throw std::invalid_argument("conv2d: bias/kernel count mismatch");
  if (stride != 1 && stride != 2)
    throw std::invalid_argument("conv2d: stride must be 1 or 2");
}

namespace detail {

// 3x3 stride-1 correlation of one input plane accumulated into one output
// plane: a single pass with all nine taps. Rows beyond the border read from
// a shared zero row.
inline void stencil3x3_accumulate(const double* iplane, int h, int w,
                                  const double* taps, const double* zero_row,
                                  double* oplane) {
  const double k00 = taps[0], k01 = taps[1], k02 = taps[2];
  const double k10 = taps[3], k11 = taps[4], k12 = taps[5];
  const double k20 = taps[6], k21 = taps[7], k22 = taps[8];
  for (int y = 0; y < h; ++y) {
    const double* r0 = y > 0 ? iplane + (y - 1) * w : zero_row;
    const double* r1 = iplane + y * w;
    const double* r2 = y + 1 < h ? iplane + (y + 1) * w : zero_row;
    double* orow = oplane + y * w;
    orow[0] += k01 * r0[0] + k02 * r0[1] + k11 * r1[0] + k12 * r1[1] +
               k21 * r2[0] + k22 * r2[1];
    for (int x = 1; x < w - 1; ++x) {
      orow[x] += k00 * r0[x - 1] + k01 * r0[x] + k02 * r0[x + 1] +
                 k10 * r1[x - 1] + k11 * r1[x] + k12 * r1[x + 1] +
                 k20 * r2[x - 1] + k21 * r2[x] + k22 * r2[x + 1];
    }
    if (w > 1) {
      const int x = w - 1;
      orow[x] += k00 * r0[x - 1] + k01 * r0[x] + k10 * r1[x - 1] + k11 * r1[x] +
                 k20 * r2[x - 1] + k21 * r2[x];
    }
  }
}

}  // namespace detail

inline Tensor4 conv2d_forward(const Tensor4& input, const Tensor4& kernels,
                              const Vec& bias, int stride) {
  check_conv_args(input, kernels, bias, stride);
  const int k = static_cast<int>(kernels.h);
  const int pad = k / 2;
  const int h = static_cast<int>(input.h), w = static_cast<int>(input.w);
  const int ho = (h + stride - 1) / stride, wo = (w + stride - 1) / stride;

  Tensor4 out(input.n, kernels.n, static_cast<std::size_t>(ho),
              static_cast<std::size_t>(wo));
  const std::vector<double> zero_row(static_cast<std::size_t>(w) + 1, 0.0);
  for (std::size_t n = 0; n < input.n; ++n) {
    for (std::size_t co = 0; co < kernels.n; ++co) {
      double* oplane = out.plane(n, co);
      const double b = bias[co];
      for (int i = 0; i < ho * wo; ++i) oplane[i] = b;
      for (std::size_t ci = 0; ci < input.c; ++ci) {
        const double* iplane = input.plane(n, ci);
        const double* krow = kernels.plane(co, ci);
        if (k == 3 && stride == 1 && w >= 2) {
          detail::stencil3x3_accumulate(iplane, h, w, krow, zero_row.data(), oplane);
          continue;
        }
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const double wt = krow[ky * k + kx];
            const int oy_lo = std::max(0, (pad - ky + stride - 1) / stride);
            const int oy_hi =
                std::min(ho, (h - 1 + pad - ky) >= 0 ? (h - 1 + pad - ky) / stride + 1 : 0);
            const int ox_lo = std::max(0, (pad - kx + stride - 1) / stride);
            const int ox_hi =
                std::min(wo, (w - 1 + pad - kx) >= 0 ? (w - 1 + pad - kx) / stride + 1 : 0);
            for (int oy = oy_lo; oy < oy_hi; ++oy) {
              const int iy = oy * stride + ky - pad;
              const double* irow = iplane + iy * w;
              double* orow = oplane + oy * wo;
              if (stride == 1) {
                const int shift = kx - pad;
                for (int ox = ox_lo; ox < ox_hi; ++ox)
                  orow[ox] += wt * irow[ox + shift];
              } else {
                for (int ox = ox_lo; ox < ox_hi; ++ox)
                  orow[ox] += wt * irow[ox * stride + kx - pad];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

inline void conv2d_backward(const Tensor4& input, const Tensor4& kernels,
                            int stride, const Tensor4& grad_out,
                            Tensor4& grad_input, Tensor4& grad_kernels,
                            Vec& grad_bias) {
  const int k = static_cast<int>(kernels.h);
  const int pad = k / 2;
  const int h = static_cast<int>(input.h), w = static_cast<int>(input.w);
  const int ho = static_cast<int>(grad_out.h), wo = static_cast<int>(grad_out.w);
  if (grad_out.n != input.n || grad_out.c != kernels.n)
    throw std::invalid_argument("conv2d_backward: upstream shape mismatch");

  grad_input = Tensor4(input.n, input.c, input.h, input.w);
  grad_kernels = Tensor4(kernels.n, kernels.c, kernels.h, kernels.w);
  grad_bias.assign(kernels.n, 0.0);

  const std::vector<double> zero_row(static_cast<std::size_t>(wo) + 1, 0.0);
  for (std::size_t n = 0; n < input.n; ++n) {
    for (std::size_t co = 0; co < kernels.n; ++co) {
      const double* gplane = grad_out.plane(n, co);
      double gb = 0.0;
      for (int i = 0; i < ho * wo; ++i) gb += gplane[i];
      grad_bias[co] += gb;
      for (std::size_t ci = 0; ci < input.c; ++ci) {
        const double* iplane = input.plane(n, ci);
        double* giplane = grad_input.plane(n, ci);
        const double* krow = kernels.plane(co, ci);
        double* gkrow = grad_kernels.plane(co, ci);
        if (k == 3 && stride == 1 && w >= 2) {
          double flipped[9];
          for (int i = 0; i < 9; ++i) flipped[i] = krow[8 - i];
          detail::stencil3x3_accumulate(gplane, h, w, flipped, zero_row.data(),
                                        giplane);
          for (int ky = 0; ky < 3; ++ky) {
            const int oy_lo = std::max(0, 1 - ky);
            const int oy_hi = std::min(h, h + 1 - ky);
            for (int kx = 0; kx < 3; ++kx) {
              const int ox_lo = std::max(0, 1 - kx);
              const int ox_hi = std::min(w, w + 1 - kx);
              double acc = 0.0;
              const int shift = kx - 1;
              for (int oy = oy_lo; oy < oy_hi; ++oy) {
                const double* grow = gplane + oy * w;
                const double* irow = iplane + (oy + ky - 1) * w;
                acc += dot(grow + ox_lo, irow + ox_lo + shift,
                           static_cast<std::size_t>(ox_hi - ox_lo));
              }
              gkrow[ky * 3 + kx] += acc;
            }
          }
          continue;
        }
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const double wt = krow[ky * k + kx];
            double gw = 0.0;
            const int oy_lo = std::max(0, (pad - ky + stride - 1) / stride);
            const int oy_hi =
                std::min(ho, (h - 1 + pad - ky) >= 0 ? (h - 1 + pad - ky) / stride + 1 : 0);
            const int ox_lo = std::max(0, (pad - kx + stride - 1) / stride);
            const int ox_hi =
                std::min(wo, (w - 1 + pad - kx) >= 0 ? (w - 1 + pad - kx) / stride + 1 : 0);
            for (int oy = oy_lo; oy < oy_hi; ++oy) {
              const int iy = oy * stride + ky - pad;
              const double* irow = iplane + iy * w;
              double* girow = giplane + iy * w;
              const double* grow = gplane + oy * wo;
              if (stride == 1) {
                const int shift = kx - pad;
                gw += dot(grow + ox_lo, irow + ox_lo + shift,
                          static_cast<std::size_t>(ox_hi - ox_lo));
                for (int ox = ox_lo; ox < ox_hi; ++ox)
                  girow[ox + shift] += wt * grow[ox];
              } else {
                for (int ox = ox_lo; ox < ox_hi; ++ox) {
                  const int ix = ox * stride + kx - pad;
                  gw += grow[ox] * irow[ix];
                  girow[ix] += wt * grow[ox];
                }
              }
            }
            gkrow[ky * k + kx] += gw;
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// ReLU

inline Tensor4 relu_forward(const Tensor4& input) {
  Tensor4 out = input;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

inline Tensor4 relu_backward(const Tensor4& input, const Tensor4& grad_out) {
  if (!input.same_shape(grad_out))
    throw std::invalid_argument("relu_backward: shape mismatch");
  Tensor4 grad = grad_out;
  for (std::size_t i = 0; i < grad.data.size(); ++i)
    if (input.data[i] <= 0.0) grad.data[i] = 0.0;
  return grad;
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2. Trailing odd rows/columns are dropped; ties go
// to the first element in row-major order so backward routing is stable.

inline Tensor4 maxpool2x2_forward(const Tensor4& input,
                                  std::vector<std::size_t>& argmax) {
  if (input.h < 2 || input.w < 2)
    throw std::invalid_argument("maxpool2x2: input smaller than the window");
  const std::size_t ho = input.h / 2, wo = input.w / 2;
  Tensor4 out(input.n, input.c, ho, wo);
  argmax.assign(out.size(), 0);
  std::size_t oi = 0;
  for (std::size_t n = 0; n < input.n; ++n) {
    for (std::size_t c = 0; c < input.c; ++c) {
      const double* plane = input.plane(n, c);
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox, ++oi) {
          const std::size_t base = (2 * oy) * input.w + 2 * ox;
          const std::size_t cand[4] = {base, base + 1, base + input.w,
                                       base + input.w + 1};
          std::size_t best = cand[0];
          double bv = plane[cand[0]];
          for (int j = 1; j < 4; ++j) {
            if (plane[cand[j]] > bv) {
              bv = plane[cand[j]];
              best = cand[j];
            }
          }
          out.data[oi] = bv;
          argmax[oi] = (n * input.c + c) * input.h * input.w + best;
        }
      }
    }
  }
  return out;
}

inline Tensor4 maxpool2x2_backward(const Tensor4& input,
                                   const std::vector<std::size_t>& argmax,
                                   const Tensor4& grad_out) {
  Tensor4 grad(input.n, input.c, input.h, input.w);
  if (argmax.size() != grad_out.size())
    throw std::invalid_argument("maxpool2x2_backward: cache mismatch");
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    grad.data[argmax[i]] += grad_out.data[i];
  return grad;
}

// ---------------------------------------------------------------------------
// Global average pool: N x C x H x W -> N x C x 1 x 1.

inline Tensor4 global_avg_pool_forward(const Tensor4& input) {
  Tensor4 out(input.n, input.c, 1, 1);
  const double inv = 1.0 / static_cast<double>(input.h * input.w);
  for (std::size_t n = 0; n < input.n; ++n) {
    for (std::size_t c = 0; c < input.c; ++c) {
      const double* plane = input.plane(n, c);
      double s = 0.0;
      for (std::size_t i = 0; i < input.h * input.w; ++i) s += plane[i];
      out.at(n, c, 0, 0) = s * inv;
    }
  }
  return out;
}

inline Tensor4 global_avg_pool_backward(const Tensor4& input,
                                        const Tensor4& grad_out) {
  if (grad_out.n != input.n || grad_out.c != input.c || grad_out.h != 1 ||
      grad_out.w != 1)
    throw std::invalid_argument("global_avg_pool_backward: shape mismatch");
  Tensor4 grad(input.n, input.c, input.h, input.w);
  const double inv = 1.0 / static_cast<double>(input.h * input.w);
  for (std::size_t n = 0; n < input.n; ++n) {
    for (std::size_t c = 0; c < input.c; ++c) {
      const double g = grad_out.at(n, c, 0, 0) * inv;
      double* plane = grad.plane(n, c);
      for (std::size_t i = 0; i < input.h * input.w; ++i) plane[i] = g;
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Dense on flattened features: input N x D x 1 x 1, weights Dout x Din.

inline Tensor4 dense_forward(const Tensor4& input, const Matrix& weights,
                             const Vec& bias) {
  if (input.h != 1 || input.w != 1 || input.c != weights.cols ||
      bias.size() != weights.rows)
    throw std::invalid_argument("dense: shape mismatch");
  Tensor4 out(input.n, weights.rows, 1, 1);
  for (std::size_t n = 0; n < input.n; ++n) {
    const double* x = input.data.data() + n * input.c;
    double* y = out.data.data() + n * weights.rows;
    for (std::size_t o = 0; o < weights.rows; ++o)
      y[o] = dot(weights.row(o), x, weights.cols) + bias[o];
  }
  return out;
}

inline void dense_backward(const Tensor4& input, const Matrix& weights,
                           const Tensor4& grad_out, Tensor4& grad_input,
                           Matrix& grad_weights, Vec& grad_bias) {
  if (grad_out.n != input.n || grad_out.c != weights.rows)
    throw std::invalid_argument("dense_backward: shape mismatch");
  grad_input = Tensor4(input.n, input.c, 1, 1);
  grad_weights = Matrix(weights.rows, weights.cols);
  grad_bias.assign(weights.rows, 0.0);
  for (std::size_t n = 0; n < input.n; ++n) {
    const double* x = input.data.data() + n * input.c;
    const double* g = grad_out.data.data() + n * weights.rows;
    double* gi = grad_input.data.data() + n * input.c;
    for (std::size_t o = 0; o < weights.rows; ++o) {
      const double go = g[o];
      grad_bias[o] += go;
      const double* wrow = weights.row(o);
      double* gwrow = grad_weights.row(o);
      for (std::size_t d = 0; d < weights.cols; ++d) {
        gwrow[d] += go * x[d];
        gi[d] += go * wrow[d];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Residual add

inline Tensor4 residual_add(const Tensor4& a, const Tensor4& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("residual_add: shape mismatch");
  Tensor4 out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

// ---------------------------------------------------------------------------
// Squeeze-and-Excitation: channel gating through a bottleneck MLP.
// s = sigmoid(W2 relu(W1 gap(x) + b1) + b2); out[c] = s_c * x[c].

struct SeParams {
  Matrix w1;  // (C/r) x C
  Vec b1;
  Matrix w2;  // C x (C/r)
  Vec b2;
};

struct SeCache {
  Tensor4 input;
  Matrix pooled;   // N x C
  Matrix hidden;   // N x C/r (post-relu)
  Matrix gate;     // N x C (sigmoid output)
};

inline void check_se_args(const Tensor4& input, const SeParams& params) {
  const std::size_t c = input.c;
  if (params.w1.cols != c || params.w2.rows != c ||
      params.w1.rows != params.w2.cols || params.b1.size() != params.w1.rows ||
      params.b2.size() != c)
    throw std::invalid_argument("se_block: parameter shape mismatch");
}

inline Tensor4 se_block_forward(const Tensor4& input, const SeParams& params,
                                SeCache& cache) {
  check_se_args(input, params);
  const std::size_t c = input.c, hidden = params.w1.rows;
  cache.input = input;
  cache.pooled = Matrix(input.n, c);
  cache.hidden = Matrix(input.n, hidden);
  cache.gate = Matrix(input.n, c);

  const double inv = 1.0 / static_cast<double>(input.h * input.w);
  Tensor4 out(input.n, input.c, input.h, input.w);
  for (std::size_t n = 0; n < input.n; ++n) {
    double* pooled = cache.pooled.row(n);
    for (std::size_t ic = 0; ic < c; ++ic) {
      const double* plane = input.plane(n, ic);
      double s = 0.0;
      for (std::size_t i = 0; i < input.h * input.w; ++i) s += plane[i];
      pooled[ic] = s * inv;
    }
    double* hid = cache.hidden.row(n);
    for (std::size_t o = 0; o < hidden; ++o) {
      const double pre = dot(params.w1.row(o), pooled, c) + params.b1[o];
      hid[o] = pre > 0.0 ? pre : 0.0;
    }
    double* gate = cache.gate.row(n);
    for (std::size_t o = 0; o < c; ++o) {
      const double pre = dot(params.w2.row(o), hid, hidden) + params.b2[o];
      gate[o] = 1.0 / (1.0 + std::exp(-pre));
    }
    for (std::size_t ic = 0; ic < c; ++ic) {
      const double g = gate[ic];
      const double* src = input.plane(n, ic);
      double* dst = out.plane(n, ic);
      for (std::size_t i = 0; i < input.h * input.w; ++i) dst[i] = g * src[i];
    }
  }
  return out;
}

inline Tensor4 se_block_backward(const SeParams& params, const SeCache& cache,
                                 const Tensor4& grad_out, SeParams& grads) {
  const Tensor4& input = cache.input;
  if (!grad_out.same_shape(input))
    throw std::invalid_argument("se_block_backward: shape mismatch");
  const std::size_t c = input.c, hidden = params.w1.rows;
  const std::size_t plane = input.h * input.w;

  grads.w1 = Matrix(params.w1.rows, params.w1.cols);
  grads.b1.assign(params.b1.size(), 0.0);
  grads.w2 = Matrix(params.w2.rows, params.w2.cols);
  grads.b2.assign(params.b2.size(), 0.0);

  Tensor4 grad_input(input.n, input.c, input.h, input.w);
  Vec grad_gate(c), grad_pre2(c), grad_hidden(hidden), grad_pre1(hidden),
      grad_pooled(c);
  const double inv = 1.0 / static_cast<double>(plane);

  for (std::size_t n = 0; n < input.n; ++n) {
    const double* pooled = cache.pooled.row(n);
    const double* hid = cache.hidden.row(n);
    const double* gate = cache.gate.row(n);

    for (std::size_t ic = 0; ic < c; ++ic) {
      const double* g = grad_out.plane(n, ic);
      const double* x = input.plane(n, ic);
      grad_gate[ic] = dot(g, x, plane);
    }
    for (std::size_t o = 0; o < c; ++o)
      grad_pre2[o] = grad_gate[o] * gate[o] * (1.0 - gate[o]);

    std::fill(grad_hidden.begin(), grad_hidden.end(), 0.0);
    for (std::size_t o = 0; o < c; ++o) {
      grads.b2[o] += grad_pre2[o];
      const double* wrow = params.w2.row(o);
      double* gwrow = grads.w2.row(o);
      for (std::size_t j = 0; j < hidden; ++j) {
        gwrow[j] += grad_pre2[o] * hid[j];
        grad_hidden[j] += wrow[j] * grad_pre2[o];
      }
    }
    for (std::size_t j = 0; j < hidden; ++j)
      grad_pre1[j] = hid[j] > 0.0 ? grad_hidden[j] : 0.0;

    std::fill(grad_pooled.begin(), grad_pooled.end(), 0.0);
    for (std::size_t j = 0; j < hidden; ++j) {
      grads.b1[j] += grad_pre1[j];
      const double* wrow = params.w1.row(j);
      double* gwrow = grads.w1.row(j);
      for (std::size_t ic = 0; ic < c; ++ic) {
        gwrow[ic] += grad_pre1[j] * pooled[ic];
        grad_pooled[ic] += wrow[ic] * grad_pre1[j];
      }
    }

    for (std::size_t ic = 0; ic < c; ++ic) {
      const double g_spread = grad_pooled[ic] * inv;
      const double gval = gate[ic];
      const double* g = grad_out.plane(n, ic);
      double* gi = grad_input.plane(n, ic);
      for (std::size_t i = 0; i < plane; ++i) gi[i] = gval * g[i] + g_spread;
    }
  }
  return grad_input;
}

// ---------------------------------------------------------------------------
// Softmax cross entropy over logits N x K. Returns the mean loss and the
// gradient wrt the logits, (softmax - onehot) / N.

inline double softmax_cross_entropy(const Matrix& logits,
                                    const std::vector<int>& labels,
                                    Matrix& grad_logits) {
  if (labels.size() != logits.rows)
    throw std::invalid_argument("softmax_cross_entropy: batch size mismatch");
  const std::size_t k = logits.cols;
  grad_logits = Matrix(logits.rows, k);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(logits.rows);
  for (std::size_t n = 0; n < logits.rows; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= k)
      throw std::invalid_argument("softmax_cross_entropy: label out of range");
    const double* z = logits.row(n);
    double mx = z[0];
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, z[j]);
    double sum = 0.0;
    double* g = grad_logits.row(n);
    for (std::size_t j = 0; j < k; ++j) {
      g[j] = std::exp(z[j] - mx);
      sum += g[j];
    }
    loss -= std::log(g[static_cast<std::size_t>(label)] / sum);
    for (std::size_t j = 0; j < k; ++j) g[j] = g[j] / sum * inv_n;
    g[static_cast<std::size_t>(label)] -= inv_n;
  }
  return loss * inv_n;
}

}  // namespace fefa
