#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "fefa/attention.hpp"
#include "fefa/gradcheck.hpp"
#include "fefa/rng.hpp"

using namespace fefa;
using Catch::Approx;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = 0.0,
                     double hi = 2.0) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

}  // namespace

TEST_CASE("squeeze_time averages over frames", "[fefa]") {
  SECTION("single frame is unchanged") {
    Matrix m(3, 1);
    m.data = {1.0, -2.0, 0.5};
    REQUIRE(squeeze_time(m) == Vec{1.0, -2.0, 0.5});
  }
  SECTION("constant matrix") {
    const Matrix m(4, 7, 3.25);
    for (double v : squeeze_time(m)) REQUIRE(v == 3.25);
  }
  SECTION("2x2 hand case") {
    Matrix m(2, 2);
    m.data = {1.0, 3.0, 2.0, 6.0};
    REQUIRE(squeeze_time(m) == Vec{2.0, 4.0});
  }
  SECTION("empty input") {
    REQUIRE_THROWS_AS(squeeze_time(Matrix{}), std::invalid_argument);
  }
}

TEST_CASE("squeeze_channels averages over channels", "[fefa]") {
  SECTION("single channel is the identity") {
    Rng rng(1);
    Tensor4 x(1, 1, 3, 4);
    for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
    const Matrix out = squeeze_channels(x);
    REQUIRE(out.data == x.data);
  }
  SECTION("two constant channels") {
    Tensor4 x(1, 2, 2, 2);
    for (std::size_t i = 0; i < 4; ++i) x.data[i] = 3.0;
    for (std::size_t i = 4; i < 8; ++i) x.data[i] = 5.0;
    for (double v : squeeze_channels(x).data) REQUIRE(v == 4.0);
  }
  SECTION("random tensor matches the brute-force mean") {
    Rng rng(2);
    Tensor4 x(1, 3, 2, 2);
    for (double& v : x.data) v = rng.uniform(-2.0, 2.0);
    const Matrix out = squeeze_channels(x);
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t w = 0; w < 2; ++w) {
        const double want =
            (x.at(0, 0, h, w) + x.at(0, 1, h, w) + x.at(0, 2, h, w)) / 3.0;
        REQUIRE(out.at(h, w) == Approx(want).epsilon(1e-15));
      }
  }
}

TEST_CASE("kernel_forward", "[fefa]") {
  SECTION("zero weights and bias give zero logits") {
    const FefaParams p = FefaParams::zeros(5);
    for (double v : kernel_forward({1.0, 2.0, 3.0, 4.0, 5.0}, p)) REQUIRE(v == 0.0);
  }
  SECTION("identity weights pass the squeezed vector through") {
    FefaParams p = FefaParams::zeros(4);
    for (std::size_t i = 0; i < 4; ++i) p.weights.at(i, i) = 1.0;
    const Vec s{0.5, -1.0, 2.0, 0.0};
    REQUIRE(kernel_forward(s, p) == s);
  }
  SECTION("local w=3 matches brute-force windowed dot products") {
    Rng rng(3);
    FefaParams p = FefaParams::zeros(4, 3);
    for (double& v : p.weights.data) v = rng.uniform(-1.0, 1.0);
    for (double& v : p.bias) v = rng.uniform(-1.0, 1.0);
    Vec s{0.7, -0.3, 1.1, 0.4};
    const Vec logits = kernel_forward(s, p);
    for (int i = 0; i < 4; ++i) {
      double want = p.bias[static_cast<std::size_t>(i)];
      for (int k = 0; k < 3; ++k) {
        const int j = i - 1 + k;
        if (j >= 0 && j < 4)
          want += p.weights.at(static_cast<std::size_t>(i), static_cast<std::size_t>(k)) *
                  s[static_cast<std::size_t>(j)];
      }
      REQUIRE(logits[static_cast<std::size_t>(i)] == Approx(want).epsilon(1e-15));
    }
  }
  SECTION("dimension mismatch") {
    const FefaParams p = FefaParams::zeros(4);
    REQUIRE_THROWS_AS(kernel_forward({1.0, 2.0}, p), std::invalid_argument);
  }
}

TEST_CASE("softmax", "[fefa]") {
  SECTION("equal logits over 257 bins are uniform") {
    const auto p = softmax(Vec(257, 0.7)).p;
    for (double v : p) REQUIRE(v == Approx(1.0 / 257.0).epsilon(1e-12));
  }
  SECTION("large logit dominates within 1e-8") {
    const auto p = softmax({0.0, 20.0, 0.0, 0.0}).p;
    REQUIRE(std::abs(p[1] - 1.0) < 1e-8);
    REQUIRE(p[0] < 1e-8);
  }
  SECTION("shift invariance within 1e-12") {
    Rng rng(4);
    Vec logits(40);
    for (double& v : logits) v = rng.uniform(-3.0, 3.0);
    Vec shifted = logits;
    for (double& v : shifted) v += 123.456;
    const auto a = softmax(logits).p;
    const auto b = softmax(shifted).p;
    for (std::size_t i = 0; i < a.size(); ++i)
      REQUIRE(a[i] == Approx(b[i]).margin(1e-12));
  }
  SECTION("probability simplex on random logits") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      Vec logits(1 + rng.below(64));
      for (double& v : logits) v = rng.uniform(-30.0, 30.0);
      const auto p = softmax(logits).p;
      double sum = 0.0;
      for (double v : p) {
        REQUIRE(v >= 0.0);
        sum += v;
      }
      REQUIRE(sum == Approx(1.0).margin(1e-9));
    }
  }
  SECTION("NaN logits are rejected") {
    REQUIRE_THROWS_AS(softmax({0.0, std::nan("")}), std::invalid_argument);
  }
}

TEST_CASE("apply_attention", "[fefa]") {
  SECTION("uniform p in preserve mode is the identity") {
    Rng rng(6);
    const Matrix spec = random_matrix(rng, 4, 3);
    const AttentionWeights uniform{Vec(4, 0.25)};
    const Matrix out = apply_attention(spec, uniform, ScaleMode::preserve);
    REQUIRE(out.data == spec.data);
  }
  SECTION("one-hot p in literal mode keeps only that row") {
    Rng rng(7);
    const Matrix spec = random_matrix(rng, 3, 5);
    AttentionWeights onehot{Vec(3, 0.0)};
    onehot.p[1] = 1.0;
    const Matrix out = apply_attention(spec, onehot, ScaleMode::literal);
    for (std::size_t t = 0; t < 5; ++t) {
      REQUIRE(out.at(0, t) == 0.0);
      REQUIRE(out.at(1, t) == spec.at(1, t));
      REQUIRE(out.at(2, t) == 0.0);
    }
  }
  SECTION("random case against the elementwise product") {
    Rng rng(8);
    const Matrix spec = random_matrix(rng, 3, 2);
    const auto p = softmax({0.1, -0.4, 0.9}).p;
    const Matrix out = apply_attention(spec, {p}, ScaleMode::literal);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t t = 0; t < 2; ++t)
        REQUIRE(out.at(i, t) == Approx(p[i] * spec.at(i, t)).epsilon(1e-15));
  }
}

TEST_CASE("fefa_forward composition", "[fefa]") {
  SECTION("zero weights and bias: preserve mode returns the input") {
    Rng rng(9);
    const Matrix spec = random_matrix(rng, 6, 4);
    const FefaParams p = FefaParams::zeros(6);
    const auto [out, cache] = fefa_forward(spec, p, ScaleMode::preserve);
    for (std::size_t i = 0; i < out.data.size(); ++i)
      REQUIRE(out.data[i] == Approx(spec.data[i]).epsilon(1e-12));
    for (double v : cache.p) REQUIRE(v == Approx(1.0 / 6.0).epsilon(1e-12));
  }
  SECTION("hand-set weights match a step-by-step independent computation") {
    Matrix spec(3, 2);
    spec.data = {1.0, 3.0, 0.5, 0.5, 2.0, 0.0};
    FefaParams params = FefaParams::zeros(3);
    params.weights.data = {0.2, -0.1, 0.0, 0.3, 0.4, -0.2, 0.1, 0.0, 0.5};
    params.bias = {0.05, -0.1, 0.2};

    // Naive re-derivation with its own arithmetic.
    double squeezed[3];
    for (int i = 0; i < 3; ++i) squeezed[i] = (spec.at(i, 0) + spec.at(i, 1)) / 2.0;
    double logits[3];
    for (int i = 0; i < 3; ++i) {
      logits[i] = params.bias[static_cast<std::size_t>(i)];
      for (int j = 0; j < 3; ++j)
        logits[i] += params.weights.at(static_cast<std::size_t>(i),
                                       static_cast<std::size_t>(j)) * squeezed[j];
    }
    double ex[3], sum = 0.0;
    for (int i = 0; i < 3; ++i) {
      ex[i] = std::exp(logits[i]);
      sum += ex[i];
    }
    const auto [out, cache] = fefa_forward(spec, params, ScaleMode::preserve);
    for (std::size_t i = 0; i < 3; ++i) {
      const double want_p = ex[i] / sum;
      REQUIRE(cache.p[i] == Approx(want_p).epsilon(1e-12));
      for (std::size_t t = 0; t < 2; ++t)
        REQUIRE(out.at(i, t) == Approx(3.0 * want_p * spec.at(i, t)).epsilon(1e-12));
    }
  }
  SECTION("tensor path with one channel equals the matrix path") {
    Rng rng(10);
    const Matrix spec = random_matrix(rng, 5, 3);
    FefaParams params = FefaParams::zeros(5);
    for (double& v : params.weights.data) v = rng.uniform(-0.3, 0.3);
    const auto [mat_out, mc] = fefa_forward(spec, params, ScaleMode::preserve);
    Tensor4 x(1, 1, 5, 3);
    x.data = spec.data;
    const auto [tens_out, tc] = fefa_forward(x, params, ScaleMode::preserve);
    REQUIRE(tens_out.data == mat_out.data);
  }
  SECTION("output shape equals input shape, both paths") {
    Rng rng(11);
    const Matrix spec = random_matrix(rng, 7, 9);
    const auto [out, cache] = fefa_forward(spec, FefaParams::zeros(7), ScaleMode::literal);
    REQUIRE(out.rows == 7);
    REQUIRE(out.cols == 9);
    Tensor4 x(1, 3, 4, 6);
    for (double& v : x.data) v = rng.uniform(0.0, 1.0);
    const auto [out2, cache2] = fefa_forward(x, FefaParams::zeros(4), ScaleMode::preserve);
    REQUIRE(out2.same_shape(x));
  }
}

TEST_CASE("fefa_backward", "[fefa]") {
  SECTION("zero upstream gives zero gradients") {
    Rng rng(12);
    const Matrix spec = random_matrix(rng, 4, 3);
    FefaParams params = FefaParams::zeros(4);
    for (double& v : params.weights.data) v = rng.uniform(-0.5, 0.5);
    const auto [out, cache] = fefa_forward(spec, params, ScaleMode::preserve);
    const FefaGrads g = fefa_backward(Matrix(4, 3), cache, params);
    for (double v : g.grad_input) REQUIRE(v == 0.0);
    for (double v : g.grad_weights.data) REQUIRE(v == 0.0);
    for (double v : g.grad_bias) REQUIRE(v == 0.0);
  }
  SECTION("finite differences on random 8x5 inputs") {
    Rng rng(13);
    for (int trial = 0; trial < 5; ++trial) {
      Matrix spec = random_matrix(rng, 8, 5);
      FefaParams params = FefaParams::zeros(8);
      for (double& v : params.weights.data) v = rng.uniform(-0.4, 0.4);
      for (double& v : params.bias) v = rng.uniform(-0.4, 0.4);
      Matrix upstream = random_matrix(rng, 8, 5, -1.0, 1.0);

      auto [out, cache] = fefa_forward(spec, params, ScaleMode::preserve);
      const FefaGrads g = fefa_backward(upstream, cache, params);
      auto loss = [&]() {
        return dot(fefa_forward(spec, params, ScaleMode::preserve).first.data.data(),
                   upstream.data.data(), upstream.data.size());
      };
      REQUIRE(max_err_over(loss, spec.data.data(), g.grad_input.data(),
                           spec.data.size()) <= 1e-5);
      REQUIRE(max_err_over(loss, params.weights.data.data(), g.grad_weights.data.data(),
                           params.weights.data.size()) <= 1e-5);
      // Bias path: gradient flows only through the softmax, never the squeeze.
      REQUIRE(max_err_over(loss, params.bias.data(), g.grad_bias.data(),
                           params.bias.size()) <= 1e-5);
    }
  }
  SECTION("gradient suite covers both paths and both connectivities") {
    Rng rng(14);
    for (int trial = 0; trial < 3; ++trial) {
      REQUIRE(gradcheck::check_fefa(rng, false, 0, ScaleMode::preserve) <= 1e-5);
      REQUIRE(gradcheck::check_fefa(rng, true, 0, ScaleMode::literal) <= 1e-5);
      REQUIRE(gradcheck::check_fefa(rng, false, 3, ScaleMode::preserve) <= 1e-5);
      REQUIRE(gradcheck::check_fefa(rng, true, 3, ScaleMode::preserve) <= 1e-5);
    }
  }
}

TEST_CASE("baseline memory-query attention", "[fefa]") {
  SECTION("a single memory item is returned for any query") {
    BaselineAttnParams params;
    params.w_key = Matrix(2, 2);
    params.w_key.data = {1.0, 0.5, -0.5, 2.0};
    params.memory.push_back({{0.3, 0.7}, {1.0, 2.0, 3.0}});
    REQUIRE(baseline_soft_attention(params, {5.0, -1.0}) == Vec{1.0, 2.0, 3.0});
  }
  SECTION("identical keys average the values") {
    BaselineAttnParams params;
    params.w_key = Matrix(2, 2);
    params.w_key.data = {1.0, 0.0, 0.0, 1.0};
    params.memory.push_back({{0.5, 0.5}, {2.0, 0.0}});
    params.memory.push_back({{0.5, 0.5}, {0.0, 4.0}});
    const Vec out = baseline_soft_attention(params, {1.0, 1.0});
    REQUIRE(out[0] == Approx(1.0).epsilon(1e-12));
    REQUIRE(out[1] == Approx(2.0).epsilon(1e-12));
  }
  SECTION("3-item hand case against brute force") {
    Rng rng(15);
    BaselineAttnParams params;
    params.w_key = Matrix(3, 2);
    for (double& v : params.w_key.data) v = rng.uniform(-1.0, 1.0);
    for (int i = 0; i < 3; ++i) {
      Vec key(3), value(2);
      for (double& v : key) v = rng.uniform(-1.0, 1.0);
      for (double& v : value) v = rng.uniform(-1.0, 1.0);
      params.memory.push_back({key, value});
    }
    const Vec query{0.4, -0.9};
    // brute force
    Vec projected(3, 0.0);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j)
        projected[static_cast<std::size_t>(i)] +=
            params.w_key.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) *
            query[static_cast<std::size_t>(j)];
    double scores[3], sum = 0.0;
    for (int i = 0; i < 3; ++i) {
      scores[i] = 0.0;
      for (int d = 0; d < 3; ++d)
        scores[i] += params.memory[static_cast<std::size_t>(i)].first[static_cast<std::size_t>(d)] *
                     projected[static_cast<std::size_t>(d)];
    }
    double mx = std::max({scores[0], scores[1], scores[2]});
    double ps[3];
    for (int i = 0; i < 3; ++i) {
      ps[i] = std::exp(scores[i] - mx);
      sum += ps[i];
    }
    Vec want(2, 0.0);
    for (int i = 0; i < 3; ++i)
      for (int d = 0; d < 2; ++d)
        want[static_cast<std::size_t>(d)] +=
            ps[i] / sum * params.memory[static_cast<std::size_t>(i)].second[static_cast<std::size_t>(d)];

    const Vec out = baseline_soft_attention(params, query);
    REQUIRE(out[0] == Approx(want[0]).epsilon(1e-12));
    REQUIRE(out[1] == Approx(want[1]).epsilon(1e-12));
  }
  SECTION("empty memory") {
    BaselineAttnParams params;
    params.w_key = Matrix(1, 1, 1.0);
    REQUIRE_THROWS_AS(baseline_soft_attention(params, {1.0}), std::invalid_argument);
  }
}

TEST_CASE("parameter and MAC counters", "[fefa]") {
  SECTION("full connectivity at 257 bins") {
    REQUIRE(param_count(FefaParams::zeros(257)) == 66306u);
  }
  SECTION("local window taps are edge-clamped") {
    REQUIRE(param_count(FefaParams::zeros(4, 3)) == 14u);  // 10 taps + 4 biases
  }
  SECTION("one bin") {
    REQUIRE(param_count(FefaParams::zeros(1)) == 2u);
  }
  SECTION("full kernel term at 257 bins, one frame") {
    const MacCount m = count_macs(FefaParams::zeros(257), 257, 1);
    REQUIRE(m.kernel == 66049u);
  }
  SECTION("local kernel term is bounded by bins*w") {
    const MacCount m = count_macs(FefaParams::zeros(100, 5), 100, 7);
    REQUIRE(m.kernel <= 500u);
  }
  SECTION("doubling bins quadruples the kernel term") {
    const MacCount a = count_macs(FefaParams::zeros(64), 64, 0);
    const MacCount b = count_macs(FefaParams::zeros(128), 128, 0);
    REQUIRE(b.kernel == 4 * a.kernel);
  }
  SECTION("quadratic growth ratio at one frame") {
    for (std::size_t bins : {64u, 128u, 257u}) {
      const double a = static_cast<double>(count_macs(FefaParams::zeros(bins), bins, 1).total());
      const double b = static_cast<double>(
          count_macs(FefaParams::zeros(2 * bins), 2 * bins, 1).total());
      REQUIRE(b / a >= 3.5);
      REQUIRE(b / a <= 4.5);
    }
  }
  SECTION("full count lies within the documented envelope") {
    for (std::size_t bins : {16u, 257u}) {
      for (std::size_t frames : {1u, 98u}) {
        const std::size_t total =
            count_macs(FefaParams::zeros(bins), bins, frames).total();
        REQUIRE(total >= bins * bins);
        REQUIRE(total <= 3 * bins * bins + bins * frames + bins * frames);
      }
    }
  }
}

TEST_CASE("permutation equivariance under full connectivity", "[fefa]") {
  Rng rng(16);
  const std::size_t bins = 6, frames = 4;
  const Matrix spec = random_matrix(rng, bins, frames);
  FefaParams params = FefaParams::zeros(bins);
  for (double& v : params.weights.data) v = rng.uniform(-0.5, 0.5);
  for (double& v : params.bias) v = rng.uniform(-0.5, 0.5);

  std::vector<std::size_t> perm(bins);
  std::iota(perm.begin(), perm.end(), 0u);
  for (std::size_t i = bins; i > 1; --i)
    std::swap(perm[i - 1], perm[rng.below(i)]);

  Matrix spec_p(bins, frames);
  FefaParams params_p = FefaParams::zeros(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    for (std::size_t t = 0; t < frames; ++t)
      spec_p.at(i, t) = spec.at(perm[i], t);
    params_p.bias[i] = params.bias[perm[i]];
    for (std::size_t j = 0; j < bins; ++j)
      params_p.weights.at(i, j) = params.weights.at(perm[i], perm[j]);
  }

  const Matrix out = fefa_forward(spec, params, ScaleMode::preserve).first;
  const Matrix out_p = fefa_forward(spec_p, params_p, ScaleMode::preserve).first;
  for (std::size_t i = 0; i < bins; ++i)
    for (std::size_t t = 0; t < frames; ++t)
      REQUIRE(out_p.at(i, t) == Approx(out.at(perm[i], t)).epsilon(1e-12));
}
