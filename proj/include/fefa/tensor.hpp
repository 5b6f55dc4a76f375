#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fefa {

// N x C x H x W tensor, row-major with W contiguous. Double precision
// throughout; activations and their gradients share this type.
struct Tensor4 {
  std::size_t n = 0, c = 0, h = 0, w = 0;
  std::vector<double> data;

  Tensor4() = default;
  Tensor4(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_,
          double fill = 0.0)
      : n(n_), c(c_), h(h_), w(w_), data(n_ * c_ * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }

  double& at(std::size_t in, std::size_t ic, std::size_t ih, std::size_t iw) {
    return data[((in * c + ic) * h + ih) * w + iw];
  }
  double at(std::size_t in, std::size_t ic, std::size_t ih,
            std::size_t iw) const {
    return data[((in * c + ic) * h + ih) * w + iw];
  }

  double* plane(std::size_t in, std::size_t ic) {
    return data.data() + (in * c + ic) * h * w;
  }
  const double* plane(std::size_t in, std::size_t ic) const {
    return data.data() + (in * c + ic) * h * w;
  }

  bool same_shape(const Tensor4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

}  // namespace fefa
