#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fefa/matrix.hpp"

namespace fefa {

inline std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

// Spectrogram/matrix CSV: one row per bin, one column per frame, %.9e cells.
inline std::string matrix_to_csv(const Matrix& m, const char* fmt = "%.9e") {
  std::string out;
  out.reserve(m.rows * m.cols * 18);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (c) out += ',';
      out += format_double(fmt, m.at(r, c));
    }
    out += '\n';
  }
  return out;
}

inline void write_matrix_csv(const std::string& path, const Matrix& m,
                             const char* fmt = "%.9e") {
  write_text_file(path, matrix_to_csv(m, fmt));
}

// 8-bit binary PGM (P5) with log(1+x) compression and per-image max
// normalization. Intended for nonnegative data (power spectrograms,
// attention heat strips).
inline void write_pgm(const std::string& path, const Matrix& m) {
  double max_c = 0.0;
  for (double v : m.data) {
    const double c = std::log1p(std::max(v, 0.0));
    if (c > max_c) max_c = c;
  }
  std::string out = "P5\n" + std::to_string(m.cols) + " " +
                    std::to_string(m.rows) + "\n255\n";
  out.reserve(out.size() + m.rows * m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      const double v = std::log1p(std::max(m.at(r, c), 0.0));
      const int g = max_c > 0.0 ? static_cast<int>(std::lround(255.0 * v / max_c)) : 0;
      out.push_back(static_cast<char>(std::clamp(g, 0, 255)));
    }
  }
  write_text_file(path, out);
}

}  // namespace fefa
