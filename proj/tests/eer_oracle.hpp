#pragma once

#include <algorithm>
#include <limits>
#include <vector>

// Naive exhaustive threshold sweep, written independently of compute_eer:
// every midpoint of adjacent distinct scores plus the two infinities, with
// counts re-scanned from scratch at every threshold. Test-only reference.
inline double eer_oracle(const std::vector<double>& scores,
                         const std::vector<bool>& labels) {
  std::vector<double> uniq = scores;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  std::vector<double> thresholds{-std::numeric_limits<double>::infinity()};
  for (std::size_t i = 1; i < uniq.size(); ++i)
    thresholds.push_back(0.5 * (uniq[i - 1] + uniq[i]));
  thresholds.push_back(std::numeric_limits<double>::infinity());

  std::size_t n_pos = 0, n_neg = 0;
  for (bool l : labels) (l ? n_pos : n_neg)++;

  double prev_far = 0.0, prev_frr = 0.0;
  bool have_prev = false;
  for (double t : thresholds) {
    std::size_t fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (!labels[i] && scores[i] >= t) ++fp;
      if (labels[i] && scores[i] < t) ++fn;
    }
    const double far = static_cast<double>(fp) / static_cast<double>(n_neg);
    const double frr = static_cast<double>(fn) / static_cast<double>(n_pos);
    const double d = far - frr;
    if (d == 0.0) return far;
    if (d < 0.0) {
      if (!have_prev) return far;
      const double prev_d = prev_far - prev_frr;
      const double alpha = prev_d / (prev_d - d);
      return prev_far + alpha * (far - prev_far);
    }
    prev_far = far;
    prev_frr = frr;
    have_prev = true;
  }
  return prev_far;
}
