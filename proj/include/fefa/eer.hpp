#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fefa/rng.hpp"

namespace fefa {

// Equal error rate of verification scores (higher score = more likely a
// same-speaker pair). Thresholds sweep the midpoints of adjacent distinct
// scores plus +-inf; a trial is accepted when score >= threshold. FAR falls
// and FRR rises with the threshold; the EER is the value where they cross,
// linearly interpolated between bracketing thresholds when FAR - FRR changes
// sign without touching zero.
inline double compute_eer(const std::vector<double>& scores,
                          const std::vector<bool>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("compute_eer: scores/labels mismatch");
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i]))
      throw std::invalid_argument("compute_eer: non-finite score");
    if (labels[i]) ++n_pos; else ++n_neg;
  }
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("compute_eer: both classes required");

  std::vector<std::pair<double, bool>> sorted(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) sorted[i] = {scores[i], labels[i]};
  std::sort(sorted.begin(), sorted.end());

  // Walking the sorted scores, after consuming a prefix of k trials the
  // threshold sits above those k: FRR = positives among them / n_pos,
  // FAR = negatives not among them / n_neg.
  double prev_far = 1.0, prev_frr = 0.0;
  std::size_t pos_below = 0, neg_below = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double value = sorted[i].first;
    while (i < sorted.size() && sorted[i].first == value) {
      if (sorted[i].second) ++pos_below; else ++neg_below;
      ++i;
    }
    const double far = static_cast<double>(n_neg - neg_below) / static_cast<double>(n_neg);
    const double frr = static_cast<double>(pos_below) / static_cast<double>(n_pos);
    const double d = far - frr;
    if (d == 0.0) return far;
    if (d < 0.0) {
      const double prev_d = prev_far - prev_frr;
      const double alpha = prev_d / (prev_d - d);
      return prev_far + alpha * (far - prev_far);
    }
    prev_far = far;
    prev_frr = frr;
  }
  // FAR never dropped below FRR before the end; cross toward (0, 1).
  const double prev_d = prev_far - prev_frr;
  const double alpha = prev_d / (prev_d - (0.0 - 1.0));
  return prev_far + alpha * (0.0 - prev_far);
}

// ---------------------------------------------------------------------------
// Verification trials

struct Trial {
  std::size_t utt_a = 0;  // indices into the utterance pool handed in
  std::size_t utt_b = 0;
  bool same_speaker = false;
};

struct TrialSet {
  std::vector<Trial> trials;
};

// Balanced same/different pairs over a pool of (index, speaker) items,
// sampled without replacement while the pool allows it.
inline TrialSet build_trials(const std::vector<int>& speaker_of, std::size_t n_trials,
                             std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_speaker;
  for (std::size_t i = 0; i < speaker_of.size(); ++i) {
    const int s = speaker_of[i];
    if (s < 0) throw std::invalid_argument("build_trials: bad speaker id");
    if (static_cast<std::size_t>(s) >= by_speaker.size())
      by_speaker.resize(static_cast<std::size_t>(s) + 1);
    by_speaker[static_cast<std::size_t>(s)].push_back(i);
  }
  std::vector<std::size_t> usable;
  for (std::size_t s = 0; s < by_speaker.size(); ++s)
    if (by_speaker[s].size() >= 2) usable.push_back(s);
  std::size_t nonempty = 0;
  for (const auto& v : by_speaker) nonempty += v.empty() ? 0 : 1;
  if (nonempty < 2 || usable.empty())
    throw std::invalid_argument("build_trials: need >= 2 speakers and a speaker with >= 2 utterances");
  if (n_trials < 2) throw std::invalid_argument("build_trials: need >= 2 trials");

  Rng rng(seed);
  TrialSet out;
  std::set<std::pair<std::size_t, std::size_t>> seen_same, seen_diff;
  const std::size_t half = n_trials / 2;

  auto norm_pair = [](std::size_t a, std::size_t b) {
    return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
  };

  std::size_t same_pool = 0;
  for (std::size_t s : usable) {
    const std::size_t k = by_speaker[s].size();
    same_pool += k * (k - 1) / 2;
  }

  for (std::size_t k = 0; k < half; ++k) {
    for (int attempt = 0;; ++attempt) {
      const std::size_t s = usable[rng.below(usable.size())];
      const auto& pool = by_speaker[s];
      const std::size_t a = pool[rng.below(pool.size())];
      std::size_t b = pool[rng.below(pool.size())];
      while (b == a) b = pool[rng.below(pool.size())];
      const auto key = norm_pair(a, b);
      const bool fresh = seen_same.insert(key).second;
      if (fresh || seen_same.size() >= same_pool || attempt > 1000) {
        out.trials.push_back({key.first, key.second, true});
        break;
      }
    }
  }
  for (std::size_t k = 0; k < n_trials - half; ++k) {
    for (int attempt = 0;; ++attempt) {
      std::size_t sa = rng.below(by_speaker.size());
      std::size_t sb = rng.below(by_speaker.size());
      while (by_speaker[sa].empty()) sa = rng.below(by_speaker.size());
      while (sb == sa || by_speaker[sb].empty()) sb = rng.below(by_speaker.size());
      const std::size_t a = by_speaker[sa][rng.below(by_speaker[sa].size())];
      const std::size_t b = by_speaker[sb][rng.below(by_speaker[sb].size())];
      const auto key = norm_pair(a, b);
      const bool fresh = seen_diff.insert(key).second;
      if (fresh || attempt > 1000) {
        out.trials.push_back({key.first, key.second, false});
        break;
      }
    }
  }
  return out;
}

inline double cosine_similarity(const std::vector<double>& a,
                                const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  double num = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return num / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace fefa
