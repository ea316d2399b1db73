#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "slowfast/errors.hpp"

namespace slowfast {

// Pairwise (cascade) summation over a fixed binary split of the index range.
// The result depends only on the input order, never on thread scheduling.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double mean_of(std::span<const double> v) {
  if (v.empty()) throw InvalidArgument("mean of empty sample");
  return pairwise_sum(v) / static_cast<double>(v.size());
}

// Two-pass sample variance (unbiased), deterministic reduction.
inline double variance_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - m) * (v[i] - m);
  return pairwise_sum(sq) / static_cast<double>(v.size() - 1);
}

inline double stderr_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  return std::sqrt(variance_of(v) / static_cast<double>(v.size()));
}

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};

inline MeanStderr mean_stderr(std::span<const double> v) {
  return {mean_of(v), stderr_of(v)};
}

// Batch-means standard error for a correlated stationary series: group into
// n_batches contiguous blocks, use the spread of block means.
class BatchMeans {
 public:
  explicit BatchMeans(std::size_t n_batches = 20) : n_batches_(n_batches) {
    if (n_batches_ < 2) throw InvalidArgument("need >= 2 batches");
  }

  void add(double x) { samples_.push_back(x); }
  std::size_t count() const { return samples_.size(); }

  std::vector<double> batch_means() const {
    const std::size_t nb = n_batches_;
    const std::size_t len = samples_.size() / nb;
    if (len == 0) throw InvalidArgument("fewer samples than batches");
    std::vector<double> means(nb);
    for (std::size_t b = 0; b < nb; ++b) {
      std::span<const double> blk(samples_.data() + b * len, len);
      means[b] = mean_of(blk);
    }
    return means;
  }

  double mean() const {
    const std::size_t nb = n_batches_;
    const std::size_t len = samples_.size() / nb;
    return mean_of(std::span<const double>(samples_.data(), nb * len));
  }

  double stderr_() const {
    const auto bm = batch_means();
    return std::sqrt(variance_of(bm) / static_cast<double>(bm.size()));
  }

  // Stationarity screen: first and second halves of the batch means must not
  // differ by more than `k` pooled standard errors.
  bool halves_consistent(double k = 5.0) const {
    const auto bm = batch_means();
    const std::size_t h = bm.size() / 2;
    std::span<const double> a(bm.data(), h), b(bm.data() + h, bm.size() - h);
    const double se = std::sqrt(variance_of(a) / static_cast<double>(a.size()) +
                                variance_of(b) / static_cast<double>(b.size()));
    if (se == 0.0) return true;
    return std::fabs(mean_of(a) - mean_of(b)) <= k * se;
  }

 private:
  std::size_t n_batches_;
  std::vector<double> samples_;
};

}  // namespace slowfast
