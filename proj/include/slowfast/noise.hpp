#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "slowfast/rng.hpp"

namespace slowfast {

// Reproducible two-sided Wiener increment source.
//
// Increment k (signed) is an m-vector ~ N(0, dt I), a pure function of
// (master_seed, replica_index, k). Nonnegative and negative indices come from
// statistically independent substreams; two further branches provide the
// auxiliary W-tilde increments and scratch normals for stationary draws.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t master_seed, std::uint32_t replica_index, int dim,
              double dt);

  int dim() const { return m_; }
  double dt() const { return dt_; }
  std::uint64_t master_seed() const { return master_; }
  std::uint32_t replica_index() const { return replica_; }
  std::int64_t index_offset() const { return offset_; }

  // Wiener increment over [k dt, (k+1) dt).
  void increment(std::int64_t k, std::span<double> out) const;

  // Sum of increments over index range [k0, k1): ~ N(0, (k1-k0) dt I).
  void increment_sum(std::int64_t k0, std::int64_t k1, std::span<double> out) const;

  // Shift by an integer multiple of dt: the returned stream's increment at k
  // equals this stream's at k + t_shift/dt. Throws NonGridShift otherwise.
  NoiseStream shifted(double t_shift) const;

  // Antithetic twin: identical keys, all Gaussian outputs negated.
  NoiseStream antithetic() const;
  double sign() const { return sign_; }

  // Auxiliary W-tilde increments (independent branch), ~ N(0, dt I).
  void wtilde_increment(std::int64_t k, std::span<double> out) const;

  // Scratch standard normals for initial-condition draws (independent branch).
  void init_normals(std::span<double> out, std::uint64_t slot_base = 0) const;

 private:
  double gaussian(std::uint64_t key, std::int64_t idx, int component) const;

  std::uint64_t master_;
  std::uint32_t replica_;
  int m_;
  double dt_;
  std::int64_t offset_ = 0;
  double sign_ = 1.0;
  std::uint64_t key_pos_, key_neg_, key_wtilde_, key_init_;
};

// Precomputed prefix sums of one stream's increments over a fixed index range,
// for O(1) interval sums when the same fine path is consumed many times.
class WienerPathCache {
 public:
  WienerPathCache(const NoiseStream& stream, std::int64_t k_lo, std::int64_t k_hi);
  // Sum of increments over [k0, k1) within the cached range.
  void increment_sum(std::int64_t k0, std::int64_t k1, std::span<double> out) const;
  std::int64_t lo() const { return k_lo_; }
  std::int64_t hi() const { return k_hi_; }

 private:
  std::int64_t k_lo_, k_hi_;
  int m_;
  std::vector<double> prefix_;  // (k_hi - k_lo + 1) x m, prefix[0] = 0
};

// Time grid plus slow/fast trajectories, row-major per step.
struct SamplePath {
  double t0 = 0.0;
  double dt = 0.0;
  int n = 0;
  int m = 0;
  std::vector<double> slow;  // n_steps * n
  std::vector<double> fast;  // n_steps * m
  bool blew_up = false;

  std::size_t n_steps() const { return n == 0 ? 0 : slow.size() / n; }
  double t_end() const { return t0 + dt * (static_cast<double>(n_steps()) - 1.0); }

  std::span<const double> slow_at(std::size_t step) const {
    return {slow.data() + step * n, static_cast<std::size_t>(n)};
  }
  std::span<const double> fast_at(std::size_t step) const {
    return {fast.data() + step * m, static_cast<std::size_t>(m)};
  }

  // Linear interpolation; throws InvalidArgument outside [t0, t_end].
  void state_at(double t, std::span<double> x_out, std::span<double> y_out) const;

  // CSV: header "t,x_1..x_n,y_1..y_m", 17 significant digits.
  void write_csv(const std::string& path) const;
};

}  // namespace slowfast
