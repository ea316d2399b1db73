#include "slowfast/noise.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "slowfast/errors.hpp"

namespace slowfast {

namespace {
enum Branch : std::uint64_t {
  kBranchPos = 0,
  kBranchNeg = 1,
  kBranchWtilde = 2,
  kBranchInit = 3,
};
}  // namespace

NoiseStream::NoiseStream(std::uint64_t master_seed, std::uint32_t replica_index,
                         int dim, double dt)
    : master_(master_seed), replica_(replica_index), m_(dim), dt_(dt) {
  if (dim <= 0) throw InvalidArgument("NoiseStream dim must be positive");
  if (!(dt > 0.0)) throw InvalidArgument("NoiseStream dt must be positive");
  key_pos_ = rng::derive_key(master_, replica_, kBranchPos);
  key_neg_ = rng::derive_key(master_, replica_, kBranchNeg);
  key_wtilde_ = rng::derive_key(master_, replica_, kBranchWtilde);
  key_init_ = rng::derive_key(master_, replica_, kBranchInit);
}

double NoiseStream::gaussian(std::uint64_t key, std::int64_t idx, int component) const {
  const std::uint64_t ctr =
      static_cast<std::uint64_t>(idx) * static_cast<std::uint64_t>(m_) +
      static_cast<std::uint64_t>(component);
  return sign_ * rng::normal_at(key, ctr);
}

NoiseStream NoiseStream::antithetic() const {
  NoiseStream s = *this;
  s.sign_ = -s.sign_;
  return s;
}

void NoiseStream::increment(std::int64_t k, std::span<double> out) const {
  const std::int64_t j = k + offset_;
  const double s = std::sqrt(dt_);
  if (j >= 0) {
    for (int c = 0; c < m_; ++c) out[c] = s * gaussian(key_pos_, j, c);
  } else {
    for (int c = 0; c < m_; ++c) out[c] = s * gaussian(key_neg_, -j - 1, c);
  }
}

void NoiseStream::increment_sum(std::int64_t k0, std::int64_t k1,
                                std::span<double> out) const {
  if (k1 < k0) throw InvalidArgument("increment_sum: k1 < k0");
  for (int c = 0; c < m_; ++c) out[c] = 0.0;
  std::vector<double> buf(m_);
  for (std::int64_t k = k0; k < k1; ++k) {
    increment(k, buf);
    for (int c = 0; c < m_; ++c) out[c] += buf[c];
  }
}

NoiseStream NoiseStream::shifted(double t_shift) const {
  const double steps = t_shift / dt_;
  const double rounded = std::round(steps);
  if (std::fabs(steps - rounded) > 1e-9 * std::max(1.0, std::fabs(steps)))
    throw NonGridShift("t_shift/dt = " + std::to_string(steps));
  NoiseStream s = *this;
  s.offset_ += static_cast<std::int64_t>(rounded);
  return s;
}

void NoiseStream::wtilde_increment(std::int64_t k, std::span<double> out) const {
  const std::int64_t j = k + offset_;
  if (j < 0) throw InvalidArgument("wtilde_increment: negative index");
  const double s = std::sqrt(dt_);
  for (int c = 0; c < m_; ++c) out[c] = s * gaussian(key_wtilde_, j, c);
}

void NoiseStream::init_normals(std::span<double> out, std::uint64_t slot_base) const {
  for (std::size_t c = 0; c < out.size(); ++c)
    out[c] = sign_ * rng::normal_at(key_init_, slot_base + c);
}

WienerPathCache::WienerPathCache(const NoiseStream& stream, std::int64_t k_lo,
                                 std::int64_t k_hi)
    : k_lo_(k_lo), k_hi_(k_hi), m_(stream.dim()) {
  if (k_hi < k_lo) throw InvalidArgument("WienerPathCache: empty range");
  const std::size_t nk = static_cast<std::size_t>(k_hi - k_lo);
  prefix_.assign((nk + 1) * m_, 0.0);
  std::vector<double> buf(m_);
  for (std::size_t i = 0; i < nk; ++i) {
    stream.increment(k_lo + static_cast<std::int64_t>(i), buf);
    for (int c = 0; c < m_; ++c)
      prefix_[(i + 1) * m_ + c] = prefix_[i * m_ + c] + buf[c];
  }
}

void WienerPathCache::increment_sum(std::int64_t k0, std::int64_t k1,
                                    std::span<double> out) const {
  if (k0 < k_lo_ || k1 > k_hi_ || k1 < k0)
    throw InvalidArgument("WienerPathCache: range outside cache");
  const std::size_t i0 = static_cast<std::size_t>(k0 - k_lo_);
  const std::size_t i1 = static_cast<std::size_t>(k1 - k_lo_);
  for (int c = 0; c < m_; ++c)
    out[c] = prefix_[i1 * m_ + c] - prefix_[i0 * m_ + c];
}

void SamplePath::state_at(double t, std::span<double> x_out,
                          std::span<double> y_out) const {
  const std::size_t ns = n_steps();
  if (ns == 0) throw InvalidArgument("SamplePath: empty path");
  const double rel = (t - t0) / dt;
  if (rel < -1e-9 || rel > static_cast<double>(ns - 1) + 1e-9)
    throw InvalidArgument("SamplePath: query outside [t0, t_end]");
  const double clamped = std::min(std::max(rel, 0.0), static_cast<double>(ns - 1));
  const std::size_t i = static_cast<std::size_t>(
      std::min(clamped, static_cast<double>(ns - 2 + (ns == 1 ? 1 : 0))));
  const double w = clamped - static_cast<double>(i);
  const std::size_t j = std::min(i + 1, ns - 1);
  for (int c = 0; c < n; ++c)
    x_out[c] = (1.0 - w) * slow[i * n + c] + w * slow[j * n + c];
  for (int c = 0; c < m; ++c)
    y_out[c] = (1.0 - w) * fast[i * m + c] + w * fast[j * m + c];
}

void SamplePath::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw InvalidArgument("cannot open " + path);
  os << "t";
  for (int c = 1; c <= n; ++c) os << ",x_" << c;
  for (int c = 1; c <= m; ++c) os << ",y_" << c;
  os << "\n";
  char buf[64];
  const std::size_t ns = n_steps();
  for (std::size_t i = 0; i < ns; ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", t0 + dt * static_cast<double>(i));
    os << buf;
    for (int c = 0; c < n; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", slow[i * n + c]);
      os << ',' << buf;
    }
    for (int c = 0; c < m; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", fast[i * m + c]);
      os << ',' << buf;
    }
    os << "\n";
  }
}

}  // namespace slowfast
