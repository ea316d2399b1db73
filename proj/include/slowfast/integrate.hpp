#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "slowfast/noise.hpp"
#include "slowfast/system.hpp"

namespace slowfast {

// Called after every fast substep with the time reached and current state.
using SubstepObserver =
    std::function<void(double t, std::span<const double> x, std::span<const double> y)>;

struct IntegrateOptions {
  int save_every = 1;           // record every save_every-th slow step
  double blowup_norm = 1e12;    // abort threshold on |state|
  SubstepObserver observer;     // optional hook (martingale accumulators etc.)
};

// Advance the coupled system on [0, T]:
//   slow: explicit midpoint on dx = (A x + f(x,y)) dt, fast state read at the
//         half-substep;
//   fast: exponential Euler -- exact e^{B h/eps} propagator and exact noise
//         covariance (OuTransition), g frozen over the substep;
//   substeps per slow step: ceil(10 dt_slow / eps), rounded up to even.
// Wiener increments are consumed from the stream by interval sums, so the
// substep must be an integer multiple of stream.dt(). On blow-up the partial
// path is returned with blew_up set.
SamplePath integrate_slowfast(const SlowFastSystem& system,
                              std::span<const double> x0,
                              std::span<const double> y0, double T, double dt_slow,
                              const NoiseStream& stream,
                              const IntegrateOptions& opts = {});

struct MomentSanityReport {
  double mean_sup_sq = 0.0;  // E sup_{t<=T} |(x,y)|^2
  double ratio = 0.0;        // mean_sup_sq / (|z0|^2 + 1)
  int n_replicas = 0;
};

// Ensemble estimate of E sup_{t<=T} |(x,y)|^2 against the |z0|^2 + 1 envelope
// (the +1 absorbs the additive noise floor).
MomentSanityReport moment_sanity(const SlowFastSystem& system,
                                 std::span<const double> x0,
                                 std::span<const double> y0, double T,
                                 double dt_slow, int n_replicas,
                                 std::uint64_t master_seed);

}  // namespace slowfast
