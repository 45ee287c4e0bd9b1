#pragma once

#include <cstdint>
#include <vector>

#include "mixlab/errors.hpp"
#include "mixlab/rational.hpp"

namespace mixlab {

// Counter-based deterministic generator ("cbrng-sm64"): output i of stream
// (seed, stream) is a SplitMix64-style mix of the triple. Streams never
// share state, so trials indexed by stream are reproducible and independent
// of scheduling.
class CounterRng {
 public:
  CounterRng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}

  uint64_t next_u64() { return mix(seed_, stream_, counter_++); }

  // Unbiased integer in [0, n) via rejection sampling.
  uint64_t uniform_below(uint64_t n) {
    if (n == 0) fail(ErrorKind::InvalidArgument, "uniform_below(0)");
    uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      uint64_t u = next_u64();
      if (u >= threshold) return u % n;
    }
  }

  double next_unit() {  // [0,1) with 53-bit resolution
    return (next_u64() >> 11) * 0x1.0p-53;
  }

  static uint64_t mix(uint64_t a, uint64_t b, uint64_t c) {
    uint64_t z = a;
    z += 0x9e3779b97f4a7c15ULL * (b + 1);
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z += 0x94d049bb133111ebULL * (c + 1);
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    z *= 0xd6e8feb86659fd93ULL;
    z ^= z >> 32;
    return z;
  }

 private:
  uint64_t seed_;
  uint64_t stream_;
  uint64_t counter_ = 0;
};

// Sampler over a finite rational distribution. When the probabilities fit a
// common denominator D <= 2^62 an unbiased draw in [0, D) picks the outcome,
// so frequencies match the rationals exactly; otherwise a 64-bit uniform is
// compared against the exact cumulative sums (bias below 2^-64 per outcome).
class RationalSampler {
 public:
  explicit RationalSampler(const RatVec& probs) {
    mpz_class den = 1;
    for (const Rat& p : probs)
      mpz_lcm(den.get_mpz_t(), den.get_mpz_t(), p.get_den_mpz_t());
    Rat total = 0;
    for (const Rat& p : probs) total += p;
    if (total != 1) fail(ErrorKind::WeightSum, "sampler probabilities do not sum to 1");
    if (mpz_sizeinbase(den.get_mpz_t(), 2) <= 62) {
      mpz_class cum = 0;
      for (const Rat& p : probs) {
        cum += p.get_num() * (den / p.get_den());
        cum_int_.push_back(mpz_get_ux(cum));
      }
      d_ = mpz_get_ux(den);
    } else {
      Rat cum = 0;
      for (const Rat& p : probs) {
        cum += p;
        cum_rat_.push_back(cum);
      }
    }
  }

  size_t sample(CounterRng& rng) const {
    if (d_ > 0) {
      uint64_t r = rng.uniform_below(d_);
      size_t lo = 0, hi = cum_int_.size() - 1;
      while (lo < hi) {
        size_t mid = (lo + hi) / 2;
        if (r < cum_int_[mid]) hi = mid; else lo = mid + 1;
      }
      return lo;
    }
    Rat r = Rat(rng.next_u64()) / Rat(mpz_class(1) << 64);
    size_t lo = 0, hi = cum_rat_.size() - 1;
    while (lo < hi) {
      size_t mid = (lo + hi) / 2;
      if (r < cum_rat_[mid]) hi = mid; else lo = mid + 1;
    }
    return lo;
  }

 private:
  static uint64_t mpz_get_ux(const mpz_class& z) {
    // values are < 2^62 by construction
    mpz_class q = z >> 32;
    return (static_cast<uint64_t>(q.get_ui()) << 32) |
           static_cast<uint64_t>(mpz_class(z & 0xffffffff).get_ui());
  }

  std::vector<uint64_t> cum_int_;
  RatVec cum_rat_;
  uint64_t d_ = 0;
};

}  // namespace mixlab
