#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <vector>

namespace stackmi {

// Counter-based random stream (Philox4x32-10). Streams are cheap to fork:
// split(k) derives an independent substream without consuming state, so every
// stochastic operation can own an explicit stream and replications can run in
// parallel while staying bit-reproducible.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0);

  // Independent substream for child index k. Pure function of (seed, stream,
  // k): does not depend on how much of this stream has been consumed.
  Rng split(uint64_t k) const;

  uint32_t next_u32();
  uint64_t next_u64();

  double uniform();       // [0, 1)
  double uniform_open();  // (0, 1]
  double normal();        // standard normal
  double gamma(double shape);  // unit scale, shape > 0
  double chi_square(double df) { return 2.0 * gamma(0.5 * df); }
  bool bernoulli(double p) { return uniform() < p; }

  // Index drawn proportional to nonnegative weights; their sum must be > 0.
  std::size_t categorical(const std::vector<double>& weights);

  uint64_t seed_value() const { return seed_; }
  uint64_t stream_id() const { return stream_; }

 private:
  void refill();

  uint64_t seed_;
  uint64_t stream_;
  std::array<uint32_t, 4> counter_;  // [pos_lo, pos_hi, stream_lo, stream_hi]
  std::array<uint32_t, 4> block_;
  int block_pos_;
};

}  // namespace stackmi
