#include "stackmi/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace stackmi {

namespace {

constexpr uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr uint32_t kWeyl0 = 0x9E3779B9u;
constexpr uint32_t kWeyl1 = 0xBB67AE85u;

inline void philox_round(std::array<uint32_t, 4>& x, uint32_t k0, uint32_t k1) {
  uint64_t p0 = uint64_t(kPhiloxM0) * x[0];
  uint64_t p1 = uint64_t(kPhiloxM1) * x[2];
  uint32_t hi0 = uint32_t(p0 >> 32), lo0 = uint32_t(p0);
  uint32_t hi1 = uint32_t(p1 >> 32), lo1 = uint32_t(p1);
  x = {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
}

inline std::array<uint32_t, 4> philox10(std::array<uint32_t, 4> ctr, uint32_t k0, uint32_t k1) {
  for (int r = 0; r < 10; ++r) {
    philox_round(ctr, k0, k1);
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return ctr;
}

// splitmix64 finalizer, used to derive substream identifiers
inline uint64_t mix64(uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(uint64_t seed, uint64_t stream)
    : seed_(seed), stream_(stream), block_pos_(4) {
  counter_ = {0u, 0u, uint32_t(stream), uint32_t(stream >> 32)};
  block_ = {0u, 0u, 0u, 0u};
}

Rng Rng::split(uint64_t k) const { return Rng(seed_, mix64(stream_ ^ mix64(k))); }

void Rng::refill() {
  block_ = philox10(counter_, uint32_t(seed_), uint32_t(seed_ >> 32));
  if (++counter_[0] == 0) ++counter_[1];  // 64-bit position
  block_pos_ = 0;
}

uint32_t Rng::next_u32() {
  if (block_pos_ >= 4) refill();
  return block_[block_pos_++];
}

uint64_t Rng::next_u64() {
  uint64_t lo = next_u32();
  uint64_t hi = next_u32();
  return (hi << 32) | lo;
}

double Rng::uniform() {
  return double(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open() { return 1.0 - uniform(); }

double Rng::normal() {
  // Box-Muller, one deviate per call; keeps the stream use count fixed.
  double u1 = uniform_open();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  return r * std::cos(6.283185307179586476925286766559 * u2);
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be > 0");
  if (shape < 1.0) {
    double u = uniform_open();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  // Marsaglia-Tsang squeeze
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    double u = uniform_open();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::size_t Rng::categorical(const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("categorical: negative weight");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("categorical: weights sum to zero");
  double u = uniform() * total;
  double cum = 0.0;
  std::size_t last = weights.size() - 1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    cum += weights[i];
    if (u < cum && weights[i] > 0.0) return i;
  }
  while (last > 0 && weights[last] == 0.0) --last;
  return last;
}

}  // namespace stackmi
