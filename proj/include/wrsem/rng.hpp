#pragma once

#include <array>
#include <cstdint>

namespace wrsem::rng {

// Philox4x32-10 counter-based generator. A draw is a pure function of
// (key, counter), so independent streams are realized as disjoint counter
// blocks under one seed-derived key: counter = (slot, row, replicate, tag).
// Channel independence across environments and replicates is exact by
// construction and draws can be replayed from any position.
struct Key {
  uint32_t k0 = 0;
  uint32_t k1 = 0;
};

struct Counter {
  uint32_t slot = 0;
  uint32_t row = 0;
  uint32_t replicate = 0;
  uint32_t tag = 0;
};

using Block = std::array<uint32_t, 4>;

Block philox4x32(const Counter& ctr, const Key& key);

inline Key key_from_seed(uint64_t seed) {
  return Key{static_cast<uint32_t>(seed & 0xffffffffu),
             static_cast<uint32_t>(seed >> 32)};
}

// Stream purposes; packed into the counter tag together with the
// environment index so no two (purpose, env) pairs share counters.
enum class Purpose : uint32_t {
  env_rows = 1,
  transfer_draw = 2,
  mc_event = 3,
  conditional_resample = 4,
  generic = 5,
  weights = 6,
};

inline uint32_t make_tag(Purpose purpose, uint32_t env_index) {
  return (static_cast<uint32_t>(purpose) << 16) | (env_index & 0xffffu);
}

inline uint64_t to_u64(uint32_t lo, uint32_t hi) {
  return static_cast<uint64_t>(lo) | (static_cast<uint64_t>(hi) << 32);
}

// Open-interval uniform on (0,1): 52 mantissa bits, offset by half a step
// so 0 and 1 are unreachable (the normal inverse cdf needs both excluded;
// the largest value, 1 - 2^-53, is exactly representable).
inline double u64_to_unit(uint64_t x) {
  return (static_cast<double>(x >> 12) + 0.5) * 0x1.0p-52;
}

// Standard normal quantile (Acklam rational approximation),
// |error| < 1.3e-9. The same polynomial, evaluated with explicit FMA,
// is used by the vectorized kernels so scalar and SIMD paths agree
// bit-for-bit. For MC use the approximation error is far below any
// tolerance in this project.
double normal_icdf(double u);

// Branch pieces of normal_icdf, shared with the vectorized kernels.
double normal_icdf_central(double q);        // q = u - 1/2, |q| <= 0.47575
double normal_icdf_tail_lower(double u);     // u < 0.02425; negate for upper
inline constexpr double kNormalIcdfPLow = 0.02425;

// Sequential view over one (replicate, tag) stream. A (tag, replicate)
// pair must be consumed either sequentially through Stream or row-addressed
// through stream_u64_at, never both: the two schemes map onto the counter
// space differently.
class Stream {
 public:
  Stream(uint64_t seed, uint32_t tag, uint32_t replicate = 0)
      : key_(key_from_seed(seed)), replicate_(replicate), tag_(tag) {}

  uint64_t next_u64() {
    if (phase_ == 0) {
      Counter c{static_cast<uint32_t>(block_ & 0xffffffffu),
                static_cast<uint32_t>(block_ >> 32), replicate_, tag_};
      last_ = philox4x32(c, key_);
      ++block_;
      phase_ = 1;
      return to_u64(last_[0], last_[1]);
    }
    phase_ = 0;
    return to_u64(last_[2], last_[3]);
  }

  double next_unit() { return u64_to_unit(next_u64()); }
  double next_normal() { return normal_icdf(next_unit()); }

  // Index of the next unconsumed u64 in this stream.
  uint64_t position() const { return block_ * 2 - (phase_ ? 1 : 0); }

  void skip_to(uint64_t u64_index) {
    block_ = u64_index / 2;
    phase_ = 0;
    if (u64_index % 2 != 0) {
      next_u64();
    }
  }

 private:
  Key key_;
  uint32_t replicate_;
  uint32_t tag_;
  uint64_t block_ = 0;
  Block last_{};
  int phase_ = 0;
};

// Random-access u64 draw: element `index` of the stream identified by
// (seed, tag, replicate, row). Used by the block kernels.
inline uint64_t stream_u64_at(const Key& key, uint32_t tag, uint32_t replicate,
                              uint32_t row, uint32_t u64_index) {
  Counter c{u64_index / 2, row, replicate, tag};
  Block b = philox4x32(c, key);
  return (u64_index % 2 == 0) ? to_u64(b[0], b[1]) : to_u64(b[2], b[3]);
}

}  // namespace wrsem::rng
