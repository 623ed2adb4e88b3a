#include "wrsem/rng.hpp"

#include <cmath>

namespace wrsem::rng {

namespace {

constexpr uint32_t kMul0 = 0xD2511F53u;
constexpr uint32_t kMul1 = 0xCD9E8D57u;
constexpr uint32_t kWeyl0 = 0x9E3779B9u;
constexpr uint32_t kWeyl1 = 0xBB67AE85u;

inline void round_once(uint32_t& x0, uint32_t& x1, uint32_t& x2, uint32_t& x3,
                       uint32_t k0, uint32_t k1) {
  const uint64_t p0 = static_cast<uint64_t>(kMul0) * x0;
  const uint64_t p1 = static_cast<uint64_t>(kMul1) * x2;
  const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32);
  const uint32_t lo0 = static_cast<uint32_t>(p0);
  const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32);
  const uint32_t lo1 = static_cast<uint32_t>(p1);
  x0 = hi1 ^ x1 ^ k0;
  x1 = lo1;
  x2 = hi0 ^ x3 ^ k1;
  x3 = lo0;
}

}  // namespace

Block philox4x32(const Counter& ctr, const Key& key) {
  uint32_t x0 = ctr.slot, x1 = ctr.row, x2 = ctr.replicate, x3 = ctr.tag;
  uint32_t k0 = key.k0, k1 = key.k1;
  for (int r = 0; r < 9; ++r) {
    round_once(x0, x1, x2, x3, k0, k1);
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  round_once(x0, x1, x2, x3, k0, k1);
  return Block{x0, x1, x2, x3};
}

namespace {

// Acklam's rational approximation for the standard normal quantile.
constexpr double kA0 = -3.969683028665376e+01;
constexpr double kA1 = 2.209460984245205e+02;
constexpr double kA2 = -2.759285104469687e+02;
constexpr double kA3 = 1.383577518672690e+02;
constexpr double kA4 = -3.066479806614716e+01;
constexpr double kA5 = 2.506628277459239e+00;

constexpr double kB0 = -5.447609879822406e+01;
constexpr double kB1 = 1.615858368580409e+02;
constexpr double kB2 = -1.556989798598866e+02;
constexpr double kB3 = 6.680131188771972e+01;
constexpr double kB4 = -1.328068155288572e+01;

constexpr double kC0 = -7.784894002430293e-03;
constexpr double kC1 = -3.223964580411365e-01;
constexpr double kC2 = -2.400758277161838e+00;
constexpr double kC3 = -2.549732539343734e+00;
constexpr double kC4 = 4.374664141464968e+00;
constexpr double kC5 = 2.938163982698783e+00;

constexpr double kD0 = 7.784695709041462e-03;
constexpr double kD1 = 3.224671290700398e-01;
constexpr double kD2 = 2.445134137142996e+00;
constexpr double kD3 = 3.754408661907416e+00;

constexpr double kPLow = 0.02425;

double tail_icdf(double q) {
  // q = sqrt(-2 log(min(u, 1-u))), valid for the lower tail; callers negate.
  double num = std::fma(kC0, q, kC1);
  num = std::fma(num, q, kC2);
  num = std::fma(num, q, kC3);
  num = std::fma(num, q, kC4);
  num = std::fma(num, q, kC5);
  double den = std::fma(kD0, q, kD1);
  den = std::fma(den, q, kD2);
  den = std::fma(den, q, kD3);
  den = std::fma(den, q, 1.0);
  return num / den;
}

}  // namespace

double normal_icdf_central(double q) {
  // Central branch in q = u - 1/2, shared with the SIMD kernel; the FMA
  // chain must stay identical to the vector path.
  const double r = q * q;
  double num = std::fma(kA0, r, kA1);
  num = std::fma(num, r, kA2);
  num = std::fma(num, r, kA3);
  num = std::fma(num, r, kA4);
  num = std::fma(num, r, kA5);
  double den = std::fma(kB0, r, kB1);
  den = std::fma(den, r, kB2);
  den = std::fma(den, r, kB3);
  den = std::fma(den, r, kB4);
  den = std::fma(den, r, 1.0);
  return q * num / den;
}

double normal_icdf_tail_lower(double u) {
  return tail_icdf(std::sqrt(-2.0 * std::log(u)));
}

double normal_icdf(double u) {
  if (u < kPLow) {
    return normal_icdf_tail_lower(u);
  }
  if (u > 1.0 - kPLow) {
    return -normal_icdf_tail_lower(1.0 - u);
  }
  return normal_icdf_central(u - 0.5);
}

}  // namespace wrsem::rng
