// AVX2 variants of the sampling and accumulation kernels. Compiled with
// -mavx2 -mfma; callers guard execution behind the runtime dispatch in
// kernels.cpp. Each kernel mirrors the scalar reference exactly: the same
// Philox counters, the same polynomial evaluation order, the same
// compensated accumulation, so the two paths agree to a few ulp
// (bit-for-bit for the normal quantile itself).

#include <immintrin.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "wrsem/kernels.hpp"

namespace wrsem::kernels::avx2 {

namespace {

constexpr uint32_t kMul0 = 0xD2511F53u;
constexpr uint32_t kMul1 = 0xCD9E8D57u;
constexpr uint32_t kWeyl0 = 0x9E3779B9u;
constexpr uint32_t kWeyl1 = 0xBB67AE85u;

// Four Philox4x32 blocks in parallel, one per 64-bit slot (values are
// zero-extended u32 so _mm256_mul_epu32 yields the full 32x32 products).
struct P4 {
  __m256i x0, x1, x2, x3;
};

inline void p4_round(P4& s, uint32_t k0, uint32_t k1) {
  const __m256i m0 = _mm256_set1_epi64x(kMul0);
  const __m256i m1 = _mm256_set1_epi64x(kMul1);
  const __m256i lo32 = _mm256_set1_epi64x(0xffffffffLL);
  const __m256i p0 = _mm256_mul_epu32(s.x0, m0);
  const __m256i p1 = _mm256_mul_epu32(s.x2, m1);
  const __m256i hi0 = _mm256_srli_epi64(p0, 32);
  const __m256i lo0 = _mm256_and_si256(p0, lo32);
  const __m256i hi1 = _mm256_srli_epi64(p1, 32);
  const __m256i lo1 = _mm256_and_si256(p1, lo32);
  const __m256i k0v = _mm256_set1_epi64x(k0);
  const __m256i k1v = _mm256_set1_epi64x(k1);
  s.x0 = _mm256_xor_si256(_mm256_xor_si256(hi1, s.x1), k0v);
  s.x1 = lo1;
  s.x2 = _mm256_xor_si256(_mm256_xor_si256(hi0, s.x3), k1v);
  s.x3 = lo0;
}

// u64 pair (even/odd index) of four blocks with counters
// (slot, row0+lane, replicate, tag).
inline void p4_generate(rng::Key key, uint32_t tag, uint32_t replicate,
                        uint64_t row0, uint32_t slot, __m256i& even,
                        __m256i& odd) {
  P4 s;
  s.x0 = _mm256_set1_epi64x(slot);
  s.x1 = _mm256_set_epi64x(
      static_cast<long long>(static_cast<uint32_t>(row0 + 3)),
      static_cast<long long>(static_cast<uint32_t>(row0 + 2)),
      static_cast<long long>(static_cast<uint32_t>(row0 + 1)),
      static_cast<long long>(static_cast<uint32_t>(row0)));
  s.x2 = _mm256_set1_epi64x(replicate);
  s.x3 = _mm256_set1_epi64x(tag);
  uint32_t k0 = key.k0, k1 = key.k1;
  for (int r = 0; r < 9; ++r) {
    p4_round(s, k0, k1);
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  p4_round(s, k0, k1);
  even = _mm256_or_si256(s.x0, _mm256_slli_epi64(s.x1, 32));
  odd = _mm256_or_si256(s.x2, _mm256_slli_epi64(s.x3, 32));
}

inline __m256d u64_to_unit4(__m256i x) {
  const __m256i sh = _mm256_srli_epi64(x, 12);
  const __m256i magic = _mm256_set1_epi64x(0x4330000000000000LL);
  const __m256d as52 = _mm256_sub_pd(
      _mm256_castsi256_pd(_mm256_or_si256(sh, magic)),
      _mm256_set1_pd(0x1.0p52));
  return _mm256_mul_pd(_mm256_add_pd(as52, _mm256_set1_pd(0.5)),
                       _mm256_set1_pd(0x1.0p-52));
}

// Acklam central-branch coefficients; must match rng.cpp.
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

inline __m256d icdf4(__m256d u) {
  const __m256d q = _mm256_sub_pd(u, _mm256_set1_pd(0.5));
  const __m256d r = _mm256_mul_pd(q, q);
  __m256d num = _mm256_fmadd_pd(_mm256_set1_pd(kA0), r, _mm256_set1_pd(kA1));
  num = _mm256_fmadd_pd(num, r, _mm256_set1_pd(kA2));
  num = _mm256_fmadd_pd(num, r, _mm256_set1_pd(kA3));
  num = _mm256_fmadd_pd(num, r, _mm256_set1_pd(kA4));
  num = _mm256_fmadd_pd(num, r, _mm256_set1_pd(kA5));
  __m256d den = _mm256_fmadd_pd(_mm256_set1_pd(kB0), r, _mm256_set1_pd(kB1));
  den = _mm256_fmadd_pd(den, r, _mm256_set1_pd(kB2));
  den = _mm256_fmadd_pd(den, r, _mm256_set1_pd(kB3));
  den = _mm256_fmadd_pd(den, r, _mm256_set1_pd(kB4));
  den = _mm256_fmadd_pd(den, r, _mm256_set1_pd(1.0));
  const __m256d zc = _mm256_div_pd(_mm256_mul_pd(q, num), den);

  const __m256d absq = _mm256_andnot_pd(_mm256_set1_pd(-0.0), q);
  const __m256d lim = _mm256_set1_pd(0.5 - rng::kNormalIcdfPLow);
  const int tails =
      _mm256_movemask_pd(_mm256_cmp_pd(absq, lim, _CMP_GT_OQ));
  if (tails == 0) {
    return zc;
  }
  alignas(32) double ub[4], zb[4];
  _mm256_store_pd(ub, u);
  _mm256_store_pd(zb, zc);
  for (int l = 0; l < 4; ++l) {
    if (tails & (1 << l)) {
      zb[l] = rng::normal_icdf(ub[l]);
    }
  }
  return _mm256_load_pd(zb);
}

inline void neumaier_add4(__m256d& sum, __m256d& comp, __m256d x) {
  const __m256d t = _mm256_add_pd(sum, x);
  const __m256d signmask = _mm256_set1_pd(-0.0);
  const __m256d as = _mm256_andnot_pd(signmask, sum);
  const __m256d ax = _mm256_andnot_pd(signmask, x);
  const __m256d m = _mm256_cmp_pd(as, ax, _CMP_GE_OQ);
  const __m256d big = _mm256_blendv_pd(x, sum, m);
  const __m256d small = _mm256_blendv_pd(sum, x, m);
  comp = _mm256_add_pd(comp,
                       _mm256_add_pd(_mm256_sub_pd(big, t), small));
  sum = t;
}

// Per-call lane accumulator: 4 parallel (sum, comp) states per packed entry,
// merged into the caller's compensated state afterwards in lane order.
struct LaneGram {
  std::vector<__m256d> sums, comps;
  explicit LaneGram(std::size_t len)
      : sums(len, _mm256_setzero_pd()), comps(len, _mm256_setzero_pd()) {}
  void merge_into(double* out_sums, double* out_comps, std::size_t len) const {
    alignas(32) double s[4], c[4];
    for (std::size_t i = 0; i < len; ++i) {
      _mm256_store_pd(s, sums[i]);
      _mm256_store_pd(c, comps[i]);
      for (int l = 0; l < 4; ++l) {
        neumaier_add(out_sums[i], out_comps[i], s[l]);
        neumaier_add(out_sums[i], out_comps[i], c[l]);
      }
    }
  }
};

inline void accumulate_coords(const __m256d* vcoord, std::size_t d,
                              LaneGram& lanes) {
  std::size_t idx = 0;
  for (std::size_t u = 0; u < d; ++u) {
    for (std::size_t w = u; w < d; ++w, ++idx) {
      neumaier_add4(lanes.sums[idx], lanes.comps[idx],
                    _mm256_mul_pd(vcoord[u], vcoord[w]));
    }
  }
}

inline __m256d draw_value4(const DrawSpec& spec, __m256d u) {
  switch (spec.kind) {
    case DrawSpec::Kind::std_normal:
      return icdf4(u);
    case DrawSpec::Kind::unit_uniform:
      return u;
    case DrawSpec::Kind::two_point: {
      const __m256d below =
          _mm256_cmp_pd(u, _mm256_set1_pd(spec.prob), _CMP_LT_OQ);
      return _mm256_blendv_pd(_mm256_set1_pd(spec.b), _mm256_set1_pd(spec.a),
                              below);
    }
  }
  return _mm256_setzero_pd();
}

// Draw the full z-vector for rows row0..row0+3 and apply the affine
// transform; vcoord[c] holds coordinate c across the 4 rows.
inline void recipe_quad_coords(const RowRecipe& recipe, rng::Key key,
                               uint32_t tag, uint32_t replicate, uint64_t row0,
                               __m256d* zbuf, __m256d* vcoord) {
  const std::size_t m = recipe.ndraws;
  const std::size_t d = recipe.dim;
  std::size_t j = 0;
  for (; j + 1 < m; j += 2) {
    __m256i even, odd;
    p4_generate(key, tag, replicate, row0, static_cast<uint32_t>(j / 2), even,
                odd);
    zbuf[j] = draw_value4(recipe.draws[j], u64_to_unit4(even));
    zbuf[j + 1] = draw_value4(recipe.draws[j + 1], u64_to_unit4(odd));
  }
  if (j < m) {
    __m256i even, odd;
    p4_generate(key, tag, replicate, row0, static_cast<uint32_t>(j / 2), even,
                odd);
    zbuf[j] = draw_value4(recipe.draws[j], u64_to_unit4(even));
  }
  for (std::size_t c = 0; c < d; ++c) {
    const double* trow = recipe.transform.data() + c * m;
    __m256d acc = _mm256_set1_pd(recipe.mean[c]);
    for (std::size_t k = 0; k < m; ++k) {
      acc = _mm256_fmadd_pd(_mm256_set1_pd(trow[k]), zbuf[k], acc);
    }
    vcoord[c] = acc;
  }
}

}  // namespace

void normal_icdf_batch(const double* u, double* z, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(z + i, icdf4(_mm256_loadu_pd(u + i)));
  }
  for (; i < n; ++i) {
    z[i] = rng::normal_icdf(u[i]);
  }
}

void joint_gram_add(const double* rows, std::size_t nrows, std::size_t d,
                    double* sums, double* comps) {
  const std::size_t len = packed_len(d);
  const std::size_t quads = nrows / 4;
  if (quads > 0) {
    LaneGram lanes(len);
    std::vector<__m256d> vcoord(d);
    for (std::size_t qd = 0; qd < quads; ++qd) {
      const double* base = rows + qd * 4 * d;
      for (std::size_t c = 0; c < d; ++c) {
        vcoord[c] = _mm256_set_pd(base[3 * d + c], base[2 * d + c],
                                  base[1 * d + c], base[c]);
      }
      accumulate_coords(vcoord.data(), d, lanes);
    }
    lanes.merge_into(sums, comps, len);
  }
  scalar::joint_gram_add(rows + quads * 4 * d, nrows - quads * 4, d, sums,
                         comps);
}

void recipe_rows(const RowRecipe& recipe, rng::Key key, uint32_t tag,
                 uint32_t replicate, uint64_t row0, std::size_t n,
                 double* out) {
  const std::size_t d = recipe.dim;
  std::vector<__m256d> zbuf(recipe.ndraws), vcoord(d);
  alignas(32) double buf[4];
  std::size_t r = 0;
  for (; r + 4 <= n; r += 4) {
    recipe_quad_coords(recipe, key, tag, replicate, row0 + r, zbuf.data(),
                       vcoord.data());
    for (std::size_t c = 0; c < d; ++c) {
      _mm256_store_pd(buf, vcoord[c]);
      for (int l = 0; l < 4; ++l) {
        out[(r + l) * d + c] = buf[l];
      }
    }
  }
  if (r < n) {
    scalar::recipe_rows(recipe, key, tag, replicate, row0 + r, n - r,
                        out + r * d);
  }
}

void recipe_gram(const RowRecipe& recipe, rng::Key key, uint32_t tag,
                 uint32_t replicate, uint64_t row0, std::size_t n,
                 double* sums, double* comps) {
  const std::size_t d = recipe.dim;
  const std::size_t len = packed_len(d);
  const std::size_t quads = n / 4;
  if (quads > 0) {
    LaneGram lanes(len);
    std::vector<__m256d> zbuf(recipe.ndraws), vcoord(d);
    for (std::size_t qd = 0; qd < quads; ++qd) {
      recipe_quad_coords(recipe, key, tag, replicate, row0 + qd * 4,
                         zbuf.data(), vcoord.data());
      accumulate_coords(vcoord.data(), d, lanes);
    }
    lanes.merge_into(sums, comps, len);
  }
  scalar::recipe_gram(recipe, key, tag, replicate, row0 + quads * 4,
                      n - quads * 4, sums, comps);
}

}  // namespace wrsem::kernels::avx2
