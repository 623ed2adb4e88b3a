#include "wrsem/kernels.hpp"

#include <atomic>
#include <stdexcept>

namespace wrsem::kernels {

namespace {

Isa detect_isa() {
#if WRSEM_HAVE_AVX2_SOURCE && (defined(__x86_64__) || defined(_M_X64))
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
    return Isa::avx2;
  }
#endif
  return Isa::scalar;
}

std::atomic<Isa> g_isa{detect_isa()};

}  // namespace

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

bool avx2_supported() {
#if WRSEM_HAVE_AVX2_SOURCE && (defined(__x86_64__) || defined(_M_X64))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() { return g_isa.load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (isa == Isa::avx2 && !avx2_supported()) {
    throw std::invalid_argument("avx2 kernels not available on this host");
  }
  g_isa.store(isa, std::memory_order_relaxed);
}

void normal_icdf_batch(const double* u, double* z, std::size_t n) {
#if WRSEM_HAVE_AVX2_SOURCE && (defined(__x86_64__) || defined(_M_X64))
  if (active_isa() == Isa::avx2) return avx2::normal_icdf_batch(u, z, n);
#endif
  scalar::normal_icdf_batch(u, z, n);
}

void joint_gram_add(const double* rows, std::size_t nrows, std::size_t d,
                    double* sums, double* comps) {
#if WRSEM_HAVE_AVX2_SOURCE && (defined(__x86_64__) || defined(_M_X64))
  if (active_isa() == Isa::avx2) return avx2::joint_gram_add(rows, nrows, d, sums, comps);
#endif
  scalar::joint_gram_add(rows, nrows, d, sums, comps);
}

void recipe_rows(const RowRecipe& recipe, rng::Key key, uint32_t tag,
                 uint32_t replicate, uint64_t row0, std::size_t n, double* out) {
#if WRSEM_HAVE_AVX2_SOURCE && (defined(__x86_64__) || defined(_M_X64))
  if (active_isa() == Isa::avx2) {
    return avx2::recipe_rows(recipe, key, tag, replicate, row0, n, out);
  }
#endif
  scalar::recipe_rows(recipe, key, tag, replicate, row0, n, out);
}

void recipe_gram(const RowRecipe& recipe, rng::Key key, uint32_t tag,
                 uint32_t replicate, uint64_t row0, std::size_t n,
                 double* sums, double* comps) {
#if WRSEM_HAVE_AVX2_SOURCE && (defined(__x86_64__) || defined(_M_X64))
  if (active_isa() == Isa::avx2) {
    return avx2::recipe_gram(recipe, key, tag, replicate, row0, n, sums, comps);
  }
#endif
  scalar::recipe_gram(recipe, key, tag, replicate, row0, n, sums, comps);
}

}  // namespace wrsem::kernels
