#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "wrsem/rng.hpp"

namespace wrsem::kernels {

// Runtime-dispatched inner loops. Every kernel has a scalar reference
// implementation and (on x86-64) an AVX2 variant; the two are
// equivalence-tested against each other. Dispatch is process-wide and
// resolved once, so a run is deterministic for a fixed ISA choice.
enum class Isa { scalar, avx2 };

const char* isa_name(Isa isa);
bool avx2_supported();
Isa active_isa();
// Throws std::invalid_argument if the requested ISA is unavailable.
void force_isa(Isa isa);

// ---------------------------------------------------------------------------
// Packed symmetric second-moment layout: upper triangle of v v^T for a
// d-dimensional row v, indexed with u <= v.
inline std::size_t packed_len(std::size_t d) { return d * (d + 1) / 2; }
inline std::size_t packed_index(std::size_t u, std::size_t v, std::size_t d) {
  return u * d - u * (u - 1) / 2 + (v - u);
}

// Standard normal quantiles for a batch of open-unit uniforms.
void normal_icdf_batch(const double* u, double* z, std::size_t n);

// Neumaier-compensated accumulation of the joint second-moment sums of
// `nrows` d-dimensional rows (row-major). sums/comps have packed_len(d)
// entries and carry the running compensated state across calls.
void joint_gram_add(const double* rows, std::size_t nrows, std::size_t d,
                    double* sums, double* comps);

// ---------------------------------------------------------------------------
// Row recipe: each sample row is v = mean + T * z where the entries of z are
// independent base draws. Base draw j of row r consumes the u64 at
// (key, tag, replicate, row=r, index=j).
struct DrawSpec {
  enum class Kind { std_normal, unit_uniform, two_point };
  Kind kind = Kind::std_normal;
  double a = 0.0;   // two_point: low value
  double b = 0.0;   // two_point: high value
  double prob = 0.5;  // two_point: P(value == a)
};

struct RowRecipe {
  std::size_t dim = 0;     // d
  std::size_t ndraws = 0;  // entries of z per row
  std::vector<DrawSpec> draws;        // size ndraws
  std::vector<double> transform;      // d x ndraws, row-major
  std::vector<double> mean;           // d
};

// Generate rows [row0, row0+n) into out (n x d, row-major).
void recipe_rows(const RowRecipe& recipe, rng::Key key, uint32_t tag,
                 uint32_t replicate, uint64_t row0, std::size_t n, double* out);

// Fused generate-and-accumulate of the joint packed second-moment sums.
void recipe_gram(const RowRecipe& recipe, rng::Key key, uint32_t tag,
                 uint32_t replicate, uint64_t row0, std::size_t n,
                 double* sums, double* comps);

// ---------------------------------------------------------------------------
// Scalar reference entry points (always available; used by equivalence tests).
namespace scalar {
void normal_icdf_batch(const double* u, double* z, std::size_t n);
void joint_gram_add(const double* rows, std::size_t nrows, std::size_t d,
                    double* sums, double* comps);
void recipe_rows(const RowRecipe&, rng::Key, uint32_t tag, uint32_t replicate,
                 uint64_t row0, std::size_t n, double* out);
void recipe_gram(const RowRecipe&, rng::Key, uint32_t tag, uint32_t replicate,
                 uint64_t row0, std::size_t n, double* sums, double* comps);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
void normal_icdf_batch(const double* u, double* z, std::size_t n);
void joint_gram_add(const double* rows, std::size_t nrows, std::size_t d,
                    double* sums, double* comps);
void recipe_rows(const RowRecipe&, rng::Key, uint32_t tag, uint32_t replicate,
                 uint64_t row0, std::size_t n, double* out);
void recipe_gram(const RowRecipe&, rng::Key, uint32_t tag, uint32_t replicate,
                 uint64_t row0, std::size_t n, double* sums, double* comps);
}  // namespace avx2
#endif

// Neumaier compensated addition; value of the accumulator is sum + comp.
inline void neumaier_add(double& sum, double& comp, double x) {
  const double t = sum + x;
  if (std::abs(sum) >= std::abs(x)) {
    comp += (sum - t) + x;
  } else {
    comp += (x - t) + sum;
  }
  sum = t;
}

}  // namespace wrsem::kernels
