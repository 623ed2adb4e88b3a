#include <cassert>
#include <cmath>
#include <vector>

#include "wrsem/kernels.hpp"

namespace wrsem::kernels::scalar {

void normal_icdf_batch(const double* u, double* z, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = rng::normal_icdf(u[i]);
  }
}

void joint_gram_add(const double* rows, std::size_t nrows, std::size_t d,
                    double* sums, double* comps) {
  for (std::size_t r = 0; r < nrows; ++r) {
    const double* v = rows + r * d;
    std::size_t idx = 0;
    for (std::size_t u = 0; u < d; ++u) {
      const double vu = v[u];
      for (std::size_t w = u; w < d; ++w, ++idx) {
        neumaier_add(sums[idx], comps[idx], vu * v[w]);
      }
    }
  }
}

namespace {

inline double base_draw(const DrawSpec& spec, uint64_t bits) {
  const double u = rng::u64_to_unit(bits);
  switch (spec.kind) {
    case DrawSpec::Kind::std_normal:
      return rng::normal_icdf(u);
    case DrawSpec::Kind::unit_uniform:
      return u;
    case DrawSpec::Kind::two_point:
      return u < spec.prob ? spec.a : spec.b;
  }
  return 0.0;
}

inline void recipe_row_values(const RowRecipe& recipe, const rng::Key& key,
                              uint32_t tag, uint32_t replicate, uint64_t row,
                              double* scratch, double* v) {
  const std::size_t d = recipe.dim;
  const std::size_t m = recipe.ndraws;
  for (std::size_t j = 0; j < m; ++j) {
    scratch[j] = base_draw(
        recipe.draws[j],
        rng::stream_u64_at(key, tag, replicate, static_cast<uint32_t>(row),
                           static_cast<uint32_t>(j)));
  }
  for (std::size_t c = 0; c < d; ++c) {
    const double* trow = recipe.transform.data() + c * m;
    double acc = recipe.mean[c];
    for (std::size_t j = 0; j < m; ++j) {
      acc = std::fma(trow[j], scratch[j], acc);
    }
    v[c] = acc;
  }
}

}  // namespace

void recipe_rows(const RowRecipe& recipe, rng::Key key, uint32_t tag,
                 uint32_t replicate, uint64_t row0, std::size_t n, double* out) {
  std::vector<double> scratch(recipe.ndraws);
  for (std::size_t r = 0; r < n; ++r) {
    recipe_row_values(recipe, key, tag, replicate, row0 + r, scratch.data(),
                      out + r * recipe.dim);
  }
}

void recipe_gram(const RowRecipe& recipe, rng::Key key, uint32_t tag,
                 uint32_t replicate, uint64_t row0, std::size_t n,
                 double* sums, double* comps) {
  const std::size_t d = recipe.dim;
  std::vector<double> scratch(recipe.ndraws);
  std::vector<double> v(d);
  for (std::size_t r = 0; r < n; ++r) {
    recipe_row_values(recipe, key, tag, replicate, row0 + r, scratch.data(),
                      v.data());
    std::size_t idx = 0;
    for (std::size_t u = 0; u < d; ++u) {
      for (std::size_t w = u; w < d; ++w, ++idx) {
        neumaier_add(sums[idx], comps[idx], v[u] * v[w]);
      }
    }
  }
}

}  // namespace wrsem::kernels::scalar
