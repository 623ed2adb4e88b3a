#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "wrsem/kernels.hpp"
#include "wrsem/rng.hpp"
#include "wrsem/types.hpp"

namespace wrsem {

// Distribution menu for noise and shift laws. All laws have finite second
// moments; uniform and two_point are per-coordinate independent.
struct LawSpec {
  enum class Kind { gaussian, uniform, two_point };
  Kind kind = Kind::gaussian;

  Vector mean;     // gaussian
  Matrix cov;      // gaussian, symmetric PSD
  Vector lower, upper;       // uniform box
  Vector value_a, value_b;   // two_point values
  double prob_a = 0.5;       // two_point: P(coord = value_a)

  static LawSpec zero(int dim);
  static LawSpec gaussian(Vector mean, Matrix cov);
  static LawSpec uniform_box(Vector lower, Vector upper);
  static LawSpec two_point(Vector a, Vector b, double prob_a);

  int dim() const;
  Vector law_mean() const;
  Matrix law_cov() const;
  bool is_zero() const;
  void validate() const;
};

struct TransferMatrixModel {
  enum class Kind { deterministic, simple, sampler };
  enum class SamplerForm { strict_lower, dense };

  Kind kind = Kind::deterministic;
  int dim = 0;  // p+1
  Matrix matrix;                       // deterministic
  std::vector<Matrix> support;         // simple
  std::vector<double> probabilities;   // simple
  SamplerForm sampler_form = SamplerForm::strict_lower;
  double sampler_lower = -0.5;
  double sampler_upper = 0.5;

  void validate() const;
  bool is_random() const { return kind != Kind::deterministic; }
};

struct EnvironmentSpec {
  int index = 0;              // 0 = observational
  LawSpec shift_law;          // identically zero for index 0
  void validate(int dim) const;
};

// Noise law shared by every environment.
using NoiseSpec = LawSpec;

struct SemSample {
  double y = 0.0;
  Vector x;
};

struct EnvironmentData {
  int env_index = 0;
  Matrix x;  // n x p
  Vector y;  // n
  Eigen::Index rows() const { return y.size(); }
  void validate() const;
};

// Full multi-environment model: observational env 0 plus k shifted envs.
struct SemModel {
  int p = 0;
  int k = 0;
  TransferMatrixModel transfer;
  NoiseSpec noise;
  std::vector<LawSpec> shifts;  // size k, environments 1..k
  uint64_t seed = 0;

  int dim() const { return p + 1; }
  void validate() const;
  EnvironmentSpec environment(int index) const;
};

// One fresh draw of the transfer matrix; for random kinds up to
// kDrawRetryBudget redraws are attempted before SingularDraw.
Matrix draw_transfer_matrix(const TransferMatrixModel& model, rng::Stream& stream);
Matrix draw_transfer_matrix(const TransferMatrixModel& model, uint64_t rng_seed);

// Solve (I - B) v = eps + shift; v splits into (y, x).
SemSample solve_sem(const Matrix& b, const Vector& eps, const Vector& shift);

// n i.i.d. rows of environment `env`; every row redraws B, eps and the
// shift. Rows of distinct (env, replicate) pairs come from disjoint
// counter blocks of the model seed's Philox key.
EnvironmentData sample_environment(const SemModel& model,
                                   const EnvironmentSpec& env,
                                   const NoiseSpec& noise, Eigen::Index n,
                                   uint64_t rng_seed, uint32_t replicate = 0,
                                   std::vector<int>* branch_out = nullptr);
EnvironmentData sample_environment(const SemModel& model, int env_index,
                                   Eigen::Index n, uint32_t replicate = 0);

// Fit one linear transfer matrix to p+1 realized nonlinear systems.
struct RealizedState {
  double y = 0.0;
  Vector x;       // p
  Vector shift;   // p+1 (zero for the observational state)
  Vector noise;   // p+1
};

Matrix embed_nonlinear_systems(
    const std::function<Vector(const Vector&)>& f,
    const std::vector<RealizedState>& states);

// Basis shift used by the embedding: coordinate i+1 indicator.
Vector embedding_shift(int dim, int i);

// ---------------------------------------------------------------------------
// Sampling internals shared with the harness fast paths.

// Per-row u64 draw layout: noise coords [0,d), shift coords [d,2d),
// transfer draws from 2d on (1 selector u64 for simple, d*d per attempt for
// the dense sampler).
struct RowDrawLayout {
  int dim = 0;
  uint32_t noise_base = 0;
  uint32_t shift_base = 0;
  uint32_t transfer_base = 0;
};
RowDrawLayout row_draw_layout(const SemModel& model);

// Deterministic-B models compile to a row recipe for the fused kernels.
std::optional<kernels::RowRecipe> build_row_recipe(const SemModel& model,
                                                   int env_index);

}  // namespace wrsem
