#pragma once

#include <string>
#include <vector>

#include "wrsem/population.hpp"
#include "wrsem/sem_model.hpp"
#include "wrsem/types.hpp"

namespace wrsem {

// Coefficient of (1/n_i) X_i^T Y_i inside Z_+ + gamma Z_Delta; the same
// pattern weights the Gram blocks and the conditional-variance kernels.
inline double env_coefficient(double gamma, const WeightVector& w, int env_index) {
  if (env_index == 0) return 1.0 - gamma;
  const double wi = w.w(env_index - 1);
  return (1.0 + gamma) * wi * wi;
}

// Per-environment empirical Gram blocks with compensated accumulation.
// Supports streaming row arrival (used by the stopping-time machinery).
class GramSummary {
 public:
  GramSummary(int p, WeightVector w);

  // Appends rows [from, to) of the environment's data matrix.
  void add_rows(int env_index, const Matrix& x, const Vector& y,
                Eigen::Index from, Eigen::Index to);
  void add_environment(const EnvironmentData& data);

  // Requires environments 0..k each non-empty.
  static GramSummary from_data(const std::vector<EnvironmentData>& data,
                               const WeightVector& w);

  int p() const { return p_; }
  int k() const { return weights_.k(); }
  const WeightVector& weights() const { return weights_; }
  Eigen::Index count(int env_index) const;

  Matrix g_hat(int env_index) const;   // (1/n) X^T X
  Vector z_hat(int env_index) const;   // (1/n) X^T Y
  double y2_hat(int env_index) const;  // (1/n) sum Y^2

  Matrix g_plus() const;
  Matrix g_delta() const;
  Vector z_plus() const;
  Vector z_delta() const;
  Matrix g_gamma(double gamma) const { return g_plus() + gamma * g_delta(); }
  Vector z_gamma(double gamma) const { return z_plus() + gamma * z_delta(); }

  // Exact-moment view of the averages (provenance recorded).
  MomentSet to_moment_set(std::string provenance = "empirical") const;

  void require_complete() const;  // every env 0..k has rows

 private:
  struct EnvSums {
    std::vector<double> sums, comps;  // joint packed layout, y first
    Eigen::Index n = 0;
  };
  int p_;
  WeightVector weights_;
  std::vector<EnvSums> envs_;
};

struct EstimateResult {
  Vector beta_hat;
  bool gram_invertible = false;
  double gram_condition = 0.0;  // sigma_max / sigma_min, inf if singular
  double risk_hat = 0.0;        // R_+ + gamma R_Delta at beta_hat
  bool used_pseudo_inverse = false;
};

GramSummary gram_summary(const std::vector<EnvironmentData>& data,
                         const WeightVector& w);

// Plug-in minimizer: direct solve when the combined Gram matrix passes the
// tolerance, Moore-Penrose pseudo-inverse otherwise (never throws).
EstimateResult plug_in_estimate(const GramSummary& summary, const GammaParam& gamma,
                                double tolerance = kSingularTol);

struct RiskBreakdown {
  std::vector<double> per_env;  // exact sample means of squared residuals
  double r_plus = 0.0;
  double r_delta = 0.0;
  double r_gamma(double gamma) const { return r_plus + gamma * r_delta; }
};

RiskBreakdown empirical_risk(const std::vector<EnvironmentData>& data,
                             const WeightVector& w, const Vector& beta);

// Quadratic-form evaluation of the same risks from summary blocks.
RiskBreakdown empirical_risk(const GramSummary& summary, const Vector& beta);

}  // namespace wrsem
