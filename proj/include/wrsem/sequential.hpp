#pragma once

#include <functional>
#include <string>
#include <vector>

#include "wrsem/estimator.hpp"
#include "wrsem/population.hpp"
#include "wrsem/types.hpp"

namespace wrsem {

// Cumulative per-environment arrival counts, one (k+1)-tuple per step.
struct ArrivalSchedule {
  std::vector<std::vector<Eigen::Index>> cumulative;

  int steps() const { return static_cast<int>(cumulative.size()); }
  int envs() const {
    return cumulative.empty() ? 0 : static_cast<int>(cumulative[0].size());
  }
  void validate() const;  // coordinate-wise nondecreasing, all entries >= 1
  static ArrivalSchedule linear(int k, Eigen::Index step, int length);
};

struct StoppingConfig {
  double delta = 0.5;          // strictly inside (0,1)
  Matrix reference;            // population G_+ + gamma G_Delta
  double gamma = 0.0;
  int m_max = 1;
  std::string reference_mode = "analytic";  // or "empirical"

  double inverse_norm() const;  // ||reference^{-1}||_2
  void validate() const;
};

struct StoppingResult {
  std::vector<int> times;  // schedule indices (1-based) of the entry times
  bool exhausted = false;  // fewer than m_max found before the stream ended
  std::vector<double> distances;  // ||ref - Ghat_l|| per evaluated step
};

// The m-th time the empirical combined Gram matrix enters the
// delta * ||reference^{-1}|| ball around the reference.
StoppingResult stopping_times(const ArrivalSchedule& schedule,
                              const std::vector<EnvironmentData>& stream,
                              const WeightVector& w, const StoppingConfig& config);

// Conditional mean/variance of Y given X = x, per environment, plus a sup
// bound on the conditional variance per environment.
struct CondVarOracle {
  std::vector<std::function<double(const Vector&)>> cond_mean;
  std::vector<std::function<double(const Vector&)>> cond_var;
  std::vector<double> sup_var;

  void validate(int n_envs) const;
};

// Exact conditional moments for jointly Gaussian (Y, X) environments.
CondVarOracle gaussian_cond_oracle(const std::vector<JointMoments>& joints);

struct ConditionalVarianceReport {
  std::vector<Eigen::Index> counts;          // rows per environment
  std::vector<double> diag_weighted_sums;    // sum_u M^{(i,i)}_{uu} Var(Y|X=x_u)
  std::vector<double> contributions;         // coef_i^2 / n_i^2 * diag sums
  double total = 0.0;                        // conditional variance of beta_hat
  double gram_inverse_norm = 0.0;            // ||(Ghat_+ + gamma Ghat_D)^{-1}||
};

// Exact conditional variance of the plug-in estimator given the covariate
// draw, evaluated at the supplied data (typically data at a stopping time).
ConditionalVarianceReport conditional_variance(
    const std::vector<EnvironmentData>& data, const GammaParam& gamma,
    const WeightVector& w, const CondVarOracle& oracle);

struct VarianceBound {
  double c_m = 0.0;
  double bound = 0.0;  // c_m * sum_i 1/n_i
  bool holds = false;
};

// Stopping-time variance bound: c_m combines the reference inverse norm,
// the per-environment sup conditional variance and the mean squared
// covariate mass at the stopped sample.
VarianceBound variance_bound(const ConditionalVarianceReport& report,
                             const std::vector<EnvironmentData>& data,
                             const GammaParam& gamma, const CondVarOracle& oracle,
                             const StoppingConfig& config);

struct ConditionalCovarianceReport {
  Matrix c_tau;
  double det_abs = 0.0;
  double hadamard_bound = 0.0;   // product of column l2 norms
  double l1_bound = 0.0;         // (max column l1 norm)^p
};

ConditionalCovarianceReport conditional_covariance(
    const std::vector<EnvironmentData>& data, const GammaParam& gamma,
    const WeightVector& w, const CondVarOracle& oracle);

}  // namespace wrsem
