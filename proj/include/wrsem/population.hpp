#pragma once

#include <string>
#include <vector>

#include "wrsem/sem_model.hpp"
#include "wrsem/types.hpp"

namespace wrsem {

struct WeightVector {
  Vector w;  // length k, unit l2 norm within 1e-12

  explicit WeightVector(Vector weights);
  static WeightVector normalized(Vector weights);
  int k() const { return static_cast<int>(w.size()); }
};

struct GammaParam {
  double value = 0.0;

  explicit GammaParam(double gamma);
  // gamma = 1 + 2 tau, so tau >= -1/2 maps onto gamma >= 0.
  double tau() const { return (value - 1.0) / 2.0; }
  static GammaParam from_tau(double tau);
};

struct EnvMoments {
  Matrix g;    // E[X X^T], p x p
  Vector z;    // E[X Y], p
  double y2 = 0.0;  // E[Y^2]
};

// Population Gram/cross-moment blocks for environments 0..k plus the
// weighted combinations used by the worst-risk closed forms.
class MomentSet {
 public:
  MomentSet(std::vector<EnvMoments> envs, WeightVector w, std::string provenance);

  int k() const { return weights_.k(); }
  int p() const { return static_cast<int>(z_plus_.size()); }
  const EnvMoments& env(int i) const;
  const WeightVector& weights() const { return weights_; }
  const std::string& provenance() const { return provenance_; }

  const Matrix& g_plus() const { return g_plus_; }
  const Matrix& g_delta() const { return g_delta_; }
  const Vector& z_plus() const { return z_plus_; }
  const Vector& z_delta() const { return z_delta_; }
  Matrix g_gamma(double gamma) const { return g_plus_ + gamma * g_delta_; }
  Vector z_gamma(double gamma) const { return z_plus_ + gamma * z_delta_; }

 private:
  std::vector<EnvMoments> envs_;
  WeightVector weights_;
  std::string provenance_;
  Matrix g_plus_, g_delta_;
  Vector z_plus_, z_delta_;
};

// E[(Y - beta.X)^2] in environment i from its moment blocks.
double population_risk(const MomentSet& moments, int env_index, const Vector& beta);

// Weighted-risk combinations: r_plus = sum w_i^2 R_i + R_0,
// r_delta = sum w_i^2 R_i - R_0.
double risk_plus(const MomentSet& moments, const Vector& beta);
double risk_delta(const MomentSet& moments, const Vector& beta);

// Worst-risk objective R_+ + gamma R_Delta.
double worst_risk_objective(const MomentSet& moments, double gamma, const Vector& beta);

struct WorstRiskSides {
  double lhs = 0.0;  // (1+tau) sum w_i^2 R_i - tau R_0
  double rhs = 0.0;  // R_+/2 + (1+2tau)/2 R_Delta
};
WorstRiskSides worst_risk(const MomentSet& moments, double tau, const Vector& beta);

// Closed-form minimizer (G_+ + gamma G_Delta)^{-1} (Z_+ + gamma Z_Delta).
Vector minimizer(const MomentSet& moments, const GammaParam& gamma);

// Documented gamma = infinity mode: solve G_Delta beta = Z_Delta, only
// admissible when G_Delta is positive definite.
Vector minimizer_infinite_gamma(const MomentSet& moments);

double minimal_risk(const MomentSet& moments, const GammaParam& gamma,
                    const Vector& beta_gamma);

// Closed-form pushforward moments for deterministic or simple transfer
// models (noise and shifts independent given B).
MomentSet analytic_moments(const SemModel& model, const WeightVector& w);

// Per-environment joint (Y, X) mean/covariance of the pushforward; used by
// the Gaussian conditional oracle and the tail evaluators.
struct JointMoments {
  Vector mean;   // (p+1): y first
  Matrix cov;    // (p+1) x (p+1)
  Matrix second; // cov + mean mean^T
};
std::vector<JointMoments> analytic_joint_moments(const SemModel& model);

}  // namespace wrsem
