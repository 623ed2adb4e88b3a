#include "wrsem/population.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace wrsem {

WeightVector::WeightVector(Vector weights) : w(std::move(weights)) {
  if (w.size() < 1) throw DimensionMismatch("weights must have length k >= 1");
  if (std::abs(w.norm() - 1.0) > 1e-12) {
    throw ConfigError("weight vector must have unit l2 norm");
  }
}

WeightVector WeightVector::normalized(Vector weights) {
  const double n = weights.norm();
  if (n == 0.0) throw ConfigError("cannot normalize a zero weight vector");
  return WeightVector(weights / n);
}

GammaParam::GammaParam(double gamma) : value(gamma) {
  if (!std::isfinite(gamma) || gamma < 0.0) {
    throw TauOutOfRange("gamma must be finite and >= 0");
  }
}

GammaParam GammaParam::from_tau(double tau) {
  if (tau < -0.5) throw TauOutOfRange("tau must be >= -1/2");
  return GammaParam(1.0 + 2.0 * tau);
}

MomentSet::MomentSet(std::vector<EnvMoments> envs, WeightVector w,
                     std::string provenance)
    : envs_(std::move(envs)), weights_(std::move(w)),
      provenance_(std::move(provenance)) {
  if (static_cast<int>(envs_.size()) != weights_.k() + 1) {
    throw MissingEnvironment("need environments 0..k");
  }
  const Eigen::Index p = envs_[0].z.size();
  for (const auto& e : envs_) {
    if (e.g.rows() != p || e.g.cols() != p || e.z.size() != p) {
      throw DimensionMismatch("inconsistent moment block dimensions");
    }
  }
  Matrix shifted_g = Matrix::Zero(p, p);
  Vector shifted_z = Vector::Zero(p);
  for (int i = 1; i <= weights_.k(); ++i) {
    const double w2 = weights_.w(i - 1) * weights_.w(i - 1);
    shifted_g += w2 * envs_[static_cast<std::size_t>(i)].g;
    shifted_z += w2 * envs_[static_cast<std::size_t>(i)].z;
  }
  g_plus_ = envs_[0].g + shifted_g;
  g_delta_ = shifted_g - envs_[0].g;
  z_plus_ = envs_[0].z + shifted_z;
  z_delta_ = shifted_z - envs_[0].z;
}

const EnvMoments& MomentSet::env(int i) const {
  if (i < 0 || i > k()) throw MissingEnvironment("environment index out of range");
  return envs_[static_cast<std::size_t>(i)];
}

double population_risk(const MomentSet& moments, int env_index, const Vector& beta) {
  const EnvMoments& e = moments.env(env_index);
  if (beta.size() != e.z.size()) throw DimensionMismatch("beta has wrong length");
  return e.y2 - 2.0 * beta.dot(e.z) + beta.dot(e.g * beta);
}

double risk_plus(const MomentSet& moments, const Vector& beta) {
  double shifted = 0.0;
  for (int i = 1; i <= moments.k(); ++i) {
    const double w = moments.weights().w(i - 1);
    shifted += w * w * population_risk(moments, i, beta);
  }
  return shifted + population_risk(moments, 0, beta);
}

double risk_delta(const MomentSet& moments, const Vector& beta) {
  double shifted = 0.0;
  for (int i = 1; i <= moments.k(); ++i) {
    const double w = moments.weights().w(i - 1);
    shifted += w * w * population_risk(moments, i, beta);
  }
  return shifted - population_risk(moments, 0, beta);
}

double worst_risk_objective(const MomentSet& moments, double gamma, const Vector& beta) {
  return risk_plus(moments, beta) + gamma * risk_delta(moments, beta);
}

WorstRiskSides worst_risk(const MomentSet& moments, double tau, const Vector& beta) {
  if (tau < -0.5) throw TauOutOfRange("tau must be >= -1/2");
  double shifted = 0.0;
  for (int i = 1; i <= moments.k(); ++i) {
    const double w = moments.weights().w(i - 1);
    shifted += w * w * population_risk(moments, i, beta);
  }
  const double obs = population_risk(moments, 0, beta);
  WorstRiskSides sides;
  sides.lhs = (1.0 + tau) * shifted - tau * obs;
  sides.rhs = 0.5 * risk_plus(moments, beta) +
              0.5 * (1.0 + 2.0 * tau) * risk_delta(moments, beta);
  return sides;
}

Vector minimizer(const MomentSet& moments, const GammaParam& gamma) {
  const Matrix h = moments.g_gamma(gamma.value);
  if (!passes_singular_tol(singular_range(h))) {
    throw SingularGram("G_+ + gamma G_Delta fails the invertibility tolerance");
  }
  return h.partialPivLu().solve(moments.z_gamma(gamma.value));
}

Vector minimizer_infinite_gamma(const MomentSet& moments) {
  const Matrix& gd = moments.g_delta();
  Eigen::SelfAdjointEigenSolver<Matrix> es(gd);
  if (es.eigenvalues().minCoeff() <= kSingularTol * std::max(1.0, es.eigenvalues().maxCoeff())) {
    throw SingularGram("gamma = infinity requires positive definite G_Delta");
  }
  return gd.ldlt().solve(moments.z_delta());
}

double minimal_risk(const MomentSet& moments, const GammaParam& gamma,
                    const Vector& beta_gamma) {
  return worst_risk_objective(moments, gamma.value, beta_gamma);
}

namespace {

struct Branch {
  Matrix solve;
  double prob;
};

std::vector<Branch> transfer_branches(const SemModel& model) {
  const int d = model.dim();
  const Matrix identity = Matrix::Identity(d, d);
  std::vector<Branch> branches;
  switch (model.transfer.kind) {
    case TransferMatrixModel::Kind::deterministic: {
      Matrix imb = identity - model.transfer.matrix;
      if (!passes_singular_tol(singular_range(imb))) {
        throw SingularDraw("deterministic B: I - B singular");
      }
      branches.push_back({imb.partialPivLu().inverse(), 1.0});
      break;
    }
    case TransferMatrixModel::Kind::simple: {
      for (std::size_t l = 0; l < model.transfer.support.size(); ++l) {
        Matrix imb = identity - model.transfer.support[l];
        if (!passes_singular_tol(singular_range(imb))) {
          throw SingularDraw("simple B: I - B singular");
        }
        branches.push_back({imb.partialPivLu().inverse(), model.transfer.probabilities[l]});
      }
      break;
    }
    case TransferMatrixModel::Kind::sampler:
      throw ConfigError("analytic moments are unavailable for sampler transfer models");
  }
  return branches;
}

}  // namespace

std::vector<JointMoments> analytic_joint_moments(const SemModel& model) {
  model.validate();
  const int d = model.dim();
  const auto branches = transfer_branches(model);
  const Vector mu_eps = model.noise.law_mean();
  const Matrix cov_eps = model.noise.law_cov();

  std::vector<JointMoments> out;
  for (int i = 0; i <= model.k; ++i) {
    const LawSpec shift = model.environment(i).shift_law;
    const Vector mu = mu_eps + shift.law_mean();
    const Matrix cov = cov_eps + shift.law_cov();
    JointMoments jm;
    jm.mean = Vector::Zero(d);
    jm.second = Matrix::Zero(d, d);
    for (const Branch& b : branches) {
      const Vector m = b.solve * mu;
      jm.mean += b.prob * m;
      jm.second += b.prob * (b.solve * cov * b.solve.transpose() + m * m.transpose());
    }
    jm.cov = jm.second - jm.mean * jm.mean.transpose();
    out.push_back(std::move(jm));
  }
  return out;
}

MomentSet analytic_moments(const SemModel& model, const WeightVector& w) {
  if (w.k() != model.k) throw DimensionMismatch("weight length must equal k");
  const auto joints = analytic_joint_moments(model);
  std::vector<EnvMoments> envs;
  envs.reserve(joints.size());
  const int p = model.p;
  for (const auto& jm : joints) {
    EnvMoments e;
    e.g = jm.second.bottomRightCorner(p, p);
    e.z = jm.second.block(1, 0, p, 1);
    e.y2 = jm.second(0, 0);
    envs.push_back(std::move(e));
  }
  return MomentSet(std::move(envs), w, "analytic");
}

}  // namespace wrsem
