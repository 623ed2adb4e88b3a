#include "wrsem/estimator.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>

#include "wrsem/kernels.hpp"

namespace wrsem {

GramSummary::GramSummary(int p, WeightVector w) : p_(p), weights_(std::move(w)) {
  if (p_ < 1) throw DimensionMismatch("p must be >= 1");
  const std::size_t len = kernels::packed_len(static_cast<std::size_t>(p_ + 1));
  envs_.resize(static_cast<std::size_t>(weights_.k()) + 1);
  for (auto& e : envs_) {
    e.sums.assign(len, 0.0);
    e.comps.assign(len, 0.0);
  }
}

void GramSummary::add_rows(int env_index, const Matrix& x, const Vector& y,
                           Eigen::Index from, Eigen::Index to) {
  if (env_index < 0 || env_index > k()) {
    throw MissingEnvironment("environment index out of range");
  }
  if (x.cols() != p_) throw DimensionMismatch("X has wrong column count");
  if (x.rows() != y.size()) throw DimensionMismatch("X and Y row counts differ");
  if (from < 0 || to > y.size() || from > to) {
    throw DimensionMismatch("bad row range");
  }
  auto& env = envs_[static_cast<std::size_t>(env_index)];
  const std::size_t d = static_cast<std::size_t>(p_ + 1);

  constexpr Eigen::Index kChunk = 1024;
  std::vector<double> buf(static_cast<std::size_t>(kChunk) * d);
  for (Eigen::Index r0 = from; r0 < to; r0 += kChunk) {
    const Eigen::Index nr = std::min(kChunk, to - r0);
    for (Eigen::Index r = 0; r < nr; ++r) {
      double* row = buf.data() + static_cast<std::size_t>(r) * d;
      row[0] = y(r0 + r);
      for (int c = 0; c < p_; ++c) row[static_cast<std::size_t>(c) + 1] = x(r0 + r, c);
    }
    kernels::joint_gram_add(buf.data(), static_cast<std::size_t>(nr), d,
                            env.sums.data(), env.comps.data());
  }
  env.n += to - from;
}

void GramSummary::add_environment(const EnvironmentData& data) {
  data.validate();
  add_rows(data.env_index, data.x, data.y, 0, data.y.size());
}

GramSummary GramSummary::from_data(const std::vector<EnvironmentData>& data,
                                   const WeightVector& w) {
  if (data.empty()) throw MissingEnvironment("no environments supplied");
  int p = static_cast<int>(data[0].x.cols());
  GramSummary summary(p, w);
  for (const auto& env : data) {
    if (env.x.cols() != p) throw InconsistentDimensions("environments disagree on p");
    summary.add_environment(env);
  }
  summary.require_complete();
  return summary;
}

void GramSummary::require_complete() const {
  for (int i = 0; i <= k(); ++i) {
    if (envs_[static_cast<std::size_t>(i)].n == 0) {
      throw MissingEnvironment("environment " + std::to_string(i) + " has no rows");
    }
  }
}

Eigen::Index GramSummary::count(int env_index) const {
  if (env_index < 0 || env_index > k()) {
    throw MissingEnvironment("environment index out of range");
  }
  return envs_[static_cast<std::size_t>(env_index)].n;
}

namespace {

double packed_value(const std::vector<double>& sums, const std::vector<double>& comps,
                    std::size_t idx) {
  return sums[idx] + comps[idx];
}

}  // namespace

Matrix GramSummary::g_hat(int env_index) const {
  const auto& env = envs_[static_cast<std::size_t>(env_index)];
  if (env.n == 0) throw EmptyEnvironment("environment has no rows");
  const std::size_t d = static_cast<std::size_t>(p_ + 1);
  Matrix g(p_, p_);
  for (int u = 0; u < p_; ++u) {
    for (int v = u; v < p_; ++v) {
      const std::size_t idx = kernels::packed_index(
          static_cast<std::size_t>(u + 1), static_cast<std::size_t>(v + 1), d);
      const double val = packed_value(env.sums, env.comps, idx) / static_cast<double>(env.n);
      g(u, v) = val;
      g(v, u) = val;
    }
  }
  return g;
}

Vector GramSummary::z_hat(int env_index) const {
  const auto& env = envs_[static_cast<std::size_t>(env_index)];
  if (env.n == 0) throw EmptyEnvironment("environment has no rows");
  const std::size_t d = static_cast<std::size_t>(p_ + 1);
  Vector z(p_);
  for (int v = 0; v < p_; ++v) {
    const std::size_t idx = kernels::packed_index(0, static_cast<std::size_t>(v + 1), d);
    z(v) = packed_value(env.sums, env.comps, idx) / static_cast<double>(env.n);
  }
  return z;
}

double GramSummary::y2_hat(int env_index) const {
  const auto& env = envs_[static_cast<std::size_t>(env_index)];
  if (env.n == 0) throw EmptyEnvironment("environment has no rows");
  return packed_value(env.sums, env.comps, 0) / static_cast<double>(env.n);
}

Matrix GramSummary::g_plus() const {
  require_complete();
  Matrix acc = g_hat(0);
  for (int i = 1; i <= k(); ++i) {
    const double w = weights_.w(i - 1);
    acc += w * w * g_hat(i);
  }
  return acc;
}

Matrix GramSummary::g_delta() const {
  require_complete();
  Matrix acc = -g_hat(0);
  for (int i = 1; i <= k(); ++i) {
    const double w = weights_.w(i - 1);
    acc += w * w * g_hat(i);
  }
  return acc;
}

Vector GramSummary::z_plus() const {
  require_complete();
  Vector acc = z_hat(0);
  for (int i = 1; i <= k(); ++i) {
    const double w = weights_.w(i - 1);
    acc += w * w * z_hat(i);
  }
  return acc;
}

Vector GramSummary::z_delta() const {
  require_complete();
  Vector acc = -z_hat(0);
  for (int i = 1; i <= k(); ++i) {
    const double w = weights_.w(i - 1);
    acc += w * w * z_hat(i);
  }
  return acc;
}

MomentSet GramSummary::to_moment_set(std::string provenance) const {
  require_complete();
  std::vector<EnvMoments> envs;
  for (int i = 0; i <= k(); ++i) {
    EnvMoments e;
    e.g = g_hat(i);
    e.z = z_hat(i);
    e.y2 = y2_hat(i);
    envs.push_back(std::move(e));
  }
  return MomentSet(std::move(envs), weights_, std::move(provenance));
}

GramSummary gram_summary(const std::vector<EnvironmentData>& data,
                         const WeightVector& w) {
  return GramSummary::from_data(data, w);
}

EstimateResult plug_in_estimate(const GramSummary& summary, const GammaParam& gamma,
                                double tolerance) {
  summary.require_complete();
  const Matrix h = summary.g_gamma(gamma.value);
  const Vector rhs = summary.z_gamma(gamma.value);

  Eigen::JacobiSVD<Matrix> svd(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double smax = sv.size() ? sv(0) : 0.0;
  const double smin = sv.size() ? sv(sv.size() - 1) : 0.0;

  EstimateResult result;
  result.gram_condition = (smin > 0.0 && smax > 0.0)
                              ? smax / smin
                              : std::numeric_limits<double>::infinity();
  result.gram_invertible = smax > 0.0 && smin > tolerance * smax;

  if (result.gram_invertible) {
    result.beta_hat = h.partialPivLu().solve(rhs);
    result.used_pseudo_inverse = false;
  } else {
    // Moore-Penrose with the same relative singular-value threshold.
    Vector inv = Vector::Zero(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
      if (sv(i) > tolerance * smax) inv(i) = 1.0 / sv(i);
    }
    result.beta_hat =
        svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * rhs;
    result.used_pseudo_inverse = true;
  }
  result.risk_hat = empirical_risk(summary, result.beta_hat).r_gamma(gamma.value);
  return result;
}

RiskBreakdown empirical_risk(const std::vector<EnvironmentData>& data,
                             const WeightVector& w, const Vector& beta) {
  if (data.empty()) throw MissingEnvironment("no environments supplied");
  std::vector<double> per_env(static_cast<std::size_t>(w.k()) + 1,
                              std::numeric_limits<double>::quiet_NaN());
  for (const auto& env : data) {
    if (env.x.cols() != beta.size()) throw DimensionMismatch("beta has wrong length");
    if (env.env_index < 0 || env.env_index > w.k()) {
      throw MissingEnvironment("environment index out of range");
    }
    double sum = 0.0, comp = 0.0;
    for (Eigen::Index r = 0; r < env.y.size(); ++r) {
      const double resid = env.y(r) - env.x.row(r).dot(beta);
      kernels::neumaier_add(sum, comp, resid * resid);
    }
    per_env[static_cast<std::size_t>(env.env_index)] =
        (sum + comp) / static_cast<double>(env.y.size());
  }
  RiskBreakdown out;
  out.per_env = per_env;
  for (double v : per_env) {
    if (std::isnan(v)) throw MissingEnvironment("missing environment risk");
  }
  double shifted = 0.0;
  for (int i = 1; i <= w.k(); ++i) {
    const double wi = w.w(i - 1);
    shifted += wi * wi * per_env[static_cast<std::size_t>(i)];
  }
  out.r_plus = shifted + per_env[0];
  out.r_delta = shifted - per_env[0];
  return out;
}

RiskBreakdown empirical_risk(const GramSummary& summary, const Vector& beta) {
  summary.require_complete();
  if (beta.size() != summary.p()) throw DimensionMismatch("beta has wrong length");
  RiskBreakdown out;
  out.per_env.resize(static_cast<std::size_t>(summary.k()) + 1);
  for (int i = 0; i <= summary.k(); ++i) {
    out.per_env[static_cast<std::size_t>(i)] =
        summary.y2_hat(i) - 2.0 * beta.dot(summary.z_hat(i)) +
        beta.dot(summary.g_hat(i) * beta);
  }
  double shifted = 0.0;
  for (int i = 1; i <= summary.k(); ++i) {
    const double wi = summary.weights().w(i - 1);
    shifted += wi * wi * out.per_env[static_cast<std::size_t>(i)];
  }
  out.r_plus = shifted + out.per_env[0];
  out.r_delta = shifted - out.per_env[0];
  return out;
}

}  // namespace wrsem
