#include "wrsem/sequential.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace wrsem {

void ArrivalSchedule::validate() const {
  if (cumulative.empty()) throw ConfigError("schedule is empty");
  const std::size_t width = cumulative[0].size();
  if (width < 2) throw ConfigError("schedule needs counts for envs 0..k");
  for (std::size_t l = 0; l < cumulative.size(); ++l) {
    if (cumulative[l].size() != width) throw ConfigError("ragged schedule");
    for (std::size_t j = 0; j < width; ++j) {
      if (cumulative[l][j] < 1) throw ConfigError("schedule entries must be >= 1");
      if (l > 0 && cumulative[l][j] < cumulative[l - 1][j]) {
        throw ConfigError("schedule must be coordinate-wise nondecreasing");
      }
    }
  }
}

ArrivalSchedule ArrivalSchedule::linear(int k, Eigen::Index step, int length) {
  ArrivalSchedule s;
  for (int l = 1; l <= length; ++l) {
    s.cumulative.emplace_back(static_cast<std::size_t>(k) + 1, step * l);
  }
  return s;
}

double StoppingConfig::inverse_norm() const {
  Matrix inv = reference.partialPivLu().inverse();
  return operator_norm(inv);
}

void StoppingConfig::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0,1)");
  if (m_max < 1) throw ConfigError("m_max must be >= 1");
  if (reference.rows() != reference.cols() || reference.rows() < 1) {
    throw ConfigError("reference matrix must be square");
  }
  if (!passes_singular_tol(singular_range(reference))) {
    throw SingularGram("reference matrix fails the invertibility tolerance");
  }
}

StoppingResult stopping_times(const ArrivalSchedule& schedule,
                              const std::vector<EnvironmentData>& stream,
                              const WeightVector& w, const StoppingConfig& config) {
  schedule.validate();
  config.validate();
  if (schedule.envs() != w.k() + 1) {
    throw ConfigError("schedule width must equal k+1");
  }
  if (static_cast<int>(stream.size()) != w.k() + 1) {
    throw MissingEnvironment("stream must carry environments 0..k");
  }
  const int p = static_cast<int>(stream[0].x.cols());
  const double radius = config.delta * config.inverse_norm();

  GramSummary summary(p, w);
  std::vector<Eigen::Index> fed(static_cast<std::size_t>(w.k()) + 1, 0);

  StoppingResult result;
  for (int l = 0; l < schedule.steps(); ++l) {
    const auto& counts = schedule.cumulative[static_cast<std::size_t>(l)];
    bool enough = true;
    for (int j = 0; j <= w.k(); ++j) {
      if (counts[static_cast<std::size_t>(j)] > stream[static_cast<std::size_t>(j)].rows()) {
        enough = false;
        break;
      }
    }
    if (!enough) break;
    for (int j = 0; j <= w.k(); ++j) {
      const Eigen::Index want = counts[static_cast<std::size_t>(j)];
      if (want > fed[static_cast<std::size_t>(j)]) {
        summary.add_rows(j, stream[static_cast<std::size_t>(j)].x,
                         stream[static_cast<std::size_t>(j)].y,
                         fed[static_cast<std::size_t>(j)], want);
        fed[static_cast<std::size_t>(j)] = want;
      }
    }
    const Matrix diff = config.reference - summary.g_gamma(config.gamma);
    const double dist = operator_norm(diff);
    result.distances.push_back(dist);
    if (dist < radius) {
      result.times.push_back(l + 1);
      if (static_cast<int>(result.times.size()) == config.m_max) {
        return result;
      }
    }
  }
  result.exhausted = true;
  return result;
}

void CondVarOracle::validate(int n_envs) const {
  if (static_cast<int>(cond_mean.size()) != n_envs ||
      static_cast<int>(cond_var.size()) != n_envs ||
      static_cast<int>(sup_var.size()) != n_envs) {
    throw ConfigError("conditional oracle must cover environments 0..k");
  }
  for (double s : sup_var) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw ConfigError("conditional variance sup bound must be finite and >= 0");
    }
  }
}

CondVarOracle gaussian_cond_oracle(const std::vector<JointMoments>& joints) {
  CondVarOracle oracle;
  for (const auto& jm : joints) {
    const int p = static_cast<int>(jm.mean.size()) - 1;
    const double mu_y = jm.mean(0);
    const Vector mu_x = jm.mean.tail(p);
    const Matrix cov_xx = jm.cov.bottomRightCorner(p, p);
    const Vector cov_xy = jm.cov.block(1, 0, p, 1);
    const double var_y = jm.cov(0, 0);

    Eigen::LDLT<Matrix> ldlt(cov_xx);
    const Vector slope = ldlt.solve(cov_xy);
    const double cvar = std::max(0.0, var_y - slope.dot(cov_xy));

    oracle.cond_mean.push_back([mu_y, mu_x, slope](const Vector& x) {
      return mu_y + slope.dot(x - mu_x);
    });
    oracle.cond_var.push_back([cvar](const Vector&) { return cvar; });
    oracle.sup_var.push_back(cvar);
  }
  return oracle;
}

namespace {

struct Prepared {
  std::vector<const EnvironmentData*> by_index;  // envs 0..k
  Matrix h_inv;
  double h_inv_norm = 0.0;
};

Prepared prepare(const std::vector<EnvironmentData>& data, const GammaParam& gamma,
                 const WeightVector& w) {
  Prepared prep;
  prep.by_index.assign(static_cast<std::size_t>(w.k()) + 1, nullptr);
  for (const auto& env : data) {
    if (env.env_index < 0 || env.env_index > w.k()) {
      throw MissingEnvironment("environment index out of range");
    }
    prep.by_index[static_cast<std::size_t>(env.env_index)] = &env;
  }
  for (int i = 0; i <= w.k(); ++i) {
    if (prep.by_index[static_cast<std::size_t>(i)] == nullptr) {
      throw MissingEnvironment("environment " + std::to_string(i) + " missing");
    }
  }
  GramSummary summary = gram_summary(data, w);
  const Matrix h = summary.g_gamma(gamma.value);
  if (!passes_singular_tol(singular_range(h))) {
    throw SingularGram("combined Gram matrix fails the invertibility tolerance");
  }
  prep.h_inv = h.partialPivLu().inverse();
  prep.h_inv_norm = operator_norm(prep.h_inv);
  return prep;
}

}  // namespace

ConditionalVarianceReport conditional_variance(
    const std::vector<EnvironmentData>& data, const GammaParam& gamma,
    const WeightVector& w, const CondVarOracle& oracle) {
  oracle.validate(w.k() + 1);
  Prepared prep = prepare(data, gamma, w);

  ConditionalVarianceReport report;
  report.gram_inverse_norm = prep.h_inv_norm;
  for (int i = 0; i <= w.k(); ++i) {
    const EnvironmentData& env = *prep.by_index[static_cast<std::size_t>(i)];
    const Eigen::Index n = env.rows();
    // M^{(i,i)}_{uu} = || H^{-1} x_u ||^2.
    double diag_sum = 0.0;
    for (Eigen::Index u = 0; u < n; ++u) {
      const Vector xu = env.x.row(u);
      const double m_uu = (prep.h_inv * xu).squaredNorm();
      diag_sum += m_uu * oracle.cond_var[static_cast<std::size_t>(i)](xu);
    }
    const double coef = env_coefficient(gamma.value, w, i);
    report.counts.push_back(n);
    report.diag_weighted_sums.push_back(diag_sum);
    report.contributions.push_back(coef * coef * diag_sum /
                                   (static_cast<double>(n) * static_cast<double>(n)));
  }
  report.total = 0.0;
  for (double c : report.contributions) report.total += c;
  return report;
}

VarianceBound variance_bound(const ConditionalVarianceReport& report,
                             const std::vector<EnvironmentData>& data,
                             const GammaParam& gamma, const CondVarOracle& oracle,
                             const StoppingConfig& config) {
  oracle.validate(static_cast<int>(report.counts.size()));
  config.validate();
  const double inv_norm = config.inverse_norm();
  const int p = static_cast<int>(config.reference.rows());

  std::vector<const EnvironmentData*> by_index(report.counts.size(), nullptr);
  for (const auto& env : data) {
    by_index[static_cast<std::size_t>(env.env_index)] = &env;
  }

  double worst = 0.0;
  double inv_count_sum = 0.0;
  for (std::size_t i = 0; i < report.counts.size(); ++i) {
    const EnvironmentData& env = *by_index[i];
    const double mean_sq = env.x.squaredNorm() / static_cast<double>(env.rows());
    worst = std::max(worst, oracle.sup_var[i] * mean_sq);
    inv_count_sum += 1.0 / static_cast<double>(report.counts[i]);
  }

  VarianceBound out;
  out.c_m = std::sqrt(static_cast<double>(p)) * inv_norm * inv_norm *
            (1.0 + config.delta * (1.0 + config.delta)) * (1.0 + gamma.value) * worst;
  out.bound = out.c_m * inv_count_sum;
  out.holds = report.total <= out.bound;
  return out;
}

ConditionalCovarianceReport conditional_covariance(
    const std::vector<EnvironmentData>& data, const GammaParam& gamma,
    const WeightVector& w, const CondVarOracle& oracle) {
  oracle.validate(w.k() + 1);
  Prepared prep = prepare(data, gamma, w);
  const int p = static_cast<int>(prep.h_inv.rows());

  Matrix c_tau = Matrix::Zero(p, p);
  for (int i = 0; i <= w.k(); ++i) {
    const EnvironmentData& env = *prep.by_index[static_cast<std::size_t>(i)];
    const Eigen::Index n = env.rows();
    Matrix kernel = Matrix::Zero(p, p);  // X^T D X
    for (Eigen::Index u = 0; u < n; ++u) {
      const Vector xu = env.x.row(u);
      kernel += oracle.cond_var[static_cast<std::size_t>(i)](xu) * xu * xu.transpose();
    }
    const double coef = env_coefficient(gamma.value, w, i);
    c_tau += (coef * coef / (static_cast<double>(n) * static_cast<double>(n))) *
             prep.h_inv * kernel * prep.h_inv.transpose();
  }

  ConditionalCovarianceReport report;
  report.c_tau = c_tau;
  report.det_abs = std::abs(c_tau.determinant());
  double hadamard = 1.0;
  double max_l1 = 0.0;
  for (int c = 0; c < p; ++c) {
    hadamard *= c_tau.col(c).norm();
    max_l1 = std::max(max_l1, c_tau.col(c).lpNorm<1>());
  }
  report.hadamard_bound = hadamard;
  report.l1_bound = std::pow(max_l1, p);
  return report;
}

}  // namespace wrsem
