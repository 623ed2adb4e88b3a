#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "wrsem/estimator.hpp"
#include "wrsem/population.hpp"
#include "wrsem/sem_model.hpp"

using namespace wrsem;

namespace {

EnvironmentData make_env(int index, const Matrix& x, const Vector& y) {
  EnvironmentData d;
  d.env_index = index;
  d.x = x;
  d.y = y;
  return d;
}

SemModel small_gaussian_model() {
  SemModel m;
  m.p = 3;
  m.k = 2;
  m.seed = 1234;
  Matrix b = Matrix::Zero(4, 4);
  b(1, 0) = 0.6;
  b(2, 0) = -0.4;
  b(2, 1) = 0.3;
  b(3, 2) = 0.5;
  m.transfer = {TransferMatrixModel::Kind::deterministic, 4, b, {}, {}};
  m.noise = LawSpec::gaussian(Vector::Zero(4),
                              (Vector(4) << 0.49, 0.25, 0.25, 0.25).finished().asDiagonal());
  m.shifts = {
      LawSpec::gaussian(Vector::Zero(4),
                        (Vector(4) << 0.09, 0.16, 0.16, 0.16).finished().asDiagonal()),
      LawSpec::gaussian(Vector::Zero(4),
                        (Vector(4) << 0.04, 0.25, 0.09, 0.16).finished().asDiagonal())};
  return m;
}

}  // namespace

TEST_CASE("single-row summary blocks") {
  Matrix x0(1, 2);
  x0 << 1.0, 0.0;
  Vector y0 = Vector::Ones(1);
  Matrix x1(1, 2);
  x1 << 0.5, 0.5;
  Vector y1 = Vector::Zero(1);
  WeightVector w((Vector(1) << 1.0).finished());
  GramSummary s = gram_summary({make_env(0, x0, y0), make_env(1, x1, y1)}, w);

  Matrix g0 = s.g_hat(0);
  CHECK(g0(0, 0) == doctest::Approx(1.0));
  CHECK(g0(0, 1) == doctest::Approx(0.0));
  CHECK(g0(1, 1) == doctest::Approx(0.0));
  Vector z0 = s.z_hat(0);
  CHECK(z0(0) == doctest::Approx(1.0));
  CHECK(z0(1) == doctest::Approx(0.0));
}

TEST_CASE("duplicating every row leaves the summary unchanged") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix x(10, 2);
  Vector y(10);
  for (int r = 0; r < 10; ++r) {
    x(r, 0) = u(gen);
    x(r, 1) = u(gen);
    y(r) = u(gen);
  }
  Matrix x2(20, 2);
  Vector y2(20);
  x2 << x, x;
  y2 << y, y;
  WeightVector w((Vector(1) << 1.0).finished());
  GramSummary a = gram_summary({make_env(0, x, y), make_env(1, x, y)}, w);
  GramSummary b = gram_summary({make_env(0, x2, y2), make_env(1, x2, y2)}, w);
  CHECK((a.g_hat(0) - b.g_hat(0)).norm() <= 1e-14);
  CHECK((a.z_hat(0) - b.z_hat(0)).norm() <= 1e-14);
  CHECK(a.y2_hat(0) == doctest::Approx(b.y2_hat(0)).epsilon(1e-14));
}

TEST_CASE("derived combination identities on random data") {
  SemModel m = small_gaussian_model();
  WeightVector w = WeightVector::normalized((Vector(2) << 1.0, 1.0).finished());
  std::vector<EnvironmentData> data;
  for (int i = 0; i <= 2; ++i) data.push_back(sample_environment(m, i, 500));
  GramSummary s = gram_summary(data, w);

  Matrix sum_shift = Matrix::Zero(3, 3);
  for (int i = 1; i <= 2; ++i) {
    sum_shift += w.w(i - 1) * w.w(i - 1) * s.g_hat(i);
  }
  CHECK((s.g_plus() + s.g_delta() - 2.0 * sum_shift).norm() <= 1e-12);
  CHECK((s.g_plus() - s.g_delta() - 2.0 * s.g_hat(0)).norm() <= 1e-12);
}

TEST_CASE("permutation invariance of the summary") {
  SemModel m = small_gaussian_model();
  WeightVector w = WeightVector::normalized((Vector(2) << 1.0, 1.0).finished());
  EnvironmentData d0 = sample_environment(m, 0, 20000);
  EnvironmentData d1 = sample_environment(m, 1, 20000);
  EnvironmentData d2 = sample_environment(m, 2, 20000);
  GramSummary a = gram_summary({d0, d1, d2}, w);

  std::mt19937_64 gen(17);
  std::vector<Eigen::Index> order(20000);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), gen);
  EnvironmentData shuffled = d1;
  for (Eigen::Index r = 0; r < 20000; ++r) {
    shuffled.x.row(r) = d1.x.row(order[static_cast<std::size_t>(r)]);
    shuffled.y(r) = d1.y(order[static_cast<std::size_t>(r)]);
  }
  GramSummary b = gram_summary({d0, shuffled, d2}, w);
  CHECK((a.g_hat(1) - b.g_hat(1)).norm() <= 1e-13 * std::max(1.0, a.g_hat(1).norm()));
  CHECK((a.z_hat(1) - b.z_hat(1)).norm() <= 1e-13);
  CHECK(std::abs(a.y2_hat(1) - b.y2_hat(1)) <= 1e-13 * std::max(1.0, a.y2_hat(1)));
}

TEST_CASE("noiseless linear data is interpolated exactly for any gamma") {
  Vector beta_true = (Vector(2) << 0.8, -1.2).finished();
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  auto env = [&](int index, int n) {
    Matrix x(n, 2);
    Vector y(n);
    for (int r = 0; r < n; ++r) {
      x(r, 0) = u(gen);
      x(r, 1) = u(gen);
      y(r) = x.row(r).dot(beta_true);
    }
    return make_env(index, x, y);
  };
  WeightVector w((Vector(1) << 1.0).finished());
  GramSummary s = gram_summary({env(0, 50), env(1, 60)}, w);
  for (double gamma : {0.0, 0.5, 1.0, 3.0}) {
    EstimateResult r = plug_in_estimate(s, GammaParam(gamma));
    CHECK(r.gram_invertible);
    CHECK_FALSE(r.used_pseudo_inverse);
    CHECK((r.beta_hat - beta_true).norm() <= 1e-10);
    CHECK(r.risk_hat == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("rank-deficient summary takes the pseudo-inverse path") {
  Matrix x(1, 2);
  x << 1.0, 2.0;
  Vector y = Vector::Ones(1);
  WeightVector w((Vector(1) << 1.0).finished());
  GramSummary s = gram_summary({make_env(0, x, y), make_env(1, x, y)}, w);
  EstimateResult r = plug_in_estimate(s, GammaParam(0.5));
  CHECK_FALSE(r.gram_invertible);
  CHECK(r.used_pseudo_inverse);
  CHECK(r.gram_condition > 1e10);  // reported, effectively infinite
  // Moore-Penrose solution: minimum-norm solve along the data direction.
  Matrix h = s.g_gamma(0.5);
  Vector rhs = s.z_gamma(0.5);
  CHECK((h * r.beta_hat - rhs).norm() <= 1e-10);
}

TEST_CASE("pseudo-inverse agrees with the direct solve on invertible grams") {
  SemModel m = small_gaussian_model();
  WeightVector w = WeightVector::normalized((Vector(2) << 1.0, 1.0).finished());
  std::vector<EnvironmentData> data;
  for (int i = 0; i <= 2; ++i) data.push_back(sample_environment(m, i, 2000));
  GramSummary s = gram_summary(data, w);
  EstimateResult direct = plug_in_estimate(s, GammaParam(0.7));
  CHECK(direct.gram_invertible);

  Matrix h = s.g_gamma(0.7);
  Eigen::JacobiSVD<Matrix> svd(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector inv = svd.singularValues();
  for (Eigen::Index i = 0; i < inv.size(); ++i) inv(i) = 1.0 / inv(i);
  Vector pinv_beta =
      svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * s.z_gamma(0.7);
  CHECK((direct.beta_hat - pinv_beta).norm() <= 1e-10);
}

TEST_CASE("moment-level plug-in equals the closed form") {
  SemModel m = small_gaussian_model();
  WeightVector w = WeightVector::normalized((Vector(2) << 1.0, 1.0).finished());
  std::vector<EnvironmentData> data;
  for (int i = 0; i <= 2; ++i) data.push_back(sample_environment(m, i, 300));
  GramSummary s = gram_summary(data, w);
  GammaParam g(1.3);
  Vector via_population = minimizer(s.to_moment_set(), g);
  Vector via_plugin = plug_in_estimate(s, g).beta_hat;
  CHECK((via_population - via_plugin).norm() <= 1e-12);
}

TEST_CASE("plug-in estimate approaches the population minimizer") {
  SemModel m = small_gaussian_model();
  WeightVector w = WeightVector::normalized((Vector(2) << 1.0, 1.0).finished());
  MomentSet ms = analytic_moments(m, w);
  GammaParam g(1.0);
  Vector beta_pop = minimizer(ms, g);

  std::vector<EnvironmentData> data;
  for (int i = 0; i <= 2; ++i) data.push_back(sample_environment(m, i, 50000));
  EstimateResult r = plug_in_estimate(gram_summary(data, w), g);
  CHECK((r.beta_hat - beta_pop).norm() / beta_pop.norm() <= 0.05);
}

TEST_CASE("empirical risk closed cases") {
  WeightVector w((Vector(1) << 1.0).finished());

  SUBCASE("zero residuals give zero risks") {
    Matrix x(3, 1);
    x << 1, 2, 3;
    Vector y = x.col(0);
    auto risks = empirical_risk({make_env(0, x, y), make_env(1, x, y)}, w,
                                Vector::Ones(1));
    CHECK(risks.per_env[0] == doctest::Approx(0.0));
    CHECK(risks.per_env[1] == doctest::Approx(0.0));
    CHECK(risks.r_plus == doctest::Approx(0.0));
    CHECK(risks.r_delta == doctest::Approx(0.0));
  }

  SUBCASE("mean of squared targets at beta = 0") {
    Matrix x = Matrix::Zero(2, 1);
    Vector y(2);
    y << 0.0, 2.0;
    auto risks = empirical_risk({make_env(0, x, y), make_env(1, x, y)}, w,
                                Vector::Zero(1));
    CHECK(risks.per_env[0] == doctest::Approx(2.0));
    CHECK(risks.r_plus == doctest::Approx(4.0));
    CHECK(risks.r_delta == doctest::Approx(0.0));
    CHECK(risks.r_gamma(0.5) == doctest::Approx(4.0));
  }

  SUBCASE("dimension mismatch is rejected") {
    Matrix x = Matrix::Zero(2, 1);
    Vector y = Vector::Zero(2);
    CHECK_THROWS_AS(
        empirical_risk({make_env(0, x, y), make_env(1, x, y)}, w, Vector::Zero(2)),
        DimensionMismatch);
  }
}

TEST_CASE("summary-based risk equals the direct residual mean") {
  SemModel m = small_gaussian_model();
  WeightVector w = WeightVector::normalized((Vector(2) << 1.0, 1.0).finished());
  std::vector<EnvironmentData> data;
  for (int i = 0; i <= 2; ++i) data.push_back(sample_environment(m, i, 3000));
  GramSummary s = gram_summary(data, w);
  Vector beta = (Vector(3) << 0.2, -0.4, 0.6).finished();
  auto direct = empirical_risk(data, w, beta);
  auto from_summary = empirical_risk(s, beta);
  for (int i = 0; i <= 2; ++i) {
    CHECK(direct.per_env[static_cast<std::size_t>(i)] ==
          doctest::Approx(from_summary.per_env[static_cast<std::size_t>(i)]).epsilon(1e-10));
  }
}

TEST_CASE("consistency rate over a seed bank (light version)") {
  SemModel m = small_gaussian_model();
  WeightVector w = WeightVector::normalized((Vector(2) << 1.0, 1.0).finished());
  MomentSet ms = analytic_moments(m, w);
  GammaParam g(1.0);
  Vector beta_pop = minimizer(ms, g);

  const int seeds = 40;
  std::vector<double> logn, logrmse;
  for (Eigen::Index n : {500, 2000, 8000, 32000}) {
    double mse = 0.0;
    for (int s = 0; s < seeds; ++s) {
      std::vector<EnvironmentData> data;
      for (int i = 0; i <= 2; ++i) {
        data.push_back(sample_environment(m, i, n, static_cast<uint32_t>(s + 1)));
      }
      EstimateResult r = plug_in_estimate(gram_summary(data, w), g);
      mse += (r.beta_hat - beta_pop).squaredNorm() / seeds;
    }
    logn.push_back(std::log(static_cast<double>(n)));
    logrmse.push_back(0.5 * std::log(mse));
  }
  const double n = static_cast<double>(logn.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < logn.size(); ++i) {
    sx += logn[i];
    sy += logrmse[i];
    sxx += logn[i] * logn[i];
    sxy += logn[i] * logrmse[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(slope > -0.65);
  CHECK(slope < -0.35);
}

TEST_CASE("missing or empty environments are rejected") {
  Matrix x = Matrix::Identity(2, 2);
  Vector y = Vector::Ones(2);
  WeightVector w((Vector(1) << 1.0).finished());
  CHECK_THROWS_AS(gram_summary({make_env(0, x, y)}, w), MissingEnvironment);
  EnvironmentData empty;
  empty.env_index = 1;
  empty.x = Matrix(0, 2);
  empty.y = Vector(0);
  CHECK_THROWS_AS(gram_summary({make_env(0, x, y), empty}, w), EmptyEnvironment);
}
