#include <cmath>
#include <vector>

#include "doctest.h"
#include "wrsem/estimator.hpp"
#include "wrsem/population.hpp"
#include "wrsem/sem_model.hpp"

using namespace wrsem;

namespace {

MomentSet random_moments(int p, int k, uint64_t seed, double y2_floor = 0.5) {
  rng::Stream s(seed, rng::make_tag(rng::Purpose::generic, 1));
  std::vector<EnvMoments> envs;
  for (int i = 0; i <= k; ++i) {
    Matrix a(p, p);
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c) a(r, c) = s.next_normal();
    EnvMoments e;
    e.g = a * a.transpose() + 0.2 * Matrix::Identity(p, p);
    e.z = Vector::NullaryExpr(p, [&](Eigen::Index) { return s.next_normal(); });
    e.y2 = y2_floor + std::abs(s.next_normal());
    envs.push_back(std::move(e));
  }
  Vector w = Vector::NullaryExpr(k, [&](Eigen::Index) { return 0.3 + s.next_unit(); });
  return MomentSet(std::move(envs), WeightVector::normalized(w), "test");
}

SemModel gaussian_model(int p, int k, uint64_t seed) {
  SemModel m;
  m.p = p;
  m.k = k;
  m.seed = seed;
  const int d = p + 1;
  Matrix b = Matrix::Zero(d, d);
  for (int r = 1; r < d; ++r)
    for (int c = 0; c < r; ++c) b(r, c) = 0.3 / (r + c + 1);
  m.transfer = {TransferMatrixModel::Kind::deterministic, d, b, {}, {}};
  Vector dn(d);
  for (int i = 0; i < d; ++i) dn(i) = 0.3 + 0.1 * i;
  m.noise = LawSpec::gaussian(Vector::Zero(d), dn.asDiagonal());
  for (int i = 0; i < k; ++i) {
    Vector ds(d);
    for (int j = 0; j < d; ++j) ds(j) = 0.1 + 0.05 * ((i + j) % 3);
    m.shifts.push_back(LawSpec::gaussian(Vector::Zero(d), ds.asDiagonal()));
  }
  return m;
}

}  // namespace

TEST_CASE("weight vector enforces unit norm") {
  CHECK_THROWS(WeightVector((Vector(2) << 1.0, 1.0).finished()));
  WeightVector w = WeightVector::normalized((Vector(2) << 1.0, 1.0).finished());
  CHECK(w.w.norm() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("gamma parameter and tau mapping") {
  CHECK_THROWS_AS(GammaParam(-0.1), TauOutOfRange);
  CHECK_THROWS_AS(GammaParam(std::nan("")), TauOutOfRange);
  CHECK(GammaParam(2.0).tau() == doctest::Approx(0.5));
  CHECK(GammaParam::from_tau(-0.5).value == doctest::Approx(0.0));
  CHECK_THROWS_AS(GammaParam::from_tau(-0.6), TauOutOfRange);
}

TEST_CASE("population risk closed cases") {
  MomentSet ms = random_moments(3, 2, 11);
  CHECK(population_risk(ms, 1, Vector::Zero(3)) == doctest::Approx(ms.env(1).y2));

  std::vector<EnvMoments> envs(2);
  for (auto& e : envs) {
    e.g = Matrix::Ones(1, 1);
    e.z = Vector::Ones(1);
    e.y2 = 1.0;
  }
  MomentSet unit(std::move(envs), WeightVector((Vector(1) << 1.0).finished()), "test");
  CHECK(population_risk(unit, 0, Vector::Ones(1)) == doctest::Approx(0.0));

  CHECK_THROWS_AS(population_risk(ms, 0, Vector::Zero(2)), DimensionMismatch);
}

TEST_CASE("population risk matches a Monte Carlo oracle") {
  SemModel m = gaussian_model(3, 2, 77);
  WeightVector w = WeightVector::normalized((Vector(2) << 1.0, 1.0).finished());
  MomentSet ms = analytic_moments(m, w);
  rng::Stream bs(3, rng::make_tag(rng::Purpose::generic, 2));
  Vector beta = Vector::NullaryExpr(3, [&](Eigen::Index) { return bs.next_normal(); });

  const Eigen::Index n = 1000000;
  EnvironmentData d = sample_environment(m, 0, n);
  double sum = 0.0, sum2 = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const double q = d.y(r) - d.x.row(r).dot(beta);
    sum += q * q;
    sum2 += q * q * q * q;
  }
  const double mc = sum / n;
  const double se = std::sqrt((sum2 / n - mc * mc) / n);
  CHECK(std::abs(mc - population_risk(ms, 0, beta)) <= 3.0 * se);
}

TEST_CASE("worst-risk decomposition identity") {
  MomentSet ms = random_moments(3, 2, 5);
  rng::Stream s(13, rng::make_tag(rng::Purpose::generic, 3));

  SUBCASE("tau = 0 collapses to the weighted risk") {
    Vector beta = Vector::NullaryExpr(3, [&](Eigen::Index) { return s.next_normal(); });
    auto sides = worst_risk(ms, 0.0, beta);
    double weighted = 0.0;
    for (int i = 1; i <= 2; ++i) {
      const double wi = ms.weights().w(i - 1);
      weighted += wi * wi * population_risk(ms, i, beta);
    }
    CHECK(sides.lhs == doctest::Approx(weighted).epsilon(1e-12));
    CHECK(sides.rhs == doctest::Approx(weighted).epsilon(1e-12));
  }

  SUBCASE("tau = -1/2 collapses to half the pooled risk") {
    Vector beta = Vector::NullaryExpr(3, [&](Eigen::Index) { return s.next_normal(); });
    auto sides = worst_risk(ms, -0.5, beta);
    CHECK(sides.rhs == doctest::Approx(0.5 * risk_plus(ms, beta)).epsilon(1e-12));
    CHECK(sides.lhs == doctest::Approx(sides.rhs).epsilon(1e-10));
  }

  SUBCASE("100 random (beta, tau, w) agree to 1e-10 relative") {
    for (int trial = 0; trial < 100; ++trial) {
      MomentSet trial_ms = random_moments(3, 2, 1000 + static_cast<uint64_t>(trial));
      Vector beta = Vector::NullaryExpr(3, [&](Eigen::Index) { return s.next_normal(); });
      const double tau = -0.5 + 3.0 * s.next_unit();
      auto sides = worst_risk(trial_ms, tau, beta);
      CHECK(std::abs(sides.lhs - sides.rhs) <=
            1e-10 * std::max(1.0, std::abs(sides.lhs)));
    }
  }

  CHECK_THROWS_AS(worst_risk(ms, -0.51, Vector::Zero(3)), TauOutOfRange);
}

TEST_CASE("closed-form minimizer") {
  SUBCASE("scalar arithmetic example") {
    std::vector<EnvMoments> envs(2);
    envs[0].g = Matrix::Constant(1, 1, 0.5);
    envs[0].z = Vector::Constant(1, 1.5);
    envs[0].y2 = 1.0;
    envs[1].g = Matrix::Constant(1, 1, 1.5);
    envs[1].z = Vector::Constant(1, 2.5);
    envs[1].y2 = 2.0;
    MomentSet ms(std::move(envs), WeightVector((Vector(1) << 1.0).finished()), "test");
    CHECK(ms.g_plus()(0, 0) == doctest::Approx(2.0));
    CHECK(ms.g_delta()(0, 0) == doctest::Approx(1.0));
    Vector beta = minimizer(ms, GammaParam(1.0));
    CHECK(beta(0) == doctest::Approx(5.0 / 3.0).epsilon(1e-14));

    const double up = ms.env(0).y2 + ms.env(1).y2;
    const double dn = ms.env(1).y2 - ms.env(0).y2;
    const double expect = (up + dn) - 2.0 * beta(0) * 5.0 + beta(0) * beta(0) * 3.0;
    CHECK(minimal_risk(ms, GammaParam(1.0), beta) == doctest::Approx(expect).epsilon(1e-14));
  }

  SUBCASE("gamma = 0 is the pooled weighted solution") {
    MomentSet ms = random_moments(3, 2, 21);
    Vector beta = minimizer(ms, GammaParam(0.0));
    Vector direct = ms.g_plus().partialPivLu().solve(ms.z_plus());
    CHECK((beta - direct).norm() <= 1e-12);
  }

  SUBCASE("gradient of the objective vanishes at the minimizer") {
    MomentSet ms = random_moments(3, 2, 22);
    for (double gamma : {0.0, 0.5, 1.0, 5.0}) {
      Vector beta = minimizer(ms, GammaParam(gamma));
      const double h = 1e-5;
      const double scale = 1.0 + ms.z_gamma(gamma).norm();
      for (int c = 0; c < 3; ++c) {
        Vector up = beta, dn = beta;
        up(c) += h;
        dn(c) -= h;
        const double g = (worst_risk_objective(ms, gamma, up) -
                          worst_risk_objective(ms, gamma, dn)) /
                         (2.0 * h);
        CHECK(std::abs(g) <= 1e-6 * scale);
      }
    }
  }

  SUBCASE("singular combination is rejected") {
    std::vector<EnvMoments> envs(2);
    envs[0].g = Matrix::Identity(2, 2);
    envs[0].z = Vector::Ones(2);
    envs[0].y2 = 1.0;
    envs[1].g = Matrix::Zero(2, 2);
    envs[1].z = Vector::Zero(2);
    envs[1].y2 = 1.0;
    MomentSet ms(std::move(envs), WeightVector((Vector(1) << 1.0).finished()), "test");
    CHECK_THROWS_AS(minimizer(ms, GammaParam(1.0)), SingularGram);
  }
}

TEST_CASE("noiseless exact linear relation gives zero minimal risk") {
  SemModel m;
  m.p = 2;
  m.k = 1;
  m.seed = 4;
  Matrix b = Matrix::Zero(3, 3);
  b(0, 1) = 0.7;
  b(0, 2) = -0.2;
  m.transfer = {TransferMatrixModel::Kind::deterministic, 3, b, {}, {}};
  m.noise = LawSpec::gaussian(Vector::Zero(3),
                              (Vector(3) << 0.0, 0.5, 0.4).finished().asDiagonal());
  m.shifts = {LawSpec::gaussian(Vector::Zero(3),
                                (Vector(3) << 0.0, 0.3, 0.2).finished().asDiagonal())};
  WeightVector w((Vector(1) << 1.0).finished());
  MomentSet ms = analytic_moments(m, w);
  GammaParam g(0.5);
  Vector beta = minimizer(ms, g);
  CHECK(beta(0) == doctest::Approx(0.7).epsilon(1e-10));
  CHECK(beta(1) == doctest::Approx(-0.2).epsilon(1e-10));
  CHECK(minimal_risk(ms, g, beta) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("argmin optimality under random perturbations") {
  MomentSet ms = random_moments(4, 2, 31);
  GammaParam g(0.8);
  Vector beta = minimizer(ms, g);
  const double best = minimal_risk(ms, g, beta);
  rng::Stream s(17, rng::make_tag(rng::Purpose::generic, 4));
  for (int trial = 0; trial < 100; ++trial) {
    Vector dir = Vector::NullaryExpr(4, [&](Eigen::Index) { return s.next_normal(); });
    dir.normalize();
    for (double t : {-0.1, -0.01, 0.01, 0.1}) {
      CHECK(worst_risk_objective(ms, g.value, beta + t * dir) >= best - 1e-12);
    }
  }
}

TEST_CASE("scale equivariance of the minimizer") {
  MomentSet ms = random_moments(3, 2, 41);
  Vector scale = (Vector(3) << 2.0, 0.5, 4.0).finished();
  std::vector<EnvMoments> scaled;
  for (int i = 0; i <= ms.k(); ++i) {
    EnvMoments e;
    e.g = scale.asDiagonal() * ms.env(i).g * scale.asDiagonal();
    e.z = scale.asDiagonal() * ms.env(i).z;
    e.y2 = ms.env(i).y2;
    scaled.push_back(std::move(e));
  }
  MomentSet ms2(std::move(scaled), ms.weights(), "test");
  GammaParam g(0.7);
  Vector b1 = minimizer(ms, g);
  Vector b2 = minimizer(ms2, g);
  Vector expect = scale.asDiagonal().inverse() * b1;
  CHECK((b2 - expect).norm() <= 1e-10 * std::max(1.0, b1.norm()));
}

TEST_CASE("gamma = 1 uses only the shifted-environment blocks") {
  MomentSet ms = random_moments(3, 2, 51);
  Matrix g_shift = Matrix::Zero(3, 3);
  Vector z_shift = Vector::Zero(3);
  for (int i = 1; i <= 2; ++i) {
    const double wi = ms.weights().w(i - 1);
    g_shift += wi * wi * ms.env(i).g;
    z_shift += wi * wi * ms.env(i).z;
  }
  Vector beta = minimizer(ms, GammaParam(1.0));
  Vector direct = (2.0 * g_shift).partialPivLu().solve(2.0 * z_shift);
  CHECK((beta - direct).norm() <= 1e-12);

  CHECK((ms.g_plus() - ms.g_delta() - 2.0 * ms.env(0).g).norm() <= 1e-14);
  CHECK((ms.g_plus() + ms.g_delta() - 2.0 * g_shift).norm() <= 1e-13);
}

TEST_CASE("loewner order: G_Delta dominated by G_+") {
  MomentSet ms = random_moments(4, 3, 61);
  Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(ms.g_plus() - ms.g_delta()));
  CHECK(es.eigenvalues().minCoeff() >= -1e-12);
}

TEST_CASE("infinite-gamma mode") {
  MomentSet ms = random_moments(3, 2, 71);
  std::vector<EnvMoments> envs;
  for (int i = 0; i <= 2; ++i) {
    EnvMoments e = ms.env(i);
    // G_Delta = sum w_i^2 (G_0 + G_i) - G_0 = sum w_i^2 G_i, positive definite.
    if (i > 0) e.g = ms.env(0).g + ms.env(i).g;
    envs.push_back(std::move(e));
  }
  MomentSet pd(std::move(envs), ms.weights(), "test");
  Vector beta = minimizer_infinite_gamma(pd);
  CHECK((pd.g_delta() * beta - pd.z_delta()).norm() <= 1e-10);

  std::vector<EnvMoments> flat(3);
  for (auto& e : flat) {
    e.g = Matrix::Identity(3, 3);
    e.z = Vector::Ones(3);
    e.y2 = 1.0;
  }
  MomentSet degenerate(std::move(flat),
                       WeightVector::normalized(Vector::Ones(2)), "test");
  CHECK_THROWS_AS(minimizer_infinite_gamma(degenerate), SingularGram);
}

TEST_CASE("finite-difference gradient of the MC objective vanishes at beta_gamma") {
  SemModel m = gaussian_model(3, 2, 3001);
  WeightVector w = WeightVector::normalized((Vector(2) << 1.0, 1.0).finished());
  MomentSet ms = analytic_moments(m, w);
  GammaParam g(0.5);
  Vector beta = minimizer(ms, g);

  const Eigen::Index n = 400000;
  std::vector<EnvironmentData> data;
  for (int i = 0; i <= 2; ++i) data.push_back(sample_environment(m, i, n));

  GramSummary summary = gram_summary(data, w);
  Vector grad = 2.0 * (summary.g_gamma(g.value) * beta - summary.z_gamma(g.value));
  const double envelope = 3.0 * 4.0 / std::sqrt(static_cast<double>(n));
  for (int c = 0; c < 3; ++c) {
    CHECK(std::abs(grad(c)) <= envelope);
  }
}
