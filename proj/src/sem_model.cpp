#include "wrsem/sem_model.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <numeric>

namespace wrsem {

namespace {

Matrix chol_factor(const Matrix& cov) {
  // LDLT-based factor handles PSD (rank-deficient) covariances.
  Eigen::LDLT<Matrix> ldlt(cov);
  if (ldlt.info() != Eigen::Success) {
    throw ConfigError("covariance is not positive semidefinite");
  }
  Vector d = ldlt.vectorD();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d(i) < -1e-10 * std::max(1.0, cov.norm())) {
      throw ConfigError("covariance is not positive semidefinite");
    }
    d(i) = std::sqrt(std::max(0.0, d(i)));
  }
  Matrix l = ldlt.matrixL();
  return ldlt.transpositionsP().transpose() * (l * d.asDiagonal());
}

void check_symmetric(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || (m - m.transpose()).norm() > 1e-10 * std::max(1.0, m.norm())) {
    throw ConfigError(std::string(what) + " must be symmetric");
  }
}

}  // namespace

LawSpec LawSpec::zero(int dim) {
  LawSpec s;
  s.kind = Kind::gaussian;
  s.mean = Vector::Zero(dim);
  s.cov = Matrix::Zero(dim, dim);
  return s;
}

LawSpec LawSpec::gaussian(Vector mean, Matrix cov) {
  LawSpec s;
  s.kind = Kind::gaussian;
  s.mean = std::move(mean);
  s.cov = std::move(cov);
  return s;
}

LawSpec LawSpec::uniform_box(Vector lower, Vector upper) {
  LawSpec s;
  s.kind = Kind::uniform;
  s.lower = std::move(lower);
  s.upper = std::move(upper);
  return s;
}

LawSpec LawSpec::two_point(Vector a, Vector b, double prob_a) {
  LawSpec s;
  s.kind = Kind::two_point;
  s.value_a = std::move(a);
  s.value_b = std::move(b);
  s.prob_a = prob_a;
  return s;
}

int LawSpec::dim() const {
  switch (kind) {
    case Kind::gaussian: return static_cast<int>(mean.size());
    case Kind::uniform: return static_cast<int>(lower.size());
    case Kind::two_point: return static_cast<int>(value_a.size());
  }
  return 0;
}

Vector LawSpec::law_mean() const {
  switch (kind) {
    case Kind::gaussian: return mean;
    case Kind::uniform: return 0.5 * (lower + upper);
    case Kind::two_point: return prob_a * value_a + (1.0 - prob_a) * value_b;
  }
  return Vector();
}

Matrix LawSpec::law_cov() const {
  switch (kind) {
    case Kind::gaussian: return cov;
    case Kind::uniform: {
      Vector w = upper - lower;
      return (w.array().square() / 12.0).matrix().asDiagonal();
    }
    case Kind::two_point: {
      Vector d = value_a - value_b;
      return (prob_a * (1.0 - prob_a) * d.array().square()).matrix().asDiagonal();
    }
  }
  return Matrix();
}

bool LawSpec::is_zero() const {
  return law_mean().isZero(0.0) && law_cov().isZero(0.0);
}

void LawSpec::validate() const {
  switch (kind) {
    case Kind::gaussian:
      if (mean.size() != cov.rows()) throw ConfigError("gaussian law: mean/cov size mismatch");
      check_symmetric(cov, "gaussian covariance");
      chol_factor(cov);  // PSD check
      break;
    case Kind::uniform:
      if (lower.size() != upper.size()) throw ConfigError("uniform law: bound size mismatch");
      if ((upper - lower).minCoeff() < 0.0) throw ConfigError("uniform law: upper < lower");
      break;
    case Kind::two_point:
      if (value_a.size() != value_b.size()) throw ConfigError("two_point law: value size mismatch");
      if (prob_a < 0.0 || prob_a > 1.0) throw ConfigError("two_point law: prob outside [0,1]");
      break;
  }
}

void TransferMatrixModel::validate() const {
  if (dim < 2) throw ConfigError("transfer matrix dimension must be >= 2");
  auto check_support = [&](const Matrix& b) {
    if (b.rows() != dim || b.cols() != dim) {
      throw ConfigError("transfer matrix has wrong dimensions");
    }
    Matrix imb = Matrix::Identity(dim, dim) - b;
    if (!passes_singular_tol(singular_range(imb))) {
      throw SingularDraw("I - B fails the singularity tolerance");
    }
  };
  switch (kind) {
    case Kind::deterministic:
      check_support(matrix);
      break;
    case Kind::simple: {
      if (support.empty() || support.size() != probabilities.size()) {
        throw ConfigError("simple transfer model: support/probability size mismatch");
      }
      double total = 0.0;
      for (std::size_t i = 0; i < support.size(); ++i) {
        if (probabilities[i] < 0.0) throw ConfigError("simple transfer model: negative probability");
        total += probabilities[i];
        check_support(support[i]);
      }
      if (std::abs(total - 1.0) > 1e-12) {
        throw ConfigError("simple transfer model: probabilities must sum to 1");
      }
      break;
    }
    case Kind::sampler:
      if (sampler_upper < sampler_lower) throw ConfigError("sampler bounds inverted");
      break;
  }
}

void EnvironmentSpec::validate(int dim) const {
  if (shift_law.dim() != dim) throw ConfigError("shift law dimension mismatch");
  shift_law.validate();
  if (index == 0 && !shift_law.is_zero()) {
    throw ConfigError("observational environment must have zero shift");
  }
  Matrix c = shift_law.law_cov();
  check_symmetric(c, "shift covariance");
}

void EnvironmentData::validate() const {
  if (x.rows() != y.size()) throw DimensionMismatch("X and Y row counts differ");
  if (y.size() < 1) throw EmptyEnvironment("environment has no rows");
  if (!x.allFinite() || !y.allFinite()) throw ConfigError("environment data has non-finite entries");
}

void SemModel::validate() const {
  if (p < 1) throw ConfigError("p must be >= 1");
  if (k < 1) throw ConfigError("k must be >= 1");
  if (transfer.dim != p + 1) throw ConfigError("transfer dimension must be p+1");
  transfer.validate();
  if (noise.dim() != p + 1) throw ConfigError("noise dimension must be p+1");
  noise.validate();
  if (static_cast<int>(shifts.size()) != k) throw ConfigError("expected k shift laws");
  for (int i = 0; i < k; ++i) {
    EnvironmentSpec e{i + 1, shifts[static_cast<std::size_t>(i)]};
    e.validate(p + 1);
  }
}

EnvironmentSpec SemModel::environment(int index) const {
  if (index < 0 || index > k) throw MissingEnvironment("environment index out of range");
  if (index == 0) return EnvironmentSpec{0, LawSpec::zero(p + 1)};
  return EnvironmentSpec{index, shifts[static_cast<std::size_t>(index - 1)]};
}

namespace {

Matrix sampler_draw(const TransferMatrixModel& model, rng::Stream& stream) {
  const int d = model.dim;
  Matrix b = Matrix::Zero(d, d);
  const double span = model.sampler_upper - model.sampler_lower;
  if (model.sampler_form == TransferMatrixModel::SamplerForm::strict_lower) {
    for (int r = 1; r < d; ++r) {
      for (int c = 0; c < r; ++c) {
        b(r, c) = model.sampler_lower + span * stream.next_unit();
      }
    }
  } else {
    for (int r = 0; r < d; ++r) {
      for (int c = 0; c < d; ++c) {
        b(r, c) = model.sampler_lower + span * stream.next_unit();
      }
    }
  }
  return b;
}

}  // namespace

Matrix draw_transfer_matrix(const TransferMatrixModel& model, rng::Stream& stream) {
  model.validate();
  const int d = model.dim;
  const Matrix identity = Matrix::Identity(d, d);
  auto admissible = [&](const Matrix& b) {
    return passes_singular_tol(singular_range(identity - b));
  };
  switch (model.kind) {
    case TransferMatrixModel::Kind::deterministic:
      if (!admissible(model.matrix)) throw SingularDraw("deterministic B: I - B singular");
      return model.matrix;
    case TransferMatrixModel::Kind::simple: {
      const double u = stream.next_unit();
      double acc = 0.0;
      std::size_t pick = model.support.size() - 1;
      for (std::size_t i = 0; i < model.probabilities.size(); ++i) {
        acc += model.probabilities[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
      if (!admissible(model.support[pick])) throw SingularDraw("simple B: I - B singular");
      return model.support[pick];
    }
    case TransferMatrixModel::Kind::sampler: {
      for (int attempt = 0; attempt <= kDrawRetryBudget; ++attempt) {
        Matrix b = sampler_draw(model, stream);
        if (admissible(b)) return b;
      }
      throw SingularDraw("sampler B: retry budget exhausted");
    }
  }
  throw ConfigError("unknown transfer model kind");
}

Matrix draw_transfer_matrix(const TransferMatrixModel& model, uint64_t rng_seed) {
  rng::Stream stream(rng_seed, rng::make_tag(rng::Purpose::transfer_draw, 0));
  return draw_transfer_matrix(model, stream);
}

SemSample solve_sem(const Matrix& b, const Vector& eps, const Vector& shift) {
  const int d = static_cast<int>(b.rows());
  if (b.cols() != d || eps.size() != d || shift.size() != d) {
    throw DimensionMismatch("solve_sem: inconsistent dimensions");
  }
  Matrix imb = Matrix::Identity(d, d) - b;
  if (!passes_singular_tol(singular_range(imb))) {
    throw SingularSystem("I - B fails the singularity tolerance");
  }
  Vector v = imb.partialPivLu().solve(eps + shift);
  SemSample s;
  s.y = v(0);
  s.x = v.tail(d - 1);
  return s;
}

RowDrawLayout row_draw_layout(const SemModel& model) {
  RowDrawLayout l;
  l.dim = model.dim();
  l.noise_base = 0;
  l.shift_base = static_cast<uint32_t>(model.dim());
  l.transfer_base = static_cast<uint32_t>(2 * model.dim());
  return l;
}

namespace {

// Draw a law value from consecutive per-row u64 slots (one per coordinate
// for all kinds; gaussian consumes them as normal quantiles through the
// cached factor).
struct PreparedLaw {
  LawSpec::Kind kind;
  Vector mean;
  Matrix factor;   // gaussian
  Vector lower, span;  // uniform
  Vector va, vb;
  double prob_a = 0.5;

  explicit PreparedLaw(const LawSpec& law) : kind(law.kind) {
    switch (law.kind) {
      case LawSpec::Kind::gaussian:
        mean = law.mean;
        factor = chol_factor(law.cov);
        break;
      case LawSpec::Kind::uniform:
        lower = law.lower;
        span = law.upper - law.lower;
        break;
      case LawSpec::Kind::two_point:
        va = law.value_a;
        vb = law.value_b;
        prob_a = law.prob_a;
        break;
    }
  }

  int dim() const {
    switch (kind) {
      case LawSpec::Kind::gaussian: return static_cast<int>(mean.size());
      case LawSpec::Kind::uniform: return static_cast<int>(lower.size());
      case LawSpec::Kind::two_point: return static_cast<int>(va.size());
    }
    return 0;
  }

  Vector draw(const rng::Key& key, uint32_t tag, uint32_t replicate,
              uint32_t row, uint32_t base_slot) const {
    const int d = dim();
    Vector out(d);
    switch (kind) {
      case LawSpec::Kind::gaussian: {
        Vector z(d);
        for (int j = 0; j < d; ++j) {
          z(j) = rng::normal_icdf(rng::u64_to_unit(
              rng::stream_u64_at(key, tag, replicate, row, base_slot + static_cast<uint32_t>(j))));
        }
        out = mean + factor * z;
        break;
      }
      case LawSpec::Kind::uniform:
        for (int j = 0; j < d; ++j) {
          const double u = rng::u64_to_unit(
              rng::stream_u64_at(key, tag, replicate, row, base_slot + static_cast<uint32_t>(j)));
          out(j) = lower(j) + span(j) * u;
        }
        break;
      case LawSpec::Kind::two_point:
        for (int j = 0; j < d; ++j) {
          const double u = rng::u64_to_unit(
              rng::stream_u64_at(key, tag, replicate, row, base_slot + static_cast<uint32_t>(j)));
          out(j) = u < prob_a ? va(j) : vb(j);
        }
        break;
    }
    return out;
  }
};

void append_law_to_recipe(const PreparedLaw& law, const Matrix& solve,
                          kernels::RowRecipe& recipe, std::size_t col0) {
  const int d = law.dim();
  // recipe.transform is row-major d x ndraws; fill column block [col0, col0+d).
  auto set_col = [&](std::size_t col, const Vector& v) {
    for (int r = 0; r < static_cast<int>(recipe.dim); ++r) {
      recipe.transform[static_cast<std::size_t>(r) * recipe.ndraws + col] = v(r);
    }
  };
  Eigen::Map<Vector> mean_map(recipe.mean.data(), static_cast<Eigen::Index>(recipe.dim));
  switch (law.kind) {
    case LawSpec::Kind::gaussian: {
      Matrix t1 = solve * law.factor;
      for (int j = 0; j < d; ++j) {
        recipe.draws[col0 + static_cast<std::size_t>(j)] =
            kernels::DrawSpec{kernels::DrawSpec::Kind::std_normal, 0, 0, 0.5};
        set_col(col0 + static_cast<std::size_t>(j), t1.col(j));
      }
      mean_map += solve * law.mean;
      break;
    }
    case LawSpec::Kind::uniform: {
      for (int j = 0; j < d; ++j) {
        recipe.draws[col0 + static_cast<std::size_t>(j)] =
            kernels::DrawSpec{kernels::DrawSpec::Kind::unit_uniform, 0, 0, 0.5};
        set_col(col0 + static_cast<std::size_t>(j), solve.col(j) * law.span(j));
      }
      mean_map += solve * law.lower;
      break;
    }
    case LawSpec::Kind::two_point: {
      for (int j = 0; j < d; ++j) {
        recipe.draws[col0 + static_cast<std::size_t>(j)] = kernels::DrawSpec{
            kernels::DrawSpec::Kind::two_point, law.va(j), law.vb(j), law.prob_a};
        set_col(col0 + static_cast<std::size_t>(j), solve.col(j));
      }
      break;
    }
  }
}

}  // namespace

std::optional<kernels::RowRecipe> build_row_recipe(const SemModel& model,
                                                   int env_index) {
  if (model.transfer.kind != TransferMatrixModel::Kind::deterministic) {
    return std::nullopt;
  }
  const int d = model.dim();
  Matrix imb = Matrix::Identity(d, d) - model.transfer.matrix;
  if (!passes_singular_tol(singular_range(imb))) {
    throw SingularDraw("deterministic B: I - B singular");
  }
  Matrix solve = imb.partialPivLu().inverse();

  kernels::RowRecipe recipe;
  recipe.dim = static_cast<std::size_t>(d);
  recipe.ndraws = static_cast<std::size_t>(2 * d);
  recipe.draws.resize(recipe.ndraws);
  recipe.transform.assign(recipe.dim * recipe.ndraws, 0.0);
  recipe.mean.assign(recipe.dim, 0.0);

  PreparedLaw noise(model.noise);
  append_law_to_recipe(noise, solve, recipe, 0);
  const EnvironmentSpec env = model.environment(env_index);
  PreparedLaw shift(env.shift_law);
  append_law_to_recipe(shift, solve, recipe, static_cast<std::size_t>(d));
  return recipe;
}

EnvironmentData sample_environment(const SemModel& model,
                                   const EnvironmentSpec& env,
                                   const NoiseSpec& noise, Eigen::Index n,
                                   uint64_t rng_seed, uint32_t replicate,
                                   std::vector<int>* branch_out) {
  if (n < 1) throw EmptyEnvironment("sample_environment: n must be >= 1");
  if (static_cast<uint64_t>(n) > 0xffffffffull) {
    throw ConfigError("sample_environment: row index space is 32-bit");
  }
  const int d = model.dim();
  env.validate(d);
  noise.validate();

  const rng::Key key = rng::key_from_seed(rng_seed);
  const uint32_t tag = rng::make_tag(rng::Purpose::env_rows,
                                     static_cast<uint32_t>(env.index));
  EnvironmentData data;
  data.env_index = env.index;
  data.x.resize(n, model.p);
  data.y.resize(n);

  if (model.transfer.kind == TransferMatrixModel::Kind::deterministic &&
      branch_out == nullptr) {
    SemModel local = model;
    local.noise = noise;
    if (env.index >= 1) local.shifts[static_cast<std::size_t>(env.index - 1)] = env.shift_law;
    auto recipe = build_row_recipe(local, env.index);
    std::vector<double> rows(static_cast<std::size_t>(n) * static_cast<std::size_t>(d));
    kernels::recipe_rows(*recipe, key, tag, replicate, 0,
                         static_cast<std::size_t>(n), rows.data());
    for (Eigen::Index r = 0; r < n; ++r) {
      const double* v = rows.data() + static_cast<std::size_t>(r) * d;
      data.y(r) = v[0];
      for (int c = 0; c < model.p; ++c) data.x(r, c) = v[c + 1];
    }
    return data;
  }

  // Generic path: per-row transfer draw plus law draws, all row-addressed.
  const RowDrawLayout layout = row_draw_layout(model);
  PreparedLaw noise_law(noise);
  PreparedLaw shift_law(env.shift_law);
  const Matrix identity = Matrix::Identity(d, d);
  if (branch_out) branch_out->assign(static_cast<std::size_t>(n), 0);

  // Cache per-branch solvers for simple transfer models.
  std::vector<Matrix> solvers;
  if (model.transfer.kind == TransferMatrixModel::Kind::simple) {
    for (const Matrix& b : model.transfer.support) {
      Matrix imb = identity - b;
      if (!passes_singular_tol(singular_range(imb))) {
        throw SingularDraw("simple B: I - B singular");
      }
      solvers.push_back(imb.partialPivLu().inverse());
    }
  } else if (model.transfer.kind == TransferMatrixModel::Kind::deterministic) {
    Matrix imb = identity - model.transfer.matrix;
    if (!passes_singular_tol(singular_range(imb))) {
      throw SingularDraw("deterministic B: I - B singular");
    }
    solvers.push_back(imb.partialPivLu().inverse());
  }

  for (Eigen::Index r = 0; r < n; ++r) {
    const auto row = static_cast<uint32_t>(r);
    Vector eps = noise_law.draw(key, tag, replicate, row, layout.noise_base);
    Vector shift = shift_law.draw(key, tag, replicate, row, layout.shift_base);

    Vector v;
    int branch = 0;
    switch (model.transfer.kind) {
      case TransferMatrixModel::Kind::deterministic:
        v = solvers[0] * (eps + shift);
        break;
      case TransferMatrixModel::Kind::simple: {
        const double u = rng::u64_to_unit(rng::stream_u64_at(
            key, tag, replicate, row, layout.transfer_base));
        double acc = 0.0;
        std::size_t pick = solvers.size() - 1;
        for (std::size_t i = 0; i < model.transfer.probabilities.size(); ++i) {
          acc += model.transfer.probabilities[i];
          if (u < acc) {
            pick = i;
            break;
          }
        }
        branch = static_cast<int>(pick);
        v = solvers[pick] * (eps + shift);
        break;
      }
      case TransferMatrixModel::Kind::sampler: {
        const int entries = d * d;
        bool solved = false;
        for (int attempt = 0; attempt <= kDrawRetryBudget && !solved; ++attempt) {
          Matrix b = Matrix::Zero(d, d);
          uint32_t slot = layout.transfer_base +
                          static_cast<uint32_t>(attempt * entries);
          const double span = model.transfer.sampler_upper - model.transfer.sampler_lower;
          if (model.transfer.sampler_form == TransferMatrixModel::SamplerForm::strict_lower) {
            for (int rr = 1; rr < d; ++rr) {
              for (int cc = 0; cc < rr; ++cc) {
                b(rr, cc) = model.transfer.sampler_lower +
                            span * rng::u64_to_unit(rng::stream_u64_at(
                                       key, tag, replicate, row, slot++));
              }
            }
          } else {
            for (int rr = 0; rr < d; ++rr) {
              for (int cc = 0; cc < d; ++cc) {
                b(rr, cc) = model.transfer.sampler_lower +
                            span * rng::u64_to_unit(rng::stream_u64_at(
                                       key, tag, replicate, row, slot++));
              }
            }
          }
          Matrix imb = identity - b;
          if (passes_singular_tol(singular_range(imb))) {
            v = imb.partialPivLu().solve(eps + shift);
            solved = true;
          }
        }
        if (!solved) throw SingularDraw("sampler B: retry budget exhausted");
        break;
      }
    }
    data.y(r) = v(0);
    for (int c = 0; c < model.p; ++c) data.x(r, c) = v(c + 1);
    if (branch_out) (*branch_out)[static_cast<std::size_t>(r)] = branch;
  }
  return data;
}

EnvironmentData sample_environment(const SemModel& model, int env_index,
                                   Eigen::Index n, uint32_t replicate) {
  return sample_environment(model, model.environment(env_index), model.noise,
                            n, model.seed, replicate);
}

Vector embedding_shift(int dim, int i) {
  Vector a = Vector::Zero(dim);
  a(i + 1) = 1.0;
  return a;
}

Matrix embed_nonlinear_systems(const std::function<Vector(const Vector&)>& f,
                               const std::vector<RealizedState>& states) {
  if (states.empty()) throw DimensionMismatch("embed: no states supplied");
  const int d = static_cast<int>(states[0].noise.size());
  if (static_cast<int>(states.size()) != d) {
    throw DimensionMismatch("embed: need exactly p+1 realized systems");
  }

  // C has columns eps, eps+A_1, ..., eps+A_p with eps = e_1, A_i = e_{i+1}.
  Matrix c = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    c(0, i) = 1.0;
    if (i > 0) c(i, i) = 1.0;
  }

  Matrix dmat(d, d);
  for (int i = 0; i < d; ++i) {
    const RealizedState& s = states[static_cast<std::size_t>(i)];
    if (s.x.size() != d - 1 || s.shift.size() != d || s.noise.size() != d) {
      throw DimensionMismatch("embed: state dimension mismatch");
    }
    Vector state(d);
    state(0) = s.y;
    state.tail(d - 1) = s.x;
    dmat.col(i) = f(state + s.shift) + s.noise;
  }

  if (!passes_singular_tol(singular_range(dmat))) {
    throw SingularD("embed: D is numerically singular");
  }

  // (I-B)^{-1} C = D forces I-B = C D^{-1}.
  Matrix b = Matrix::Identity(d, d) - c * dmat.partialPivLu().inverse();

  Matrix imb = Matrix::Identity(d, d) - b;
  Matrix residual = imb.partialPivLu().solve(c) - dmat;
  if (residual.norm() > 1e-8 * std::max(1.0, dmat.norm())) {
    throw SingularD("embed: round-trip residual exceeds tolerance");
  }
  return b;
}

}  // namespace wrsem
