#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace wrsem {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Relative singular-value floor below which a matrix is treated as singular.
inline constexpr double kSingularTol = 1e-10;

// Redraw budget before a transfer-matrix model is declared ill-posed.
inline constexpr int kDrawRetryBudget = 16;

struct SingularDraw : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingularSystem : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingularD : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingularGram : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingularC1 : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct TauOutOfRange : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct MissingEnvironment : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct EmptyEnvironment : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ParseError : std::runtime_error {
  ParseError(const std::string& file, long line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what) {}
};
struct InconsistentDimensions : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnsupportedTailKind : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct HypothesisViolated : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct EventNeverOccurred : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Largest/smallest singular values in one pass.
struct SingularRange {
  double largest = 0.0;
  double smallest = 0.0;
};

inline SingularRange singular_range(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& sv = svd.singularValues();
  SingularRange r;
  if (sv.size() > 0) {
    r.largest = sv(0);
    r.smallest = sv(sv.size() - 1);
  }
  return r;
}

// l2 operator norm (largest singular value).
inline double operator_norm(const Matrix& m) { return singular_range(m).largest; }

inline bool passes_singular_tol(const SingularRange& r, double tol = kSingularTol) {
  return r.smallest > tol * r.largest && r.largest > 0.0;
}

}  // namespace wrsem
