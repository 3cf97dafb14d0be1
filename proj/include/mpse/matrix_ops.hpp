#ifndef MPSE_MATRIX_OPS_HPP
#define MPSE_MATRIX_OPS_HPP

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>
#include <string>

namespace mpse {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kSymmetryTol = 1e-9;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw ContractError(std::string(what) + ": non-finite entries");
}

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols())
    throw DimensionError(std::string(what) + ": matrix must be square, got " +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

inline Matrix symmetrize(const Matrix& s) { return 0.5 * (s + s.transpose()); }

inline void require_symmetric(const Matrix& s, const char* what, double tol = kSymmetryTol) {
  require_square(s, what);
  double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > tol * scale)
    throw ContractError(std::string(what) + ": matrix not symmetric within tolerance");
}

/// Maximum eigenvalue modulus of a square real matrix.
inline double spectral_radius(const Matrix& m) {
  require_square(m, "spectral_radius");
  require_finite(m, "spectral_radius");
  if (m.rows() == 0) throw DimensionError("spectral_radius: empty matrix");
  Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw NumericError("spectral_radius: eigenvalue iteration did not converge");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return m.jacobiSvd().singularValues()(0);
}

/// Eigenvalues of the symmetrized input, ascending.
inline Vector symmetric_eigenvalues(const Matrix& s) {
  require_square(s, "symmetric_eigenvalues");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(s), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw NumericError("symmetric_eigenvalues: eigensolver failed");
  return es.eigenvalues();
}

inline double min_eigenvalue(const Matrix& s) { return symmetric_eigenvalues(s).minCoeff(); }

/// Frobenius-nearest PSD matrix: clamp negative eigenvalues of the
/// symmetrized input to zero.
inline Matrix psd_project(const Matrix& s) {
  require_symmetric(s, "psd_project");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(s));
  if (es.info() != Eigen::Success) throw NumericError("psd_project: eigensolver failed");
  Vector lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

/// Unique symmetric PSD square root. Eigenvalues below -1e-9 are a
/// contract violation; small negative roundoff is clamped.
inline Matrix sqrt_psd(const Matrix& s) {
  require_symmetric(s, "sqrt_psd");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(s));
  if (es.info() != Eigen::Success) throw NumericError("sqrt_psd: eigensolver failed");
  if (es.eigenvalues().minCoeff() < -1e-9)
    throw ContractError("sqrt_psd: input has negative eigenvalue " +
                        std::to_string(es.eigenvalues().minCoeff()));
  Vector lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

/// True iff the smallest eigenvalue of sym(s) exceeds margin.
/// Never throws; numerical failures report false.
inline bool is_positive_definite(const Matrix& s, double margin = 0.0) noexcept {
  try {
    if (s.rows() != s.cols() || !s.allFinite()) return false;
    return min_eigenvalue(s) > margin;
  } catch (...) {
    return false;
  }
}

/// Moore-Penrose pseudo-inverse with singular values below
/// rel_cutoff * sigma_max truncated.
inline Matrix pinv(const Matrix& m, double rel_cutoff = 1e-10, bool* degenerate = nullptr) {
  if (m.size() == 0) return m.transpose();
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  double cutoff = rel_cutoff * sv(0);
  Vector inv = Vector::Zero(sv.size());
  bool deg = false;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff)
      inv(i) = 1.0 / sv(i);
    else
      deg = true;
  }
  if (degenerate) *degenerate = deg;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Minimizer Z of ||Z*G - T||_F, i.e. Z = T * G^T * (G G^T)^+.
/// Rank-deficient Gram matrices yield the minimum-norm solution and set
/// *degenerate when provided.
inline Matrix solve_min_frobenius(const Matrix& t, const Matrix& g, bool* degenerate = nullptr) {
  if (t.cols() != g.cols())
    throw DimensionError("solve_min_frobenius: T and G column counts differ");
  Matrix gram = g * g.transpose();
  return t * g.transpose() * pinv(gram, 1e-10, degenerate);
}

}  // namespace mpse

#endif  // MPSE_MATRIX_OPS_HPP
