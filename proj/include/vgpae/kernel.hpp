#pragma once

#include "vgpae/common.hpp"

#include <cmath>
#include <span>

namespace vgpae {

/// Squared-exponential kernel with one lengthscale per input dimension.
/// Stored in log space so every real parameter vector is admissible.
struct ArdRbfParams {
  double log_signal_variance = 0.0;
  Vector log_lengthscales;

  static ArdRbfParams unit(Eigen::Index q) {
    return {0.0, Vector::Zero(q)};
  }

  double signal_variance() const { return std::exp(log_signal_variance); }
  Vector lengthscales() const { return log_lengthscales.array().exp(); }
  Eigen::Index dim() const { return log_lengthscales.size(); }
};

/// Squared-exponential kernel with a single shared lengthscale.
struct IsoRbfParams {
  double log_signal_variance = 0.0;
  double log_lengthscale = 0.0;

  double signal_variance() const { return std::exp(log_signal_variance); }
  double lengthscale() const { return std::exp(log_lengthscale); }
};

/// Symmetric Gram matrix plus the diagonal jitter the last factorization
/// needed.
struct GramMatrix {
  Matrix values;
  double jitter = 0.0;

  Eigen::Index size() const { return values.rows(); }
};

/// Pairwise squared Euclidean distances, evaluated as explicit differences so
/// that d(x, x) is exactly zero. When `X1` and `X2` are the same object the
/// lower triangle is computed and mirrored.
template <typename Derived1, typename Derived2>
Matrix squared_distances(const Eigen::MatrixBase<Derived1>& X1,
                         const Eigen::MatrixBase<Derived2>& X2) {
  require_shape(X1.cols() == X2.cols(),
                "squared_distances: column count mismatch (" +
                    std::to_string(X1.cols()) + " vs " +
                    std::to_string(X2.cols()) + ")");
  const Eigen::Index n1 = X1.rows();
  const Eigen::Index n2 = X2.rows();
  Matrix D(n1, n2);
  const bool same = static_cast<const void*>(&X1.derived()) ==
                        static_cast<const void*>(&X2.derived()) &&
                    n1 == n2;
  if (same) {
    for (Eigen::Index j = 0; j < n2; ++j) {
      D(j, j) = 0.0;
      for (Eigen::Index i = j + 1; i < n1; ++i) {
        D(i, j) = (X1.row(i) - X2.row(j)).squaredNorm();
        D(j, i) = D(i, j);
      }
    }
    return D;
  }
  for (Eigen::Index j = 0; j < n2; ++j)
    for (Eigen::Index i = 0; i < n1; ++i)
      D(i, j) = (X1.row(i) - X2.row(j)).squaredNorm();
  return D;
}

/// Distances scaled per dimension by 1/lengthscale^2.
template <typename Derived1, typename Derived2>
Matrix scaled_squared_distances(const Eigen::MatrixBase<Derived1>& X1,
                                const Eigen::MatrixBase<Derived2>& X2,
                                const Vector& inv_lengthscales) {
  require_shape(X1.cols() == X2.cols() &&
                    X1.cols() == inv_lengthscales.size(),
                "rbf_ard: input dimension does not match lengthscales");
  const Matrix S1 = X1 * inv_lengthscales.asDiagonal();
  if (static_cast<const void*>(&X1.derived()) ==
      static_cast<const void*>(&X2.derived()))
    return squared_distances(S1, S1);
  const Matrix S2 = X2 * inv_lengthscales.asDiagonal();
  return squared_distances(S1, S2);
}

template <typename Derived1, typename Derived2>
Matrix rbf_ard(const Eigen::MatrixBase<Derived1>& X1,
               const Eigen::MatrixBase<Derived2>& X2, const ArdRbfParams& p) {
  const Vector inv_ell = (-p.log_lengthscales.array()).exp();
  const Matrix D = scaled_squared_distances(X1, X2, inv_ell);
  return p.signal_variance() * (-0.5 * D.array()).exp().matrix();
}

inline Matrix iso_rbf_from_sqdist(const Matrix& sqdist,
                                  const IsoRbfParams& p) {
  const double inv_ell2 = std::exp(-2.0 * p.log_lengthscale);
  return p.signal_variance() *
         (-0.5 * inv_ell2 * sqdist.array()).exp().matrix();
}

template <typename Derived1, typename Derived2>
Matrix iso_rbf(const Eigen::MatrixBase<Derived1>& X1,
               const Eigen::MatrixBase<Derived2>& X2, const IsoRbfParams& p) {
  return iso_rbf_from_sqdist(squared_distances(X1, X2), p);
}

/// Summed isotropic-RBF Gram matrix over all views (the recognition kernel).
GramMatrix encoder_gram(std::span<const Matrix> views,
                        std::span<const IsoRbfParams> params);

/// Same as encoder_gram, from per-view squared-distance matrices.
GramMatrix encoder_gram_from_sqdist(std::span<const Matrix> sqdists,
                                    std::span<const IsoRbfParams> params);

/// Cholesky factorization of K + noise*I with deterministic jitter
/// escalation: first plain, then 1e-8 * mean(diag) growing tenfold, at most
/// six jittered attempts.
class JitteredCholesky {
 public:
  static constexpr int kMaxJitterAttempts = 6;
  static constexpr double kInitialRelativeJitter = 1e-8;

  JitteredCholesky() = default;
  JitteredCholesky(const Matrix& K, double noise_variance) {
    compute(K, noise_variance);
  }

  /// Throws NumericalError carrying the last jitter tried.
  void compute(const Matrix& K, double noise_variance);

  Eigen::Index size() const { return llt_.rows(); }
  double jitter() const { return jitter_; }
  double log_determinant() const;

  template <typename Derived>
  Matrix solve(const Eigen::MatrixBase<Derived>& B) const {
    require_shape(B.rows() == llt_.rows(),
                  "cholesky solve: right-hand side has wrong row count");
    return llt_.solve(B);
  }

  Matrix inverse() const;
  const Eigen::LLT<Matrix>& llt() const { return llt_; }

 private:
  Eigen::LLT<Matrix> llt_;
  double jitter_ = 0.0;
};

struct SolveResult {
  Matrix solution;
  double log_determinant = 0.0;
};

/// (K + noise*I)^{-1} B and log|K + noise*I|; records jitter into `K`.
SolveResult chol_solve_logdet(GramMatrix& K, double noise_variance,
                              const Matrix& B);

// Gradient contractions. `dK` holds dF/dK for a symmetric K (entries (i,j)
// and (j,i) both counted).

struct ArdRbfGradient {
  Matrix d_inputs;  // dF/dX, N x q
  double d_log_signal_variance = 0.0;
  Vector d_log_lengthscales;
};

/// Backpropagates dF/dK through K = rbf_ard(X, X, p).
ArdRbfGradient rbf_ard_backward(const Matrix& X, const Matrix& K,
                                const Matrix& dK, const ArdRbfParams& p);

struct IsoRbfGradient {
  double d_log_signal_variance = 0.0;
  double d_log_lengthscale = 0.0;
};

/// Backpropagates dF/dK through K = iso_rbf_from_sqdist(sqdist, p).
IsoRbfGradient iso_rbf_backward(const Matrix& sqdist, const Matrix& K,
                                const Matrix& dK, const IsoRbfParams& p);

}  // namespace vgpae
