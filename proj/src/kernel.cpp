#include "vgpae/kernel.hpp"

#include <sstream>

namespace vgpae {

GramMatrix encoder_gram(std::span<const Matrix> views,
                        std::span<const IsoRbfParams> params) {
  require_shape(!views.empty(), "encoder_gram: no views");
  std::vector<Matrix> sq;
  sq.reserve(views.size());
  for (const auto& Y : views) {
    require_shape(Y.rows() == views.front().rows(),
                  "encoder_gram: views disagree on the number of rows");
    sq.push_back(squared_distances(Y, Y));
  }
  return encoder_gram_from_sqdist(sq, params);
}

GramMatrix encoder_gram_from_sqdist(std::span<const Matrix> sqdists,
                                    std::span<const IsoRbfParams> params) {
  require_shape(!sqdists.empty(), "encoder_gram: no views");
  require_shape(sqdists.size() == params.size(),
                "encoder_gram: need one parameter record per view");
  const Eigen::Index n = sqdists.front().rows();
  GramMatrix G{Matrix::Zero(n, n), 0.0};
  for (std::size_t v = 0; v < sqdists.size(); ++v) {
    require_shape(sqdists[v].rows() == n && sqdists[v].cols() == n,
                  "encoder_gram: views disagree on the number of rows");
    G.values += iso_rbf_from_sqdist(sqdists[v], params[v]);
  }
  return G;
}

void JitteredCholesky::compute(const Matrix& K, double noise_variance) {
  require_shape(K.rows() == K.cols() && K.rows() >= 1,
                "cholesky: matrix must be square and non-empty");
  if (!(noise_variance >= 0.0))
    throw DomainError("cholesky: noise variance must be nonnegative");
  Matrix A = K;
  A.diagonal().array() += noise_variance;
  jitter_ = 0.0;
  llt_.compute(A);
  if (llt_.info() == Eigen::Success && llt_.matrixLLT().diagonal().allFinite())
    return;

  const double mean_diag = std::abs(A.diagonal().mean());
  double jitter = kInitialRelativeJitter * (mean_diag > 0.0 ? mean_diag : 1.0);
  for (int attempt = 0; attempt < kMaxJitterAttempts; ++attempt) {
    Matrix B = A;
    B.diagonal().array() += jitter;
    llt_.compute(B);
    if (llt_.info() == Eigen::Success &&
        llt_.matrixLLT().diagonal().allFinite()) {
      jitter_ = jitter;
      return;
    }
    if (attempt + 1 < kMaxJitterAttempts) jitter *= 10.0;
  }
  std::ostringstream os;
  os << "cholesky: factorization failed after jitter " << jitter;
  throw NumericalError(os.str(), jitter);
}

double JitteredCholesky::log_determinant() const {
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

Matrix JitteredCholesky::inverse() const {
  Matrix inv = llt_.solve(Matrix::Identity(size(), size()));
  // Solves are not exactly symmetric in floating point.
  return 0.5 * (inv + inv.transpose());
}

SolveResult chol_solve_logdet(GramMatrix& K, double noise_variance,
                              const Matrix& B) {
  JitteredCholesky chol(K.values, noise_variance);
  K.jitter = chol.jitter();
  return {chol.solve(B), chol.log_determinant()};
}

ArdRbfGradient rbf_ard_backward(const Matrix& X, const Matrix& K,
                                const Matrix& dK, const ArdRbfParams& p) {
  const Eigen::Index n = X.rows();
  const Eigen::Index q = X.cols();
  require_shape(K.rows() == n && K.cols() == n && dK.rows() == n &&
                    dK.cols() == n && p.dim() == q,
                "rbf_ard_backward: shape mismatch");
  ArdRbfGradient g;
  const Matrix GK = dK.cwiseProduct(K);
  g.d_log_signal_variance = GK.sum();
  g.d_log_lengthscales.setZero(q);
  g.d_inputs.setZero(n, q);
  // Symmetrized weight: both K(i,j) and K(j,i) depend on x_i.
  const Matrix W = GK + GK.transpose();
  const Vector inv_ell2 = (-2.0 * p.log_lengthscales.array()).exp();
  const Vector row_sums = W.rowwise().sum();
  for (Eigen::Index d = 0; d < q; ++d) {
    const Vector x = X.col(d);
    // sum_j W_ij (x_i - x_j) = x_i * sum_j W_ij - (W x)_i
    const Vector diff_w = x.cwiseProduct(row_sums) - W * x;
    g.d_inputs.col(d) = -inv_ell2(d) * diff_w;
    // dK_ij/dlog ell_d = K_ij (x_i - x_j)^2 / ell_d^2, summed over (i,j).
    // sum_ij GK_ij (x_i - x_j)^2 = x . diff_w.
    g.d_log_lengthscales(d) = inv_ell2(d) * x.dot(diff_w);
  }
  return g;
}

IsoRbfGradient iso_rbf_backward(const Matrix& sqdist, const Matrix& K,
                                const Matrix& dK, const IsoRbfParams& p) {
  require_shape(sqdist.rows() == K.rows() && sqdist.cols() == K.cols() &&
                    dK.rows() == K.rows() && dK.cols() == K.cols(),
                "iso_rbf_backward: shape mismatch");
  IsoRbfGradient g;
  const Matrix GK = dK.cwiseProduct(K);
  g.d_log_signal_variance = GK.sum();
  g.d_log_lengthscale =
      std::exp(-2.0 * p.log_lengthscale) * GK.cwiseProduct(sqdist).sum();
  return g;
}

}  // namespace vgpae
