#include "vgpae/recognition.hpp"

#include <algorithm>

namespace vgpae {

VariationalState VariationalState::rows(
    std::span<const Eigen::Index> idx) const {
  const auto n = static_cast<Eigen::Index>(idx.size());
  VariationalState out{Matrix(n, M.cols()), Matrix(n, log_S.cols())};
  for (Eigen::Index r = 0; r < n; ++r) {
    out.M.row(r) = M.row(idx[r]);
    out.log_S.row(r) = log_S.row(idx[r]);
  }
  return out;
}

double EncoderParams::total_signal_variance() const {
  double s = 0.0;
  for (const auto& p : views) s += p.signal_variance();
  return s;
}

CavityResult loo_cavity(GramMatrix& K_r, double encoder_noise,
                        const Matrix& M) {
  if (K_r.size() < 2)
    throw DomainError("loo_cavity: the cavity needs at least two points");
  require_shape(M.rows() == K_r.size(),
                "loo_cavity: M rows do not match the Gram matrix");
  JitteredCholesky chol(K_r.values, encoder_noise);
  K_r.jitter = chol.jitter();
  return loo_cavity_from_inverse(chol.inverse(), M);
}

CavityResult loo_cavity_from_inverse(const Matrix& A, const Matrix& M) {
  if (A.rows() < 2)
    throw DomainError("loo_cavity: the cavity needs at least two points");
  require_shape(A.rows() == A.cols() && M.rows() == A.rows(),
                "loo_cavity: shape mismatch");
  const Vector a = A.diagonal();
  if ((a.array() <= 0.0).any())
    throw NumericalError("loo_cavity: non-positive diagonal in the inverse");
  CavityResult out;
  out.var_hat = a.cwiseInverse();
  out.m_hat = M - out.var_hat.asDiagonal() * (A * M);
  return out;
}

CavityGradient loo_cavity_backward(const Matrix& A, const Matrix& M,
                                   const Matrix& d_m_hat,
                                   const Vector& d_var_hat) {
  const Eigen::Index n = A.rows();
  require_shape(M.rows() == n && d_m_hat.rows() == n &&
                    d_m_hat.cols() == M.cols() && d_var_hat.size() == n,
                "loo_cavity_backward: shape mismatch");
  const Vector inv_a = A.diagonal().cwiseInverse();
  const Matrix AM = A * M;
  const Matrix scaled = inv_a.asDiagonal() * d_m_hat;  // g_id / a_i

  CavityGradient g;
  g.d_M = d_m_hat - A * scaled;

  // dF/dA = -diag(1/a) g M^T + diag((sum_d g_id (AM)_id - h_i) / a_i^2)
  Matrix dA = -scaled * M.transpose();
  const Vector diag_term =
      (d_m_hat.cwiseProduct(AM).rowwise().sum() - d_var_hat)
          .cwiseProduct(inv_a.cwiseAbs2());
  dA.diagonal() += diag_term;

  // A = K^{-1}  =>  dF/dK = -A dF/dA A
  Matrix dK = -(A * dA * A);
  g.d_kernel = 0.5 * (dK + dK.transpose());
  return g;
}

LatentPosterior posterior(const CavityResult& cavity,
                          const VariationalState& vs) {
  require_shape(cavity.m_hat.rows() == vs.M.rows() &&
                    cavity.m_hat.cols() == vs.log_S.cols() &&
                    vs.log_S.rows() == vs.M.rows() &&
                    cavity.var_hat.size() == vs.M.rows(),
                "posterior: cavity and variational state disagree in shape");
  LatentPosterior post;
  post.means = cavity.m_hat;
  post.variational_var = vs.log_S.array().exp().matrix();
  post.cavity_var = cavity.var_hat;
  post.variances = post.variational_var;
  post.variances.colwise() += cavity.var_hat;
  return post;
}

double kl_to_prior(const LatentPosterior& post) {
  require_shape(post.means.rows() == post.variances.rows() &&
                    post.means.cols() == post.variances.cols(),
                "kl_to_prior: means and variances disagree in shape");
  if (!(post.variances.array() > 0.0).all())
    throw DomainError("kl_to_prior: variances must be strictly positive");
  const auto v = post.variances.array();
  const auto mu = post.means.array();
  return 0.5 * (v + mu.square() - 1.0 - v.log()).sum();
}

Projection project(std::span<const Matrix> test_views,
                   std::span<const Matrix> train_views, const Matrix& M,
                   const EncoderParams& params) {
  require_shape(test_views.size() == train_views.size() &&
                    train_views.size() == params.views.size(),
                "project: view count mismatch");
  require_shape(!train_views.empty(), "project: no views");
  const Eigen::Index n = train_views.front().rows();
  const Eigen::Index n_star = test_views.front().rows();
  require_shape(M.rows() == n, "project: M rows do not match training data");

  Matrix K = Matrix::Zero(n, n);
  Matrix K_star = Matrix::Zero(n_star, n);
  for (std::size_t v = 0; v < train_views.size(); ++v) {
    require_shape(train_views[v].rows() == n && test_views[v].rows() == n_star,
                  "project: views disagree on the number of rows");
    require_shape(test_views[v].cols() == train_views[v].cols(),
                  "project: view " + std::to_string(v) +
                      " has dimension " +
                      std::to_string(test_views[v].cols()) + ", expected " +
                      std::to_string(train_views[v].cols()));
    K += iso_rbf(train_views[v], train_views[v], params.views[v]);
    K_star += iso_rbf(test_views[v], train_views[v], params.views[v]);
  }
  JitteredCholesky chol(K, params.noise_variance());

  Projection out;
  out.means = K_star * chol.solve(M);
  const Matrix V = chol.llt().matrixL().solve(K_star.transpose());
  const double prior = params.total_signal_variance();
  out.variances =
      (prior - V.colwise().squaredNorm().array()).max(1e-12).matrix()
          .transpose();
  return out;
}

}  // namespace vgpae
