#include "vgpae/generative.hpp"

#include <random>

namespace vgpae {

std::vector<Matrix> standard_normal_draws(const McConfig& mc,
                                          Eigen::Index rows,
                                          Eigen::Index cols) {
  if (mc.num_samples < 1)
    throw DomainError("McConfig: num_samples must be at least 1");
  std::mt19937_64 rng(mc.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Matrix> draws(static_cast<std::size_t>(mc.num_samples));
  for (auto& xi : draws) {
    xi.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index d = 0; d < cols; ++d) xi(i, d) = normal(rng);
  }
  return draws;
}

Matrix sample_scale(const LatentPosterior& post, ReparamScale mode) {
  if (mode == ReparamScale::SqrtOfSum) return post.variances.cwiseSqrt();
  require_shape(post.variational_var.rows() == post.size() &&
                    post.cavity_var.size() == post.size(),
                "sample_scale: posterior lacks its variance components");
  Matrix scale = post.variational_var.cwiseSqrt();
  scale.colwise() += post.cavity_var.cwiseSqrt();
  return scale;
}

Matrix reparameterize(const LatentPosterior& post, const Matrix& xi,
                      ReparamScale mode) {
  require_shape(xi.rows() == post.size() && xi.cols() == post.latent_dim(),
                "reparameterize: draw shape does not match the posterior");
  return post.means + sample_scale(post, mode).cwiseProduct(xi);
}

namespace {

void check_decoder_shapes(const Matrix& Y, const Matrix& X,
                          const DecoderParams& p) {
  require_shape(Y.rows() == X.rows(),
                "decoder: Y has " + std::to_string(Y.rows()) +
                    " rows but X has " + std::to_string(X.rows()));
  require_shape(X.cols() == p.kernel.dim(),
                "decoder: latent dimension does not match the ARD kernel");
}

}  // namespace

double decoder_loglik(const Matrix& Y, const Matrix& X,
                      const DecoderParams& p) {
  check_decoder_shapes(Y, X, p);
  const auto n = static_cast<double>(Y.rows());
  const auto d = static_cast<double>(Y.cols());
  JitteredCholesky chol(rbf_ard(X, X, p.kernel), p.noise_variance());
  const Matrix alpha = chol.solve(Y);
  return -0.5 * (d * chol.log_determinant() + Y.cwiseProduct(alpha).sum() +
                 n * d * kLog2Pi);
}

DecoderLoglikGrad decoder_loglik_grad(const Matrix& Y, const Matrix& X,
                                      const DecoderParams& p) {
  check_decoder_shapes(Y, X, p);
  const auto n = static_cast<double>(Y.rows());
  const auto d = static_cast<double>(Y.cols());
  const Matrix K = rbf_ard(X, X, p.kernel);
  JitteredCholesky chol(K, p.noise_variance());
  const Matrix Kinv = chol.inverse();
  const Matrix alpha = Kinv * Y;

  DecoderLoglikGrad g;
  g.value = -0.5 * (d * chol.log_determinant() +
                    Y.cwiseProduct(alpha).sum() + n * d * kLog2Pi);
  // dF/dK = 0.5 (alpha alpha^T - D K^{-1})
  Matrix dK = alpha * alpha.transpose();
  dK -= d * Kinv;
  dK *= 0.5;
  g.d_log_noise_std = 2.0 * p.noise_variance() * dK.trace();
  g.kernel = rbf_ard_backward(X, K, dK, p.kernel);
  g.d_X = g.kernel.d_inputs;
  return g;
}

double expected_decoder_loglik(const Matrix& Y, const LatentPosterior& post,
                               const DecoderParams& p, const McConfig& mc,
                               ReparamScale mode) {
  const auto draws = standard_normal_draws(mc, post.size(), post.latent_dim());
  double total = 0.0;
  for (const auto& xi : draws)
    total += decoder_loglik(Y, reparameterize(post, xi, mode), p);
  return total / static_cast<double>(draws.size());
}

DecoderPrediction decoder_predict(const Matrix& X_star, const Matrix& X_train,
                                  const Matrix& Y_train,
                                  const DecoderParams& p) {
  check_decoder_shapes(Y_train, X_train, p);
  require_shape(X_star.cols() == X_train.cols(),
                "decoder_predict: latent dimension mismatch");
  JitteredCholesky chol(rbf_ard(X_train, X_train, p.kernel),
                        p.noise_variance());
  const Matrix K_star = rbf_ard(X_star, X_train, p.kernel);
  DecoderPrediction out;
  out.means = K_star * chol.solve(Y_train);
  const Matrix V = chol.llt().matrixL().solve(K_star.transpose());
  const double prior = p.kernel.signal_variance();
  out.variances =
      ((prior - V.colwise().squaredNorm().array()).max(1e-12) +
       p.noise_variance())
          .matrix()
          .transpose();
  return out;
}

}  // namespace vgpae
