#pragma once

#include "vgpae/kernel.hpp"

#include <cmath>
#include <span>

namespace vgpae {

/// Per-point variational parameters: means M and diagonal covariances S,
/// the latter stored as log-variances.
struct VariationalState {
  Matrix M;
  Matrix log_S;

  Eigen::Index size() const { return M.rows(); }
  Eigen::Index latent_dim() const { return M.cols(); }

  /// Rows `idx` of both matrices, in the given order.
  VariationalState rows(std::span<const Eigen::Index> idx) const;
};

/// GP-encoder hyper-parameters: one isotropic RBF per view plus the shared
/// noise standard deviation sigma_r (log-parameterized).
struct EncoderParams {
  std::vector<IsoRbfParams> views;
  double log_noise_std = std::log(0.1);

  double noise_variance() const { return std::exp(2.0 * log_noise_std); }
  double total_signal_variance() const;
};

/// Leave-one-out GP predictive of each m_i from the other rows.
struct CavityResult {
  Matrix m_hat;
  Vector var_hat;
};

/// q(X|Y): independent Gaussians per point and latent dimension.
struct LatentPosterior {
  Matrix means;
  Matrix variances;
  // The two variance sources, kept for the sum-of-square-roots sampling
  // mode. Empty when the posterior was built directly from means/variances.
  Matrix variational_var;
  Vector cavity_var;

  Eigen::Index size() const { return means.rows(); }
  Eigen::Index latent_dim() const { return means.cols(); }
};

/// Cavity means/variances from (K_r + noise*I)^{-1}. Requires N >= 2.
/// The jitter used by the factorization is written back into `K_r`.
CavityResult loo_cavity(GramMatrix& K_r, double encoder_noise,
                        const Matrix& M);

/// Same as loo_cavity but from an explicit inverse A = (K_r + noise I)^{-1}.
CavityResult loo_cavity_from_inverse(const Matrix& A, const Matrix& M);

struct CavityGradient {
  Matrix d_M;         // N x q
  Matrix d_kernel;    // dF/d(K_r + noise I), symmetric N x N
};

/// Pulls dF/dm_hat and dF/dvar_hat back to M and to the encoder Gram matrix.
CavityGradient loo_cavity_backward(const Matrix& A, const Matrix& M,
                                   const Matrix& d_m_hat,
                                   const Vector& d_var_hat);

LatentPosterior posterior(const CavityResult& cavity,
                          const VariationalState& vs);

/// KL(q(X|Y) || N(0, I)), summed over points and dimensions.
double kl_to_prior(const LatentPosterior& post);

struct Projection {
  Matrix means;      // N* x q
  Vector variances;  // N*, shared across latent dimensions
};

/// GP-encoder predictive for new observations: regresses the variational
/// means M on the training observations with the summed view kernel.
Projection project(std::span<const Matrix> test_views,
                   std::span<const Matrix> train_views, const Matrix& M,
                   const EncoderParams& params);

}  // namespace vgpae
