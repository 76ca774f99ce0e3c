#pragma once

#include "vgpae/kernel.hpp"
#include "vgpae/recognition.hpp"

#include <cstdint>

namespace vgpae {

/// GP-decoder hyper-parameters for one view.
struct DecoderParams {
  ArdRbfParams kernel;
  double log_noise_std = std::log(0.1);

  double noise_variance() const { return std::exp(2.0 * log_noise_std); }
};

struct McConfig {
  int num_samples = 1;
  std::uint64_t seed = 0;
};

/// How a posterior sample is scaled from a standard-normal draw.
///  - SqrtOfSum: sqrt(S_id + var_hat_i), the standard deviation of q(X|Y).
///  - SumOfSqrt: sqrt(S_id) + sqrt(var_hat_i), the literal alternative.
enum class ReparamScale { SqrtOfSum, SumOfSqrt };

/// `num_samples` matrices of shape rows x cols drawn from N(0, 1).
/// Deterministic in `mc.seed`.
std::vector<Matrix> standard_normal_draws(const McConfig& mc,
                                          Eigen::Index rows,
                                          Eigen::Index cols);

/// Per-point, per-dimension sampling scale.
Matrix sample_scale(const LatentPosterior& post,
                    ReparamScale mode = ReparamScale::SqrtOfSum);

/// means + scale .* xi
Matrix reparameterize(const LatentPosterior& post, const Matrix& xi,
                      ReparamScale mode = ReparamScale::SqrtOfSum);

/// sum_d log N(y_d; 0, K + sigma^2 I) over the columns of Y.
double decoder_loglik(const Matrix& Y, const Matrix& X,
                      const DecoderParams& p);

struct DecoderLoglikGrad {
  double value = 0.0;
  Matrix d_X;
  ArdRbfGradient kernel;
  double d_log_noise_std = 0.0;
};

DecoderLoglikGrad decoder_loglik_grad(const Matrix& Y, const Matrix& X,
                                      const DecoderParams& p);

/// Monte-Carlo estimate of E_q[log p(Y|X)].
double expected_decoder_loglik(const Matrix& Y, const LatentPosterior& post,
                               const DecoderParams& p, const McConfig& mc,
                               ReparamScale mode = ReparamScale::SqrtOfSum);

struct DecoderPrediction {
  Matrix means;      // N* x D
  Vector variances;  // N*, includes the observation noise
};

/// Standard GP predictive at new latent positions, trained on (X, Y).
DecoderPrediction decoder_predict(const Matrix& X_star, const Matrix& X_train,
                                  const Matrix& Y_train,
                                  const DecoderParams& p);

}  // namespace vgpae
