#pragma once

#include "vgpae/common.hpp"
#include "vgpae/generative.hpp"
#include "vgpae/recognition.hpp"

#include <cmath>

namespace vgpae {

using IntMatrix = Eigen::MatrixXi;
using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Ordinal threshold classifier with C outputs and S levels per output.
///
/// Cut-points are gamma_{c,1} = gamma_base_c and
/// gamma_{c,s} = gamma_{c,s-1} + exp(gamma_log_incr_{c,s-2}), so they are
/// strictly increasing for any real parameter values. The latent score is
/// g_c(x) = w_c^T x observed through N(0, sigma_g^2) noise.
struct OrdinalParams {
  Matrix W;               // C x q
  Vector gamma_base;      // C
  Matrix gamma_log_incr;  // C x (S - 2)
  double log_noise_std = std::log(0.1);

  Eigen::Index outputs() const { return W.rows(); }
  Eigen::Index latent_dim() const { return W.cols(); }
  int levels() const { return static_cast<int>(gamma_log_incr.cols()) + 2; }
  double noise_std() const { return std::exp(log_noise_std); }
};

/// Labels in {1..S}; cells with observed(i, c) == false are ignored.
struct LabelMatrix {
  IntMatrix Z;
  BoolArray observed;

  static LabelMatrix fully_observed(IntMatrix Z) {
    BoolArray mask = BoolArray::Constant(Z.rows(), Z.cols(), true);
    return {std::move(Z), std::move(mask)};
  }

  Eigen::Index rows() const { return Z.rows(); }
  Eigen::Index outputs() const { return Z.cols(); }
  LabelMatrix rows(std::span<const Eigen::Index> idx) const;
};

inline constexpr double kMinLogProb = -690.7755278982137;  // log(1e-300)

/// C x (S-1) realized cut-points.
Matrix realize_thresholds(const OrdinalParams& op);

/// log(Phi(upper) - Phi(lower)) for standardized bounds lower < upper,
/// evaluated in the tail that keeps precision and floored at log(1e-300).
double log_gaussian_interval(double lower, double upper);

/// Log-probabilities of the S levels of output c at latent point x.
Vector level_logprobs(const Vector& x, const OrdinalParams& op,
                      Eigen::Index c);

/// Same, from the latent score g directly.
Vector level_logprobs_from_score(double score, const Matrix& thresholds,
                                 Eigen::Index c, double noise_std);

/// Sum over observed cells of log p(z_ic | x_i).
double ordinal_loglik(const LabelMatrix& Z, const Matrix& X,
                      const OrdinalParams& op);

struct OrdinalLoglikGrad {
  double value = 0.0;
  Matrix d_X;
  Matrix d_W;
  Vector d_gamma_base;
  Matrix d_gamma_log_incr;
  double d_log_noise_std = 0.0;
};

OrdinalLoglikGrad ordinal_loglik_grad(const LabelMatrix& Z, const Matrix& X,
                                      const OrdinalParams& op);

double expected_ordinal_loglik(const LabelMatrix& Z,
                               const LatentPosterior& post,
                               const OrdinalParams& op, const McConfig& mc,
                               ReparamScale mode = ReparamScale::SqrtOfSum);

struct LevelPrediction {
  IntMatrix levels;                 // N* x C, values in {1..S}
  std::vector<Matrix> probabilities;  // per output: N* x S
};

/// Most probable level per cell; ties go to the lower level.
LevelPrediction predict_levels(const Matrix& X_star, const OrdinalParams& op);

/// Validates label ranges; throws DataError naming the row and column.
void validate_labels(const LabelMatrix& Z, int levels);

}  // namespace vgpae
