#include "vgpae/ordinal.hpp"

#include <limits>

namespace vgpae {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kInf = std::numeric_limits<double>::infinity();

double norm_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double log_norm_cdf(double x) {
  if (x == -kInf) return -kInf;
  if (x > 0.0) return std::log1p(-0.5 * std::erfc(x * kInvSqrt2));
  const double p = 0.5 * std::erfc(-x * kInvSqrt2);
  return p > 0.0 ? std::log(p) : -kInf;
}

double log_norm_pdf(double x) { return -0.5 * x * x - kHalfLog2Pi; }

// log(1 - exp(d)) for d <= 0.
double log1m_exp(double d) {
  if (d == -kInf) return 0.0;
  return d > -0.693147 ? std::log(-std::expm1(d)) : std::log1p(-std::exp(d));
}

struct CellTerms {
  double logprob;
  double d_score;   // d logprob / d g
  double d_lower;   // d logprob / d gamma_{s-1}
  double d_upper;   // d logprob / d gamma_s
  double d_log_noise;
};

CellTerms cell_terms(double score, double lower_cut, double upper_cut,
                     double noise_std) {
  const double a = (lower_cut - score) / noise_std;
  const double b = (upper_cut - score) / noise_std;
  CellTerms t{log_gaussian_interval(a, b), 0.0, 0.0, 0.0, 0.0};
  if (t.logprob <= kMinLogProb) return t;  // floored: flat
  const double ru = std::isinf(b) ? 0.0 : std::exp(log_norm_pdf(b) - t.logprob);
  const double rl = std::isinf(a) ? 0.0 : std::exp(log_norm_pdf(a) - t.logprob);
  t.d_score = -(ru - rl) / noise_std;
  t.d_upper = ru / noise_std;
  t.d_lower = -rl / noise_std;
  t.d_log_noise = -((std::isinf(b) ? 0.0 : ru * b) -
                    (std::isinf(a) ? 0.0 : rl * a));
  return t;
}

void check_params(const OrdinalParams& op) {
  require_shape(op.gamma_base.size() == op.outputs() &&
                    op.gamma_log_incr.rows() == op.outputs(),
                "ordinal: threshold parameters disagree with W");
}

double lower_cut(const Matrix& thr, Eigen::Index c, int level) {
  return level <= 1 ? -kInf : thr(c, level - 2);
}

double upper_cut(const Matrix& thr, Eigen::Index c, int level) {
  return level >= thr.cols() + 1 ? kInf : thr(c, level - 1);
}

}  // namespace

LabelMatrix LabelMatrix::rows(std::span<const Eigen::Index> idx) const {
  const auto n = static_cast<Eigen::Index>(idx.size());
  LabelMatrix out{IntMatrix(n, Z.cols()), BoolArray(n, Z.cols())};
  for (Eigen::Index r = 0; r < n; ++r) {
    out.Z.row(r) = Z.row(idx[r]);
    out.observed.row(r) = observed.row(idx[r]);
  }
  return out;
}

Matrix realize_thresholds(const OrdinalParams& op) {
  check_params(op);
  const Eigen::Index C = op.outputs();
  const int S = op.levels();
  Matrix thr(C, S - 1);
  for (Eigen::Index c = 0; c < C; ++c) {
    thr(c, 0) = op.gamma_base(c);
    for (int s = 1; s < S - 1; ++s)
      thr(c, s) = thr(c, s - 1) + std::exp(op.gamma_log_incr(c, s - 1));
  }
  return thr;
}

double log_gaussian_interval(double lower, double upper) {
  double lp;
  if (lower == -kInf && upper == kInf) {
    lp = 0.0;
  } else if (lower >= 0.0) {
    // Upper tail: Q(lower) - Q(upper).
    const double la = log_norm_cdf(-lower);
    const double lb = log_norm_cdf(-upper);
    lp = la == -kInf ? -kInf : la + log1m_exp(lb - la);
  } else if (upper <= 0.0) {
    const double lb = log_norm_cdf(upper);
    const double la = log_norm_cdf(lower);
    lp = lb == -kInf ? -kInf : lb + log1m_exp(la - lb);
  } else {
    // Straddles zero: both excluded tails are at most one half.
    lp = std::log1p(-(norm_cdf(lower) + norm_cdf(-upper)));
  }
  if (!(lp > kMinLogProb)) return kMinLogProb;
  return lp;
}

Vector level_logprobs_from_score(double score, const Matrix& thresholds,
                                 Eigen::Index c, double noise_std) {
  const int S = static_cast<int>(thresholds.cols()) + 1;
  Vector out(S);
  for (int s = 1; s <= S; ++s) {
    out(s - 1) = log_gaussian_interval(
        (lower_cut(thresholds, c, s) - score) / noise_std,
        (upper_cut(thresholds, c, s) - score) / noise_std);
  }
  return out;
}

Vector level_logprobs(const Vector& x, const OrdinalParams& op,
                      Eigen::Index c) {
  require_shape(x.size() == op.latent_dim(),
                "level_logprobs: latent dimension mismatch");
  require_shape(c >= 0 && c < op.outputs(),
                "level_logprobs: output index out of range");
  return level_logprobs_from_score(op.W.row(c).dot(x), realize_thresholds(op),
                                   c, op.noise_std());
}

void validate_labels(const LabelMatrix& Z, int levels) {
  require_shape(Z.observed.rows() == Z.Z.rows() &&
                    Z.observed.cols() == Z.Z.cols(),
                "labels: mask shape does not match label matrix");
  for (Eigen::Index i = 0; i < Z.Z.rows(); ++i)
    for (Eigen::Index c = 0; c < Z.Z.cols(); ++c)
      if (Z.observed(i, c) && (Z.Z(i, c) < 1 || Z.Z(i, c) > levels))
        throw DataError("label out of range at row " + std::to_string(i) +
                        ", column " + std::to_string(c) + ": " +
                        std::to_string(Z.Z(i, c)) + " not in 1.." +
                        std::to_string(levels));
}

double ordinal_loglik(const LabelMatrix& Z, const Matrix& X,
                      const OrdinalParams& op) {
  return ordinal_loglik_grad(Z, X, op).value;
}

OrdinalLoglikGrad ordinal_loglik_grad(const LabelMatrix& Z, const Matrix& X,
                                      const OrdinalParams& op) {
  check_params(op);
  require_shape(Z.rows() == X.rows(), "ordinal: label rows do not match X");
  require_shape(Z.outputs() == op.outputs(),
                "ordinal: label columns do not match the number of outputs");
  require_shape(X.cols() == op.latent_dim(),
                "ordinal: latent dimension mismatch");
  const int S = op.levels();
  validate_labels(Z, S);

  const Matrix thr = realize_thresholds(op);
  const double sigma = op.noise_std();
  const Matrix scores = X * op.W.transpose();  // N x C

  OrdinalLoglikGrad g;
  g.d_X.setZero(X.rows(), X.cols());
  g.d_W.setZero(op.W.rows(), op.W.cols());
  Matrix d_thr = Matrix::Zero(thr.rows(), thr.cols());

  for (Eigen::Index c = 0; c < op.outputs(); ++c) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      if (!Z.observed(i, c)) continue;
      const int s = Z.Z(i, c);
      const CellTerms t = cell_terms(scores(i, c), lower_cut(thr, c, s),
                                     upper_cut(thr, c, s), sigma);
      g.value += t.logprob;
      g.d_X.row(i) += t.d_score * op.W.row(c);
      g.d_W.row(c) += t.d_score * X.row(i);
      if (s >= 2) d_thr(c, s - 2) += t.d_lower;
      if (s <= S - 1) d_thr(c, s - 1) += t.d_upper;
      g.d_log_noise_std += t.d_log_noise;
    }
  }

  // Chain through the cumulative threshold parameterization.
  g.d_gamma_base = d_thr.rowwise().sum();
  g.d_gamma_log_incr.setZero(op.gamma_log_incr.rows(),
                             op.gamma_log_incr.cols());
  for (Eigen::Index c = 0; c < op.outputs(); ++c) {
    double tail = 0.0;  // sum of d_thr(c, t) for t > j
    for (Eigen::Index j = op.gamma_log_incr.cols() - 1; j >= 0; --j) {
      tail += d_thr(c, j + 1);
      g.d_gamma_log_incr(c, j) = tail * std::exp(op.gamma_log_incr(c, j));
    }
  }
  return g;
}

double expected_ordinal_loglik(const LabelMatrix& Z,
                               const LatentPosterior& post,
                               const OrdinalParams& op, const McConfig& mc,
                               ReparamScale mode) {
  const auto draws = standard_normal_draws(mc, post.size(), post.latent_dim());
  double total = 0.0;
  for (const auto& xi : draws)
    total += ordinal_loglik(Z, reparameterize(post, xi, mode), op);
  return total / static_cast<double>(draws.size());
}

LevelPrediction predict_levels(const Matrix& X_star, const OrdinalParams& op) {
  check_params(op);
  require_shape(X_star.cols() == op.latent_dim(),
                "predict_levels: latent dimension mismatch");
  const Matrix thr = realize_thresholds(op);
  const int S = op.levels();
  const double sigma = op.noise_std();
  const Matrix scores = X_star * op.W.transpose();

  LevelPrediction out;
  out.levels.resize(X_star.rows(), op.outputs());
  out.probabilities.assign(op.outputs(), Matrix(X_star.rows(), S));
  for (Eigen::Index c = 0; c < op.outputs(); ++c) {
    for (Eigen::Index i = 0; i < X_star.rows(); ++i) {
      const Vector lp = level_logprobs_from_score(scores(i, c), thr, c, sigma);
      int best = 0;
      for (int s = 1; s < S; ++s)
        if (lp(s) > lp(best)) best = s;
      out.levels(i, c) = best + 1;
      out.probabilities[c].row(i) = lp.array().exp().matrix().transpose();
    }
  }
  return out;
}

}  // namespace vgpae
