#pragma once

// Independent reference computations used only by the tests. They follow
// textbook formulas with dense inverses and scalar loops and never call into
// the library's solvers.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline double normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c,
                            double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix M(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) M(i, j) = n(rng);
  return M;
}

inline Matrix random_spd(std::mt19937_64& rng, Eigen::Index n) {
  const Matrix B = random_matrix(rng, n, n);
  return B * B.transpose() / static_cast<double>(n) + 0.5 * Matrix::Identity(n, n);
}

inline double rbf_scalar(const Vector& a, const Vector& b, double sv,
                         const Vector& ell) {
  double s = 0.0;
  for (Eigen::Index d = 0; d < a.size(); ++d) {
    const double r = (a(d) - b(d)) / ell(d);
    s += r * r;
  }
  return sv * std::exp(-0.5 * s);
}

inline Matrix rbf_gram(const Matrix& X1, const Matrix& X2, double sv,
                       const Vector& ell) {
  Matrix K(X1.rows(), X2.rows());
  for (Eigen::Index i = 0; i < X1.rows(); ++i)
    for (Eigen::Index j = 0; j < X2.rows(); ++j)
      K(i, j) = rbf_scalar(X1.row(i).transpose(), X2.row(j).transpose(), sv, ell);
  return K;
}

inline Matrix iso_gram(const Matrix& X1, const Matrix& X2, double sv, double ell) {
  return rbf_gram(X1, X2, sv, Vector::Constant(X1.cols(), ell));
}

/// Retrain-without-point-i GP predictions of targets M (one column per
/// latent dimension) with noise variance `noise` on the targets.
struct LooResult {
  Matrix mean;
  Vector var;
};

inline LooResult brute_force_loo(const Matrix& K, double noise, const Matrix& M) {
  const Eigen::Index n = K.rows();
  LooResult out{Matrix(n, M.cols()), Vector(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<Eigen::Index> rest;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) rest.push_back(j);
    const auto m = static_cast<Eigen::Index>(rest.size());
    Matrix Kr(m, m), Mr(m, M.cols());
    Vector k(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      k(a) = K(i, rest[a]);
      Mr.row(a) = M.row(rest[a]);
      for (Eigen::Index b = 0; b < m; ++b) Kr(a, b) = K(rest[a], rest[b]);
    }
    Kr.diagonal().array() += noise;
    const Matrix inv = Kr.inverse();
    out.mean.row(i) = k.transpose() * inv * Mr;
    out.var(i) = K(i, i) + noise - k.dot(inv * k);
  }
  return out;
}

/// log N(y; 0, C) via a dense inverse and determinant.
inline double mvn_logpdf(const Vector& y, const Matrix& C) {
  const double n = static_cast<double>(y.size());
  return -0.5 * (std::log(C.determinant()) + y.dot(C.inverse() * y) +
                 n * std::log(2.0 * M_PI));
}

/// Textbook GP predictive: mean k* (K + s2 I)^{-1} Y, variance
/// k** - k* (K + s2 I)^{-1} k*^T.
struct GpPrediction {
  Matrix mean;
  Vector var;
};

inline GpPrediction gp_predict(const Matrix& K, const Matrix& Ks, const Vector& kss,
                               double noise, const Matrix& Y) {
  Matrix Kn = K;
  Kn.diagonal().array() += noise;
  const Matrix inv = Kn.inverse();
  GpPrediction p{Ks * inv * Y, Vector(Ks.rows())};
  for (Eigen::Index i = 0; i < Ks.rows(); ++i)
    p.var(i) = kss(i) - Ks.row(i).dot(inv * Ks.row(i).transpose());
  return p;
}

/// ICC(3,1) from an explicit two-way ANOVA table, n targets x k raters.
inline double icc31_anova(const Matrix& ratings) {
  const double n = static_cast<double>(ratings.rows());
  const double k = static_cast<double>(ratings.cols());
  double grand = 0.0;
  for (Eigen::Index i = 0; i < ratings.rows(); ++i)
    for (Eigen::Index j = 0; j < ratings.cols(); ++j) grand += ratings(i, j);
  grand /= n * k;
  double ss_total = 0.0, ss_rows = 0.0, ss_cols = 0.0;
  for (Eigen::Index i = 0; i < ratings.rows(); ++i) {
    double rm = 0.0;
    for (Eigen::Index j = 0; j < ratings.cols(); ++j) {
      rm += ratings(i, j);
      ss_total += (ratings(i, j) - grand) * (ratings(i, j) - grand);
    }
    rm /= k;
    ss_rows += k * (rm - grand) * (rm - grand);
  }
  for (Eigen::Index j = 0; j < ratings.cols(); ++j) {
    double cm = 0.0;
    for (Eigen::Index i = 0; i < ratings.rows(); ++i) cm += ratings(i, j);
    cm /= n;
    ss_cols += n * (cm - grand) * (cm - grand);
  }
  const double ss_err = ss_total - ss_rows - ss_cols;
  const double msr = ss_rows / (n - 1);
  const double mse = ss_err / ((n - 1) * (k - 1));
  return (msr - mse) / (msr + (k - 1) * mse);
}

/// Gaussian-interval probability by direct CDF differences.
inline double interval_prob(double lo, double hi) {
  return normal_cdf(hi) - normal_cdf(lo);
}

}  // namespace oracle
