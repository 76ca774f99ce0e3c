#include <doctest.h>

#include "oracles.hpp"
#include "vgpae/ordinal.hpp"

#include <random>

using namespace vgpae;

namespace {

OrdinalParams random_params(std::mt19937_64& rng, int C, int q, int S) {
  OrdinalParams op;
  op.W = oracle::random_matrix(rng, C, q);
  op.gamma_base = oracle::random_matrix(rng, C, 1).col(0);
  op.gamma_log_incr = oracle::random_matrix(rng, C, S - 2, 0.5);
  op.log_noise_std = std::log(0.3);
  return op;
}

}  // namespace

TEST_CASE("level probabilities: hand values") {
  Matrix th(1, 2);
  th << -1.0, 1.0;
  const Vector lp = level_logprobs_from_score(0.0, th, 0, 1.0);
  CHECK(std::exp(lp(1)) == doctest::Approx(0.682689492137).epsilon(1e-10));
  CHECK(std::exp(lp(0)) == doctest::Approx(oracle::normal_cdf(-1.0)).epsilon(1e-12));
  CHECK(std::exp(lp(2)) == doctest::Approx(oracle::normal_cdf(-1.0)).epsilon(1e-12));
}

TEST_CASE("realize_thresholds accumulates exponentiated increments") {
  OrdinalParams op;
  op.W = Matrix::Zero(1, 2);
  op.gamma_base = Vector::Constant(1, -0.5);
  op.gamma_log_incr = Matrix(1, 2);
  op.gamma_log_incr << 0.0, std::log(2.0);
  const Matrix t = realize_thresholds(op);
  REQUIRE(t.cols() == 3);
  CHECK(t(0, 0) == -0.5);
  CHECK(t(0, 1) == doctest::Approx(0.5));
  CHECK(t(0, 2) == doctest::Approx(2.5));
  CHECK(op.levels() == 4);
}

TEST_CASE("log_gaussian_interval against direct CDF differences and in the tails") {
  const double pairs[][2] = {{-1, 1}, {0.5, 2.0}, {-3, -2}, {-0.1, 0.1}, {2, 10}};
  for (const auto& pr : pairs)
    CHECK(std::exp(log_gaussian_interval(pr[0], pr[1])) ==
          doctest::Approx(oracle::interval_prob(pr[0], pr[1])).epsilon(1e-12));
  // Deep tails stay finite where the naive difference underflows to zero.
  CHECK(std::isfinite(log_gaussian_interval(30.0, INFINITY)));
  CHECK(log_gaussian_interval(30.0, INFINITY) ==
        doctest::Approx(std::log(0.5 * std::erfc(30.0 / std::sqrt(2.0)))).epsilon(1e-10));
  CHECK(log_gaussian_interval(-INFINITY, -40.0) < -700.0 + 10.0);
  CHECK(log_gaussian_interval(50.0, 51.0) >= kMinLogProb);
}

TEST_CASE("level probabilities normalize and predictions are monotone") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> levels(2, 6);
  for (int t = 0; t < 500; ++t) {
    const int S = levels(rng);
    const OrdinalParams op = random_params(rng, 2, 3, S);
    const Matrix th = realize_thresholds(op);
    for (Eigen::Index s = 1; s < th.cols(); ++s) CHECK(th(0, s) > th(0, s - 1));
    const Vector x = oracle::random_matrix(rng, 3, 1, 2.0).col(0);
    const Vector lp = level_logprobs(x, op, 1);
    CHECK(std::abs(lp.array().exp().sum() - 1.0) < 1e-12);
  }
  const OrdinalParams op = random_params(rng, 1, 1, 5);
  Matrix X(201, 1);
  for (int i = 0; i < 201; ++i) X(i, 0) = -10.0 + 0.1 * i;
  const auto pred = predict_levels(op.W(0, 0) > 0 ? X : (-X).eval(), op);
  for (int i = 1; i < 201; ++i) CHECK(pred.levels(i, 0) >= pred.levels(i - 1, 0));
}

TEST_CASE("predict_levels breaks ties towards the lower level") {
  OrdinalParams op;
  op.W = Matrix::Zero(1, 1);
  op.gamma_base = Vector::Constant(1, 0.0);
  op.gamma_log_incr = Matrix(1, 0);
  op.log_noise_std = 0.0;
  const auto pred = predict_levels(Matrix::Zero(1, 1), op);
  CHECK(pred.levels(0, 0) == 1);
}

TEST_CASE("ordinal_loglik_grad matches finite differences, masked cells ignored") {
  std::mt19937_64 rng(7);
  const int S = 4, C = 2, q = 2, n = 6;
  OrdinalParams op = random_params(rng, C, q, S);
  const Matrix X = oracle::random_matrix(rng, n, q);
  LabelMatrix Z{IntMatrix(n, C), BoolArray::Constant(n, C, true)};
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < C; ++c) Z.Z(i, c) = 1 + (i + 2 * c) % S;
  Z.observed(2, 1) = false;
  const auto g = ordinal_loglik_grad(Z, X, op);
  CHECK(g.value == doctest::Approx(ordinal_loglik(Z, X, op)).epsilon(1e-12));
  const double h = 1e-6;
  auto fd = [&](auto&& perturb) {
    OrdinalParams a = op, b = op;
    perturb(a, h);
    perturb(b, -h);
    return (ordinal_loglik(Z, X, a) - ordinal_loglik(Z, X, b)) / (2 * h);
  };
  for (int c = 0; c < C; ++c) {
    for (int d = 0; d < q; ++d)
      CHECK(g.d_W(c, d) ==
            doctest::Approx(fd([&](OrdinalParams& o, double e) { o.W(c, d) += e; })).epsilon(1e-6));
    CHECK(g.d_gamma_base(c) ==
          doctest::Approx(fd([&](OrdinalParams& o, double e) { o.gamma_base(c) += e; })).epsilon(1e-6));
    for (int s = 0; s < S - 2; ++s)
      CHECK(g.d_gamma_log_incr(c, s) ==
            doctest::Approx(fd([&](OrdinalParams& o, double e) { o.gamma_log_incr(c, s) += e; }))
                .epsilon(1e-6));
  }
  CHECK(g.d_log_noise_std ==
        doctest::Approx(fd([&](OrdinalParams& o, double e) { o.log_noise_std += e; })).epsilon(1e-6));
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < q; ++d) {
      Matrix Xp = X, Xm = X;
      Xp(i, d) += h;
      Xm(i, d) -= h;
      CHECK(g.d_X(i, d) ==
            doctest::Approx((ordinal_loglik(Z, Xp, op) - ordinal_loglik(Z, Xm, op)) / (2 * h))
                .epsilon(1e-6));
    }

  // Changing a masked label changes nothing.
  LabelMatrix Z2 = Z;
  Z2.Z(2, 1) = 1 + (Z.Z(2, 1) % S);
  CHECK(ordinal_loglik(Z2, X, op) == ordinal_loglik(Z, X, op));
}

TEST_CASE("validate_labels reports the offending cell") {
  LabelMatrix Z = LabelMatrix::fully_observed(IntMatrix::Ones(3, 2));
  Z.Z(1, 1) = 4;
  try {
    validate_labels(Z, 3);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 1") != std::string::npos);
    CHECK(msg.find("column 1") != std::string::npos);
  }
  Z.observed(1, 1) = false;
  CHECK_NOTHROW(validate_labels(Z, 3));
}
