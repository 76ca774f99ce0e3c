#include <doctest.h>

#include "oracles.hpp"
#include "vgpae/data.hpp"
#include "vgpae/metrics.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <random>

using namespace vgpae;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vgpae_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("mse: hand value") {
  Eigen::VectorXi a(3), b(3);
  a << 1, 2, 3;
  b << 1, 3, 1;
  CHECK(mse(a, b) == doctest::Approx(5.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("icc31 against an explicit ANOVA table") {
  Eigen::VectorXi a(4), b(4);
  a << 1, 2, 3, 3;
  b << 1, 2, 3, 3;
  CHECK(icc31(a, b) == doctest::Approx(1.0).epsilon(1e-14));

  std::mt19937_64 rng(10);
  for (int t = 0; t < 20; ++t) {
    const Matrix R = oracle::random_matrix(rng, 15, 2);
    const Eigen::VectorXd x = R.col(0), y = R.col(1) + 0.7 * R.col(0);
    CHECK(icc31(x, y) == doctest::Approx(oracle::icc31_anova((Matrix(15, 2) << x, y).finished()))
                             .epsilon(1e-12));
  }
  // A constant offset between raters does not change consistency.
  Eigen::VectorXd x(5), y(5);
  x << 1, 2, 3, 4, 5;
  y = x.array() + 2.0;
  CHECK(icc31(x, y) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("icc31 is NaN without between-target variance") {
  Eigen::VectorXi a = Eigen::VectorXi::Constant(4, 2);
  CHECK(std::isnan(icc31(a, a)));
}

TEST_CASE("nlpd matches a per-cell Gaussian oracle") {
  Matrix Y(2, 2), mu(2, 2);
  Y << 0.0, 1.0, 2.0, -1.0;
  mu << 0.5, 0.5, 1.0, 0.0;
  Vector var(2);
  var << 0.25, 2.0;
  double ref = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int d = 0; d < 2; ++d)
      ref += 0.5 * (std::log(2 * M_PI * var(i)) + (Y(i, d) - mu(i, d)) * (Y(i, d) - mu(i, d)) / var(i));
  CHECK(nlpd(Y, mu, var) == doctest::Approx(ref / 2.0).epsilon(1e-14));
}

TEST_CASE("add_ordinal_metrics uses observed cells only") {
  LabelMatrix truth{IntMatrix(4, 1), BoolArray::Constant(4, 1, true)};
  truth.Z << 1, 2, 3, 1;
  truth.observed(3, 0) = false;
  IntMatrix pred(4, 1);
  pred << 1, 2, 3, 3;
  MetricReport r;
  add_ordinal_metrics(r, truth, pred);
  REQUIRE(r.mse_per_output.size() == 1);
  CHECK(r.mse_per_output[0] == 0.0);
  CHECK(r.icc_per_output[0] == doctest::Approx(1.0));
  CHECK(r.cells_per_output[0] == 3);
}

TEST_CASE("standardization is fitted on training rows") {
  MultiViewDataset d;
  d.view_names = {"a"};
  d.views = {Matrix(4, 2)};
  d.views[0] << 1, 5, 3, 5, 5, 5, 100, 7;
  d.split = {Split::Train, Split::Train, Split::Train, Split::Test};
  const auto s = Standardization::fit(d);
  CHECK(s.mean[0](0) == doctest::Approx(3.0));
  CHECK(s.mean[0](1) == doctest::Approx(5.0));
  CHECK(s.scale[0](1) == 1.0);
  const Matrix Z = s.apply(0, d.views[0]);
  CHECK(Z.topRows(3).col(0).mean() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("dataset round trip through CSV and manifest") {
  SyntheticOrdinalConfig cfg;
  cfg.n = 30;
  cfg.geometric_dim = 3;
  cfg.appearance_dim = 4;
  auto gen = gen_synthetic_ordinal(cfg);
  gen.data.labels->observed(3, 1) = false;
  const fs::path dir = scratch_dir("roundtrip");
  const fs::path manifest = save_dataset(gen.data, dir);
  const auto back = load_dataset(manifest);
  REQUIRE(back.num_views() == 2);
  CHECK(back.view_names == gen.data.view_names);
  for (std::size_t v = 0; v < 2; ++v) CHECK(back.views[v] == gen.data.views[v]);
  REQUIRE(back.has_labels());
  CHECK(back.labels->observed(3, 1) == false);
  CHECK(back.labels->Z(4, 1) == gen.data.labels->Z(4, 1));
  CHECK(back.split == gen.data.split);
  CHECK(back.levels == 3);
  CHECK(back.outputs == 2);
}

TEST_CASE("load_dataset reports malformed input as DataError") {
  const fs::path dir = scratch_dir("bad");
  {
    std::ofstream(dir / "v.csv") << "a,b\n1,2\n3\n";
    std::ofstream(dir / "m.json") << R"({"views":[{"name":"v","file":"v.csv"}],"levels":3,"outputs":0})";
  }
  CHECK_THROWS_AS(load_dataset(dir / "m.json"), DataError);
  {
    std::ofstream(dir / "v.csv") << "a,b\n1,2\n3,x\n";
  }
  CHECK_THROWS_AS(load_dataset(dir / "m.json"), DataError);
  CHECK_THROWS_AS(load_dataset(dir / "missing.json"), DataError);
}

TEST_CASE("rotated glyph generator") {
  const auto d = gen_rotated_glyph(360, 28, 0);
  REQUIRE(d.num_views() == 1);
  CHECK(d.views[0].rows() == 360);
  CHECK(d.views[0].cols() == 784);
  CHECK((d.views[0].rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-12);
  const Vector& ang = d.metadata.at("angle_degrees");
  CHECK(ang(0) == 0.0);
  CHECK(ang(359) == doctest::Approx(359.0));
  // Opposite angles differ: the bright pixel breaks the half-turn symmetry.
  CHECK((d.views[0].row(0) - d.views[0].row(180)).norm() > 0.1);
  // Neighbouring angles are close relative to opposite ones.
  CHECK((d.views[0].row(0) - d.views[0].row(1)).norm() <
        (d.views[0].row(0) - d.views[0].row(90)).norm());
  CHECK(gen_rotated_glyph(36, 12, 5).views[0] == gen_rotated_glyph(36, 12, 5).views[0]);
}

TEST_CASE("synthetic ordinal generator") {
  SyntheticOrdinalConfig cfg;
  auto a = gen_synthetic_ordinal(cfg);
  auto b = gen_synthetic_ordinal(cfg);
  CHECK(a.data.views[0] == b.data.views[0]);
  CHECK(a.data.labels->Z == b.data.labels->Z);
  CHECK(a.data.size() == 500);
  CHECK(a.data.rows_with(Split::Test).size() == 100);
  CHECK(a.data.labels->Z.minCoeff() >= 1);
  CHECK(a.data.labels->Z.maxCoeff() <= 3);
  for (Eigen::Index c = 0; c < a.cut_points.rows(); ++c)
    CHECK(a.cut_points(c, 1) > a.cut_points(c, 0));
  // Every level occurs for every output.
  for (int c = 0; c < 2; ++c)
    for (int s = 1; s <= 3; ++s) CHECK((a.data.labels->Z.col(c).array() == s).count() > 10);
}
