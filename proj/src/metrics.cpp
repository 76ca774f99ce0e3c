#include "vgpae/metrics.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>

namespace vgpae {

double mse(const Eigen::VectorXi& z_true, const Eigen::VectorXi& z_pred) {
  require_shape(z_true.size() == z_pred.size(), "mse: length mismatch");
  if (z_true.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  return (z_true - z_pred).cast<double>().squaredNorm() /
         static_cast<double>(z_true.size());
}

double icc31(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  require_shape(a.size() == b.size(), "icc31: length mismatch");
  const Eigen::Index n = a.size();
  if (n < 2) throw DomainError("icc31: need at least two targets");
  constexpr double k = 2.0;
  const double grand = (a.sum() + b.sum()) / (k * n);
  const Vector row_mean = 0.5 * (a + b);
  const double mean_a = a.mean(), mean_b = b.mean();

  const double ss_total = (a.array() - grand).square().sum() +
                          (b.array() - grand).square().sum();
  const double ss_rows = k * (row_mean.array() - grand).square().sum();
  const double ss_cols = n * ((mean_a - grand) * (mean_a - grand) +
                              (mean_b - grand) * (mean_b - grand));
  const double ss_resid = std::max(0.0, ss_total - ss_rows - ss_cols);

  const double ms_rows = ss_rows / (n - 1);
  const double ms_resid = ss_resid / ((n - 1) * (k - 1));
  const double denom = ms_rows + (k - 1) * ms_resid;
  if (!(ms_rows > 0.0) || !(denom > 0.0)) {
    std::cerr << "warning: icc31 undefined for zero-variance input\n";
    return std::numeric_limits<double>::quiet_NaN();
  }
  return (ms_rows - ms_resid) / denom;
}

double icc31(const Eigen::VectorXi& z_true, const Eigen::VectorXi& z_pred) {
  return icc31(Eigen::VectorXd(z_true.cast<double>()),
               Eigen::VectorXd(z_pred.cast<double>()));
}

double nlpd(const Matrix& Y, const Matrix& means, const Vector& variances,
            double extra_noise_variance) {
  require_shape(Y.rows() == means.rows() && Y.cols() == means.cols() &&
                    variances.size() == Y.rows(),
                "nlpd: shape mismatch");
  if (Y.rows() == 0) return std::numeric_limits<double>::quiet_NaN();
  const auto D = static_cast<double>(Y.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < Y.rows(); ++i) {
    const double v = variances(i) + extra_noise_variance;
    if (!(v > 0.0)) throw DomainError("nlpd: non-positive variance");
    total += 0.5 * (D * (kLog2Pi + std::log(v)) +
                    (Y.row(i) - means.row(i)).squaredNorm() / v);
  }
  return total / static_cast<double>(Y.rows());
}

namespace {

double nan_mean(const std::vector<double>& xs) {
  double s = 0.0;
  int n = 0;
  for (double x : xs)
    if (std::isfinite(x)) {
      s += x;
      ++n;
    }
  return n ? s / n : std::numeric_limits<double>::quiet_NaN();
}

nlohmann::json number_or_null(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

}  // namespace

double MetricReport::mse_mean() const { return nan_mean(mse_per_output); }
double MetricReport::icc_mean() const { return nan_mean(icc_per_output); }

void add_ordinal_metrics(MetricReport& report, const LabelMatrix& truth,
                         const IntMatrix& predicted) {
  require_shape(truth.Z.rows() == predicted.rows() &&
                    truth.Z.cols() == predicted.cols(),
                "metrics: prediction shape does not match labels");
  for (Eigen::Index c = 0; c < truth.outputs(); ++c) {
    std::vector<int> t, p;
    for (Eigen::Index i = 0; i < truth.rows(); ++i)
      if (truth.observed(i, c)) {
        t.push_back(truth.Z(i, c));
        p.push_back(predicted(i, c));
      }
    const Eigen::Map<const Eigen::VectorXi> tv(t.data(),
                                               static_cast<Eigen::Index>(t.size()));
    const Eigen::Map<const Eigen::VectorXi> pv(p.data(),
                                               static_cast<Eigen::Index>(p.size()));
    report.output_names.push_back("output_" + std::to_string(c + 1));
    report.cells_per_output.push_back(t.size());
    report.mse_per_output.push_back(mse(tv, pv));
    report.icc_per_output.push_back(
        t.size() >= 2 ? icc31(Eigen::VectorXi(tv), Eigen::VectorXi(pv))
                      : std::numeric_limits<double>::quiet_NaN());
  }
}

void MetricReport::write_json(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["outputs"] = nlohmann::json::array();
  for (std::size_t c = 0; c < output_names.size(); ++c)
    j["outputs"].push_back({{"name", output_names[c]},
                            {"cells", cells_per_output[c]},
                            {"mse", number_or_null(mse_per_output[c])},
                            {"icc", number_or_null(icc_per_output[c])}});
  j["mse_mean"] = number_or_null(mse_mean());
  j["icc_mean"] = number_or_null(icc_mean());
  j["nlpd"] = nlohmann::json::object();
  for (std::size_t v = 0; v < view_names.size(); ++v)
    j["nlpd"][view_names[v]] = number_or_null(nlpd_per_view[v]);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "metric,target,value\n";
  for (std::size_t c = 0; c < output_names.size(); ++c) {
    out << "mse," << output_names[c] << ',' << mse_per_output[c] << '\n';
    out << "icc," << output_names[c] << ',' << icc_per_output[c] << '\n';
  }
  out << "mse,mean," << mse_mean() << '\n';
  out << "icc,mean," << icc_mean() << '\n';
  for (std::size_t v = 0; v < view_names.size(); ++v)
    out << "nlpd," << view_names[v] << ',' << nlpd_per_view[v] << '\n';
}

}  // namespace vgpae
