#pragma once

#include "vgpae/common.hpp"
#include "vgpae/ordinal.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace vgpae {

/// Mean squared difference between true and predicted levels.
double mse(const Eigen::VectorXi& z_true, const Eigen::VectorXi& z_pred);

/// ICC(3,1): two-way mixed effects, consistency, single rater, with the
/// ground truth and the prediction as the two raters:
///   (MS_targets - MS_residual) / (MS_targets + MS_residual).
/// Returns NaN (and warns on stderr) when the between-target mean square is
/// zero.
double icc31(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
double icc31(const Eigen::VectorXi& z_true, const Eigen::VectorXi& z_pred);

/// Mean over rows of -sum_d log N(y_d; mu_d, var + extra_noise).
/// `variances` holds one predictive variance per row, shared by all columns.
double nlpd(const Matrix& Y, const Matrix& means, const Vector& variances,
            double extra_noise_variance = 0.0);

struct MetricReport {
  std::vector<std::string> output_names;
  std::vector<double> mse_per_output;
  std::vector<double> icc_per_output;
  std::vector<std::size_t> cells_per_output;
  std::vector<std::string> view_names;
  std::vector<double> nlpd_per_view;

  double mse_mean() const;
  double icc_mean() const;

  void write_json(const std::filesystem::path& path) const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Per-output MSE and ICC over observed cells only.
void add_ordinal_metrics(MetricReport& report, const LabelMatrix& truth,
                         const IntMatrix& predicted);

}  // namespace vgpae
