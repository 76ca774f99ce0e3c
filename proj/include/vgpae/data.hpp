#pragma once

#include "vgpae/common.hpp"
#include "vgpae/ordinal.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vgpae {

enum class Split : std::uint8_t { Train, Test };

/// V observation matrices sharing N rows, optional ordinal labels and
/// per-row train/test tags.
struct MultiViewDataset {
  std::vector<std::string> view_names;
  std::vector<Matrix> views;
  std::optional<LabelMatrix> labels;
  std::vector<Split> split;  // empty means every row is training data
  int levels = 0;            // S
  int outputs = 0;           // C
  std::map<std::string, Vector> metadata;

  Eigen::Index size() const { return views.empty() ? 0 : views.front().rows(); }
  std::size_t num_views() const { return views.size(); }
  bool has_labels() const { return labels.has_value(); }

  IndexVector rows_with(Split s) const;
  MultiViewDataset subset(std::span<const Eigen::Index> rows) const;

  /// Throws DataError describing the first inconsistency.
  void validate() const;
};

/// Per-dimension affine map to zero mean / unit variance, fitted on the
/// training rows. Constant columns keep scale 1.
struct Standardization {
  std::vector<Vector> mean;
  std::vector<Vector> scale;

  static Standardization fit(const MultiViewDataset& data);
  Matrix apply(std::size_t view, const Matrix& Y) const;
  MultiViewDataset apply(const MultiViewDataset& data) const;
  bool empty() const { return mean.empty(); }
};

// CSV: first line is a header of column names, then one row per line.
Matrix read_csv_matrix(const std::filesystem::path& path,
                       std::vector<std::string>* header = nullptr);
void write_csv_matrix(const std::filesystem::path& path, const Matrix& M,
                      const std::vector<std::string>& header);
std::vector<std::string> default_header(const std::string& prefix,
                                        Eigen::Index cols);

/// Reads a JSON manifest
///   {views:[{name,file}], labels:file|null, levels:S, outputs:C,
///    split:file|null, metadata:{name:file}?}
/// Relative file names resolve against the manifest's directory.
MultiViewDataset load_dataset(const std::filesystem::path& manifest);

/// Writes manifest.json plus one CSV per view / labels / split / metadata
/// vector into `dir`. Returns the manifest path.
std::filesystem::path save_dataset(const MultiViewDataset& data,
                                   const std::filesystem::path& dir);

/// A bar glyph with one bright pixel near one end, rotated through 360
/// degrees in `steps` increments with bilinear resampling. Each row is a
/// flattened image scaled to unit norm; metadata["angle_degrees"] holds the
/// true rotation.
MultiViewDataset gen_rotated_glyph(int steps, int image_side,
                                   std::uint64_t seed, double noise = 0.0,
                                   double asymmetry = 3.0);

struct SyntheticOrdinalConfig {
  Eigen::Index n = 500;
  int latent_dim = 2;
  int outputs = 2;
  int levels = 3;
  double separation = 1.0;
  double noise = 0.05;  // views and label score; Bayes ICC stays above 0.95
  std::uint64_t seed = 1;
  double test_fraction = 0.2;
  Eigen::Index geometric_dim = 10;
  Eigen::Index appearance_dim = 30;
};

/// Two-view ordinal benchmark with known generating parameters.
struct SyntheticOrdinal {
  MultiViewDataset data;
  Matrix latent;       // true x, N x q
  Matrix scores;       // noise-free separation * w_c^T x, N x C
  Matrix cut_points;   // C x (S-1)
  double label_noise;  // std of the score noise

  /// Most probable level given the true latent and generator internals.
  IntMatrix bayes_levels() const;
};

SyntheticOrdinal gen_synthetic_ordinal(const SyntheticOrdinalConfig& cfg);

}  // namespace vgpae
