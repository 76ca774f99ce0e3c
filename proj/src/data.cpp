#include "vgpae/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace vgpae {

namespace fs = std::filesystem;
using json = nlohmann::json;

IndexVector MultiViewDataset::rows_with(Split s) const {
  IndexVector out;
  for (Eigen::Index i = 0; i < size(); ++i) {
    const Split tag = split.empty() ? Split::Train : split[i];
    if (tag == s) out.push_back(i);
  }
  return out;
}

MultiViewDataset MultiViewDataset::subset(
    std::span<const Eigen::Index> rows) const {
  MultiViewDataset out;
  out.view_names = view_names;
  out.levels = levels;
  out.outputs = outputs;
  const auto n = static_cast<Eigen::Index>(rows.size());
  for (const auto& Y : views) {
    Matrix sub(n, Y.cols());
    for (Eigen::Index r = 0; r < n; ++r) sub.row(r) = Y.row(rows[r]);
    out.views.push_back(std::move(sub));
  }
  if (labels) out.labels = labels->rows(rows);
  if (!split.empty())
    for (auto r : rows) out.split.push_back(split[r]);
  for (const auto& [name, v] : metadata) {
    Vector sub(n);
    for (Eigen::Index r = 0; r < n; ++r) sub(r) = v(rows[r]);
    out.metadata.emplace(name, std::move(sub));
  }
  return out;
}

void MultiViewDataset::validate() const {
  if (views.empty()) throw DataError("dataset has no views");
  if (view_names.size() != views.size())
    throw DataError("dataset: view names do not match the number of views");
  const Eigen::Index n = size();
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (views[v].rows() != n)
      throw DataError("view '" + view_names[v] + "' has " +
                      std::to_string(views[v].rows()) + " rows, expected " +
                      std::to_string(n));
    if (views[v].cols() < 1)
      throw DataError("view '" + view_names[v] + "' has no columns");
    if (!views[v].allFinite())
      throw DataError("view '" + view_names[v] + "' contains non-finite values");
  }
  if (!split.empty() && static_cast<Eigen::Index>(split.size()) != n)
    throw DataError("split has " + std::to_string(split.size()) +
                    " rows, expected " + std::to_string(n));
  if (labels) {
    if (labels->rows() != n)
      throw DataError("labels have " + std::to_string(labels->rows()) +
                      " rows, expected " + std::to_string(n));
    if (labels->outputs() != outputs)
      throw DataError("labels have " + std::to_string(labels->outputs()) +
                      " columns, manifest says outputs=" +
                      std::to_string(outputs));
    if (levels < 2) throw DataError("levels must be at least 2");
    validate_labels(*labels, levels);
  }
  for (const auto& [name, v] : metadata)
    if (v.size() != n)
      throw DataError("metadata '" + name + "' has wrong length");
}

Standardization Standardization::fit(const MultiViewDataset& data) {
  const IndexVector train = data.rows_with(Split::Train);
  if (train.empty()) throw DataError("standardization: no training rows");
  Standardization st;
  for (const auto& Y : data.views) {
    Matrix sub(static_cast<Eigen::Index>(train.size()), Y.cols());
    for (std::size_t r = 0; r < train.size(); ++r)
      sub.row(static_cast<Eigen::Index>(r)) = Y.row(train[r]);
    const Vector mu = sub.colwise().mean().transpose();
    Vector sd = ((sub.rowwise() - mu.transpose()).colwise().squaredNorm() /
                 static_cast<double>(sub.rows()))
                    .cwiseSqrt()
                    .transpose();
    for (Eigen::Index d = 0; d < sd.size(); ++d)
      if (!(sd(d) > 1e-12)) sd(d) = 1.0;
    st.mean.push_back(mu);
    st.scale.push_back(sd);
  }
  return st;
}

Matrix Standardization::apply(std::size_t view, const Matrix& Y) const {
  require_shape(view < mean.size(), "standardization: view index out of range");
  require_shape(Y.cols() == mean[view].size(),
                "standardization: view " + std::to_string(view) +
                    " has dimension " + std::to_string(Y.cols()) +
                    ", expected " + std::to_string(mean[view].size()));
  return (Y.rowwise() - mean[view].transpose()) *
         scale[view].cwiseInverse().asDiagonal();
}

MultiViewDataset Standardization::apply(const MultiViewDataset& data) const {
  MultiViewDataset out = data;
  require_shape(data.views.size() == mean.size(),
                "standardization: view count mismatch");
  for (std::size_t v = 0; v < data.views.size(); ++v)
    out.views[v] = apply(v, data.views[v]);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' '))
      cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(0, 1);
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const fs::path& path,
                    std::size_t row, std::size_t col) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw DataError(path.string() + ": cannot parse '" + s + "' at row " +
                    std::to_string(row) + ", column " + std::to_string(col));
  return v;
}

std::vector<std::vector<std::string>> read_csv_cells(
    const fs::path& path, std::vector<std::string>* header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  const auto head = split_line(line);
  if (header) *header = head;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_line(line);
    if (cells.size() != head.size())
      throw DataError(path.string() + ": row " + std::to_string(rows.size()) +
                      " has " + std::to_string(cells.size()) +
                      " columns, header has " + std::to_string(head.size()));
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

LabelMatrix read_labels(const fs::path& path) {
  std::vector<std::string> header;
  const auto cells = read_csv_cells(path, &header);
  const auto n = static_cast<Eigen::Index>(cells.size());
  const auto C = static_cast<Eigen::Index>(header.size());
  LabelMatrix L{IntMatrix::Zero(n, C), BoolArray::Constant(n, C, true)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < C; ++c) {
      const std::string& s = cells[i][c];
      if (s.empty() || s == "NA" || s == "nan") {
        L.observed(i, c) = false;
        continue;
      }
      int z = 0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), z);
      if (ec != std::errc() || ptr != s.data() + s.size())
        throw DataError(path.string() + ": label '" + s + "' at row " +
                        std::to_string(i) + ", column " + std::to_string(c) +
                        " is not an integer");
      L.Z(i, c) = z;
    }
  }
  return L;
}

void write_labels(const fs::path& path, const LabelMatrix& L) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (Eigen::Index c = 0; c < L.outputs(); ++c)
    out << (c ? "," : "") << "output_" << (c + 1);
  out << '\n';
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    for (Eigen::Index c = 0; c < L.outputs(); ++c) {
      if (c) out << ',';
      if (L.observed(i, c)) out << L.Z(i, c);
      else out << "NA";
    }
    out << '\n';
  }
}

}  // namespace

Matrix read_csv_matrix(const fs::path& path, std::vector<std::string>* header) {
  std::vector<std::string> head;
  const auto cells = read_csv_cells(path, &head);
  Matrix M(static_cast<Eigen::Index>(cells.size()),
           static_cast<Eigen::Index>(head.size()));
  for (std::size_t i = 0; i < cells.size(); ++i)
    for (std::size_t j = 0; j < head.size(); ++j)
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          parse_double(cells[i][j], path, i, j);
  if (header) *header = std::move(head);
  return M;
}

void write_csv_matrix(const fs::path& path, const Matrix& M,
                      const std::vector<std::string>& header) {
  require_shape(static_cast<Eigen::Index>(header.size()) == M.cols(),
                "write_csv_matrix: header size does not match columns");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t j = 0; j < header.size(); ++j)
    out << (j ? "," : "") << header[j];
  out << '\n';
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j)
      out << (j ? "," : "") << format_double(M(i, j));
    out << '\n';
  }
}

std::vector<std::string> default_header(const std::string& prefix,
                                        Eigen::Index cols) {
  std::vector<std::string> h;
  for (Eigen::Index j = 0; j < cols; ++j)
    h.push_back(prefix + std::to_string(j + 1));
  return h;
}

// ---------------------------------------------------------------------------
// Manifest

MultiViewDataset load_dataset(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open manifest " + manifest.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("manifest " + manifest.string() + ": " + e.what());
  }
  const fs::path base = manifest.parent_path();
  auto resolve = [&](const std::string& f) {
    fs::path p(f);
    return p.is_absolute() ? p : base / p;
  };

  MultiViewDataset data;
  try {
    if (!j.contains("views") || !j["views"].is_array() || j["views"].empty())
      throw DataError("manifest: 'views' must be a non-empty array");
    for (const auto& v : j["views"]) {
      const auto name = v.at("name").get<std::string>();
      const auto path = resolve(v.at("file").get<std::string>());
      if (!fs::exists(path))
        throw DataError("view '" + name + "': missing file " + path.string());
      data.view_names.push_back(name);
      data.views.push_back(read_csv_matrix(path));
    }
    data.levels = j.value("levels", 0);
    data.outputs = j.value("outputs", 0);
    if (j.contains("labels") && !j["labels"].is_null()) {
      const auto path = resolve(j["labels"].get<std::string>());
      if (!fs::exists(path))
        throw DataError("labels: missing file " + path.string());
      data.labels = read_labels(path);
    }
    if (j.contains("split") && !j["split"].is_null()) {
      const auto path = resolve(j["split"].get<std::string>());
      std::vector<std::string> header;
      const auto cells = read_csv_cells(path, &header);
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& tag = cells[i].at(0);
        if (tag == "train") data.split.push_back(Split::Train);
        else if (tag == "test") data.split.push_back(Split::Test);
        else
          throw DataError(path.string() + ": unknown split tag '" + tag +
                          "' at row " + std::to_string(i));
      }
    }
    if (j.contains("metadata") && j["metadata"].is_object()) {
      for (const auto& [name, file] : j["metadata"].items()) {
        const Matrix m = read_csv_matrix(resolve(file.get<std::string>()));
        data.metadata.emplace(name, m.col(0));
      }
    }
  } catch (const json::exception& e) {
    throw DataError("manifest " + manifest.string() + ": " + e.what());
  }
  data.validate();
  return data;
}

fs::path save_dataset(const MultiViewDataset& data, const fs::path& dir) {
  data.validate();
  fs::create_directories(dir);
  json j;
  j["views"] = json::array();
  for (std::size_t v = 0; v < data.views.size(); ++v) {
    const std::string file = "view_" + data.view_names[v] + ".csv";
    write_csv_matrix(dir / file, data.views[v],
                     default_header(data.view_names[v] + "_",
                                    data.views[v].cols()));
    j["views"].push_back({{"name", data.view_names[v]}, {"file", file}});
  }
  if (data.labels) {
    write_labels(dir / "labels.csv", *data.labels);
    j["labels"] = "labels.csv";
  } else {
    j["labels"] = nullptr;
  }
  j["levels"] = data.levels;
  j["outputs"] = data.outputs;
  if (!data.split.empty()) {
    std::ofstream out(dir / "split.csv");
    out << "split\n";
    for (auto s : data.split) out << (s == Split::Train ? "train" : "test") << '\n';
    j["split"] = "split.csv";
  } else {
    j["split"] = nullptr;
  }
  if (!data.metadata.empty()) {
    j["metadata"] = json::object();
    for (const auto& [name, v] : data.metadata) {
      const std::string file = "meta_" + name + ".csv";
      write_csv_matrix(dir / file, v, {name});
      j["metadata"][name] = file;
    }
  }
  const fs::path manifest = dir / "manifest.json";
  std::ofstream out(manifest);
  out << j.dump(2) << '\n';
  return manifest;
}

// ---------------------------------------------------------------------------
// Generators

namespace {

double bilinear(const Matrix& img, double r, double c) {
  const auto side = img.rows();
  const double r0f = std::floor(r);
  const double c0f = std::floor(c);
  const double fr = r - r0f;
  const double fc = c - c0f;
  const auto r0 = static_cast<Eigen::Index>(r0f);
  const auto c0 = static_cast<Eigen::Index>(c0f);
  auto at = [&](Eigen::Index i, Eigen::Index j) {
    return (i < 0 || j < 0 || i >= side || j >= side) ? 0.0 : img(i, j);
  };
  return (1 - fr) * (1 - fc) * at(r0, c0) + (1 - fr) * fc * at(r0, c0 + 1) +
         fr * (1 - fc) * at(r0 + 1, c0) + fr * fc * at(r0 + 1, c0 + 1);
}

}  // namespace

MultiViewDataset gen_rotated_glyph(int steps, int image_side,
                                   std::uint64_t seed, double noise,
                                   double asymmetry) {
  if (steps < 4) throw DomainError("gen_rotated_glyph: steps must be >= 4");
  if (image_side < 8)
    throw DomainError("gen_rotated_glyph: image_side must be >= 8");

  // Vertical bar, symmetric under a half turn about the image centre, plus a
  // single bright pixel beside its upper end.
  const double centre = 0.5 * (image_side - 1);
  Matrix glyph = Matrix::Zero(image_side, image_side);
  const double half_length = 0.32 * image_side;
  for (int r = 0; r < image_side; ++r)
    for (int c = 0; c < image_side; ++c)
      if (std::abs(r - centre) <= half_length && std::abs(c - centre) <= 0.6)
        glyph(r, c) = 1.0;
  const auto top = static_cast<Eigen::Index>(std::ceil(centre - half_length));
  const auto right = static_cast<Eigen::Index>(std::floor(centre + 1.5));
  glyph(top, right) = asymmetry;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index D = static_cast<Eigen::Index>(image_side) * image_side;
  Matrix Y(steps, D);
  Vector angles(steps);
  for (int k = 0; k < steps; ++k) {
    const double deg = 360.0 * k / steps;
    const double th = deg * std::numbers::pi / 180.0;
    const double cs = std::cos(th), sn = std::sin(th);
    angles(k) = deg;
    for (int r = 0; r < image_side; ++r) {
      for (int c = 0; c < image_side; ++c) {
        // Inverse-rotate the output pixel into glyph coordinates.
        const double dr = r - centre, dc = c - centre;
        const double sr = cs * dr - sn * dc + centre;
        const double sc = sn * dr + cs * dc + centre;
        double v = bilinear(glyph, sr, sc);
        if (noise > 0.0) v += noise * normal(rng);
        Y(k, static_cast<Eigen::Index>(r) * image_side + c) = v;
      }
    }
    const double norm = Y.row(k).norm();
    if (norm > 0.0) Y.row(k) /= norm;
  }

  MultiViewDataset data;
  data.view_names = {"pixels"};
  data.views = {std::move(Y)};
  data.metadata.emplace("angle_degrees", std::move(angles));
  return data;
}

namespace {

// Inverse of the standard normal CDF by bisection on erfc; only used for a
// handful of cut-points.
double norm_quantile(double p) {
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

IntMatrix SyntheticOrdinal::bayes_levels() const {
  const Eigen::Index n = scores.rows();
  const Eigen::Index C = scores.cols();
  IntMatrix out(n, C);
  const double sd = label_noise > 0.0 ? label_noise : 1e-12;
  for (Eigen::Index c = 0; c < C; ++c)
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector lp = level_logprobs_from_score(scores(i, c), cut_points, c, sd);
      Eigen::Index best = 0;
      for (Eigen::Index s = 1; s < lp.size(); ++s)
        if (lp(s) > lp(best)) best = s;
      out(i, c) = static_cast<int>(best) + 1;
    }
  return out;
}

SyntheticOrdinal gen_synthetic_ordinal(const SyntheticOrdinalConfig& cfg) {
  if (cfg.levels < 2) throw DomainError("gen_synthetic_ordinal: levels >= 2");
  if (cfg.n < 10 * cfg.levels)
    throw DomainError("gen_synthetic_ordinal: need n >= 10 * levels");
  if (cfg.latent_dim < 1 || cfg.outputs < 1)
    throw DomainError("gen_synthetic_ordinal: latent_dim and outputs >= 1");
  const Eigen::Index n = cfg.n, q = cfg.latent_dim, C = cfg.outputs;
  const int S = cfg.levels;

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](Eigen::Index r, Eigen::Index c) {
    Matrix M(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) M(i, j) = normal(rng);
    return M;
  };

  SyntheticOrdinal out;
  out.latent = gaussian(n, q);

  // Unit-norm projection directions, one per output.
  Matrix W = gaussian(C, q);
  for (Eigen::Index c = 0; c < C; ++c) W.row(c).normalize();
  out.scores = cfg.separation * out.latent * W.transpose();

  // Cut-points at the Gaussian quantiles of the noise-free score, so level
  // marginals become uniform as separation dominates the noise.
  out.cut_points.resize(C, S - 1);
  for (Eigen::Index c = 0; c < C; ++c)
    for (int s = 1; s < S; ++s)
      out.cut_points(c, s - 1) =
          cfg.separation * norm_quantile(static_cast<double>(s) / S);
  out.label_noise = cfg.noise;

  LabelMatrix L{IntMatrix(n, C), BoolArray::Constant(n, C, true)};
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < C; ++c) {
      const double g = out.scores(i, c) + cfg.noise * normal(rng);
      int level = 1;
      while (level < S && g > out.cut_points(c, level - 1)) ++level;
      L.Z(i, c) = level;
    }

  // Geometric view: linear map of x. Appearance view: fixed random
  // nonlinear features of x.
  const Matrix A = gaussian(cfg.geometric_dim, q);
  const Matrix B = gaussian(q, cfg.appearance_dim);
  const Matrix b = gaussian(1, cfg.appearance_dim);
  Matrix Y1 = out.latent * A.transpose() + cfg.noise * gaussian(n, cfg.geometric_dim);
  Matrix pre = out.latent * B;
  pre.rowwise() += b.row(0);
  Matrix Y2 = pre.array().tanh().matrix() +
              cfg.noise * gaussian(n, cfg.appearance_dim);

  out.data.view_names = {"geometric", "appearance"};
  out.data.views = {std::move(Y1), std::move(Y2)};
  out.data.labels = std::move(L);
  out.data.levels = S;
  out.data.outputs = static_cast<int>(C);
  const auto n_test = static_cast<Eigen::Index>(
      std::llround(cfg.test_fraction * static_cast<double>(n)));
  out.data.split.assign(n, Split::Train);
  for (Eigen::Index i = n - n_test; i < n; ++i) out.data.split[i] = Split::Test;
  return out;
}

}  // namespace vgpae
