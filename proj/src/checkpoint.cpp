#include "vgpae/checkpoint.hpp"

#include <fstream>

namespace vgpae {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "vgpae-checkpoint";
constexpr int kVersion = 1;

json matrix_json(const Matrix& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return {{"rows", M.rows()}, {"cols", M.cols()}, {"data", std::move(rows)}};
}

Matrix matrix_from(const json& j) {
  const auto r = j.at("rows").get<Eigen::Index>();
  const auto c = j.at("cols").get<Eigen::Index>();
  Matrix M(r, c);
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != r)
    throw DataError("checkpoint: matrix row count mismatch");
  for (Eigen::Index i = 0; i < r; ++i) {
    if (static_cast<Eigen::Index>(data[i].size()) != c)
      throw DataError("checkpoint: matrix column count mismatch");
    for (Eigen::Index k = 0; k < c; ++k) M(i, k) = data[i][k].get<double>();
  }
  return M;
}

json vector_json(const Vector& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Vector vector_from(const json& j) {
  const auto xs = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

const char* reparam_name(ReparamScale r) {
  return r == ReparamScale::SqrtOfSum ? "sqrt_of_sum" : "sum_of_sqrt";
}

ReparamScale reparam_from(const std::string& s) {
  if (s == "sqrt_of_sum") return ReparamScale::SqrtOfSum;
  if (s == "sum_of_sqrt") return ReparamScale::SumOfSqrt;
  throw ConfigError("unknown reparameterization '" + s + "'");
}

}  // namespace

json to_json(const ModelState& s) {
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["latent_dim"] = s.latent_dim;
  j["ordinal_weight"] = s.ordinal_weight;
  j["seed"] = s.seed;
  j["reparam"] = reparam_name(s.reparam);
  j["step"] = s.step;
  j["datapoints_seen"] = s.datapoints_seen;
  j["variational"] = {{"M", matrix_json(s.variational.M)},
                      {"log_S", matrix_json(s.variational.log_S)}};
  json enc_views = json::array();
  for (const auto& v : s.encoder.views)
    enc_views.push_back({{"log_signal_variance", v.log_signal_variance},
                         {"log_lengthscale", v.log_lengthscale}});
  j["encoder"] = {{"views", enc_views},
                  {"log_noise_std", s.encoder.log_noise_std}};
  json dec = json::array();
  for (const auto& d : s.decoders)
    dec.push_back({{"log_signal_variance", d.kernel.log_signal_variance},
                   {"log_lengthscales", vector_json(d.kernel.log_lengthscales)},
                   {"log_noise_std", d.log_noise_std}});
  j["decoders"] = dec;
  j["ordinal"] = {{"W", matrix_json(s.ordinal.W)},
                  {"gamma_base", vector_json(s.ordinal.gamma_base)},
                  {"gamma_log_incr", matrix_json(s.ordinal.gamma_log_incr)},
                  {"log_noise_std", s.ordinal.log_noise_std}};
  json stdz = json::array();
  for (std::size_t v = 0; v < s.standardization.mean.size(); ++v)
    stdz.push_back({{"mean", vector_json(s.standardization.mean[v])},
                    {"scale", vector_json(s.standardization.scale[v])}});
  j["standardization"] = stdz;
  j["optimizer"] = {
      {"mean_sq_grad", vector_json(s.optimizer.mean_sq_grad)},
      {"mean_sq_update", vector_json(s.optimizer.mean_sq_update)}};
  return j;
}

ModelState model_from_json(const json& j) {
  try {
    if (j.value("format", std::string()) != kFormat)
      throw DataError("checkpoint: not a vgpae checkpoint");
    if (j.at("version").get<int>() != kVersion)
      throw DataError("checkpoint: unsupported version");
    ModelState s;
    s.latent_dim = j.at("latent_dim").get<int>();
    s.ordinal_weight = j.at("ordinal_weight").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.reparam = reparam_from(j.at("reparam").get<std::string>());
    s.step = j.at("step").get<std::uint64_t>();
    s.datapoints_seen = j.at("datapoints_seen").get<std::uint64_t>();
    s.variational.M = matrix_from(j.at("variational").at("M"));
    s.variational.log_S = matrix_from(j.at("variational").at("log_S"));
    for (const auto& v : j.at("encoder").at("views"))
      s.encoder.views.push_back({v.at("log_signal_variance").get<double>(),
                                 v.at("log_lengthscale").get<double>()});
    s.encoder.log_noise_std = j.at("encoder").at("log_noise_std").get<double>();
    for (const auto& d : j.at("decoders"))
      s.decoders.push_back(
          {{d.at("log_signal_variance").get<double>(),
            vector_from(d.at("log_lengthscales"))},
           d.at("log_noise_std").get<double>()});
    const auto& o = j.at("ordinal");
    s.ordinal.W = matrix_from(o.at("W"));
    s.ordinal.gamma_base = vector_from(o.at("gamma_base"));
    s.ordinal.gamma_log_incr = matrix_from(o.at("gamma_log_incr"));
    s.ordinal.log_noise_std = o.at("log_noise_std").get<double>();
    for (const auto& v : j.at("standardization")) {
      s.standardization.mean.push_back(vector_from(v.at("mean")));
      s.standardization.scale.push_back(vector_from(v.at("scale")));
    }
    s.optimizer.mean_sq_grad = vector_from(j.at("optimizer").at("mean_sq_grad"));
    s.optimizer.mean_sq_update =
        vector_from(j.at("optimizer").at("mean_sq_update"));
    if (s.variational.M.cols() != s.latent_dim ||
        s.variational.log_S.rows() != s.variational.M.rows() ||
        s.variational.log_S.cols() != s.latent_dim)
      throw DataError("checkpoint: variational state has inconsistent shape");
    if (s.encoder.views.size() != s.decoders.size() ||
        s.standardization.mean.size() != s.decoders.size())
      throw DataError("checkpoint: inconsistent number of views");
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

json to_json(const TrainConfig& c) {
  return {{"latent_dim", c.latent_dim},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"mc_samples", c.mc_samples},
          {"eval_mc_samples", c.eval_mc_samples},
          {"rho", c.adadelta.rho},
          {"epsilon", c.adadelta.epsilon},
          {"seed", c.seed},
          {"eval_every", c.eval_every},
          {"ordinal_weight", c.ordinal_weight},
          {"init", c.init == LatentInit::Pca ? "pca" : "random"},
          {"init_scale", c.init_scale},
          {"encoder_lengthscale", c.encoder_lengthscale},
          {"reparam", reparam_name(c.reparam)}};
}

void merge_train_config(const json& j, TrainConfig& c) {
  try {
    if (j.contains("latent_dim")) c.latent_dim = j["latent_dim"].get<int>();
    if (j.contains("batch_size"))
      c.batch_size = j["batch_size"].get<Eigen::Index>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("mc_samples")) c.mc_samples = j["mc_samples"].get<int>();
    if (j.contains("eval_mc_samples"))
      c.eval_mc_samples = j["eval_mc_samples"].get<int>();
    if (j.contains("rho")) c.adadelta.rho = j["rho"].get<double>();
    if (j.contains("epsilon")) c.adadelta.epsilon = j["epsilon"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("eval_every")) c.eval_every = j["eval_every"].get<int>();
    if (j.contains("ordinal_weight"))
      c.ordinal_weight = j["ordinal_weight"].get<double>();
    if (j.contains("init_scale")) c.init_scale = j["init_scale"].get<double>();
    if (j.contains("encoder_lengthscale"))
      c.encoder_lengthscale = j["encoder_lengthscale"].get<double>();
    if (j.contains("init")) {
      const auto s = j["init"].get<std::string>();
      if (s == "pca") c.init = LatentInit::Pca;
      else if (s == "random") c.init = LatentInit::Random;
      else throw ConfigError("unknown init '" + s + "'");
    }
    if (j.contains("reparam"))
      c.reparam = reparam_from(j["reparam"].get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& state,
                     const TrainConfig& cfg) {
  json j = to_json(state);
  j["config"] = to_json(cfg);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

ModelState load_checkpoint(const std::filesystem::path& path,
                           TrainConfig* cfg) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path.string() + ": " + e.what());
  }
  if (cfg && j.contains("config")) merge_train_config(j["config"], *cfg);
  return model_from_json(j);
}

}  // namespace vgpae
