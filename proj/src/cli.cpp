#include "vgpae/cli.hpp"

#include "vgpae/checkpoint.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>

namespace vgpae::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json generate_json(const GenerateOptions& g) {
  const auto& o = g.ordinal;
  return {{"kind", g.kind},
          {"steps", g.steps},
          {"image_side", g.image_side},
          {"glyph_noise", g.glyph_noise},
          {"asymmetry", g.asymmetry},
          {"n", o.n},
          {"latent_dim", o.latent_dim},
          {"outputs", o.outputs},
          {"levels", o.levels},
          {"separation", o.separation},
          {"noise", o.noise},
          {"test_fraction", o.test_fraction},
          {"geometric_dim", o.geometric_dim},
          {"appearance_dim", o.appearance_dim}};
}

void merge_generate(const json& j, GenerateOptions& g) {
  auto& o = g.ordinal;
  for (const auto& [key, v] : j.items()) {
    if (key == "kind") g.kind = v.get<std::string>();
    else if (key == "steps") g.steps = v.get<int>();
    else if (key == "image_side") g.image_side = v.get<int>();
    else if (key == "glyph_noise") g.glyph_noise = v.get<double>();
    else if (key == "asymmetry") g.asymmetry = v.get<double>();
    else if (key == "n") o.n = v.get<Eigen::Index>();
    else if (key == "latent_dim") o.latent_dim = v.get<int>();
    else if (key == "outputs") o.outputs = v.get<int>();
    else if (key == "levels") o.levels = v.get<int>();
    else if (key == "separation") o.separation = v.get<double>();
    else if (key == "noise") o.noise = v.get<double>();
    else if (key == "test_fraction") o.test_fraction = v.get<double>();
    else if (key == "geometric_dim") o.geometric_dim = v.get<Eigen::Index>();
    else if (key == "appearance_dim") o.appearance_dim = v.get<Eigen::Index>();
    else throw ConfigError("config: unknown generate key '" + key + "'");
  }
}

void merge_gradcheck(const json& j, GradCheckSettings& g) {
  for (const auto& [key, v] : j.items()) {
    if (key == "n") g.n = v.get<Eigen::Index>();
    else if (key == "step") g.step = v.get<double>();
    else if (key == "tolerance") g.tolerance = v.get<double>();
    else if (key == "perturbation") g.perturbation = v.get<double>();
    else throw ConfigError("config: unknown gradcheck key '" + key + "'");
  }
}

bool is_train_key(const std::string& k) {
  static const json keys = to_json(TrainConfig{});
  return keys.contains(k);
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path require_out(const RunConfig& cfg) {
  if (cfg.out.empty()) throw ConfigError(cfg.subcommand + ": --out is required");
  fs::create_directories(cfg.out);
  return cfg.out;
}

void require_path(const fs::path& p, const std::string& flag,
                  const std::string& cmd) {
  if (p.empty()) throw ConfigError(cmd + ": " + flag + " is required");
}

/// True when the manifest names a label file that exists.
bool manifest_has_labels(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) return false;
  json j;
  try {
    in >> j;
  } catch (const json::exception&) {
    return false;
  }
  if (!j.contains("labels") || !j["labels"].is_string()) return false;
  return fs::exists(manifest.parent_path() / j["labels"].get<std::string>());
}

double effective_ordinal_weight(const RunConfig& cfg) {
  return cfg.unsupervised ? 0.0 : cfg.train.ordinal_weight;
}

MultiViewDataset load_checked(const RunConfig& cfg) {
  require_path(cfg.manifest, "--manifest", cfg.subcommand);
  MultiViewDataset data = load_dataset(cfg.manifest);
  if (cfg.levels > 0 && data.has_labels() && data.levels != cfg.levels)
    throw ConfigError("levels: flag says " + std::to_string(cfg.levels) +
                      " but the manifest has " + std::to_string(data.levels));
  return data;
}

void write_latent(const fs::path& path, const Matrix& means,
                  const Matrix& variances) {
  Matrix both(means.rows(), means.cols() + variances.cols());
  both << means, variances;
  auto header = default_header("mean_", means.cols());
  const auto vh = variances.cols() == 1
                      ? std::vector<std::string>{"var"}
                      : default_header("var_", variances.cols());
  header.insert(header.end(), vh.begin(), vh.end());
  write_csv_matrix(path, both, header);
}

void echo_config(const RunConfig& cfg) {
  if (!cfg.out.empty()) {
    fs::create_directories(cfg.out);
    write_json(cfg.out / "resolved_config.json", to_json(cfg));
  }
}

ModelState perturbed_default_state(const MultiViewDataset& d,
                                   const RunConfig& cfg) {
  ModelState st = initialize_state(d, cfg.train);
  std::mt19937_64 rng(cfg.train.seed ^ 0x5eedULL);
  std::normal_distribution<double> n01;
  Vector flat = pack_parameters(st);
  for (Eigen::Index k = 0; k < flat.size(); ++k)
    flat(k) += cfg.gradcheck.perturbation * n01(rng);
  unpack_parameters(flat, st);
  return st;
}

}  // namespace

json to_json(const RunConfig& cfg) {
  return {{"subcommand", cfg.subcommand},
          {"manifest", cfg.manifest.string()},
          {"query", cfg.query.string()},
          {"checkpoint", cfg.checkpoint.string()},
          {"out", cfg.out.string()},
          {"split", cfg.split},
          {"unsupervised", cfg.unsupervised},
          {"levels", cfg.levels},
          {"train", vgpae::to_json(cfg.train)},
          {"generate", generate_json(cfg.generate)},
          {"gradcheck",
           {{"n", cfg.gradcheck.n},
            {"step", cfg.gradcheck.step},
            {"tolerance", cfg.gradcheck.tolerance},
            {"perturbation", cfg.gradcheck.perturbation}}}};
}

void merge_run_config(const json& j, RunConfig& cfg) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "subcommand") continue;  // provenance only
      else if (key == "manifest") cfg.manifest = v.get<std::string>();
      else if (key == "query") cfg.query = v.get<std::string>();
      else if (key == "checkpoint") cfg.checkpoint = v.get<std::string>();
      else if (key == "out") cfg.out = v.get<std::string>();
      else if (key == "split") cfg.split = v.get<std::string>();
      else if (key == "unsupervised") cfg.unsupervised = v.get<bool>();
      else if (key == "levels") cfg.levels = v.get<int>();
      else if (key == "train") {
        for (const auto& [k, ignored] : v.items())
          if (!is_train_key(k))
            throw ConfigError("config: unknown key 'train." + k + "'");
        merge_train_config(v, cfg.train);
      }
      else if (key == "generate") merge_generate(v, cfg.generate);
      else if (key == "gradcheck") merge_gradcheck(v, cfg.gradcheck);
      else if (is_train_key(key)) merge_train_config(json{{key, v}}, cfg.train);
      else throw ConfigError("config: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

int cmd_train(const RunConfig& cfg, std::ostream& log) {
  require_path(cfg.manifest, "--manifest", "train");
  const double weight = effective_ordinal_weight(cfg);
  if (weight > 0.0 && !manifest_has_labels(cfg.manifest))
    throw ConfigError("train: ordinal weight is " + std::to_string(weight) +
                      " but " + cfg.manifest.string() +
                      " has no label file; pass --ordinal-weight 0 or "
                      "--unsupervised");
  const MultiViewDataset data = load_checked(cfg);
  const fs::path out = require_out(cfg);

  TrainConfig tc = cfg.train;
  tc.ordinal_weight = weight;
  tc.trace_path = out / "trace.csv";
  TrainResult res;
  try {
    if (cfg.checkpoint.empty()) {
      res = train(data, tc);
    } else {
      ModelState init = load_checkpoint(cfg.checkpoint);
      init.ordinal_weight = weight;
      res = train_from(std::move(init), data, tc);
    }
  } catch (const TrainingAborted& e) {
    save_checkpoint(out / "aborted_checkpoint.json", e.snapshot(), tc);
    throw;
  }
  save_checkpoint(out / "checkpoint.json", res.state, tc);
  const MultiViewDataset train_rows = data.subset(data.rows_with(Split::Train));
  const LatentPosterior post = training_posterior(res.state, train_rows);
  write_latent(out / "latent.csv", post.means, post.variances);

  log << "trained " << res.state.step << " steps over "
      << res.state.datapoints_seen << " datapoints";
  if (!res.trace.records.empty())
    log << "; final bound per point "
        << res.trace.records.back().f2_per_point;
  log << "\nwrote " << (out / "checkpoint.json").string() << '\n';
  return kOk;
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
  require_path(cfg.checkpoint, "--checkpoint", "evaluate");
  const MultiViewDataset data = load_checked(cfg);
  const ModelState state = load_checkpoint(cfg.checkpoint);
  const MultiViewDataset train_rows = data.subset(data.rows_with(Split::Train));
  check_compatible(state, train_rows, state.train_size());

  IndexVector rows;
  if (cfg.split == "test") rows = data.rows_with(Split::Test);
  else if (cfg.split == "train") rows = data.rows_with(Split::Train);
  else if (cfg.split == "all") {
    rows.resize(static_cast<std::size_t>(data.size()));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  } else {
    throw ConfigError("split: expected test, train or all, got '" + cfg.split + "'");
  }
  if (rows.size() < 2)
    throw DataError("evaluate: split '" + cfg.split + "' has fewer than two rows");
  const MultiViewDataset query = data.subset(rows);
  const fs::path out = require_out(cfg);

  const MetricReport rep = evaluate_model(state, train_rows, query);
  rep.write_json(out / "metrics.json");
  rep.write_csv(out / "metrics.csv");
  if (state.ordinal.outputs() > 0) {
    const Projection proj = project_dataset(state, train_rows, query);
    const LevelPrediction pred = predict_levels(proj.means, state.ordinal);
    write_csv_matrix(out / "predictions.csv", pred.levels.cast<double>(),
                     default_header("level_", pred.levels.cols()));
  }
  for (std::size_t v = 0; v < rep.view_names.size(); ++v)
    log << "nlpd[" << rep.view_names[v] << "] = " << rep.nlpd_per_view[v] << '\n';
  if (!rep.icc_per_output.empty())
    log << "icc = " << rep.icc_mean() << ", mse = " << rep.mse_mean() << '\n';
  return kOk;
}

int cmd_project(const RunConfig& cfg, std::ostream& log) {
  require_path(cfg.checkpoint, "--checkpoint", "project");
  const MultiViewDataset data = load_checked(cfg);
  const ModelState state = load_checkpoint(cfg.checkpoint);
  const MultiViewDataset train_rows = data.subset(data.rows_with(Split::Train));
  check_compatible(state, train_rows, state.train_size());
  const MultiViewDataset query =
      cfg.query.empty() ? data : load_dataset(cfg.query);
  const fs::path out = require_out(cfg);
  const Projection proj = project_dataset(state, train_rows, query);
  write_latent(out / "projection.csv", proj.means,
               Matrix(proj.variances));
  log << "projected " << proj.means.rows() << " rows\n";
  return kOk;
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& log) {
  MultiViewDataset data;
  ModelState state;
  if (!cfg.checkpoint.empty()) {
    const MultiViewDataset raw = load_checked(cfg);
    state = load_checkpoint(cfg.checkpoint);
    const MultiViewDataset train_rows = raw.subset(raw.rows_with(Split::Train));
    check_compatible(state, train_rows, state.train_size());
    data = state.standardization.apply(train_rows);
  } else if (!cfg.manifest.empty()) {
    const MultiViewDataset raw = load_checked(cfg);
    data = Standardization::fit(raw).apply(raw.subset(raw.rows_with(Split::Train)));
    RunConfig c = cfg;
    c.train.ordinal_weight = data.has_labels() ? effective_ordinal_weight(cfg) : 0.0;
    state = perturbed_default_state(data, c);
  } else {
    SyntheticOrdinalConfig g;
    g.n = std::max<Eigen::Index>(30, cfg.gradcheck.n);
    g.seed = cfg.train.seed;
    g.geometric_dim = 3;
    g.appearance_dim = 4;
    g.test_fraction = 0.0;
    const auto gen = gen_synthetic_ordinal(g);
    IndexVector rows(static_cast<std::size_t>(cfg.gradcheck.n));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    data = Standardization::fit(gen.data).apply(gen.data.subset(rows));
    RunConfig c = cfg;
    c.train.ordinal_weight = effective_ordinal_weight(cfg);
    state = perturbed_default_state(data, c);
  }
  const Eigen::Index b = std::min<Eigen::Index>(cfg.gradcheck.n, data.size());
  IndexVector batch(static_cast<std::size_t>(b));
  std::iota(batch.begin(), batch.end(), Eigen::Index{0});
  const McConfig mc{cfg.train.mc_samples, cfg.train.seed};
  const GradCheckReport rep = grad_check(
      state, data, batch, mc, {cfg.gradcheck.step, cfg.gradcheck.tolerance});

  json j = json::array();
  for (const auto& g : rep.groups) {
    log << std::left << std::setw(8) << g.name << " max_rel_error "
        << std::scientific << std::setprecision(3) << g.max_rel_error
        << std::defaultfloat << (g.passed ? "  ok" : "  FAIL") << '\n';
    j.push_back({{"group", g.name},
                 {"max_rel_error", g.max_rel_error},
                 {"worst_index", g.worst_index},
                 {"passed", g.passed}});
  }
  if (!cfg.out.empty()) {
    fs::create_directories(cfg.out);
    write_json(cfg.out / "gradcheck.json", j);
  }
  return rep.passed() ? kOk : kNumericError;
}

int cmd_generate(const RunConfig& cfg, std::ostream& log) {
  const fs::path out = require_out(cfg);
  const GenerateOptions& g = cfg.generate;
  fs::path manifest;
  if (g.kind == "glyph") {
    manifest = save_dataset(
        gen_rotated_glyph(g.steps, g.image_side, cfg.train.seed, g.glyph_noise,
                          g.asymmetry),
        out);
  } else if (g.kind == "ordinal") {
    SyntheticOrdinalConfig o = g.ordinal;
    o.seed = cfg.train.seed;
    if (cfg.levels > 0) o.levels = cfg.levels;
    manifest = save_dataset(gen_synthetic_ordinal(o).data, out);
  } else {
    throw ConfigError("generate: unknown kind '" + g.kind +
                      "' (expected glyph or ordinal)");
  }
  log << "wrote " << manifest.string() << '\n';
  return kOk;
}

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Multi-view GP auto-encoder with ordinal outputs", "vgpae"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  std::optional<std::string> manifest, query, checkpoint, out_dir, split, kind,
      init, reparam;
  std::optional<std::uint64_t> seed;
  std::optional<Eigen::Index> batch_size, n;
  std::optional<int> epochs, mc_samples, eval_mc_samples, eval_every,
      latent_dim, levels, steps, image_side, outputs;
  std::optional<double> ordinal_weight, separation, noise, tolerance,
      test_fraction, asymmetry;
  bool unsupervised = false;

  app.add_option("--config", config_file, "JSON config file");
  app.add_option("--manifest", manifest, "dataset manifest");
  app.add_option("--query", query, "manifest of rows to project");
  app.add_option("--checkpoint", checkpoint, "model checkpoint");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed);
  app.add_option("--batch-size", batch_size);
  app.add_option("--epochs", epochs);
  app.add_option("--mc-samples", mc_samples);
  app.add_option("--eval-mc-samples", eval_mc_samples);
  app.add_option("--eval-every", eval_every, "steps between trace records");
  app.add_option("--latent-dim", latent_dim);
  app.add_option("--ordinal-weight", ordinal_weight);
  app.add_option("--levels", levels);
  app.add_option("--init", init, "random or pca");
  app.add_option("--reparam", reparam, "sqrt_of_sum or sum_of_sqrt");
  app.add_option("--split", split, "evaluate: test, train or all");
  app.add_flag("--unsupervised", unsupervised, "ignore labels");
  app.add_option("--kind", kind, "generate: glyph or ordinal");
  app.add_option("--steps", steps, "generate glyph: rotation steps");
  app.add_option("--image-side", image_side, "generate glyph: pixels per side");
  app.add_option("--asymmetry", asymmetry, "generate glyph: marker pixel intensity");
  app.add_option("--n", n, "generate ordinal: rows; gradcheck: batch size");
  app.add_option("--outputs", outputs, "generate ordinal: label columns");
  app.add_option("--separation", separation);
  app.add_option("--noise", noise);
  app.add_option("--test-fraction", test_fraction);
  app.add_option("--tolerance", tolerance, "gradcheck tolerance");

  app.add_subcommand("train", "fit a model");
  app.add_subcommand("evaluate", "metrics on a split");
  app.add_subcommand("project", "embed rows with a trained encoder");
  app.add_subcommand("gradcheck", "compare gradients with finite differences");
  app.add_subcommand("generate", "write a synthetic dataset");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    RunConfig cfg;
    cfg.subcommand = app.get_subcommands().front()->get_name();
    if (!config_file.empty()) {
      cfg.config_file = config_file;
      merge_run_config(read_json_file(config_file), cfg);
    }
    if (manifest) cfg.manifest = *manifest;
    if (query) cfg.query = *query;
    if (checkpoint) cfg.checkpoint = *checkpoint;
    if (out_dir) cfg.out = *out_dir;
    if (split) cfg.split = *split;
    if (unsupervised) cfg.unsupervised = true;
    if (seed) cfg.train.seed = *seed;
    if (batch_size) cfg.train.batch_size = *batch_size;
    if (epochs) cfg.train.epochs = *epochs;
    if (mc_samples) cfg.train.mc_samples = *mc_samples;
    if (eval_mc_samples) cfg.train.eval_mc_samples = *eval_mc_samples;
    if (eval_every) cfg.train.eval_every = *eval_every;
    if (latent_dim) cfg.train.latent_dim = *latent_dim;
    if (ordinal_weight) cfg.train.ordinal_weight = *ordinal_weight;
    if (levels) cfg.levels = *levels;
    if (init || reparam) {
      json j;
      if (init) j["init"] = *init;
      if (reparam) j["reparam"] = *reparam;
      merge_train_config(j, cfg.train);
    }
    if (kind) cfg.generate.kind = *kind;
    if (steps) cfg.generate.steps = *steps;
    if (image_side) cfg.generate.image_side = *image_side;
    if (n) {
      cfg.generate.ordinal.n = *n;
      cfg.gradcheck.n = *n;
    }
    if (outputs) cfg.generate.ordinal.outputs = *outputs;
    if (separation) cfg.generate.ordinal.separation = *separation;
    if (noise) {
      cfg.generate.ordinal.noise = *noise;
      cfg.generate.glyph_noise = *noise;
    }
    if (test_fraction) cfg.generate.ordinal.test_fraction = *test_fraction;
    if (tolerance) cfg.gradcheck.tolerance = *tolerance;
    if (asymmetry) cfg.generate.asymmetry = *asymmetry;

    echo_config(cfg);
    if (cfg.subcommand == "train") return cmd_train(cfg, out);
    if (cfg.subcommand == "evaluate") return cmd_evaluate(cfg, out);
    if (cfg.subcommand == "project") return cmd_project(cfg, out);
    if (cfg.subcommand == "gradcheck") return cmd_gradcheck(cfg, out);
    return cmd_generate(cfg, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what();
    if (e.last_jitter() > 0.0) err << " (last jitter " << e.last_jitter() << ")";
    err << '\n';
    return kNumericError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const DomainError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  }
}

}  // namespace vgpae::cli
