#include "vgpae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace vgpae {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kEvalStream = 0xE7A1D00Dull;
constexpr std::uint64_t kShuffleStream = 0x5EED5A1Eull;

std::uint64_t step_seed(std::uint64_t seed, std::uint64_t step) {
  return splitmix64(splitmix64(seed) ^ (step + 1));
}

}  // namespace

// ---------------------------------------------------------------------------
// AdaDelta

void adadelta_step(Vector& params, const Vector& grad, AdaDeltaState& state,
                   const AdaDeltaConfig& cfg) {
  require_shape(params.size() == grad.size(),
                "adadelta: gradient size does not match parameters");
  if (state.mean_sq_grad.size() != params.size())
    state.mean_sq_grad = Vector::Zero(params.size());
  if (state.mean_sq_update.size() != params.size())
    state.mean_sq_update = Vector::Zero(params.size());
  const double rho = cfg.rho, eps = cfg.epsilon;
  state.mean_sq_grad =
      rho * state.mean_sq_grad.array() + (1.0 - rho) * grad.array().square();
  const Vector delta = -((state.mean_sq_update.array() + eps).sqrt() /
                         (state.mean_sq_grad.array() + eps).sqrt() *
                         grad.array())
                            .matrix();
  state.mean_sq_update = rho * state.mean_sq_update.array() +
                         (1.0 - rho) * delta.array().square();
  params += delta;
}

// ---------------------------------------------------------------------------
// Parameter packing

namespace {

Eigen::Index encoder_size(const ModelState& s) {
  return 2 * static_cast<Eigen::Index>(s.encoder.views.size()) + 1;
}

Eigen::Index decoder_size(const ModelState& s) {
  Eigen::Index n = 0;
  for (const auto& d : s.decoders) n += 2 + d.kernel.dim();
  return n;
}

Eigen::Index ordinal_size(const ModelState& s) {
  return s.ordinal.W.size() + s.ordinal.gamma_base.size() +
         s.ordinal.gamma_log_incr.size() + 1;
}

// Visits every scalar parameter in the canonical order.
template <typename State, typename F>
void for_each_parameter(State& s, F&& f) {
  for (Eigen::Index k = 0; k < s.variational.M.size(); ++k)
    f(s.variational.M.data()[k]);
  for (Eigen::Index k = 0; k < s.variational.log_S.size(); ++k)
    f(s.variational.log_S.data()[k]);
  for (auto& v : s.encoder.views) {
    f(v.log_signal_variance);
    f(v.log_lengthscale);
  }
  f(s.encoder.log_noise_std);
  for (auto& d : s.decoders) {
    f(d.kernel.log_signal_variance);
    for (Eigen::Index k = 0; k < d.kernel.log_lengthscales.size(); ++k)
      f(d.kernel.log_lengthscales(k));
    f(d.log_noise_std);
  }
  for (Eigen::Index k = 0; k < s.ordinal.W.size(); ++k)
    f(s.ordinal.W.data()[k]);
  for (Eigen::Index k = 0; k < s.ordinal.gamma_base.size(); ++k)
    f(s.ordinal.gamma_base(k));
  for (Eigen::Index k = 0; k < s.ordinal.gamma_log_incr.size(); ++k)
    f(s.ordinal.gamma_log_incr.data()[k]);
  f(s.ordinal.log_noise_std);
}

// A ModelState with every parameter zeroed, used to accumulate gradients
// in the same structure as the parameters.
ModelState zero_like(const ModelState& s) {
  ModelState g = s;
  for_each_parameter(g, [](double& x) { x = 0.0; });
  return g;
}

}  // namespace

std::vector<ParameterGroup> parameter_groups(const ModelState& s) {
  std::vector<ParameterGroup> groups;
  Eigen::Index offset = 0;
  auto add = [&](std::string name, Eigen::Index size) {
    groups.push_back({std::move(name), offset, size});
    offset += size;
  };
  add("M", s.variational.M.size());
  add("log_S", s.variational.log_S.size());
  add("encoder", encoder_size(s));
  add("decoder", decoder_size(s));
  add("ordinal", ordinal_size(s));
  return groups;
}

Vector pack_parameters(const ModelState& state) {
  const auto groups = parameter_groups(state);
  Vector flat(groups.back().offset + groups.back().size);
  Eigen::Index k = 0;
  for_each_parameter(state, [&](const double& x) { flat(k++) = x; });
  return flat;
}

void unpack_parameters(const Vector& flat, ModelState& state) {
  const auto groups = parameter_groups(state);
  require_shape(flat.size() == groups.back().offset + groups.back().size,
                "unpack_parameters: flat vector has the wrong size");
  Eigen::Index k = 0;
  for_each_parameter(state, [&](double& x) { x = flat(k++); });
}

// ---------------------------------------------------------------------------
// Initialization

ModelState initialize_state(const MultiViewDataset& train_data,
                            const TrainConfig& cfg) {
  if (cfg.latent_dim < 1) throw ConfigError("latent_dim must be at least 1");
  const Eigen::Index n = train_data.size();
  const Eigen::Index q = cfg.latent_dim;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  ModelState s;
  s.latent_dim = cfg.latent_dim;
  s.ordinal_weight = train_data.has_labels() ? cfg.ordinal_weight : 0.0;
  s.seed = cfg.seed;
  s.reparam = cfg.reparam;

  s.variational.M.resize(n, q);
  if (cfg.init == LatentInit::Pca) {
    Matrix Y(n, 0);
    for (const auto& V : train_data.views) {
      Matrix joined(n, Y.cols() + V.cols());
      joined << Y, V;
      Y = std::move(joined);
    }
    Y.rowwise() -= Y.colwise().mean();
    Eigen::JacobiSVD<Matrix> svd(Y, Eigen::ComputeThinU);
    const Eigen::Index k = std::min<Eigen::Index>(q, svd.matrixU().cols());
    s.variational.M.setZero();
    s.variational.M.leftCols(k) = svd.matrixU().leftCols(k) * std::sqrt(n);
  } else {
    for (Eigen::Index j = 0; j < q; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        s.variational.M(i, j) = cfg.init_scale * normal(rng);
  }
  s.variational.log_S = Matrix::Constant(n, q, std::log(0.1));

  for (const auto& V : train_data.views) {
    // Lengthscale sqrt(D) keeps typical standardized distances O(1).
    const double ell = cfg.encoder_lengthscale > 0.0
                           ? cfg.encoder_lengthscale
                           : std::sqrt(static_cast<double>(V.cols()));
    s.encoder.views.push_back({0.0, std::log(ell)});
    s.decoders.push_back({ArdRbfParams::unit(q), std::log(0.1)});
  }
  s.encoder.log_noise_std = std::log(0.1);

  const int C = train_data.has_labels() ? train_data.outputs : 0;
  const int S = train_data.has_labels() ? std::max(train_data.levels, 2) : 2;
  s.ordinal.W.resize(C, q);
  for (Eigen::Index c = 0; c < C; ++c)
    for (Eigen::Index j = 0; j < q; ++j)
      s.ordinal.W(c, j) = 0.1 * normal(rng);
  // Cut-points equally spaced over [-2, 2] (a single one sits at 0).
  s.ordinal.gamma_base = Vector::Constant(C, S == 2 ? 0.0 : -2.0);
  s.ordinal.gamma_log_incr = Matrix::Constant(
      C, S - 2, S > 2 ? std::log(4.0 / (S - 2)) : 0.0);
  s.ordinal.log_noise_std = std::log(0.1);
  return s;
}

// ---------------------------------------------------------------------------
// Bound evaluation

namespace {

/// Training data with cached pairwise squared distances per view.
class BoundEvaluator {
 public:
  explicit BoundEvaluator(const MultiViewDataset& data) : data_(data) {
    for (const auto& Y : data.views) sqdist_.push_back(squared_distances(Y, Y));
  }

  double evaluate(std::span<const Eigen::Index> batch, const ModelState& st,
                  const McConfig& mc, ModelState* grad) const;

 private:
  const MultiViewDataset& data_;
  std::vector<Matrix> sqdist_;
};

Matrix gather_rows(const Matrix& Y, std::span<const Eigen::Index> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), Y.cols());
  for (std::size_t r = 0; r < idx.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = Y.row(idx[r]);
  return out;
}

Matrix gather_block(const Matrix& D, std::span<const Eigen::Index> idx) {
  const auto b = static_cast<Eigen::Index>(idx.size());
  Matrix out(b, b);
  for (Eigen::Index j = 0; j < b; ++j)
    for (Eigen::Index i = 0; i < b; ++i) out(i, j) = D(idx[i], idx[j]);
  return out;
}

void check_state_against_data(const ModelState& st,
                              const MultiViewDataset& data) {
  require_shape(st.num_views() == data.num_views() &&
                    st.encoder.views.size() == data.num_views(),
                "elbo: model and data disagree on the number of views");
  require_shape(st.variational.size() == data.size(),
                "elbo: variational state rows do not match the data");
  if (st.ordinal_weight != 0.0) {
    if (!data.has_labels())
      throw ConfigError("elbo: ordinal weight is nonzero but data has no labels");
    require_shape(data.labels->outputs() == st.ordinal.outputs(),
                  "elbo: label columns do not match the ordinal outputs");
  }
}

double BoundEvaluator::evaluate(std::span<const Eigen::Index> batch,
                                const ModelState& st, const McConfig& mc,
                                ModelState* grad) const {
  check_state_against_data(st, data_);
  const auto b = static_cast<Eigen::Index>(batch.size());
  if (b < 2) throw DomainError("elbo: batch needs at least two points");
  for (auto i : batch)
    require_shape(i >= 0 && i < data_.size(), "elbo: batch index out of range");
  const Eigen::Index q = st.latent_dim;
  const std::size_t V = st.num_views();

  // Recognition model on the batch.
  std::vector<Matrix> D(V), Kv(V);
  Matrix Kr = Matrix::Zero(b, b);
  for (std::size_t v = 0; v < V; ++v) {
    D[v] = gather_block(sqdist_[v], batch);
    Kv[v] = iso_rbf_from_sqdist(D[v], st.encoder.views[v]);
    Kr += Kv[v];
  }
  const JitteredCholesky enc_chol(Kr, st.encoder.noise_variance());
  const Matrix A = enc_chol.inverse();
  const VariationalState vs = st.variational.rows(batch);
  const CavityResult cav = loo_cavity_from_inverse(A, vs.M);
  const LatentPosterior post = posterior(cav, vs);
  const double kl = kl_to_prior(post);

  std::vector<Matrix> Yb(V);
  for (std::size_t v = 0; v < V; ++v) Yb[v] = gather_rows(data_.views[v], batch);
  const bool use_ordinal = st.ordinal_weight != 0.0;
  LabelMatrix Zb;
  if (use_ordinal) Zb = data_.labels->rows(batch);

  const auto draws = standard_normal_draws(mc, b, q);
  const Matrix scale = sample_scale(post, st.reparam);
  const double inv_s = 1.0 / static_cast<double>(draws.size());

  double expected = 0.0;
  Matrix g_mean = Matrix::Zero(b, q);   // dF/dX averaged over draws
  Matrix g_scale = Matrix::Zero(b, q);  // dF/dX .* xi averaged over draws
  for (const auto& xi : draws) {
    const Matrix X = post.means + scale.cwiseProduct(xi);
    double value = 0.0;
    Matrix gX = Matrix::Zero(b, q);
    for (std::size_t v = 0; v < V; ++v) {
      if (grad) {
        const DecoderLoglikGrad dg = decoder_loglik_grad(Yb[v], X, st.decoders[v]);
        value += dg.value;
        gX += dg.d_X;
        auto& gd = grad->decoders[v];
        gd.kernel.log_signal_variance += inv_s * dg.kernel.d_log_signal_variance;
        gd.kernel.log_lengthscales += inv_s * dg.kernel.d_log_lengthscales;
        gd.log_noise_std += inv_s * dg.d_log_noise_std;
      } else {
        value += decoder_loglik(Yb[v], X, st.decoders[v]);
      }
    }
    if (use_ordinal) {
      const double w = st.ordinal_weight;
      if (grad) {
        const OrdinalLoglikGrad og = ordinal_loglik_grad(Zb, X, st.ordinal);
        value += w * og.value;
        gX += w * og.d_X;
        auto& go = grad->ordinal;
        go.W += (w * inv_s) * og.d_W;
        go.gamma_base += (w * inv_s) * og.d_gamma_base;
        go.gamma_log_incr += (w * inv_s) * og.d_gamma_log_incr;
        go.log_noise_std += w * inv_s * og.d_log_noise_std;
      } else {
        value += w * ordinal_loglik(Zb, X, st.ordinal);
      }
    }
    expected += value;
    if (grad) {
      g_mean += gX;
      g_scale += gX.cwiseProduct(xi);
    }
  }
  expected *= inv_s;
  const double bound = expected - kl;
  if (!grad) return bound;
  g_mean *= inv_s;
  g_scale *= inv_s;

  // Back through the sample X = mean + scale .* xi and the KL term.
  const Matrix& var = post.variances;
  Matrix d_mean = g_mean - post.means;
  Matrix d_var = -0.5 * (Matrix::Ones(b, q) - var.cwiseInverse());
  Matrix d_S, d_cav_var_per_dim;
  if (st.reparam == ReparamScale::SqrtOfSum) {
    d_var += g_scale.cwiseQuotient(2.0 * scale);
    d_S = d_var;
    d_cav_var_per_dim = d_var;
  } else {
    d_S = d_var + g_scale.cwiseQuotient(2.0 * post.variational_var.cwiseSqrt());
    Matrix cav_sd = Matrix(b, q);
    cav_sd.colwise() = post.cavity_var.cwiseSqrt();
    d_cav_var_per_dim = d_var + g_scale.cwiseQuotient(2.0 * cav_sd);
  }
  const Vector d_cav_var = d_cav_var_per_dim.rowwise().sum();
  const Matrix d_log_S = d_S.cwiseProduct(post.variational_var);

  const CavityGradient cg = loo_cavity_backward(A, vs.M, d_mean, d_cav_var);
  for (Eigen::Index r = 0; r < b; ++r) {
    grad->variational.M.row(batch[r]) += cg.d_M.row(r);
    grad->variational.log_S.row(batch[r]) += d_log_S.row(r);
  }
  grad->encoder.log_noise_std +=
      2.0 * st.encoder.noise_variance() * cg.d_kernel.trace();
  for (std::size_t v = 0; v < V; ++v) {
    const IsoRbfGradient eg =
        iso_rbf_backward(D[v], Kv[v], cg.d_kernel, st.encoder.views[v]);
    grad->encoder.views[v].log_signal_variance += eg.d_log_signal_variance;
    grad->encoder.views[v].log_lengthscale += eg.d_log_lengthscale;
  }
  return bound;
}

}  // namespace

double elbo(std::span<const Eigen::Index> batch, const ModelState& state,
            const MultiViewDataset& data, const McConfig& mc) {
  return BoundEvaluator(data).evaluate(batch, state, mc, nullptr);
}

ElboGradient elbo_grad(std::span<const Eigen::Index> batch,
                       const ModelState& state, const MultiViewDataset& data,
                       const McConfig& mc) {
  ModelState g = zero_like(state);
  ElboGradient out;
  out.value = BoundEvaluator(data).evaluate(batch, state, mc, &g);
  out.gradient = pack_parameters(g);
  return out;
}

// ---------------------------------------------------------------------------
// Gradient check

bool GradCheckReport::passed() const {
  return std::all_of(groups.begin(), groups.end(),
                     [](const GroupError& g) { return g.passed; });
}

GradCheckReport grad_check(const ModelState& state,
                           const MultiViewDataset& data,
                           std::span<const Eigen::Index> batch,
                           const McConfig& mc, const GradCheckOptions& opts,
                           const Vector& gradient) {
  const BoundEvaluator eval(data);
  Vector analytic = gradient;
  if (analytic.size() == 0) {
    ModelState g = zero_like(state);
    eval.evaluate(batch, state, mc, &g);
    analytic = pack_parameters(g);
  }
  const Vector theta = pack_parameters(state);
  require_shape(analytic.size() == theta.size(),
                "grad_check: gradient has the wrong size");

  GradCheckReport report;
  ModelState probe = state;
  for (const auto& group : parameter_groups(state)) {
    GroupError ge{group.name, 0.0, -1, true};
    for (Eigen::Index k = group.offset; k < group.offset + group.size; ++k) {
      Vector t = theta;
      t(k) = theta(k) + opts.step;
      unpack_parameters(t, probe);
      const double fp = eval.evaluate(batch, probe, mc, nullptr);
      t(k) = theta(k) - opts.step;
      unpack_parameters(t, probe);
      const double fm = eval.evaluate(batch, probe, mc, nullptr);
      const double fd = (fp - fm) / (2.0 * opts.step);
      const double a = analytic(k);
      const double rel =
          std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1.0});
      if (!(rel <= ge.max_rel_error)) {
        ge.max_rel_error = std::isnan(rel) ? std::numeric_limits<double>::infinity() : rel;
        ge.worst_index = k - group.offset;
      }
    }
    ge.passed = ge.max_rel_error < opts.tolerance;
    report.groups.push_back(ge);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Inference helpers on standardized data

namespace {

LatentPosterior posterior_standardized(const ModelState& st,
                                       const MultiViewDataset& train_std) {
  GramMatrix K = encoder_gram(train_std.views, st.encoder.views);
  const CavityResult cav =
      loo_cavity(K, st.encoder.noise_variance(), st.variational.M);
  return posterior(cav, st.variational);
}

Projection project_standardized(const ModelState& st,
                                const MultiViewDataset& train_std,
                                const MultiViewDataset& query_std) {
  return project(query_std.views, train_std.views, st.variational.M,
                 st.encoder);
}

MetricReport evaluate_standardized(const ModelState& st,
                                   const MultiViewDataset& train_std,
                                   const MultiViewDataset& query_std) {
  MetricReport report;
  const Projection proj = project_standardized(st, train_std, query_std);
  if (query_std.has_labels() && st.ordinal.outputs() > 0) {
    const LevelPrediction pred = predict_levels(proj.means, st.ordinal);
    add_ordinal_metrics(report, *query_std.labels, pred.levels);
  }
  report.view_names = query_std.view_names;
  for (std::size_t v = 0; v < st.num_views(); ++v) {
    const DecoderPrediction dp =
        decoder_predict(proj.means, st.variational.M, train_std.views[v],
                        st.decoders[v]);
    report.nlpd_per_view.push_back(nlpd(query_std.views[v], dp.means,
                                        dp.variances));
  }
  return report;
}

}  // namespace

void check_compatible(const ModelState& st, const MultiViewDataset& data,
                      Eigen::Index expected_train_rows) {
  if (data.num_views() != st.num_views())
    throw ConfigError("views: checkpoint has " + std::to_string(st.num_views()) +
                      ", manifest has " + std::to_string(data.num_views()));
  for (std::size_t v = 0; v < st.num_views(); ++v) {
    const auto expected = st.standardization.mean.at(v).size();
    if (data.views[v].cols() != expected)
      throw ConfigError("view '" + data.view_names[v] + "' dimension: checkpoint has " +
                        std::to_string(expected) + ", manifest has " +
                        std::to_string(data.views[v].cols()));
  }
  if (expected_train_rows >= 0 && expected_train_rows != st.train_size())
    throw ConfigError("training rows: checkpoint has " +
                      std::to_string(st.train_size()) + ", manifest has " +
                      std::to_string(expected_train_rows));
  if (data.has_labels() && st.ordinal.outputs() > 0) {
    if (data.outputs != st.ordinal.outputs())
      throw ConfigError("outputs: checkpoint has " +
                        std::to_string(st.ordinal.outputs()) +
                        ", manifest has " + std::to_string(data.outputs));
    if (data.levels != st.ordinal.levels())
      throw ConfigError("levels: checkpoint has " +
                        std::to_string(st.ordinal.levels()) +
                        ", manifest has " + std::to_string(data.levels));
  }
}

LatentPosterior training_posterior(const ModelState& state,
                                   const MultiViewDataset& train_data) {
  return posterior_standardized(state,
                                state.standardization.apply(train_data));
}

Projection project_dataset(const ModelState& state,
                           const MultiViewDataset& train_data,
                           const MultiViewDataset& query) {
  return project_standardized(state, state.standardization.apply(train_data),
                              state.standardization.apply(query));
}

MetricReport evaluate_model(const ModelState& state,
                            const MultiViewDataset& train_data,
                            const MultiViewDataset& query) {
  return evaluate_standardized(state, state.standardization.apply(train_data),
                               state.standardization.apply(query));
}

// ---------------------------------------------------------------------------
// Training loop

std::string TrainingTrace::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "step,datapoints,f2_per_point";
  for (const auto& name : view_names) os << ",nlpd_" << name;
  os << ",icc_mean,mse_mean\n";
  for (const auto& r : records) {
    os << r.step << ',' << r.datapoints << ',' << r.f2_per_point;
    for (double x : r.nlpd) os << ',' << x;
    os << ',' << r.icc_mean << ',' << r.mse_mean << '\n';
  }
  return os.str();
}

void TrainingTrace::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_csv();
}

namespace {

std::vector<IndexVector> make_batches(const IndexVector& order,
                                      Eigen::Index batch_size) {
  const auto n = static_cast<Eigen::Index>(order.size());
  const Eigen::Index count = std::max<Eigen::Index>(1, n / batch_size);
  std::vector<IndexVector> batches;
  Eigen::Index start = 0;
  for (Eigen::Index k = 0; k < count; ++k) {
    // Sizes differ by at most one.
    const Eigen::Index end = (k + 1) * n / count;
    batches.emplace_back(order.begin() + start, order.begin() + end);
    start = end;
  }
  return batches;
}

}  // namespace

TrainResult train(const MultiViewDataset& data, const TrainConfig& cfg) {
  data.validate();
  const Standardization st = Standardization::fit(data);
  const IndexVector train_rows = data.rows_with(Split::Train);
  const MultiViewDataset train_std = st.apply(data.subset(train_rows));
  ModelState state = initialize_state(train_std, cfg);
  state.standardization = st;
  return train_from(std::move(state), data, cfg);
}

TrainResult train_from(ModelState state, const MultiViewDataset& data,
                       const TrainConfig& cfg) {
  if (cfg.batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (cfg.epochs < 0) throw ConfigError("epochs must be nonnegative");
  if (cfg.mc_samples < 1 || cfg.eval_mc_samples < 1)
    throw ConfigError("mc samples must be at least 1");
  if (state.ordinal_weight != 0.0 && !data.has_labels())
    throw ConfigError("ordinal weight > 0 requires labels");

  const IndexVector train_rows = data.rows_with(Split::Train);
  const IndexVector test_rows = data.rows_with(Split::Test);
  check_compatible(state, data, static_cast<Eigen::Index>(train_rows.size()));
  const MultiViewDataset train_std =
      state.standardization.apply(data.subset(train_rows));
  const MultiViewDataset test_std =
      state.standardization.apply(data.subset(test_rows));
  const Eigen::Index n = train_std.size();
  if (n < 2) throw DataError("need at least two training rows");
  const Eigen::Index batch_size = std::min(cfg.batch_size, n);

  TrainResult result;
  result.trace.view_names = data.view_names;
  if (cfg.epochs == 0) {
    result.state = std::move(state);
    if (!cfg.trace_path.empty()) result.trace.write_csv(cfg.trace_path);
    return result;
  }

  const BoundEvaluator evaluator(train_std);
  IndexVector order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  // Fixed evaluation batch and draws so trace values are comparable.
  std::mt19937_64 shuffle_rng(splitmix64(state.seed ^ kShuffleStream) +
                              state.step);
  IndexVector eval_order = order;
  {
    std::mt19937_64 eval_rng(splitmix64(state.seed ^ kEvalStream));
    std::shuffle(eval_order.begin(), eval_order.end(), eval_rng);
  }
  const IndexVector eval_batch(eval_order.begin(),
                               eval_order.begin() + batch_size);
  const McConfig eval_mc{cfg.eval_mc_samples, splitmix64(state.seed ^ kEvalStream)};

  auto record = [&]() {
    TraceRecord r;
    r.step = state.step;
    r.datapoints = state.datapoints_seen;
    r.f2_per_point = evaluator.evaluate(eval_batch, state, eval_mc, nullptr) /
                     static_cast<double>(eval_batch.size());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.icc_mean = nan;
    r.mse_mean = nan;
    if (test_std.size() > 0) {
      const MetricReport rep = evaluate_standardized(state, train_std, test_std);
      r.nlpd = rep.nlpd_per_view;
      if (!rep.icc_per_output.empty()) {
        r.icc_mean = rep.icc_mean();
        r.mse_mean = rep.mse_mean();
      }
    } else {
      r.nlpd.assign(state.num_views(), nan);
    }
    result.trace.records.push_back(std::move(r));
  };

  const int eval_every =
      cfg.eval_every > 0
          ? cfg.eval_every
          : static_cast<int>(make_batches(order, batch_size).size());
  Vector theta = pack_parameters(state);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const auto batches = make_batches(order, batch_size);
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const McConfig mc{cfg.mc_samples, step_seed(state.seed, state.step)};
      ModelState g = zero_like(state);
      const double value = evaluator.evaluate(batches[bi], state, mc, &g);
      const Vector grad = pack_parameters(g);
      if (!std::isfinite(value) || !grad.allFinite()) {
        std::ostringstream os;
        os << "non-finite bound at step " << state.step << " (epoch " << epoch
           << ", batch " << bi << "): value " << value
           << ", |theta| = " << theta.norm();
        throw TrainingAborted(os.str(), state, bi);
      }
      adadelta_step(theta, -grad, state.optimizer, cfg.adadelta);
      unpack_parameters(theta, state);
      ++state.step;
      state.datapoints_seen += batches[bi].size();
      if (state.step % static_cast<std::uint64_t>(eval_every) == 0) record();
    }
  }
  result.state = std::move(state);
  if (!cfg.trace_path.empty()) result.trace.write_csv(cfg.trace_path);
  return result;
}

}  // namespace vgpae
