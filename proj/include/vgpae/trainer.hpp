#pragma once

#include "vgpae/data.hpp"
#include "vgpae/generative.hpp"
#include "vgpae/metrics.hpp"
#include "vgpae/ordinal.hpp"
#include "vgpae/recognition.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace vgpae {

struct AdaDeltaConfig {
  double rho = 0.95;
  double epsilon = 1e-6;
};

/// Running averages E[g^2] and E[dx^2].
struct AdaDeltaState {
  Vector mean_sq_grad;
  Vector mean_sq_update;
};

/// One AdaDelta descent step on `grad`:
///   E[g^2]  <- rho E[g^2] + (1 - rho) g^2
///   dx      = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
///   E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
/// To ascend a bound pass its negated gradient.
void adadelta_step(Vector& params, const Vector& grad, AdaDeltaState& state,
                   const AdaDeltaConfig& cfg = {});

enum class LatentInit { Random, Pca };

/// Complete training snapshot.
struct ModelState {
  VariationalState variational;
  EncoderParams encoder;
  std::vector<DecoderParams> decoders;
  OrdinalParams ordinal;
  int latent_dim = 2;
  double ordinal_weight = 1.0;
  std::uint64_t seed = 0;
  ReparamScale reparam = ReparamScale::SqrtOfSum;
  Standardization standardization;
  AdaDeltaState optimizer;
  std::uint64_t step = 0;
  std::uint64_t datapoints_seen = 0;

  Eigen::Index train_size() const { return variational.size(); }
  std::size_t num_views() const { return decoders.size(); }
};

/// A contiguous slice of the flat parameter vector.
struct ParameterGroup {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
};

/// Flat layout: M, log_S, encoder, decoder, ordinal (in that order).
std::vector<ParameterGroup> parameter_groups(const ModelState& state);
Vector pack_parameters(const ModelState& state);
void unpack_parameters(const Vector& flat, ModelState& state);

struct TrainConfig {
  int latent_dim = 2;
  Eigen::Index batch_size = 500;
  int epochs = 100;
  int mc_samples = 1;
  int eval_mc_samples = 64;
  AdaDeltaConfig adadelta;
  std::uint64_t seed = 0;
  int eval_every = 0;  // optimizer steps between trace records; 0 = per epoch
  double ordinal_weight = 1.0;
  LatentInit init = LatentInit::Random;
  double init_scale = 0.1;  // std of the random latent means
  double encoder_lengthscale = 0.0;  // initial value; 0 = sqrt(D_v) per view
  ReparamScale reparam = ReparamScale::SqrtOfSum;
  std::filesystem::path trace_path;  // written when non-empty
};

struct TraceRecord {
  std::uint64_t step = 0;
  std::uint64_t datapoints = 0;
  double f2_per_point = 0.0;
  std::vector<double> nlpd;  // one per view, held-out rows
  double icc_mean = 0.0;
  double mse_mean = 0.0;
};

struct TrainingTrace {
  std::vector<std::string> view_names;
  std::vector<TraceRecord> records;

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Default parameters for a standardized training set.
ModelState initialize_state(const MultiViewDataset& train_data,
                            const TrainConfig& cfg);

/// The lower bound on the rows `batch` of `data` (already standardized):
///   sum_v E_q[log p(Y_v|X)] - KL(q || p) + w * E_q[log p(Z|X)].
double elbo(std::span<const Eigen::Index> batch, const ModelState& state,
            const MultiViewDataset& data, const McConfig& mc);

struct ElboGradient {
  double value = 0.0;
  Vector gradient;  // layout of pack_parameters
};

/// Pathwise gradient of elbo at the same Monte-Carlo draws.
ElboGradient elbo_grad(std::span<const Eigen::Index> batch,
                       const ModelState& state, const MultiViewDataset& data,
                       const McConfig& mc);

/// Raised when the bound stops being finite during training.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(const std::string& what, ModelState snapshot,
                  std::size_t batch_id)
      : NumericalError(what),
        snapshot_(std::move(snapshot)),
        batch_id_(batch_id) {}

  const ModelState& snapshot() const { return snapshot_; }
  std::size_t batch_id() const { return batch_id_; }

 private:
  ModelState snapshot_;
  std::size_t batch_id_;
};

struct TrainResult {
  ModelState state;
  TrainingTrace trace;
};

/// Standardizes features on the training rows, initializes, and runs
/// minibatch AdaDelta on the bound. Rows tagged Test are only used for the
/// held-out columns of the trace.
TrainResult train(const MultiViewDataset& data, const TrainConfig& cfg);

/// Continues training from `initial` (which must match the data) for
/// cfg.epochs more epochs.
TrainResult train_from(ModelState initial, const MultiViewDataset& data,
                       const TrainConfig& cfg);

struct GroupError {
  std::string name;
  double max_rel_error = 0.0;
  Eigen::Index worst_index = -1;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GroupError> groups;
  bool passed() const;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
};

/// Compares `gradient` (elbo_grad when empty) against central differences
/// of elbo at the same seed. Relative error per coordinate is
/// |a - b| / max(|a|, |b|, 1).
GradCheckReport grad_check(const ModelState& state,
                           const MultiViewDataset& data,
                           std::span<const Eigen::Index> batch,
                           const McConfig& mc,
                           const GradCheckOptions& opts = {},
                           const Vector& gradient = Vector());

// ---------------------------------------------------------------------------
// Inference on a trained model. `train_data` and `query` are raw
// (unstandardized) datasets; the model's stored standardization is applied.

/// Posterior over the training rows with the cavity taken over all of them.
LatentPosterior training_posterior(const ModelState& state,
                                   const MultiViewDataset& train_data);

Projection project_dataset(const ModelState& state,
                           const MultiViewDataset& train_data,
                           const MultiViewDataset& query);

/// Ordinal metrics on `query` labels (when present) and per-view NLPD of
/// reconstructing `query` from its projected latent positions.
MetricReport evaluate_model(const ModelState& state,
                            const MultiViewDataset& train_data,
                            const MultiViewDataset& query);

/// Throws ConfigError naming the first field where `data` disagrees with
/// the model.
void check_compatible(const ModelState& state, const MultiViewDataset& data,
                      Eigen::Index expected_train_rows);

}  // namespace vgpae
