#pragma once

// Mini-batch training: MSE on the visibility probability plus lambda times L1
// on the scaled pseudorange error, Adam with a multistep schedule and global
// gradient-norm clipping.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nlos/dataset.hpp"
#include "nlos/metrics.hpp"
#include "nlos/network.hpp"
#include "nlos/tensor.hpp"

namespace nlos::training {

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 150;
  double base_lr = 1e-3;
  std::vector<std::size_t> lr_milestones = {60, 120};
  double lr_gamma = 0.1;
  double loss_weight_lambda = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t rng_seed = 0;
  double train_fraction = 0.8;
  double grad_clip_norm = 5.0;  // <= 0 disables clipping
  // Weight of NLOS slots in the classification term (1 = unweighted).
  double nlos_class_weight = 1.0;

  void validate() const;
};

/// base_lr * gamma^(number of milestones <= epoch).
double lr_at(std::size_t epoch, const TrainConfig& config);

// ---------------------------------------------------------------------------
// Loss

struct LossParts {
  double total = 0.0;
  double mse = 0.0;
  double l1 = 0.0;
};

/// MSE(visibility_prob, labels) + lambda * L1(error_pred / scale, label / scale),
/// each averaged over valid slots.
LossParts total_loss(const network::ModelOutput& output, const dataset::FeatureWindow& window, double lambda,
                     double error_scale_m = 1.0);

struct LossVars {
  tensor::Var total, mse, l1;
};

/// Differentiable form over several graphs (one per window) on one tape.
/// Averages run over all valid slots of all windows.
LossVars loss_graph(tensor::Tape& tape, std::span<const network::GraphOutput> graphs,
                    std::span<const dataset::FeatureWindow* const> windows, double lambda, double error_scale_m,
                    double nlos_class_weight = 1.0);

// ---------------------------------------------------------------------------
// Optimizer

using Gradients = std::map<std::string, std::vector<double>>;

struct AdamState {
  Gradients m;
  Gradients v;
  std::uint64_t step = 0;
};

AdamState adam_init(const network::ModelParams& params);

/// Bias-corrected Adam update. Parameters are rounded to float after the
/// update so checkpoints reproduce them exactly. Throws NumericError naming
/// the parameter on a non-finite gradient, before anything is modified.
void adam_step(network::ModelParams& params, const Gradients& grads, AdamState& state, double lr,
               const TrainConfig& config);

/// Scales every gradient so the global L2 norm is at most max_norm. Returns
/// the norm before scaling.
double clip_global_norm(Gradients& grads, double max_norm);

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  LossParts train;
  LossParts validation;
  metrics::MetricReport validation_metrics;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // lowest validation loss
  double best_validation_loss = 0.0;

  std::string to_csv() const;
};

struct TrainResult {
  network::ModelParams params;  // best-validation parameters
  TrainReport report;
};

/// Windows must be normalized with a normalizer fitted on `train_windows`.
/// Deterministic given the config (the epoch shuffle uses rng_seed).
TrainResult train(const network::ModelConfig& model_config, network::ModelParams params,
                  std::span<const dataset::FeatureWindow> train_windows,
                  std::span<const dataset::FeatureWindow> val_windows, const TrainConfig& config);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Seeded shuffle of [0, n) cut at train_fraction. Both parts non-empty.
Split split_indices(std::size_t n, double train_fraction, std::uint64_t seed);

/// Hash of the split and of the windows it selects, used to prove that
/// several runs saw identical data.
std::uint64_t split_hash(const Split& split, std::span<const dataset::FeatureWindow> windows);

struct FitResult {
  network::Checkpoint checkpoint;
  TrainReport report;
  Split split;
  std::uint64_t split_hash = 0;
};

/// Splits raw windows, fits the normalizer on the training part, initializes
/// parameters from `init_seed` and trains.
FitResult fit(std::span<const dataset::FeatureWindow> windows, const network::ModelConfig& model_config,
              const TrainConfig& config, std::uint64_t init_seed);

}  // namespace nlos::training
