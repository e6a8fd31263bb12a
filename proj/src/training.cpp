#include "nlos/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nlos/error.hpp"
#include "nlos/io.hpp"
#include "nlos/random.hpp"

namespace nlos::training {

using dataset::FeatureWindow;
using network::ModelParams;
using tensor::Tape;
using tensor::Var;

void TrainConfig::validate() const {
  if (batch_size == 0) throw UsageError("train: batch_size must be positive");
  if (epochs == 0) throw UsageError("train: epochs must be positive");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw UsageError("train: base_lr must be positive");
  if (!(lr_gamma > 0.0 && lr_gamma <= 1.0)) throw UsageError("train: lr_gamma must be in (0, 1]");
  for (std::size_t i = 1; i < lr_milestones.size(); ++i)
    if (lr_milestones[i] <= lr_milestones[i - 1]) throw UsageError("train: lr_milestones must be strictly increasing");
  if (!(loss_weight_lambda >= 0.0) || !std::isfinite(loss_weight_lambda))
    throw UsageError("train: loss_weight_lambda must be non-negative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw UsageError("train: adam betas must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw UsageError("train: adam_eps must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw UsageError("train: train_fraction must be in (0, 1)");
  if (!std::isfinite(grad_clip_norm)) throw UsageError("train: grad_clip_norm must be finite");
  if (!(nlos_class_weight > 0.0) || !std::isfinite(nlos_class_weight))
    throw UsageError("train: nlos_class_weight must be positive");
}

double lr_at(std::size_t epoch, const TrainConfig& config) {
  double lr = config.base_lr;
  for (std::size_t m : config.lr_milestones)
    if (m <= epoch) lr *= config.lr_gamma;
  return lr;
}

// ---------------------------------------------------------------------------
// Loss

LossParts total_loss(const network::ModelOutput& output, const FeatureWindow& window, double lambda,
                     double error_scale_m) {
  if (!window.labeled) throw UsageError("total_loss: window is not labeled");
  if (output.valid.size() != window.N_max) throw UsageError("total_loss: output does not match the window");
  double se = 0.0, ae = 0.0;
  std::size_t n = 0;
  for (std::size_t s = 0; s < window.N_max; ++s) {
    if (!window.sat_mask[s]) continue;
    const double d = output.visibility_prob[s] - window.labels_visibility[s];
    se += d * d;
    ae += std::abs(output.error_pred_m[s] - window.labels_error[s]) / error_scale_m;
    ++n;
  }
  if (n == 0) throw UsageError("total_loss: window has no unmasked slots");
  LossParts parts;
  parts.mse = se / static_cast<double>(n);
  parts.l1 = ae / static_cast<double>(n);
  parts.total = parts.mse + lambda * parts.l1;
  return parts;
}

LossVars loss_graph(Tape& tape, std::span<const network::GraphOutput> graphs,
                    std::span<const FeatureWindow* const> windows, double lambda, double error_scale_m,
                    double nlos_class_weight) {
  if (graphs.size() != windows.size() || graphs.empty()) throw UsageError("loss_graph: graphs and windows must pair up");
  std::vector<Var> probs, errors;
  std::vector<double> vis, err, weight;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const FeatureWindow& w = *windows[i];
    if (!w.labeled) throw UsageError("loss_graph: window is not labeled");
    probs.push_back(graphs[i].probability);
    errors.push_back(graphs[i].error_scaled);
    for (std::size_t s : graphs[i].slots) {
      vis.push_back(w.labels_visibility[s]);
      err.push_back(w.labels_error[s] / error_scale_m);
      weight.push_back(w.labels_visibility[s] < 0.5 ? nlos_class_weight : 1.0);
    }
  }
  const std::size_t n = vis.size();
  if (n == 0) throw UsageError("loss_graph: no unmasked slots");
  const Var p = probs.size() == 1 ? probs[0] : tape.concat(probs, 0);
  const Var e = errors.size() == 1 ? errors[0] : tape.concat(errors, 0);
  const Var y = tape.constant({n, 1}, std::move(vis));
  LossVars out;
  if (nlos_class_weight == 1.0) {
    out.mse = tape.mse_loss(p, y);
  } else {
    const double total_weight = std::accumulate(weight.begin(), weight.end(), 0.0);
    const Var d = tape.sub(p, y);
    const Var sq = tape.mul(tape.mul(d, d), tape.constant({n, 1}, std::move(weight)));
    out.mse = tape.scale(tape.sum(sq), 1.0 / total_weight);
  }
  out.l1 = tape.l1_loss(e, tape.constant({n, 1}, std::move(err)));
  out.total = tape.add(out.mse, tape.scale(out.l1, lambda));
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

AdamState adam_init(const ModelParams& params) {
  AdamState s;
  for (const auto& [name, t] : params.tensors()) {
    s.m[name].assign(t.size(), 0.0);
    s.v[name].assign(t.size(), 0.0);
  }
  return s;
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, double lr, const TrainConfig& config) {
  for (const auto& [name, t] : params.tensors()) {
    const auto it = grads.find(name);
    if (it == grads.end()) throw UsageError("adam_step: no gradient for '" + name + "'");
    if (it->second.size() != t.size() || state.m.at(name).size() != t.size() || state.v.at(name).size() != t.size())
      throw UsageError("adam_step: shape mismatch for '" + name + "'");
    for (double g : it->second)
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in '" + name + "'");
  }
  ++state.step;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (auto& [name, t] : params.tensors()) {
    const auto& g = grads.at(name);
    auto& m = state.m.at(name);
    auto& v = state.v.at(name);
    auto data = t.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      data[i] = static_cast<float>(data[i] - lr * m_hat / (std::sqrt(v_hat) + config.adam_eps));
    }
  }
  params.check_finite();
}

double clip_global_norm(Gradients& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double k = max_norm / norm;
    for (auto& [name, g] : grads)
      for (double& x : g) x *= k;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

// Pooled over every valid slot of the prediction set.
LossParts pooled_loss(const metrics::Predictions& p, double lambda, double error_scale_m) {
  double se = 0.0, ae = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.mask.size(); ++i) {
    if (!p.mask[i]) continue;
    const double d = p.probs[i] - p.labels_visibility[i];
    se += d * d;
    ae += std::abs(p.error_pred_m[i] - p.labels_error_m[i]) / error_scale_m;
    ++n;
  }
  LossParts parts;
  if (n == 0) return parts;
  parts.mse = se / static_cast<double>(n);
  parts.l1 = ae / static_cast<double>(n);
  parts.total = parts.mse + lambda * parts.l1;
  return parts;
}

void check_windows(std::span<const FeatureWindow> windows, const network::ModelConfig& config, const char* which) {
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const FeatureWindow& w = windows[i];
    if (!w.labeled) throw DataError(std::string("train: ") + which + " window " + std::to_string(i) + " is unlabeled");
    if (w.N_max != config.N_max || w.T != config.T)
      throw DataError(std::string("train: ") + which + " window " + std::to_string(i) + " does not match the model (N_max " +
                      std::to_string(w.N_max) + ", T " + std::to_string(w.T) + ")");
    if (w.valid_count() == 0)
      throw DataError(std::string("train: ") + which + " window " + std::to_string(i) + " has no satellites");
    for (std::size_t s = 0; s < w.N_max; ++s) {
      if (!w.sat_mask[s]) continue;
      bool finite = std::isfinite(w.labels_visibility[s]) && std::isfinite(w.labels_error[s]);
      for (std::size_t k = 0; k < w.T * dataset::kNumFeatures; ++k)
        finite = finite && std::isfinite(w.features[s * w.T * dataset::kNumFeatures + k]);
      if (!finite)
        throw DataError(std::string("train: ") + which + " window " + std::to_string(i) + " slot " + std::to_string(s) +
                        " has a non-finite value");
    }
  }
}

}  // namespace

TrainResult train(const network::ModelConfig& model_config, ModelParams params,
                  std::span<const FeatureWindow> train_windows, std::span<const FeatureWindow> val_windows,
                  const TrainConfig& config) {
  config.validate();
  model_config.validate();
  if (train_windows.empty()) throw DataError("train: empty training split");
  if (val_windows.empty()) throw DataError("train: empty validation split");
  check_windows(train_windows, model_config, "training");
  check_windows(val_windows, model_config, "validation");

  const double scale = model_config.error_scale_m;
  const double lambda = config.loss_weight_lambda;
  AdamState state = adam_init(params);
  Rng rng(config.rng_seed);
  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.params = params;
  double best = std::numeric_limits<double>::infinity();

  Gradients grads;
  for (const auto& [name, t] : params.tensors()) grads[name].assign(t.size(), 0.0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(epoch, config);
    rng.shuffle(order);
    double sum_total = 0.0, sum_mse = 0.0, sum_l1 = 0.0;
    std::size_t slots = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      for (auto& [name, g] : grads) std::fill(g.begin(), g.end(), 0.0);
      Tape tape;
      const network::Bindings b = network::bind_into(tape, params, grads);
      std::vector<network::GraphOutput> graphs;
      std::vector<const FeatureWindow*> batch;
      std::size_t batch_slots = 0;
      for (std::size_t k = start; k < end; ++k) {
        const FeatureWindow& w = train_windows[order[k]];
        graphs.push_back(network::build_graph(tape, b, model_config, w));
        batch.push_back(&w);
        batch_slots += graphs.back().slots.size();
      }
      const LossVars loss = loss_graph(tape, graphs, batch, lambda, scale, config.nlos_class_weight);
      const double total = tape.scalar(loss.total);
      if (!std::isfinite(total))
        throw NumericError("train: loss is not finite at epoch " + std::to_string(epoch) + ", batch starting at " +
                           std::to_string(start));
      tape.backward(loss.total);
      clip_global_norm(grads, config.grad_clip_norm);
      try {
        adam_step(params, grads, state, lr, config);
      } catch (const NumericError& e) {
        throw NumericError("train: epoch " + std::to_string(epoch) + ", batch starting at " + std::to_string(start) +
                           ": " + e.what());
      }
      const double w = static_cast<double>(batch_slots);
      sum_total += total * w;
      sum_mse += tape.scalar(loss.mse) * w;
      sum_l1 += tape.scalar(loss.l1) * w;
      slots += batch_slots;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train.total = sum_total / static_cast<double>(slots);
    rec.train.mse = sum_mse / static_cast<double>(slots);
    rec.train.l1 = sum_l1 / static_cast<double>(slots);
    const metrics::Predictions pred = metrics::predict(val_windows, params, model_config);
    rec.validation = pooled_loss(pred, lambda, scale);
    rec.validation_metrics = metrics::evaluate(pred);
    if (!std::isfinite(rec.validation.total))
      throw NumericError("train: validation loss is not finite at epoch " + std::to_string(epoch));
    if (rec.validation.total < best) {
      best = rec.validation.total;
      result.params = params;
      result.report.best_epoch = epoch;
      result.report.best_validation_loss = best;
    }
    result.report.epochs.push_back(rec);
  }
  return result;
}

std::string TrainReport::to_csv() const {
  std::string out =
      "epoch,lr,train_total,train_mse,train_l1,val_total,val_mse,val_l1,val_accuracy,val_los_f1,val_nlos_precision,"
      "val_nlos_recall,val_nlos_f1,val_mae_m,best\n";
  for (const auto& r : epochs) {
    const auto& m = r.validation_metrics;
    out += std::to_string(r.epoch) + "," + io::format_double(r.lr) + "," + io::format_double(r.train.total) + "," +
           io::format_double(r.train.mse) + "," + io::format_double(r.train.l1) + "," +
           io::format_double(r.validation.total) + "," + io::format_double(r.validation.mse) + "," +
           io::format_double(r.validation.l1) + "," + io::format_double(m.accuracy) + "," + io::format_double(m.los.f1) +
           "," + io::format_double(m.nlos.precision) + "," + io::format_double(m.nlos.recall) + "," +
           io::format_double(m.nlos.f1) + "," + io::format_double(m.mae_m) + "," + (r.epoch == best_epoch ? "1" : "0") +
           "\n";
  }
  return out;
}

Split split_indices(std::size_t n, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw UsageError("split: train_fraction must be in (0, 1)");
  if (n < 2) throw DataError("split: need at least 2 windows, got " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  std::size_t cut = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  cut = std::clamp<std::size_t>(cut, 1, n - 1);
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
  s.validation.assign(idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end());
  return s;
}

std::uint64_t split_hash(const Split& split, std::span<const FeatureWindow> windows) {
  std::string bytes;
  auto put = [&bytes](const void* p, std::size_t n) { bytes.append(static_cast<const char*>(p), n); };
  for (const auto* part : {&split.train, &split.validation}) {
    const std::uint64_t count = part->size();
    put(&count, sizeof count);
    for (std::size_t i : *part) {
      const FeatureWindow& w = windows[i];
      const std::uint64_t index = i;
      put(&index, sizeof index);
      put(w.features.data(), w.features.size() * sizeof(double));
      put(w.sat_mask.data(), w.sat_mask.size());
      put(w.labels_visibility.data(), w.labels_visibility.size() * sizeof(double));
      put(w.labels_error.data(), w.labels_error.size() * sizeof(double));
    }
  }
  return io::fnv1a64(bytes);
}

FitResult fit(std::span<const FeatureWindow> windows, const network::ModelConfig& model_config,
              const TrainConfig& config, std::uint64_t init_seed) {
  config.validate();
  FitResult r;
  r.split = split_indices(windows.size(), config.train_fraction, config.rng_seed);
  r.split_hash = split_hash(r.split, windows);
  std::vector<FeatureWindow> train_set, val_set;
  for (std::size_t i : r.split.train) train_set.push_back(windows[i]);
  for (std::size_t i : r.split.validation) val_set.push_back(windows[i]);
  const dataset::Normalizer norm = dataset::fit_normalizer(train_set);
  dataset::apply_normalizer(train_set, norm);
  dataset::apply_normalizer(val_set, norm);
  TrainResult t = train(model_config, network::init_params(model_config, init_seed), train_set, val_set, config);
  r.checkpoint = {model_config, std::move(t.params), norm};
  r.report = std::move(t.report);
  return r;
}

}  // namespace nlos::training
