#pragma once

// Satellite-visibility network: per-satellite LSTM encoders, a shared
// projection feeding multi-head attention across satellites, a Bi-LSTM over
// the attended satellite sequence seeded from the target satellite's encoder
// state, and two MLP heads (visibility probability, pseudorange error).

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nlos/dataset.hpp"
#include "nlos/tensor.hpp"

namespace nlos::network {

using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

enum class Variant { kFull, kNoAttention, kNoBiLstm };

const char* variant_name(Variant v);  // "full", "no_attention", "no_bilstm"
Variant parse_variant(const std::string& name);

struct ModelConfig {
  std::size_t input_dim = dataset::kNumFeatures;
  std::size_t lstm_hidden = 32;
  std::size_t lstm_layers = 2;
  std::size_t attn_heads = 4;
  std::size_t attn_dim = 32;
  std::size_t mlp_hidden = 64;
  std::size_t mlp_layers = 3;
  std::size_t N_max = 25;
  std::size_t T = 5;
  Variant variant = Variant::kFull;
  // Stop gradients through the query path of the shared projection.
  bool stop_gradient_query = false;
  // The regression head predicts error / error_scale_m.
  double error_scale_m = 100.0;

  void validate() const;
  std::size_t head_dim() const { return attn_dim / attn_heads; }
};

/// Named parameter tensors, ordered by path.
class ModelParams {
 public:
  ModelParams() = default;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  void insert(const std::string& name, Tensor t);

  std::map<std::string, Tensor>& tensors() { return tensors_; }
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }
  std::size_t parameter_count() const;
  /// Throws NumericError naming the first non-finite tensor.
  void check_finite() const;

 private:
  std::map<std::string, Tensor> tensors_;
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] (values rounded to float),
/// LSTM forget-gate bias +1.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Parameter handles on one tape.
using Bindings = std::map<std::string, Var>;

/// Values only, no gradient path.
Bindings bind_constants(Tape& tape, const ModelParams& params);
/// Gradients accumulate into each tensor's own grad buffer.
Bindings bind_trainable(Tape& tape, ModelParams& params);
/// Gradients accumulate into `grads` (same names and sizes as `params`).
Bindings bind_into(Tape& tape, const ModelParams& params, std::map<std::string, std::vector<double>>& grads);

// ---------------------------------------------------------------------------
// Components. All operate on the compact set of valid slots (rows in slot
// order); callers scatter results back to N_max.

struct EncoderOutput {
  std::vector<Var> sequence;  // T entries of [n, H], top layer
  Var h_final;                // [n, H]
  Var c_final;                // [n, H]
};

/// `steps[t]` is [n, input_dim]. The same weights run on every row.
EncoderOutput lstm_encode(Tape& tape, const Bindings& p, const ModelConfig& config, const std::vector<Var>& steps);

struct Projections {
  Var q, k, v;  // [n, D] each
};

/// Shared fully-connected layer on the encoder final states, followed by the
/// per-head query/key/value maps (heads are column blocks of width D/heads).
Projections qkv_project(Tape& tape, const Bindings& p, const ModelConfig& config, Var h_final);

struct AttentionOutput {
  Var attended;                  // [n, D] after the output projection
  std::vector<double> weights;   // [n target][heads][n context]
};

/// `context_mask` marks usable context rows (size n); every target row needs
/// at least one.
AttentionOutput multi_head_attention(Tape& tape, const Bindings& p, const ModelConfig& config,
                                     const Projections& qkv, const std::vector<std::uint8_t>& context_mask);

/// Runs the Bi-LSTM over `sequence` (rows in slot order) once per target,
/// batched over targets. Initial (h, c) of both directions come from a shared
/// linear map of each target's encoder (h, c). Returns [n_targets, 2H]
/// (forward final state, backward final state), or [n_targets, H] for the
/// unidirectional variant.
Var bilstm_head(Tape& tape, const Bindings& p, const ModelConfig& config, Var sequence, Var target_h, Var target_c);

struct GraphOutput {
  std::vector<std::size_t> slots;  // valid slots, ascending
  Var probability;                 // [n, 1]
  Var error_scaled;                // [n, 1], meters / error_scale_m
  std::vector<double> attention;   // [n][heads][n], empty for no_attention
};

/// Builds the full forward graph for one (normalized) window.
GraphOutput build_graph(Tape& tape, const Bindings& p, const ModelConfig& config,
                        const dataset::FeatureWindow& window);

struct ModelOutput {
  std::vector<double> visibility_prob;    // [N_max], P(LOS); 0 for masked slots
  std::vector<double> error_pred_m;       // [N_max]; 0 for masked slots
  std::vector<std::uint8_t> valid;        // [N_max]
  std::vector<double> attention_weights;  // [N_max][heads][N_max]
};

ModelOutput forward(const dataset::FeatureWindow& window, const ModelParams& params, const ModelConfig& config);

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  dataset::Normalizer normalizer;
};

/// Layout: 8-byte magic "NLOSCKPT", u32 format version, u64 header length,
/// JSON header (config, normalizer, parameter index), float32 little-endian
/// parameter blobs in index order, u64 FNV-1a checksum of all prior bytes.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& source = "<memory>");
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// When `expected_variant` is set, a checkpoint of another variant is refused.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<Variant> expected_variant = {});

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace nlos::network
