#include "nlos/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "json.hpp"
#include "nlos/error.hpp"
#include "nlos/io.hpp"
#include "nlos/random.hpp"

namespace nlos::network {

namespace {

using dataset::FeatureWindow;

Var get(const Bindings& p, const std::string& name) {
  const auto it = p.find(name);
  if (it == p.end()) throw UsageError("network: missing parameter '" + name + "'");
  return it->second;
}

struct LstmWeights {
  Var w_input, w_hidden, bias;
};

LstmWeights lstm_weights(const Bindings& p, const std::string& prefix) {
  return {get(p, prefix + ".w_input"), get(p, prefix + ".w_hidden"), get(p, prefix + ".bias")};
}

// One cell step given the precomputed input projection (x W_in + b), which is
// either [n, 4H] or a [1, 4H] row shared by every batch row.
std::pair<Var, Var> lstm_step(Tape& t, const LstmWeights& w, Var x_proj, Var h, Var c, std::size_t H) {
  const Var rec = t.matmul(h, w.w_hidden);
  const Var gates = t.add(rec, x_proj);
  const Var i = t.sigmoid(t.slice(gates, 1, 0, H));
  const Var f = t.sigmoid(t.slice(gates, 1, H, 2 * H));
  const Var g = t.tanh(t.slice(gates, 1, 2 * H, 3 * H));
  const Var o = t.sigmoid(t.slice(gates, 1, 3 * H, 4 * H));
  const Var c_next = t.add(t.mul(f, c), t.mul(i, g));
  const Var h_next = t.mul(o, t.tanh(c_next));
  return {h_next, c_next};
}

Var zeros(Tape& t, std::size_t rows, std::size_t cols) {
  return t.constant({rows, cols}, std::vector<double>(rows * cols, 0.0));
}

Var linear(Tape& t, const Bindings& p, const std::string& prefix, Var x) {
  return t.add(t.matmul(x, get(p, prefix + ".weight")), get(p, prefix + ".bias"));
}

Var mlp(Tape& t, const Bindings& p, const ModelConfig& config, const std::string& prefix, Var x) {
  for (std::size_t l = 0; l < config.mlp_layers; ++l) x = t.relu(linear(t, p, prefix + ".hidden" + std::to_string(l), x));
  return linear(t, p, prefix + ".out", x);
}

struct ShapeSpec {
  std::size_t rows, cols, fan_in;
};

std::map<std::string, ShapeSpec> parameter_shapes(const ModelConfig& c) {
  std::map<std::string, ShapeSpec> s;
  const std::size_t H = c.lstm_hidden, D = c.attn_dim, G = 4 * H;
  auto add_lstm = [&](const std::string& prefix, std::size_t in) {
    s[prefix + ".w_input"] = {in, G, H};
    s[prefix + ".w_hidden"] = {H, G, H};
    s[prefix + ".bias"] = {1, G, H};
  };
  auto add_linear = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    s[prefix + ".weight"] = {in, out, in};
    s[prefix + ".bias"] = {1, out, in};
  };
  for (std::size_t l = 0; l < c.lstm_layers; ++l) add_lstm("encoder.layer" + std::to_string(l), l == 0 ? c.input_dim : H);
  add_linear("shared_fc", H, D);
  if (c.variant != Variant::kNoAttention) {
    s["attention.w_query"] = {D, D, D};
    s["attention.w_key"] = {D, D, D};
    s["attention.w_value"] = {D, D, D};
    add_linear("attention.out", D, D);
  }
  add_linear("bilstm.init", 2 * H, 2 * H);
  add_lstm("bilstm.forward", D);
  if (c.variant != Variant::kNoBiLstm) add_lstm("bilstm.backward", D);
  const std::size_t head_in = (c.variant == Variant::kNoBiLstm ? 1 : 2) * H + H;
  for (const char* head : {"classifier", "regressor"}) {
    for (std::size_t l = 0; l < c.mlp_layers; ++l) {
      add_linear(std::string(head) + ".hidden" + std::to_string(l), l == 0 ? head_in : c.mlp_hidden, c.mlp_hidden);
    }
    add_linear(std::string(head) + ".out", c.mlp_layers == 0 ? head_in : c.mlp_hidden, 1);
  }
  return s;
}

}  // namespace

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kFull:
      return "full";
    case Variant::kNoAttention:
      return "no_attention";
    case Variant::kNoBiLstm:
      return "no_bilstm";
  }
  return "full";
}

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::kFull;
  if (name == "no_attention") return Variant::kNoAttention;
  if (name == "no_bilstm") return Variant::kNoBiLstm;
  throw UsageError("unknown model variant '" + name + "' (full, no_attention, no_bilstm)");
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw UsageError("model config: " + what);
  };
  require(input_dim == dataset::kNumFeatures, "input_dim must be 5");
  require(lstm_hidden > 0, "lstm_hidden must be positive");
  require(lstm_layers >= 1, "lstm_layers must be at least 1");
  require(attn_heads > 0 && attn_dim > 0 && attn_dim % attn_heads == 0, "attn_dim must be divisible by attn_heads");
  require(mlp_hidden > 0, "mlp_hidden must be positive");
  require(N_max > 0, "N_max must be positive");
  require(T > 0, "T must be positive");
  require(error_scale_m > 0.0, "error_scale_m must be positive");
}

// ---------------------------------------------------------------------------

Tensor& ModelParams::at(const std::string& name) {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) throw UsageError("model params: no parameter '" + name + "'");
  return it->second;
}

const Tensor& ModelParams::at(const std::string& name) const {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) throw UsageError("model params: no parameter '" + name + "'");
  return it->second;
}

void ModelParams::insert(const std::string& name, Tensor t) {
  if (!tensors_.emplace(name, std::move(t)).second) throw UsageError("model params: duplicate parameter '" + name + "'");
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.size();
  return n;
}

void ModelParams::check_finite() const {
  for (const auto& [name, t] : tensors_) {
    for (double v : t.data()) {
      if (!std::isfinite(v)) throw NumericError("parameter '" + name + "' holds a non-finite value");
    }
  }
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ModelParams params;
  for (const auto& [name, spec] : parameter_shapes(config)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
    std::vector<double> data(spec.rows * spec.cols);
    for (double& v : data) v = static_cast<float>(rng.uniform(-bound, bound));
    const bool lstm_bias = name.starts_with("encoder.") ? name.ends_with(".bias")
                                                        : (name == "bilstm.forward.bias" || name == "bilstm.backward.bias");
    if (lstm_bias) {
      const std::size_t H = config.lstm_hidden;
      for (std::size_t k = H; k < 2 * H; ++k) data[k] = static_cast<float>(data[k] + 1.0);
    }
    params.insert(name, Tensor({spec.rows, spec.cols}, std::move(data)));
  }
  return params;
}

Bindings bind_constants(Tape& tape, const ModelParams& params) {
  Bindings b;
  for (const auto& [name, t] : params.tensors()) b[name] = tape.constant(t);
  return b;
}

Bindings bind_trainable(Tape& tape, ModelParams& params) {
  Bindings b;
  for (auto& [name, t] : params.tensors()) b[name] = tape.param(t);
  return b;
}

Bindings bind_into(Tape& tape, const ModelParams& params, std::map<std::string, std::vector<double>>& grads) {
  Bindings b;
  for (const auto& [name, t] : params.tensors()) {
    auto& g = grads[name];
    if (g.size() != t.size()) g.assign(t.size(), 0.0);
    b[name] = tape.leaf(t, g);
  }
  return b;
}

// ---------------------------------------------------------------------------

EncoderOutput lstm_encode(Tape& tape, const Bindings& p, const ModelConfig& config, const std::vector<Var>& steps) {
  if (steps.size() != config.T) {
    throw UsageError("lstm_encode: window has " + std::to_string(steps.size()) + " steps, model expects T=" +
                     std::to_string(config.T));
  }
  const std::size_t H = config.lstm_hidden;
  const std::size_t n = tape.shape(steps.front())[0];
  std::vector<Var> inputs = steps;
  Var h, c;
  for (std::size_t l = 0; l < config.lstm_layers; ++l) {
    const LstmWeights w = lstm_weights(p, "encoder.layer" + std::to_string(l));
    h = zeros(tape, n, H);
    c = zeros(tape, n, H);
    std::vector<Var> outputs;
    for (Var x : inputs) {
      const Var x_proj = tape.add(tape.matmul(x, w.w_input), w.bias);
      std::tie(h, c) = lstm_step(tape, w, x_proj, h, c, H);
      outputs.push_back(h);
    }
    inputs = std::move(outputs);
  }
  return {inputs, h, c};
}

Projections qkv_project(Tape& tape, const Bindings& p, const ModelConfig& config, Var h_final) {
  const Var shared = linear(tape, p, "shared_fc", h_final);
  const Var query = config.stop_gradient_query ? tape.detach(shared) : shared;
  return {query, shared, shared};
}

AttentionOutput multi_head_attention(Tape& tape, const Bindings& p, const ModelConfig& config,
                                     const Projections& qkv, const std::vector<std::uint8_t>& context_mask) {
  const std::size_t n = tape.shape(qkv.k)[0];
  const std::size_t m = tape.shape(qkv.q)[0];
  if (context_mask.size() != n) throw UsageError("multi_head_attention: context mask size mismatch");
  const std::size_t heads = config.attn_heads;
  const std::size_t dh = config.head_dim();
  const Var q = tape.matmul(qkv.q, get(p, "attention.w_query"));
  const Var k = tape.matmul(qkv.k, get(p, "attention.w_key"));
  const Var v = tape.matmul(qkv.v, get(p, "attention.w_value"));

  std::vector<std::uint8_t> mask(m * n);
  for (std::size_t i = 0; i < m; ++i) std::copy(context_mask.begin(), context_mask.end(), mask.begin() + i * n);

  AttentionOutput out;
  out.weights.assign(m * heads * n, 0.0);
  std::vector<Var> head_outputs;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t h = 0; h < heads; ++h) {
    const Var qh = tape.slice(q, 1, h * dh, (h + 1) * dh);
    const Var kh = tape.slice(k, 1, h * dh, (h + 1) * dh);
    const Var vh = tape.slice(v, 1, h * dh, (h + 1) * dh);
    const Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), scale);
    const Var w = tape.masked_softmax(scores, 1, mask);
    const auto wv = tape.value(w);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out.weights[(i * heads + h) * n + j] = wv[i * n + j];
    head_outputs.push_back(tape.matmul(w, vh));
  }
  out.attended = linear(tape, p, "attention.out", tape.concat(head_outputs, 1));
  return out;
}

Var bilstm_head(Tape& tape, const Bindings& p, const ModelConfig& config, Var sequence, Var target_h, Var target_c) {
  const std::size_t H = config.lstm_hidden;
  const std::size_t len = tape.shape(sequence)[0];
  const std::vector<Var> state_parts = {target_h, target_c};
  const Var init = linear(tape, p, "bilstm.init", tape.concat(state_parts, 1));
  const Var h0 = tape.slice(init, 1, 0, H);
  const Var c0 = tape.slice(init, 1, H, 2 * H);

  auto run = [&](const std::string& prefix, bool reverse) {
    const LstmWeights w = lstm_weights(p, prefix);
    // Input projection is shared by every target; only the recurrence is batched.
    const Var x_proj = tape.add(tape.matmul(sequence, w.w_input), w.bias);
    Var h = h0, c = c0;
    for (std::size_t s = 0; s < len; ++s) {
      const std::size_t j = reverse ? len - 1 - s : s;
      std::tie(h, c) = lstm_step(tape, w, tape.slice(x_proj, 0, j, j + 1), h, c, H);
    }
    return h;
  };
  const Var fwd = run("bilstm.forward", false);
  if (config.variant == Variant::kNoBiLstm) return fwd;
  const Var bwd = run("bilstm.backward", true);
  const std::vector<Var> parts = {fwd, bwd};
  return tape.concat(parts, 1);
}

GraphOutput build_graph(Tape& tape, const Bindings& p, const ModelConfig& config, const FeatureWindow& window) {
  if (window.T != config.T || window.N_max != config.N_max) {
    throw UsageError("network: window shape [N_max=" + std::to_string(window.N_max) + ", T=" +
                     std::to_string(window.T) + "] does not match model [N_max=" + std::to_string(config.N_max) +
                     ", T=" + std::to_string(config.T) + "]");
  }
  GraphOutput out;
  for (std::size_t s = 0; s < window.N_max; ++s)
    if (window.sat_mask[s]) out.slots.push_back(s);
  const std::size_t n = out.slots.size();
  if (n == 0) throw UsageError("network: window has no valid satellite slots");

  std::vector<Var> steps;
  for (std::size_t t = 0; t < window.T; ++t) {
    std::vector<double> x(n * config.input_dim);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t f = 0; f < config.input_dim; ++f) x[r * config.input_dim + f] = window.at(out.slots[r], t, f);
    steps.push_back(tape.constant({n, config.input_dim}, std::move(x)));
  }
  const EncoderOutput enc = lstm_encode(tape, p, config, steps);
  const Projections qkv = qkv_project(tape, p, config, enc.h_final);

  Var sequence;
  if (config.variant == Variant::kNoAttention) {
    // Every position sees the mean of the context features.
    const Var mean_row = tape.scale(tape.matmul(tape.constant({1, n}, std::vector<double>(n, 1.0)), qkv.k),
                                    1.0 / static_cast<double>(n));
    sequence = tape.matmul(tape.constant({n, 1}, std::vector<double>(n, 1.0)), mean_row);
  } else {
    AttentionOutput att = multi_head_attention(tape, p, config, qkv, std::vector<std::uint8_t>(n, 1));
    sequence = att.attended;
    out.attention = std::move(att.weights);
  }
  const Var context = bilstm_head(tape, p, config, sequence, enc.h_final, enc.c_final);
  const std::vector<Var> parts = {context, enc.h_final};
  const Var features = tape.concat(parts, 1);
  out.probability = tape.sigmoid(mlp(tape, p, config, "classifier", features));
  out.error_scaled = mlp(tape, p, config, "regressor", features);
  return out;
}

ModelOutput forward(const FeatureWindow& window, const ModelParams& params, const ModelConfig& config) {
  Tape tape;
  const Bindings b = bind_constants(tape, params);
  const GraphOutput g = build_graph(tape, b, config, window);
  ModelOutput out;
  const std::size_t N = config.N_max, heads = config.attn_heads, n = g.slots.size();
  out.visibility_prob.assign(N, 0.0);
  out.error_pred_m.assign(N, 0.0);
  out.valid.assign(N, 0);
  out.attention_weights.assign(N * heads * N, 0.0);
  const auto prob = tape.value(g.probability);
  const auto err = tape.value(g.error_scaled);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t s = g.slots[r];
    out.valid[s] = 1;
    out.visibility_prob[s] = prob[r];
    out.error_pred_m[s] = err[r] * config.error_scale_m;
    if (!g.attention.empty()) {
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t c = 0; c < n; ++c)
          out.attention_weights[(s * heads + h) * N + g.slots[c]] = g.attention[(r * heads + h) * n + c];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'N', 'L', 'O', 'S', 'C', 'K', 'P', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const std::string& in, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"input_dim", c.input_dim},   {"lstm_hidden", c.lstm_hidden},
          {"lstm_layers", c.lstm_layers}, {"attn_heads", c.attn_heads},
          {"attn_dim", c.attn_dim},     {"mlp_hidden", c.mlp_hidden},
          {"mlp_layers", c.mlp_layers}, {"N_max", c.N_max},
          {"T", c.T},                   {"variant", variant_name(c.variant)},
          {"stop_gradient_query", c.stop_gradient_query}, {"error_scale_m", c.error_scale_m}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
  c.lstm_layers = j.at("lstm_layers").get<std::size_t>();
  c.attn_heads = j.at("attn_heads").get<std::size_t>();
  c.attn_dim = j.at("attn_dim").get<std::size_t>();
  c.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
  c.mlp_layers = j.at("mlp_layers").get<std::size_t>();
  c.N_max = j.at("N_max").get<std::size_t>();
  c.T = j.at("T").get<std::size_t>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.stop_gradient_query = j.at("stop_gradient_query").get<bool>();
  c.error_scale_m = j.at("error_scale_m").get<double>();
  return c;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  nlohmann::json header;
  header["config"] = config_to_json(ck.config);
  header["normalizer"] = {{"mean", ck.normalizer.mean}, {"stddev", ck.normalizer.stddev}};
  nlohmann::json index = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : ck.params.tensors()) {
    index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.size()}});
    offset += t.size();
  }
  header["params"] = index;
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u64(out, header_text.size());
  out += header_text;
  for (const auto& [name, t] : ck.params.tensors()) {
    for (double v : t.data()) {
      const auto f = static_cast<float>(v);
      if (static_cast<double>(f) != v && std::isfinite(v)) {
        throw NumericError("checkpoint: parameter '" + name + "' is not representable in 32 bits");
      }
      put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
  }
  put_u64(out, io::fnv1a64(out));
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& source) {
  auto fail = [&source](const std::string& what) -> DataError { return DataError(source + ": " + what); };
  constexpr std::size_t kPrefix = sizeof kMagic + 4 + 8;
  if (bytes.size() < kPrefix + 8) throw fail("checkpoint truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw fail("not a checkpoint file");
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 8, 4));
  if (version != kCheckpointVersion) {
    throw fail("checkpoint format version " + std::to_string(version) + " unsupported (expected " +
               std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t stored = get_le(bytes, bytes.size() - 8, 8);
  if (io::fnv1a64(std::string_view(bytes).substr(0, bytes.size() - 8)) != stored) {
    throw fail("checkpoint checksum mismatch (corrupted or truncated)");
  }
  const std::uint64_t header_len = get_le(bytes, 12, 8);
  if (header_len > bytes.size() - kPrefix - 8) throw fail("checkpoint header length out of range");

  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(kPrefix, header_len));
    ck.config = config_from_json(header.at("config"));
    ck.config.validate();
    const auto& norm = header.at("normalizer");
    ck.normalizer.mean = norm.at("mean").get<std::array<double, dataset::kNumFeatures>>();
    ck.normalizer.stddev = norm.at("stddev").get<std::array<double, dataset::kNumFeatures>>();
    const std::size_t blob_start = kPrefix + header_len;
    const std::size_t blob_floats = (bytes.size() - 8 - blob_start) / 4;
    if ((bytes.size() - 8 - blob_start) % 4 != 0) throw fail("checkpoint blob size is not a multiple of 4");
    const auto expected = parameter_shapes(ck.config);
    std::size_t seen = 0;
    for (const auto& entry : header.at("params")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<tensor::Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto count = entry.at("count").get<std::size_t>();
      const auto it = expected.find(name);
      if (it == expected.end() || shape != tensor::Shape{it->second.rows, it->second.cols} ||
          count != tensor::numel(shape)) {
        throw fail("checkpoint parameter '" + name + "' does not match its config");
      }
      if (offset + count > blob_floats) throw fail("checkpoint parameter '" + name + "' exceeds the blob");
      std::vector<double> data(count);
      for (std::size_t k = 0; k < count; ++k) {
        const auto bits = static_cast<std::uint32_t>(get_le(bytes, blob_start + 4 * (offset + k), 4));
        data[k] = static_cast<double>(std::bit_cast<float>(bits));
      }
      ck.params.insert(name, Tensor(shape, std::move(data)));
      ++seen;
    }
    if (seen != expected.size()) throw fail("checkpoint is missing parameters for its config");
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("checkpoint header invalid: ") + e.what());
  }
  ck.params.check_finite();
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<Variant> expected_variant) {
  Checkpoint ck = deserialize_checkpoint(io::read_file(path), path.string());
  if (expected_variant && *expected_variant != ck.config.variant) {
    throw UsageError(path.string() + ": checkpoint variant '" + variant_name(ck.config.variant) +
                     "' does not match requested variant '" + variant_name(*expected_variant) + "'");
  }
  return ck;
}

}  // namespace nlos::network
