#include "nlos/config.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <sstream>

#include "nlos/error.hpp"
#include "nlos/io.hpp"

namespace nlos::config {
namespace {

double to_double(const std::string& key, const std::string& v) {
  try {
    return io::parse_double(v, key);
  } catch (const DataError&) {
    throw UsageError("config " + key + ": expected a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    return io::parse_int(v, key);
  } catch (const DataError&) {
    throw UsageError("config " + key + ": expected an integer, got '" + v + "'");
  }
}

std::size_t to_size(const std::string& key, const std::string& v) {
  const long long n = to_int(key, v);
  if (n < 0) throw UsageError("config " + key + ": must not be negative");
  return static_cast<std::size_t>(n);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto t = io::trim(v);
  if (t.empty() || t.size() > 20 || !std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw UsageError("config " + key + ": expected an unsigned integer, got '" + v + "'");
  }
  for (char c : t) {
    const std::uint64_t d = static_cast<std::uint64_t>(c - '0');
    if (out > (UINT64_MAX - d) / 10) throw UsageError("config " + key + ": value out of range");
    out = out * 10 + d;
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("config " + key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  if (io::trim(v).empty()) return out;
  for (auto f : io::split(v, ',')) out.emplace_back(io::trim(f));
  return out;
}

std::string str(double v) { return io::format_double(v); }
std::string str(std::size_t v) { return std::to_string(v); }
std::string str(bool v) { return v ? "true" : "false"; }

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define NLOS_DOUBLE(KEY, MEMBER)                                                                          \
  Field {                                                                                                 \
    KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = to_double(KEY, v); },                        \
        [](const RunConfig& c) { return str(static_cast<double>(c.MEMBER)); }                             \
  }
#define NLOS_SIZE(KEY, MEMBER)                                                                            \
  Field {                                                                                                 \
    KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = to_size(KEY, v); },                          \
        [](const RunConfig& c) { return str(static_cast<std::size_t>(c.MEMBER)); }                        \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f = {
        {"preset", [](RunConfig& c, const std::string& v) { c.preset = v; },
         [](const RunConfig& c) { return c.preset; }},
        {"seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64("seed", v); },
         [](const RunConfig& c) { return std::to_string(c.seed); }},
        {"threshold", [](RunConfig& c, const std::string& v) { c.threshold = to_double("threshold", v); },
         [](const RunConfig& c) { return str(c.threshold); }},
        NLOS_SIZE("window.T", scenario.T_window),
        NLOS_SIZE("window.N_max", scenario.N_max),

        NLOS_DOUBLE("scenario.duration_s", scenario.duration_s),
        NLOS_DOUBLE("scenario.epoch_rate_hz", scenario.epoch_rate_hz),
        {"scenario.n_satellites",
         [](RunConfig& c, const std::string& v) {
           c.scenario.n_satellites = static_cast<int>(to_size("scenario.n_satellites", v));
         },
         [](const RunConfig& c) { return std::to_string(c.scenario.n_satellites); }},
        NLOS_DOUBLE("scenario.elevation_cutoff_deg", scenario.elevation_cutoff_deg),
        NLOS_DOUBLE("scenario.max_elevation_deg", scenario.max_elevation_deg),
        NLOS_DOUBLE("scenario.origin_lat_deg", scenario.origin_lat_deg),
        NLOS_DOUBLE("scenario.origin_lon_deg", scenario.origin_lon_deg),
        NLOS_DOUBLE("scenario.origin_height_m", scenario.origin_height_m),
        NLOS_DOUBLE("scenario.segment_duration_s", scenario.segment_duration_s),
        NLOS_DOUBLE("scenario.speed_min_mps", scenario.speed_min_mps),
        NLOS_DOUBLE("scenario.speed_max_mps", scenario.speed_max_mps),
        NLOS_DOUBLE("scenario.wall_elevation_min_deg", scenario.wall_elevation_min_deg),
        NLOS_DOUBLE("scenario.wall_elevation_max_deg", scenario.wall_elevation_max_deg),
        NLOS_DOUBLE("scenario.canyon_half_width_min_deg", scenario.canyon_half_width_min_deg),
        NLOS_DOUBLE("scenario.canyon_half_width_max_deg", scenario.canyon_half_width_max_deg),
        NLOS_DOUBLE("scenario.open_elevation_deg", scenario.open_elevation_deg),
        NLOS_DOUBLE("scenario.open_scene_fraction", scenario.open_scene_fraction),
        NLOS_DOUBLE("scenario.sat_az_drift_deg_per_s", scenario.sat_az_drift_deg_per_s),
        NLOS_DOUBLE("scenario.sat_el_drift_deg_per_s", scenario.sat_el_drift_deg_per_s),
        NLOS_DOUBLE("scenario.nlos_bias_min_m", scenario.nlos_bias_min_m),
        NLOS_DOUBLE("scenario.nlos_bias_max_m", scenario.nlos_bias_max_m),
        NLOS_DOUBLE("scenario.nlos_cn0_penalty_db", scenario.nlos_cn0_penalty_db),
        NLOS_DOUBLE("scenario.cn0_horizon_db", scenario.cn0_horizon_db),
        NLOS_DOUBLE("scenario.cn0_zenith_db", scenario.cn0_zenith_db),
        NLOS_DOUBLE("scenario.cn0_jitter_db", scenario.cn0_jitter_db),
        NLOS_DOUBLE("scenario.noise_sigma_los_m", scenario.noise_sigma_los_m),
        NLOS_DOUBLE("scenario.noise_sigma_nlos_m", scenario.noise_sigma_nlos_m),
        NLOS_DOUBLE("scenario.clock_bias_initial_m", scenario.clock_bias_initial_m),
        NLOS_DOUBLE("scenario.clock_drift_mps", scenario.clock_drift_mps),

        NLOS_DOUBLE("label.residual_threshold_m", scenario.label_residual_threshold_m),
        {"label.residual_source",
         [](RunConfig& c, const std::string& v) {
           try {
             c.residual_source = dataset::parse_residual_source(v);
           } catch (const Error& e) {
             throw UsageError(std::string("config label.residual_source: ") + e.what());
           }
         },
         [](const RunConfig& c) { return std::string(dataset::residual_source_name(c.residual_source)); }},

        NLOS_SIZE("model.lstm_hidden", model.lstm_hidden),
        NLOS_SIZE("model.lstm_layers", model.lstm_layers),
        NLOS_SIZE("model.attn_heads", model.attn_heads),
        NLOS_SIZE("model.attn_dim", model.attn_dim),
        NLOS_SIZE("model.mlp_hidden", model.mlp_hidden),
        NLOS_SIZE("model.mlp_layers", model.mlp_layers),
        {"model.variant",
         [](RunConfig& c, const std::string& v) {
           try {
             c.model.variant = network::parse_variant(v);
           } catch (const Error& e) {
             throw UsageError(std::string("config model.variant: ") + e.what());
           }
         },
         [](const RunConfig& c) { return std::string(network::variant_name(c.model.variant)); }},
        {"model.stop_gradient_query",
         [](RunConfig& c, const std::string& v) {
           c.model.stop_gradient_query = to_bool("model.stop_gradient_query", v);
         },
         [](const RunConfig& c) { return str(c.model.stop_gradient_query); }},
        NLOS_DOUBLE("model.error_scale_m", model.error_scale_m),

        NLOS_SIZE("train.batch_size", train.batch_size),
        NLOS_SIZE("train.epochs", train.epochs),
        NLOS_DOUBLE("train.base_lr", train.base_lr),
        {"train.lr_milestones",
         [](RunConfig& c, const std::string& v) {
           c.train.lr_milestones.clear();
           for (const auto& m : to_list(v)) c.train.lr_milestones.push_back(to_size("train.lr_milestones", m));
         },
         [](const RunConfig& c) {
           std::string out;
           for (std::size_t m : c.train.lr_milestones) out += (out.empty() ? "" : ",") + std::to_string(m);
           return out;
         }},
        NLOS_DOUBLE("train.lr_gamma", train.lr_gamma),
        NLOS_DOUBLE("train.loss_weight_lambda", train.loss_weight_lambda),
        NLOS_DOUBLE("train.adam_beta1", train.adam_beta1),
        NLOS_DOUBLE("train.adam_beta2", train.adam_beta2),
        NLOS_DOUBLE("train.adam_eps", train.adam_eps),
        NLOS_DOUBLE("train.train_fraction", train.train_fraction),
        NLOS_DOUBLE("train.grad_clip_norm", train.grad_clip_norm),
        NLOS_DOUBLE("train.nlos_class_weight", train.nlos_class_weight),

        NLOS_SIZE("importance.repeats", importance_repeats),
        {"ablation.variants",
         [](RunConfig& c, const std::string& v) {
           c.ablation_variants.clear();
           for (const auto& name : to_list(v)) {
             try {
               c.ablation_variants.push_back(network::parse_variant(name));
             } catch (const Error& e) {
               throw UsageError(std::string("config ablation.variants: ") + e.what());
             }
           }
         },
         [](const RunConfig& c) {
           std::string out;
           for (auto v : c.ablation_variants) out += (out.empty() ? "" : ",") + std::string(network::variant_name(v));
           return out;
         }},
    };
    std::sort(f.begin(), f.end(), [](const Field& a, const Field& b) { return a.key < b.key; });
    return f;
  }();
  return table;
}

#undef NLOS_DOUBLE
#undef NLOS_SIZE

const Field& field(const std::string& key) {
  const auto& f = fields();
  const auto it = std::lower_bound(f.begin(), f.end(), key, [](const Field& a, const std::string& k) { return a.key < k; });
  if (it == f.end() || it->key != key) throw UsageError("config: unknown key '" + key + "'");
  return *it;
}

}  // namespace

void RunConfig::validate() const {
  scenario.validate();
  model.validate();
  train.validate();
  if (model.T != scenario.T_window || model.N_max != scenario.N_max) {
    throw UsageError("config: model window shape differs from the scenario window shape");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw UsageError("config threshold: must lie in (0, 1)");
  if (importance_repeats == 0) throw UsageError("config importance.repeats: must be at least 1");
  if (ablation_variants.empty()) throw UsageError("config ablation.variants: must name at least one variant");
  if (std::set<network::Variant>(ablation_variants.begin(), ablation_variants.end()).size() !=
      ablation_variants.size()) {
    throw UsageError("config ablation.variants: duplicate variant");
  }
}

Assignments parse_text(const std::string& text, const std::string& source) {
  Assignments out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = io::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const std::string ctx = source + " line " + std::to_string(line_no);
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw UsageError(ctx + ": expected 'key = value'");
    std::string key(io::trim(t.substr(0, eq)));
    std::string value(io::trim(t.substr(eq + 1)));
    if (key.empty()) throw UsageError(ctx + ": empty key");
    if (!seen.insert(key).second) throw UsageError(ctx + ": duplicate key '" + key + "'");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

Assignments parse_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error& e) {
    throw UsageError(std::string("config file: ") + e.what());
  }
  return parse_text(text, path.string());
}

std::pair<std::string, std::string> parse_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw UsageError("override '" + assignment + "': expected key=value");
  std::string key(io::trim(std::string_view(assignment).substr(0, eq)));
  std::string value(io::trim(std::string_view(assignment).substr(eq + 1)));
  if (key.empty()) throw UsageError("override '" + assignment + "': empty key");
  return {std::move(key), std::move(value)};
}

RunConfig build(const Assignments& file, const Assignments& overrides, bool validate) {
  std::map<std::string, std::string> merged;
  std::vector<std::string> order;
  for (const auto* src : {&file, &overrides}) {
    for (const auto& [k, v] : *src) {
      field(k);  // reject unknown keys early
      if (!merged.count(k)) order.push_back(k);
      merged[k] = v;
    }
  }
  RunConfig c;
  if (const auto it = merged.find("preset"); it != merged.end()) {
    try {
      c.scenario = dataset::scenario_preset(it->second);
    } catch (const Error& e) {
      throw UsageError(std::string("config preset: ") + e.what());
    }
    c.preset = it->second;
  }
  // Window keys first so that later keys see the final shape.
  for (const char* k : {"window.T", "window.N_max"}) {
    if (const auto it = merged.find(k); it != merged.end()) field(k).set(c, it->second);
  }
  for (const auto& k : order) {
    if (k == "preset" || k == "window.T" || k == "window.N_max") continue;
    field(k).set(c, merged.at(k));
  }
  c.model.T = c.scenario.T_window;
  c.model.N_max = c.scenario.N_max;
  c.scenario.rng_seed = c.seed;
  c.train.rng_seed = derive_seed(c.seed, "train");
  if (validate) c.validate();
  return c;
}

std::string dump(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

std::uint64_t hash(const RunConfig& config) { return io::fnv1a64(dump(config)); }

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& purpose) {
  return io::fnv1a64(purpose + ":" + std::to_string(seed));
}

}  // namespace nlos::config
