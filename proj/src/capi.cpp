#include <algorithm>
#include <exception>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "nlos/config.hpp"
#include "nlos/error.hpp"
#include "nlos/metrics.hpp"
#include "nlos/nlos.h"
#include "nlos/pipeline.hpp"

struct nlos_config {
  nlos::config::Assignments file;
  nlos::config::Assignments overrides;
  std::string scratch;  // backing store for returned strings
};

struct nlos_dataset {
  std::vector<nlos::dataset::Epoch> epochs;
};

struct nlos_model {
  nlos::network::Checkpoint checkpoint;
};

struct nlos_result {
  nlos::pipeline::CommandResult result;
  std::string manifest;
  std::vector<std::string> paths;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
nlos_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return NLOS_OK;
  } catch (const nlos::Error& e) {
    g_last_error = e.what();
    return static_cast<nlos_status>(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return NLOS_ERR_INTERNAL;
}

void require(bool ok, const char* what) {
  if (!ok) throw nlos::UsageError(what);
}

nlos::config::RunConfig effective(const nlos_config* c, bool validate = true) {
  return nlos::config::build(c->file, c->overrides, validate);
}

}  // namespace

extern "C" {

const char* nlos_version(void) { return nlos::pipeline::kToolVersion; }

const char* nlos_last_error(void) { return g_last_error.c_str(); }

nlos_status nlos_config_new(nlos_config** out) {
  return guarded([&] {
    require(out != nullptr, "nlos_config_new: null output");
    *out = new nlos_config();
  });
}

void nlos_config_free(nlos_config* config) { delete config; }

nlos_status nlos_config_load_file(nlos_config* config, const char* path) {
  return guarded([&] {
    require(config != nullptr && path != nullptr, "nlos_config_load_file: null argument");
    auto file = nlos::config::parse_file(path);
    nlos::config::build(file, config->overrides, false);
    config->file = std::move(file);
  });
}

nlos_status nlos_config_set(nlos_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config != nullptr && key != nullptr && value != nullptr, "nlos_config_set: null argument");
    auto overrides = config->overrides;
    overrides.emplace_back(key, value);
    nlos::config::build(config->file, overrides, false);
    config->overrides = std::move(overrides);
  });
}

nlos_status nlos_config_get(nlos_config* config, const char* key, const char** value) {
  return guarded([&] {
    require(config != nullptr && key != nullptr && value != nullptr, "nlos_config_get: null argument");
    const std::string dump = nlos::config::dump(effective(config, false));
    const std::string prefix = std::string(key) + " = ";
    std::size_t pos = 0;
    while (pos < dump.size()) {
      const std::size_t end = dump.find('\n', pos);
      if (dump.compare(pos, prefix.size(), prefix) == 0) {
        config->scratch = dump.substr(pos + prefix.size(), end - pos - prefix.size());
        *value = config->scratch.c_str();
        return;
      }
      pos = end + 1;
    }
    throw nlos::UsageError(std::string("config: unknown key '") + key + "'");
  });
}

nlos_status nlos_config_dump(nlos_config* config, const char** text) {
  return guarded([&] {
    require(config != nullptr && text != nullptr, "nlos_config_dump: null argument");
    config->scratch = nlos::config::dump(effective(config));
    *text = config->scratch.c_str();
  });
}

nlos_status nlos_config_hash(nlos_config* config, uint64_t* hash) {
  return guarded([&] {
    require(config != nullptr && hash != nullptr, "nlos_config_hash: null argument");
    *hash = nlos::config::hash(effective(config));
  });
}

size_t nlos_config_key_count(void) { return nlos::config::known_keys().size(); }

const char* nlos_config_key(size_t index) {
  static const std::vector<std::string> keys = nlos::config::known_keys();
  return index < keys.size() ? keys[index].c_str() : nullptr;
}

nlos_status nlos_dataset_generate(const nlos_config* config, nlos_dataset** out) {
  return guarded([&] {
    require(config != nullptr && out != nullptr, "nlos_dataset_generate: null argument");
    auto ds = std::make_unique<nlos_dataset>();
    ds->epochs = nlos::dataset::generate_scenario(effective(config).scenario).epochs;
    *out = ds.release();
  });
}

nlos_status nlos_dataset_read(const char* path, nlos_dataset** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "nlos_dataset_read: null argument");
    auto ds = std::make_unique<nlos_dataset>();
    ds->epochs = nlos::dataset::read_csv(path);
    *out = ds.release();
  });
}

nlos_status nlos_dataset_write(const nlos_dataset* dataset, const char* path) {
  return guarded([&] {
    require(dataset != nullptr && path != nullptr, "nlos_dataset_write: null argument");
    nlos::dataset::write_csv(dataset->epochs, path);
  });
}

void nlos_dataset_free(nlos_dataset* dataset) { delete dataset; }

size_t nlos_dataset_epoch_count(const nlos_dataset* dataset) { return dataset ? dataset->epochs.size() : 0; }

size_t nlos_dataset_observation_count(const nlos_dataset* dataset) {
  if (!dataset) return 0;
  std::size_t n = 0;
  for (const auto& e : dataset->epochs) n += e.observations.size();
  return n;
}

nlos_status nlos_dataset_nlos_percent(const nlos_dataset* dataset, double* percent) {
  return guarded([&] {
    require(dataset != nullptr && percent != nullptr, "nlos_dataset_nlos_percent: null argument");
    const auto b = nlos::dataset::class_balance(dataset->epochs);
    if (b.observations == 0) throw nlos::DataError("dataset has no labeled observations");
    *percent = b.r_nlos_percent;
  });
}

nlos_status nlos_model_load(const char* path, nlos_model** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "nlos_model_load: null argument");
    auto m = std::make_unique<nlos_model>();
    m->checkpoint = nlos::network::load_checkpoint(path);
    *out = m.release();
  });
}

void nlos_model_free(nlos_model* model) { delete model; }

size_t nlos_model_parameter_count(const nlos_model* model) {
  return model ? model->checkpoint.params.parameter_count() : 0;
}

void nlos_model_shape(const nlos_model* model, size_t* T, size_t* n_max) {
  if (T) *T = model ? model->checkpoint.config.T : 0;
  if (n_max) *n_max = model ? model->checkpoint.config.N_max : 0;
}

nlos_status nlos_model_predict(const nlos_model* model, const nlos_dataset* dataset, double* probs, size_t capacity,
                               size_t* count) {
  return guarded([&] {
    require(model != nullptr && dataset != nullptr && count != nullptr, "nlos_model_predict: null argument");
    const auto& ck = model->checkpoint;
    auto epochs = dataset->epochs;
    nlos::dataset::solve_epochs(epochs);
    auto windows = nlos::dataset::build_windows(epochs, ck.config.T, ck.config.N_max);
    nlos::dataset::apply_normalizer(windows, ck.normalizer);
    const auto pred = nlos::metrics::predict(windows, ck.params, ck.config);
    std::vector<double> out;
    for (std::size_t i = 0; i < pred.probs.size(); ++i)
      if (pred.mask[i]) out.push_back(pred.probs[i]);
    *count = out.size();
    if (probs == nullptr) return;
    if (capacity < out.size()) throw nlos::UsageError("nlos_model_predict: buffer too small");
    std::copy(out.begin(), out.end(), probs);
  });
}

size_t nlos_command_count(void) { return nlos::pipeline::commands().size(); }

const char* nlos_command_name(size_t index) {
  const auto& c = nlos::pipeline::commands();
  return index < c.size() ? c[index].c_str() : nullptr;
}

nlos_status nlos_command_run(const char* command, const nlos_config* config, const char* const* keys,
                             const char* const* values, size_t n_args, nlos_result** out) {
  return guarded([&] {
    require(command != nullptr && config != nullptr && out != nullptr, "nlos_command_run: null argument");
    require(n_args == 0 || (keys != nullptr && values != nullptr), "nlos_command_run: null argument arrays");
    nlos::pipeline::Args args;
    for (std::size_t i = 0; i < n_args; ++i) {
      require(keys[i] != nullptr && values[i] != nullptr, "nlos_command_run: null argument entry");
      args[keys[i]] = values[i];
    }
    auto r = std::make_unique<nlos_result>();
    r->result = nlos::pipeline::run(command, effective(config), args);
    r->manifest = r->result.manifest.to_json();
    for (const auto& [path, content] : r->result.outputs.files()) r->paths.push_back(path.string());
    *out = r.release();
  });
}

const char* nlos_result_text(const nlos_result* result) { return result ? result->result.text.c_str() : ""; }

const char* nlos_result_manifest(const nlos_result* result) { return result ? result->manifest.c_str() : ""; }

size_t nlos_result_output_count(const nlos_result* result) { return result ? result->paths.size() : 0; }

const char* nlos_result_output_path(const nlos_result* result, size_t index) {
  return result && index < result->paths.size() ? result->paths[index].c_str() : nullptr;
}

nlos_status nlos_result_commit(nlos_result* result) {
  return guarded([&] {
    require(result != nullptr, "nlos_result_commit: null result");
    result->result.outputs.commit();
  });
}

void nlos_result_free(nlos_result* result) { delete result; }

}  // extern "C"
