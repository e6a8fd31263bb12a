#include "nlos/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "json.hpp"
#include "nlos/error.hpp"
#include "nlos/evaluation.hpp"
#include "nlos/exclusion.hpp"
#include "nlos/metrics.hpp"
#include "nlos/network.hpp"
#include "nlos/training.hpp"

namespace nlos::pipeline {
namespace {

using dataset::Epoch;
using dataset::FeatureWindow;
using Json = nlohmann::json;

std::string hash_hex(const std::string& bytes) { return io::hex64(io::fnv1a64(bytes)); }

// Sibling path with the extension replaced: data.csv + ".masks.csv" -> data.masks.csv.
std::string sibling(const std::string& path, const std::string& suffix) {
  std::filesystem::path p(path);
  p.replace_extension();
  return p.string() + suffix;
}

class Run {
 public:
  Run(std::string command, const config::RunConfig& config, const Args& args)
      : config_(config), args_(args) {
    result_.manifest.command = std::move(command);
    result_.manifest.config_hash = io::hex64(config::hash(config));
    result_.manifest.seed = config.seed;
    result_.manifest.config = config::dump(config);
  }

  std::string arg(const std::string& key, const std::string& fallback) const {
    const auto it = args_.find(key);
    return it == args_.end() || it->second.empty() ? fallback : it->second;
  }
  bool flag(const std::string& key) const {
    const std::string v = arg(key, "false");
    if (v == "true") return true;
    if (v == "false") return false;
    throw UsageError("flag --" + key + ": expected true or false");
  }

  // Reads an input file, recording its hash; the dataset also sets the
  // manifest's dataset hash.
  std::string input(const std::string& path, bool is_dataset = false) {
    if (!std::filesystem::is_regular_file(path)) throw UsageError("input file not found: " + path);
    std::string bytes = io::read_file(path);
    const std::string h = hash_hex(bytes);
    result_.manifest.inputs.push_back({path, h});
    if (is_dataset && result_.manifest.dataset_hash.empty()) result_.manifest.dataset_hash = h;
    return bytes;
  }

  std::vector<Epoch> epochs(const std::string& path) { return dataset::epochs_from_csv(input(path, true), path); }

  network::Checkpoint checkpoint(const std::string& path) { return network::deserialize_checkpoint(input(path), path); }

  void output(const std::string& path, std::string content) {
    for (const auto& a : result_.manifest.artifacts)
      if (a.path == path) throw UsageError("output path used twice: " + path);
    result_.manifest.artifacts.push_back({path, hash_hex(content)});
    result_.outputs.add(path, std::move(content));
  }

  void text(const std::string& s) { result_.text += s; }

  CommandResult finish(const std::string& primary_out) {
    const std::string manifest_path = arg("manifest", primary_out + ".manifest.json");
    const std::string json = result_.manifest.to_json();
    for (const auto& a : result_.manifest.artifacts)
      if (a.path == manifest_path) throw UsageError("manifest path collides with an output: " + manifest_path);
    result_.outputs.add(manifest_path, json);
    return std::move(result_);
  }

  RunManifest& manifest() { return result_.manifest; }
  const config::RunConfig& config() const { return config_; }

 private:
  const config::RunConfig& config_;
  const Args& args_;
  CommandResult result_;
};

// Solved epochs and their windows in the given shape.
std::vector<FeatureWindow> windows_of(std::vector<Epoch>& epochs, std::size_t T, std::size_t n_max) {
  dataset::solve_epochs(epochs);
  auto windows = dataset::build_windows(epochs, T, n_max);
  if (windows.empty()) throw DataError("dataset yields no windows of length " + std::to_string(T));
  return windows;
}

void require_labeled(std::span<const FeatureWindow> windows, const std::string& command) {
  for (const auto& w : windows)
    if (!w.labeled) throw DataError(command + ": dataset has unlabeled observations; run label first");
}

std::string metric_title(const std::string& what, std::size_t windows) {
  return what + " (" + std::to_string(windows) + " windows)";
}

CommandResult gen_data(Run& run) {
  const auto& cfg = run.config();
  const std::string out = run.arg("out", "data.csv");
  const std::string masks_out = run.arg("masks", sibling(out, ".masks.csv"));
  const dataset::Scenario s = dataset::generate_scenario(cfg.scenario);
  std::string csv = dataset::epochs_to_csv(s.epochs);
  run.manifest().dataset_hash = hash_hex(csv);

  MaskSet masks;
  for (std::size_t i = 0; i < s.epochs.size(); ++i) {
    if (i == 0 || s.scene_of_epoch[i] != s.scene_of_epoch[i - 1]) masks.emplace(s.epochs[i].epoch_index, s.mask_for(i));
  }
  run.output(out, std::move(csv));
  run.output(masks_out, mask_set_to_csv(masks));
  run.text(format_balance_table(dataset::class_balance(s.epochs), cfg.preset));
  run.text("Epochs: " + std::to_string(s.epochs.size()) + ", scenes: " + std::to_string(masks.size()) + "\n");
  return run.finish(out);
}

CommandResult label(Run& run) {
  const auto& cfg = run.config();
  const std::string data = run.arg("data", "data.csv");
  const std::string mask_path = run.arg("mask", sibling(data, ".masks.csv"));
  const std::string out = run.arg("out", "labeled.csv");
  std::vector<Epoch> epochs = run.epochs(data);
  const MaskSet masks = read_mask_set(run.input(mask_path), mask_path);

  std::vector<std::optional<dataset::Visibility>> before;
  for (const auto& e : epochs)
    for (const auto& o : e.observations) before.push_back(o.visibility);

  const dataset::MaskLookup lookup = [&](std::size_t pos) -> const dataset::SkyMask& {
    return mask_at(masks, epochs[pos].epoch_index);
  };
  dataset::LabelResult r = dataset::label_observations(epochs, lookup, cfg.scenario.label_residual_threshold_m,
                                                       cfg.residual_source);
  std::size_t compared = 0, agree = 0, k = 0;
  for (const auto& e : r.epochs) {
    for (const auto& o : e.observations) {
      const auto& prior = before[k++];
      if (prior && o.visibility) {
        ++compared;
        agree += *prior == *o.visibility;
      }
    }
  }
  run.output(out, dataset::epochs_to_csv(r.epochs));
  run.text(format_balance_table(dataset::class_balance(r.epochs), "labeled"));
  run.text("Residual source: " + std::string(dataset::residual_source_name(cfg.residual_source)) + ", threshold " +
           io::format_double(cfg.scenario.label_residual_threshold_m) + " m\n");
  run.text("Epochs skipped (fewer than 4 satellites): " + std::to_string(r.skipped_epochs.size()) + "\n");
  if (compared > 0) {
    run.text("Agreement with prior labels: " +
             io::format_fixed(100.0 * static_cast<double>(agree) / static_cast<double>(compared), 2) + "% of " +
             std::to_string(compared) + " observations\n");
  }
  return run.finish(out);
}

CommandResult train(Run& run) {
  const auto& cfg = run.config();
  const std::string data = run.arg("data", "data.csv");
  const std::string out = run.arg("out", "model.ckpt");
  const std::string report_out = run.arg("report", sibling(out, ".train.csv"));
  std::vector<Epoch> epochs = run.epochs(data);
  const auto windows = windows_of(epochs, cfg.model.T, cfg.model.N_max);
  require_labeled(windows, "train");
  const training::FitResult fit =
      training::fit(windows, cfg.model, cfg.train, config::derive_seed(cfg.seed, "init"));
  run.output(out, network::serialize_checkpoint(fit.checkpoint));
  run.output(report_out, fit.report.to_csv());

  const auto& best = fit.report.epochs[fit.report.best_epoch];
  run.text("Windows: " + std::to_string(fit.split.train.size()) + " train, " +
           std::to_string(fit.split.validation.size()) + " validation (split " + io::hex64(fit.split_hash) + ")\n");
  run.text("Best epoch " + std::to_string(fit.report.best_epoch) + ": validation loss " +
           io::format_fixed(best.validation.total, 6) + " (mse " + io::format_fixed(best.validation.mse, 6) +
           ", l1 " + io::format_fixed(best.validation.l1, 6) + ")\n");
  run.text(metrics::format_table(best.validation_metrics, "Validation"));
  return run.finish(out);
}

// Checkpoint from file, or a freshly initialized model with a normalizer fitted
// on the given windows when --init is set.
network::Checkpoint model_for(Run& run, std::vector<Epoch>& epochs, std::vector<FeatureWindow>& windows) {
  const auto& cfg = run.config();
  network::Checkpoint ck;
  if (run.flag("init")) {
    ck.config = cfg.model;
    ck.params = network::init_params(cfg.model, config::derive_seed(cfg.seed, "init"));
    windows = windows_of(epochs, ck.config.T, ck.config.N_max);
    ck.normalizer = dataset::fit_normalizer(windows);
  } else {
    ck = run.checkpoint(run.arg("model", "model.ckpt"));
    windows = windows_of(epochs, ck.config.T, ck.config.N_max);
  }
  dataset::apply_normalizer(windows, ck.normalizer);
  return ck;
}

CommandResult eval(Run& run) {
  const std::string data = run.arg("data", "data.csv");
  const std::string out = run.arg("out", "eval.csv");
  std::vector<Epoch> epochs = run.epochs(data);
  std::vector<FeatureWindow> windows;
  const network::Checkpoint ck = model_for(run, epochs, windows);
  require_labeled(windows, "eval");
  const auto report = metrics::evaluate(metrics::predict(windows, ck.params, ck.config), run.config().threshold);
  run.output(out, metrics::to_csv(report));
  run.text(metrics::format_table(report, metric_title(network::variant_name(ck.config.variant), windows.size())));
  return run.finish(out);
}

CommandResult predict(Run& run) {
  const std::string data = run.arg("data", "data.csv");
  const std::string out = run.arg("out", "predictions.csv");
  std::vector<Epoch> epochs = run.epochs(data);
  std::vector<FeatureWindow> windows;
  const network::Checkpoint ck = model_for(run, epochs, windows);
  const auto pred = metrics::predict(windows, ck.params, ck.config);
  const double thr = run.config().threshold;
  std::string csv = "epoch_index,sat_id,prob_los,predicted,error_pred_m,label_visibility,label_error_m\n";
  std::size_t los = 0, total = 0;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    for (std::size_t s = 0; s < ck.config.N_max; ++s) {
      const std::size_t i = w * ck.config.N_max + s;
      if (!pred.mask[i]) continue;
      const bool is_los = pred.probs[i] >= thr;
      los += is_los;
      ++total;
      csv += std::to_string(epochs[windows[w].final_epoch_pos].epoch_index) + "," +
             std::to_string(windows[w].slot_to_sat_id[s]) + "," + io::format_double(pred.probs[i]) + "," +
             (is_los ? "LOS" : "NLOS") + "," + io::format_double(pred.error_pred_m[i]) + ",";
      if (windows[w].labeled) {
        csv += (pred.labels_visibility[i] >= 0.5 ? "1," : "0,") + io::format_double(pred.labels_error_m[i]);
      } else {
        csv += ",";
      }
      csv += "\n";
    }
  }
  run.output(out, std::move(csv));
  run.text("Predicted " + std::to_string(total) + " observations in " + std::to_string(windows.size()) +
           " windows: " + std::to_string(los) + " LOS, " + std::to_string(total - los) + " NLOS\n");
  return run.finish(out);
}

std::string importance_table(const evaluation::ImportanceReport& r) {
  std::ostringstream t;
  t << "Permutation importance (baseline accuracy " << io::format_fixed(r.baseline_accuracy, 4) << ", " << r.repeats
    << " repeats)\n";
  t << "Feature   | Importance | Std\n";
  for (const auto& e : r.entries) {
    std::string name = e.feature;
    name.resize(std::max<std::size_t>(name.size(), 9), ' ');
    t << name << " | " << io::format_fixed(e.importance, 4) << "     | " << io::format_fixed(e.stddev, 4) << "\n";
  }
  return t.str();
}

CommandResult importance(Run& run) {
  const std::string data = run.arg("data", "data.csv");
  const std::string out = run.arg("out", "importance.csv");
  const std::string svg = run.arg("svg", sibling(out, ".svg"));
  std::vector<Epoch> epochs = run.epochs(data);
  std::vector<FeatureWindow> windows;
  const network::Checkpoint ck = model_for(run, epochs, windows);
  require_labeled(windows, "importance");
  const auto r = evaluation::permutation_importance(ck.params, ck.config, windows, run.config().importance_repeats,
                                                    config::derive_seed(run.config().seed, "importance"));
  run.output(out, r.to_csv());
  run.output(svg, r.to_svg());
  run.text(importance_table(r));
  return run.finish(out);
}

CommandResult ablate(Run& run) {
  const auto& cfg = run.config();
  const std::string data = run.arg("data", "data.csv");
  const std::string out = run.arg("out", "ablation.csv");
  std::vector<Epoch> epochs = run.epochs(data);
  const auto windows = windows_of(epochs, cfg.model.T, cfg.model.N_max);
  require_labeled(windows, "ablate");
  std::vector<FeatureWindow> test;
  if (const std::string test_path = run.arg("test", ""); !test_path.empty()) {
    std::vector<Epoch> test_epochs = dataset::epochs_from_csv(run.input(test_path), test_path);
    test = windows_of(test_epochs, cfg.model.T, cfg.model.N_max);
    require_labeled(test, "ablate");
  }
  const auto r = evaluation::run_ablation(windows, test, cfg.model, cfg.train, config::derive_seed(cfg.seed, "init"),
                                          cfg.ablation_variants);
  run.output(out, r.to_csv());
  std::vector<evaluation::Bar> bars;
  for (const auto& row : r.rows) bars.push_back({network::variant_name(row.variant), row.metrics.nlos.f1, 0.0});
  run.output(run.arg("svg", sibling(out, ".svg")), evaluation::bar_chart_svg("Ablation: NLOS F1-Score", "F1", bars));
  run.text(std::string("Evaluated on ") + (test.empty() ? "the validation split" : "the test dataset") + " (split " +
           io::hex64(r.split_hash) + ")\n");
  run.text(r.format_table());
  return run.finish(out);
}

CommandResult exclude(Run& run) {
  const std::string data = run.arg("data", "data.csv");
  const std::string out = run.arg("out", "exclusion.csv");
  const std::string svg = run.arg("svg", sibling(out, ".svg"));
  std::vector<Epoch> epochs = run.epochs(data);
  exclusion::ExclusionResult r;
  if (run.flag("oracle")) {
    dataset::solve_epochs(epochs);
    r = exclusion::evaluate_exclusion(epochs, exclusion::label_flags(epochs));
  } else {
    const network::Checkpoint ck = run.checkpoint(run.arg("model", "model.ckpt"));
    dataset::solve_epochs(epochs);
    r = exclusion::trajectory_report(epochs, ck, run.config().threshold);
  }
  if (r.epochs.empty()) throw DataError("exclude: no classified epochs with a position solution");
  run.output(out, r.to_csv());
  run.output(svg, exclusion::trajectory_svg(epochs, r));
  run.text(r.summary_text());
  return run.finish(out);
}

CommandResult report(Run& run) {
  const auto& cfg = run.config();
  const std::string data = run.arg("data", "data.csv");
  const std::string out = run.arg("out", "report.md");
  std::vector<Epoch> epochs = run.epochs(data);
  std::ostringstream md;
  md << "# NLOS detection report\n\n## Dataset\n\n```\n"
     << format_balance_table(dataset::class_balance(epochs), data) << "```\n";

  const std::string model_path = run.arg("model", "");
  if (!model_path.empty()) {
    const network::Checkpoint ck = run.checkpoint(model_path);
    std::vector<Epoch> solved = epochs;
    auto windows = windows_of(solved, ck.config.T, ck.config.N_max);
    dataset::apply_normalizer(windows, ck.normalizer);
    const bool labeled = std::all_of(windows.begin(), windows.end(), [](const auto& w) { return w.labeled; });
    md << "\n## Model\n\nVariant " << network::variant_name(ck.config.variant) << ", "
       << ck.params.parameter_count() << " parameters, T = " << ck.config.T << ", N_max = " << ck.config.N_max
       << ".\n";
    if (labeled) {
      const auto m = metrics::evaluate(metrics::predict(windows, ck.params, ck.config), cfg.threshold);
      md << "\n## Classification\n\n```\n" << metrics::format_table(m, metric_title("Metrics", windows.size()))
         << "```\n";
      const auto imp = evaluation::permutation_importance(ck.params, ck.config, windows, cfg.importance_repeats,
                                                          config::derive_seed(cfg.seed, "importance"));
      const std::string svg = run.arg("svg", sibling(out, ".importance.svg"));
      run.output(svg, imp.to_svg());
      md << "\n## Feature importance\n\n```\n" << importance_table(imp) << "```\n\nChart: " << svg << "\n";
    }
    const auto ex = exclusion::trajectory_report(solved, ck, cfg.threshold);
    md << "\n## NLOS exclusion\n\n```\n" << ex.summary_text() << "```\n";
  }
  md << "\n## Configuration\n\n```\n" << config::dump(cfg) << "```\n";
  run.output(out, md.str());
  run.text(md.str());
  return run.finish(out);
}

}  // namespace

std::string RunManifest::to_json() const {
  auto files = [](const std::vector<FileRecord>& v) {
    Json a = Json::array();
    for (const auto& f : v) a.push_back({{"path", f.path}, {"fnv1a64", f.hash}});
    return a;
  };
  Json cfg = Json::object();
  std::istringstream lines(config);
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) cfg[line.substr(0, eq)] = line.substr(eq + 3);
  }
  const Json j = {{"command", command},         {"tool_version", tool_version}, {"config_hash", config_hash},
                  {"dataset_hash", dataset_hash}, {"seed", seed},                 {"inputs", files(inputs)},
                  {"artifacts", files(artifacts)}, {"config", cfg}};
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  try {
    const Json j = Json::parse(text);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.dataset_hash = j.at("dataset_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& f : j.at("inputs")) m.inputs.push_back({f.at("path"), f.at("fnv1a64")});
    for (const auto& f : j.at("artifacts")) m.artifacts.push_back({f.at("path"), f.at("fnv1a64")});
    for (const auto& [k, v] : j.at("config").items()) m.config += k + " = " + v.get<std::string>() + "\n";
    return m;
  } catch (const Json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
}

const std::vector<std::string>& commands() {
  static const std::vector<std::string> names = {"gen-data",   "label",  "train",   "eval",  "predict",
                                                 "importance", "ablate", "exclude", "report"};
  return names;
}

CommandResult run(const std::string& command, const config::RunConfig& config, const Args& args) {
  config.validate();
  Run r(command, config, args);
  if (command == "gen-data") return gen_data(r);
  if (command == "label") return label(r);
  if (command == "train") return train(r);
  if (command == "eval") return eval(r);
  if (command == "predict") return predict(r);
  if (command == "importance") return importance(r);
  if (command == "ablate") return ablate(r);
  if (command == "exclude") return exclude(r);
  if (command == "report") return report(r);
  throw UsageError("unknown command '" + command + "'");
}

std::string mask_set_to_csv(const MaskSet& masks) {
  std::string out = "epoch_index,azimuth_deg,min_open_elevation_deg\n";
  for (const auto& [epoch, mask] : masks)
    for (const auto& s : mask.boundary())
      out += std::to_string(epoch) + "," + io::format_double(s.azimuth_deg) + "," +
             io::format_double(s.min_open_elevation_deg) + "\n";
  return out;
}

MaskSet read_mask_set(const std::string& text, const std::string& source) {
  std::map<std::size_t, std::vector<dataset::SkyMask::Sample>> samples;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0, columns = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = io::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const std::string ctx = source + " line " + std::to_string(line_no);
    const auto fields = io::split(t, ',');
    if (columns == 0) {
      columns = fields.size();
      if (columns != 2 && columns != 3) throw DataError(ctx + ": mask file must have 2 or 3 columns");
      if (io::trim(fields[0]) == "azimuth_deg" || io::trim(fields[0]) == "epoch_index") continue;
    }
    if (fields.size() != columns) throw DataError(ctx + ": expected " + std::to_string(columns) + " columns");
    std::size_t epoch = 0;
    std::size_t off = 0;
    if (columns == 3) {
      const long long e = io::parse_int(fields[0], ctx);
      if (e < 0) throw DataError(ctx + ": negative epoch index");
      epoch = static_cast<std::size_t>(e);
      off = 1;
    }
    samples[epoch].push_back({io::parse_double(fields[off], ctx), io::parse_double(fields[off + 1], ctx)});
  }
  if (samples.empty()) throw DataError(source + ": no mask samples");
  MaskSet out;
  for (auto& [epoch, s] : samples) out.emplace(epoch, dataset::SkyMask(std::move(s)));
  return out;
}

const dataset::SkyMask& mask_at(const MaskSet& masks, std::size_t epoch_index) {
  auto it = masks.upper_bound(epoch_index);
  if (it == masks.begin()) throw DataError("no sky mask in force at epoch " + std::to_string(epoch_index));
  return std::prev(it)->second;
}

std::string format_balance_table(const dataset::ClassBalance& b, const std::string& name) {
  std::ostringstream t;
  t << "Dataset | N_avg sat | N_max sat | R_LOS (%) | R_NLOS (%) | max |error| (m) | C/N0 min/max/avg (dB-Hz)\n";
  t << name << " | " << io::format_fixed(b.n_avg_sat, 2) << " | " << b.n_max_sat << " | ";
  if (b.observations > 0) {
    t << io::format_fixed(b.r_los_percent, 2) << " | " << io::format_fixed(b.r_nlos_percent, 2);
  } else {
    t << "- | -";
  }
  t << " | " << io::format_fixed(b.max_abs_error_m, 2) << " | " << io::format_fixed(b.cn0_min, 1) << "/"
    << io::format_fixed(b.cn0_max, 1) << "/" << io::format_fixed(b.cn0_avg, 1) << "\n";
  return t.str();
}

}  // namespace nlos::pipeline
