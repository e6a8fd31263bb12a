// Command-line front end. Talks to the library only through the C API.

#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nlos/nlos.h"

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::string seed;
  std::string manifest;
};

struct Command {
  std::string name;
  std::string help;
  CLI::App* app = nullptr;
  Common common;
  std::map<std::string, std::string> paths;  // flag -> value
  std::map<std::string, bool> switches;
  std::string preset;
};

struct Failure {
  int code;
};

void check(nlos_status s) {
  if (s != NLOS_OK) {
    std::fprintf(stderr, "error: %s\n", nlos_last_error());
    throw Failure{static_cast<int>(s)};
  }
}

void add_path(Command& c, const std::string& flag, const std::string& help) {
  c.paths[flag];
  c.app->add_option("--" + flag, c.paths[flag], help);
}

void add_switch(Command& c, const std::string& flag, const std::string& help) {
  c.switches[flag] = false;
  c.app->add_flag("--" + flag, c.switches[flag], help);
}

int execute(const Command& c) {
  using ConfigPtr = std::unique_ptr<nlos_config, decltype(&nlos_config_free)>;
  nlos_config* raw = nullptr;
  check(nlos_config_new(&raw));
  ConfigPtr config(raw, &nlos_config_free);
  if (!c.common.config_file.empty()) check(nlos_config_load_file(config.get(), c.common.config_file.c_str()));
  for (const auto& s : c.common.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set '%s': expected key=value\n", s.c_str());
      return NLOS_ERR_USAGE;
    }
    check(nlos_config_set(config.get(), s.substr(0, eq).c_str(), s.substr(eq + 1).c_str()));
  }
  if (!c.preset.empty()) check(nlos_config_set(config.get(), "preset", c.preset.c_str()));
  if (!c.common.seed.empty()) check(nlos_config_set(config.get(), "seed", c.common.seed.c_str()));

  std::vector<std::string> keys, values;
  for (const auto& [k, v] : c.paths) {
    if (v.empty()) continue;
    keys.push_back(k);
    values.push_back(v);
  }
  for (const auto& [k, on] : c.switches) {
    keys.push_back(k);
    values.push_back(on ? "true" : "false");
  }
  if (!c.common.manifest.empty()) {
    keys.push_back("manifest");
    values.push_back(c.common.manifest);
  }
  std::vector<const char*> kp, vp;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    kp.push_back(keys[i].c_str());
    vp.push_back(values[i].c_str());
  }

  using ResultPtr = std::unique_ptr<nlos_result, decltype(&nlos_result_free)>;
  nlos_result* res = nullptr;
  check(nlos_command_run(c.name.c_str(), config.get(), kp.data(), vp.data(), kp.size(), &res));
  ResultPtr result(res, &nlos_result_free);
  check(nlos_result_commit(result.get()));
  std::fputs(nlos_result_text(result.get()), stdout);
  for (std::size_t i = 0; i < nlos_result_output_count(result.get()); ++i)
    std::printf("Wrote %s\n", nlos_result_output_path(result.get(), i));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NLOS detection and pseudorange error prediction for GNSS."};
  app.set_version_flag("--version", nlos_version());
  app.require_subcommand(1);

  const std::map<std::string, std::string> help = {
      {"gen-data", "Generate a synthetic labeled dataset and its per-scene sky masks"},
      {"label", "Label observations with a sky mask and a residual threshold"},
      {"train", "Train a model and write its checkpoint and training report"},
      {"eval", "Evaluate a model: Precision/Recall/F1-Score/Acc per class"},
      {"predict", "Write per-observation LOS probabilities and error predictions"},
      {"importance", "Permutation feature importance of a model"},
      {"ablate", "Train and compare the full model and its ablated variants"},
      {"exclude", "Position with and without model-flagged NLOS satellites"},
      {"report", "Markdown report of a dataset and optionally a model"},
  };

  std::vector<std::unique_ptr<Command>> commands;
  for (std::size_t i = 0; i < nlos_command_count(); ++i) {
    auto c = std::make_unique<Command>();
    c->name = nlos_command_name(i);
    c->app = app.add_subcommand(c->name, help.at(c->name));
    c->app->add_option("--config", c->common.config_file, "Key-value configuration file")->check(CLI::ExistingFile);
    c->app->add_option("--set", c->common.sets, "Override a configuration key (key=value); flags win over the file")
        ->take_all();
    c->app->add_option("--seed", c->common.seed, "Run seed; every random stream derives from it");
    c->app->add_option("--manifest", c->common.manifest, "Manifest path (default: <out>.manifest.json)");
    const std::string& n = c->name;
    if (n == "gen-data") {
      add_path(*c, "out", "Dataset CSV to write (default: data.csv)");
      add_path(*c, "masks", "Per-scene sky-mask CSV to write (default: <out>.masks.csv)");
      c->app->add_option("--preset", c->preset, "Scenario preset: standard, ac-like, hk-like, open-sky, blocked");
    } else if (n == "label") {
      add_path(*c, "data", "Dataset CSV to label (default: data.csv)");
      add_path(*c, "mask", "Sky-mask CSV, static or per scene (default: <data>.masks.csv)");
      add_path(*c, "out", "Labeled dataset CSV (default: labeled.csv)");
    } else if (n == "train") {
      add_path(*c, "data", "Labeled dataset CSV (default: data.csv)");
      add_path(*c, "out", "Checkpoint to write (default: model.ckpt)");
      add_path(*c, "report", "Per-epoch training CSV (default: <out>.train.csv)");
    } else if (n == "eval" || n == "predict" || n == "importance") {
      add_path(*c, "model", "Checkpoint (default: model.ckpt)");
      add_path(*c, "data", "Dataset CSV (default: data.csv)");
      add_path(*c, "out", n == "eval"      ? "Metrics CSV (default: eval.csv)"
                          : n == "predict" ? "Predictions CSV (default: predictions.csv)"
                                           : "Importance CSV (default: importance.csv)");
      if (n == "importance") add_path(*c, "svg", "Importance bar chart (default: <out>.svg)");
      add_switch(*c, "init", "Use a freshly initialized model instead of --model");
    } else if (n == "ablate") {
      add_path(*c, "data", "Labeled dataset CSV (default: data.csv)");
      add_path(*c, "test", "Optional labeled test dataset; the validation split is used otherwise");
      add_path(*c, "out", "Ablation CSV (default: ablation.csv)");
      add_path(*c, "svg", "NLOS F1 bar chart (default: <out>.svg)");
    } else if (n == "exclude") {
      add_path(*c, "model", "Checkpoint (default: model.ckpt)");
      add_path(*c, "data", "Dataset CSV (default: data.csv)");
      add_path(*c, "out", "Per-epoch CSV (default: exclusion.csv)");
      add_path(*c, "svg", "Trajectory overlay (default: <out>.svg)");
      add_switch(*c, "oracle", "Flag satellites from the dataset labels instead of a model");
    } else if (n == "report") {
      add_path(*c, "data", "Dataset CSV (default: data.csv)");
      add_path(*c, "model", "Optional checkpoint to evaluate");
      add_path(*c, "out", "Markdown report (default: report.md)");
      add_path(*c, "svg", "Importance chart (default: <out>.importance.svg)");
    }
    commands.push_back(std::move(c));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : NLOS_ERR_USAGE;
  }

  try {
    for (const auto& c : commands)
      if (c->app->parsed()) return execute(*c);
  } catch (const Failure& f) {
    return f.code;
  }
  return NLOS_ERR_USAGE;
}
