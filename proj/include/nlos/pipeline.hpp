#pragma once

// Command orchestration shared by the C API and the CLI. Every command reads
// its inputs, stages all outputs plus one manifest, and publishes them only
// after everything succeeded.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nlos/config.hpp"
#include "nlos/dataset.hpp"
#include "nlos/io.hpp"

namespace nlos::pipeline {

inline constexpr const char* kToolVersion = "1.0.0";

struct FileRecord {
  std::string path;
  std::string hash;  // FNV-1a 64 of the file bytes, hex
};

struct RunManifest {
  std::string command;
  std::string tool_version = kToolVersion;
  std::string config_hash;
  std::string dataset_hash;  // input dataset bytes, or the generated dataset for gen-data
  std::uint64_t seed = 0;
  std::vector<FileRecord> inputs;
  std::vector<FileRecord> artifacts;
  std::string config;  // effective configuration dump

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

/// Command names in CLI order.
const std::vector<std::string>& commands();

/// Flag name -> value. Path keys: data, model, mask, test, out, masks, report,
/// svg, manifest. Boolean keys ("init", "oracle") hold "true" or "false".
using Args = std::map<std::string, std::string>;

struct CommandResult {
  std::string text;  // human-readable tables
  io::StagedOutputs outputs;
  RunManifest manifest;
};

/// Runs a command without touching the filesystem except for reading inputs.
/// Missing inputs and unknown commands are usage errors.
CommandResult run(const std::string& command, const config::RunConfig& config, const Args& args);

/// Per-scene masks keyed by the first epoch index they apply to. A plain
/// two-column mask file yields a single entry at epoch 0.
using MaskSet = std::map<std::size_t, dataset::SkyMask>;
std::string mask_set_to_csv(const MaskSet& masks);
MaskSet read_mask_set(const std::string& text, const std::string& source = "<memory>");
/// Mask in force at `epoch_index`: the entry with the largest key not above it.
const dataset::SkyMask& mask_at(const MaskSet& masks, std::size_t epoch_index);

/// Dataset details table: satellites per epoch, class ratios, error and C/N0.
std::string format_balance_table(const dataset::ClassBalance& balance, const std::string& name);

}  // namespace nlos::pipeline
