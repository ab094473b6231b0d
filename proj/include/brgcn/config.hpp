#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "brgcn/evalkit.hpp"
#include "brgcn/hetgraph.hpp"
#include "brgcn/training.hpp"

namespace brgcn {

// Experiment configuration: flat `key = value` lines, `#` starts a comment.
// Resolution order is built-in defaults, then the preset named by `preset`
// (looked up for the chosen `model`), then file values, then overrides.
struct ExperimentConfig {
  TrainConfig train;
  std::string preset;

  std::filesystem::path graph;
  TripleFormat format = TripleFormat::Tsv;
  std::filesystem::path labels;
  std::filesystem::path train_nodes, valid_nodes, test_nodes;
  double train_fraction = 0.6;
  double valid_fraction = 0.2;
  std::filesystem::path train_triples, valid_triples, test_triples;

  std::filesystem::path output_dir = "out";
  std::filesystem::path checkpoint;
  /// Seeds to run; empty means the single seed `train.seed`.
  std::vector<std::uint64_t> seeds;
  /// Link prediction: also train free embeddings and report the β-ensemble.
  bool ensemble = false;

  std::vector<AblationStrategy> ablation_strategies{AblationStrategy::Random, AblationStrategy::TopAttention,
                                                    AblationStrategy::BottomAttention};
  std::vector<double> ablation_fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
};

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

struct ConfigResult {
  std::optional<ExperimentConfig> config;
  std::vector<std::string> errors;

  bool ok() const { return config.has_value(); }
};

/// Splits text into key/value entries. Malformed lines are reported in
/// `errors` as "line N: ...".
ConfigEntries parse_config_text(const std::string& text, std::vector<std::string>& errors);

/// Applies entries over the defaults and validates the result. Every problem
/// is reported, each message starting with the offending key.
ConfigResult resolve_config(const ConfigEntries& file_entries, const ConfigEntries& overrides = {});

/// Reads and resolves a config file; an empty path means "no file".
ConfigResult validate_config(const std::filesystem::path& path, const ConfigEntries& overrides = {});

/// Every key with its resolved value, in a fixed order; feeding this back to
/// resolve_config reproduces the same config.
std::string to_config_text(const ExperimentConfig& config);

/// Per-dataset settings for a model variant. Returns nullopt when no preset
/// exists for that pair.
std::optional<ConfigEntries> preset_entries(const std::string& dataset, LayerMode mode);

std::vector<std::string> config_keys();

}  // namespace brgcn
