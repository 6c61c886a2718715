#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "poly/clf.hpp"

namespace poly {

struct ExperimentConfig {
  std::filesystem::path corpus_path;
  std::vector<std::string> languages{"es", "en", "it", "de", "ca", "pt"};
  /// Preset the backbone came from (mbert, xlmr, mt5, stub-tiny, ...); used
  /// for report column headers.
  std::string backbone_name = "stub-tiny";
  clf::BackboneSpec backbone = clf::preset("stub-tiny").spec;
  clf::FineTuneConfig finetune = clf::preset("stub-tiny").config;
  double split_ratio = 0.8;
  std::uint64_t split_seed = 42;
  std::filesystem::path outputs = "runs";
  std::optional<std::filesystem::path> test_corpus_path;
  int crossval_k = 10;
  bool crossval_stratified = false;

  /// Switches backbone and fine-tuning defaults to a named preset.
  void use_preset(std::string_view name);

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Flat `dotted.key = value` document; `#` starts a comment. A `backbone`
/// key applies its preset before any other key, so explicit `finetune.*` and
/// `backbone.*` keys override it wherever they appear.
ExperimentConfig parse_config(std::string_view text);

/// Reads `path`; relative paths inside resolve against the file's directory.
/// Throws Error(Config, "config not found: ...") when the file is missing.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical snapshot: every key, fixed order. parse_config inverts it.
std::string format_config(const ExperimentConfig& cfg);

/// First 12 hex digits of the snapshot's SHA-256.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace poly
