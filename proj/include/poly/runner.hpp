#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "poly/clf.hpp"
#include "poly/config.hpp"
#include "poly/corpus.hpp"
#include "poly/metrics.hpp"

namespace poly {

inline constexpr int kRunSchemaVersion = 1;

struct LanguageMetrics {
  std::string lang;
  metrics::MetricSet metrics;

  friend bool operator==(const LanguageMetrics&, const LanguageMetrics&) = default;
};

struct RunRecord {
  int schema_version = kRunSchemaVersion;
  ExperimentConfig config;
  /// sha256 over the config snapshot, the corpus bytes and the toolkit version.
  std::string fingerprint;
  std::vector<LanguageMetrics> validation;  // config.languages order
  std::optional<std::vector<LanguageMetrics>> test;
  clf::TrainingTrace trace;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> prediction_files;  // relative to the run directory

  const metrics::MetricSet* validation_for(const std::string& lang) const;
  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct FoldResult {
  int fold_index = 0;  // 1..k
  std::vector<LanguageMetrics> per_language;
  clf::TrainingTrace trace;

  friend bool operator==(const FoldResult&, const FoldResult&) = default;
};

struct LanguageSummary {
  std::string lang;
  std::optional<metrics::MeanStd> accuracy;
  std::optional<metrics::MeanStd> f1;
  std::optional<metrics::MeanStd> auc;
};

struct CrossValResult {
  std::string backbone_name;
  int k = 0;
  std::vector<FoldResult> folds;
  std::vector<LanguageSummary> summary;
  std::filesystem::path dir;
};

struct RunHooks {
  /// fold is 0 for run_experiment, 1..k for cross-validation folds.
  std::function<void(int fold, int epoch, std::span<const Post* const> batch)> on_batch;
};

struct ExperimentOutcome {
  RunRecord record;
  std::filesystem::path dir;
};

/// Split by source id, fine-tune one joint model on the training posts of
/// every configured language, evaluate each language's validation posts on
/// their own, then persist the run directory:
///   config.snapshot, run.json, predictions/<lang>.csv, model/
/// A `.partial` marker stays behind if the run aborts.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const RunHooks& hooks = {});

/// Trains a fresh model on every fold but `fold_index` (0-based) and scores
/// the held-out fold per language.
FoldResult run_fold(const Corpus& corpus, const FoldPartition& folds, int fold_index,
                    const ExperimentConfig& cfg, const RunHooks& hooks = {});

/// k-fold cross-validation over the training share of the split, persisted
/// to <outputs>/<hash>-<time>-cv/ with folds/<i>/ subdirectories.
CrossValResult run_crossval(const ExperimentConfig& cfg, int k, const RunHooks& hooks = {});

std::vector<LanguageSummary> summarize_folds(const std::vector<FoldResult>& folds);

/// Atomic write of run.json into `dir`.
void persist_run(const RunRecord& r, const std::filesystem::path& dir);

/// Throws Io when no record exists, SchemaVersionMismatch, or CorruptRecord.
RunRecord load_run(const std::filesystem::path& dir);

CrossValResult load_crossval(const std::filesystem::path& dir);

std::string run_to_json(const RunRecord& r);
RunRecord run_from_json(std::string_view text);

/// `id,p_positive,pred_label,gold` rows.
std::string format_predictions(const std::vector<clf::PredictionRecord>& preds,
                               const std::vector<int>& gold);

}  // namespace poly
