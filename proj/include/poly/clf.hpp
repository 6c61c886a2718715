#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "poly/common.hpp"
#include "poly/corpus.hpp"
#include "poly/error.hpp"

namespace poly::clf {

/// Encoder-classifier models predict from head logits; encoder-decoder models
/// score the two label strings and normalize.
enum class Family { EncoderClassifier, EncoderDecoderGenerative };

std::string_view to_string(Family f);
Family family_from_string(std::string_view s);

struct BackboneSpec {
  Family family = Family::EncoderClassifier;
  std::string checkpoint_id = "stub-tiny";
  int max_sequence_tokens = 128;
  int num_labels = 2;

  friend bool operator==(const BackboneSpec&, const BackboneSpec&) = default;
};

struct FineTuneConfig {
  double learning_rate = 2e-5;
  int batch_size = 16;
  int epochs = 10;
  double dropout = 0.3;
  double weight_decay = 0.01;
  double warmup_proportion = 0.01;
  std::string optimizer = "AdamW";
  std::uint64_t seed = 42;
  double threshold = 0.5;
  /// Balanced inverse-frequency loss weights. Off: plain cross-entropy.
  bool class_weights = false;

  void validate() const;  // throws Error(Config)
  friend bool operator==(const FineTuneConfig&, const FineTuneConfig&) = default;
};

struct Preset {
  BackboneSpec spec;
  FineTuneConfig config;
};

/// "mbert", "xlmr", "mt5" carry the reference fine-tuning hyperparameters;
/// "stub-tiny" and "stub-tiny-gen" are the in-process desk-scale networks.
Preset preset(std::string_view name);

/// Fixed English target strings used by the encoder-decoder pathway.
inline constexpr std::string_view kPositiveLabelText = "suicidal";
inline constexpr std::string_view kNegativeLabelText = "non-suicidal";

/// Linear warmup to `peak` at step ceil(warmup_proportion * total_steps),
/// then linear decay reaching 0 at the final step. Steps are 1-based.
double learning_rate_at(std::size_t step, std::size_t total_steps, double peak,
                        double warmup_proportion);
std::size_t warmup_steps(std::size_t total_steps, double warmup_proportion);

struct EpochStats {
  int epoch = 0;
  double mean_train_loss = 0.0;
  std::optional<double> val_f1;

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct TrainingTrace {
  std::vector<EpochStats> entries;
  double wall_time_seconds = 0.0;  // excluded from equality
  friend bool operator==(const TrainingTrace& a, const TrainingTrace& b) {
    return a.entries == b.entries;
  }
};

struct PredictionRecord {
  std::string id;
  std::string lang;
  double p_positive = 0.0;
  int pred_label = 0;

  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

/// Thrown when a batch loss is NaN or infinite; carries the epochs completed.
class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(const std::string& message, TrainingTrace trace)
      : Error(Errc::NonFiniteLoss, message), trace_(std::move(trace)) {}
  const TrainingTrace& trace() const { return trace_; }

 private:
  TrainingTrace trace_;
};

/// Network runtime behind a Classifier.
class Backbone {
 public:
  virtual ~Backbone() = default;

  virtual void set_dropout(double p) = 0;
  virtual double dropout() const = 0;

  /// Forward and backward over the batch, then one AdamW update at `lr`.
  /// Returns the batch mean loss. `class_weight` is {w_neg, w_pos}.
  virtual double train_step(std::span<const Post* const> batch, double lr,
                            const FineTuneConfig& cfg, std::array<double, 2> class_weight,
                            Rng& rng) = 0;

  /// {p_negative, p_positive}, inference mode.
  virtual std::array<double, 2> class_probabilities(const Post& post) const = 0;

  /// Native weight serialization.
  virtual std::string save() const = 0;
  virtual void load(std::string_view blob) = 0;
};

using BackboneFactory =
    std::function<std::unique_ptr<Backbone>(const BackboneSpec&, const FineTuneConfig&)>;

/// Makes `checkpoint_id` resolvable by build_classifier. "stub-tiny" is
/// registered out of the box.
void register_backbone(const std::string& checkpoint_id, BackboneFactory factory);

/// Called once per optimizer step with the posts in that batch.
using BatchObserver = std::function<void(int epoch, std::span<const Post* const> batch)>;

class Classifier {
 public:
  Classifier(BackboneSpec spec, FineTuneConfig cfg, std::unique_ptr<Backbone> net);

  const BackboneSpec& spec() const { return spec_; }
  const FineTuneConfig& config() const { return cfg_; }
  const Backbone& backbone() const { return *net_; }
  Backbone& backbone() { return *net_; }

  /// Exactly cfg.epochs epochs of shuffled mini-batch AdamW on the
  /// linear warmup/decay schedule. No early stopping.
  TrainingTrace fine_tune(const CorpusView& train, const CorpusView& val,
                          const FineTuneConfig& cfg, const BatchObserver& observer = {});

  std::vector<PredictionRecord> predict_proba(const CorpusView& posts) const;

 private:
  BackboneSpec spec_;
  FineTuneConfig cfg_;
  std::unique_ptr<Backbone> net_;
};

/// Throws UnknownCheckpoint when no runtime is registered for the checkpoint,
/// UnsupportedFamily when the generative pathway is asked for other than two
/// labels.
Classifier build_classifier(const BackboneSpec& spec, const FineTuneConfig& cfg);

inline TrainingTrace fine_tune(Classifier& m, const CorpusView& train, const CorpusView& val,
                               const FineTuneConfig& cfg, const BatchObserver& observer = {}) {
  return m.fine_tune(train, val, cfg, observer);
}

inline std::vector<PredictionRecord> predict_proba(const Classifier& m, const CorpusView& posts) {
  return m.predict_proba(posts);
}

inline constexpr int kModelSchemaVersion = 1;

/// Writes manifest.json, weights.bin and labels.json. Returns the manifest.
nlohmann::json export_model(const Classifier& m, const std::filesystem::path& dir);

/// Throws CorruptManifest or ChecksumMismatch.
Classifier load_model(const std::filesystem::path& dir);

void to_json(nlohmann::json& j, const BackboneSpec& s);
void from_json(const nlohmann::json& j, BackboneSpec& s);
void to_json(nlohmann::json& j, const FineTuneConfig& c);
void from_json(const nlohmann::json& j, FineTuneConfig& c);
void to_json(nlohmann::json& j, const TrainingTrace& t);
void from_json(const nlohmann::json& j, TrainingTrace& t);

}  // namespace poly::clf
