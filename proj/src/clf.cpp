#include "poly/clf.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <mutex>

#include <fmt/format.h>

#include "poly/metrics.hpp"
#include "stub_tiny.hpp"

namespace poly::clf {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Family f) {
  return f == Family::EncoderClassifier ? "encoder-classifier" : "encoder-decoder-generative";
}

Family family_from_string(std::string_view s) {
  if (s == "encoder-classifier") return Family::EncoderClassifier;
  if (s == "encoder-decoder-generative") return Family::EncoderDecoderGenerative;
  throw Error(Errc::UnsupportedFamily, fmt::format("unknown backbone family '{}'", s));
}

void FineTuneConfig::validate() const {
  auto bad = [](std::string_view what) { throw Error(Errc::Config, std::string(what)); };
  if (!(learning_rate > 0.0)) bad("learning_rate must be positive");
  if (batch_size <= 0) bad("batch_size must be positive");
  if (epochs < 0) bad("epochs must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) bad("dropout must lie in [0,1)");
  if (!(weight_decay >= 0.0)) bad("weight_decay must be non-negative");
  if (!(warmup_proportion >= 0.0 && warmup_proportion < 1.0)) bad("warmup_proportion must lie in [0,1)");
  if (optimizer != "AdamW") bad("optimizer must be AdamW");
  if (!(threshold >= 0.0 && threshold <= 1.0)) bad("threshold must lie in [0,1]");
}

Preset preset(std::string_view name) {
  auto cfg = [](double lr, int batch, double dropout) {
    FineTuneConfig c;
    c.learning_rate = lr;
    c.batch_size = batch;
    c.epochs = 10;
    c.dropout = dropout;
    c.weight_decay = 0.01;
    c.warmup_proportion = 0.01;
    return c;
  };
  if (name == "mbert") {
    return {{Family::EncoderClassifier, "bert-base-multilingual-cased", 128, 2}, cfg(2e-5, 16, 0.3)};
  }
  if (name == "xlmr") {
    return {{Family::EncoderClassifier, "xlm-roberta-base", 128, 2}, cfg(3e-5, 16, 0.5)};
  }
  if (name == "mt5") {
    return {{Family::EncoderDecoderGenerative, "google/mt5-base", 128, 2}, cfg(3e-5, 32, 0.5)};
  }
  // The stub is a randomly initialized network, so it needs a far larger
  // step size than the pretrained checkpoints.
  if (name == "stub-tiny") {
    return {{Family::EncoderClassifier, "stub-tiny", 128, 2}, cfg(5e-2, 16, 0.1)};
  }
  if (name == "stub-tiny-gen") {
    return {{Family::EncoderDecoderGenerative, "stub-tiny", 128, 2}, cfg(5e-2, 16, 0.1)};
  }
  throw Error(Errc::UnknownCheckpoint, fmt::format("unknown backbone preset '{}'", name));
}

namespace {

std::mutex& registry_mutex() {
  static std::mutex mu;
  return mu;
}

std::map<std::string, BackboneFactory>& registry() {
  static std::map<std::string, BackboneFactory> r{{"stub-tiny", detail::make_stub_tiny}};
  return r;
}

}  // namespace

void register_backbone(const std::string& checkpoint_id, BackboneFactory factory) {
  std::lock_guard lock(registry_mutex());
  registry()[checkpoint_id] = std::move(factory);
}

Classifier build_classifier(const BackboneSpec& spec, const FineTuneConfig& cfg) {
  if (spec.num_labels != 2) {
    if (spec.family == Family::EncoderDecoderGenerative) {
      throw Error(Errc::UnsupportedFamily,
                  fmt::format("label-string scoring needs exactly 2 labels, got {}", spec.num_labels));
    }
    throw Error(Errc::Config, fmt::format("binary task, got num_labels = {}", spec.num_labels));
  }
  cfg.validate();
  BackboneFactory factory;
  {
    std::lock_guard lock(registry_mutex());
    auto it = registry().find(spec.checkpoint_id);
    if (it == registry().end()) {
      throw Error(Errc::UnknownCheckpoint,
                  fmt::format("no runtime registered for checkpoint '{}'", spec.checkpoint_id));
    }
    factory = it->second;
  }
  auto net = factory(spec, cfg);
  net->set_dropout(cfg.dropout);
  return Classifier(spec, cfg, std::move(net));
}

Classifier::Classifier(BackboneSpec spec, FineTuneConfig cfg, std::unique_ptr<Backbone> net)
    : spec_(std::move(spec)), cfg_(std::move(cfg)), net_(std::move(net)) {}

std::vector<PredictionRecord> Classifier::predict_proba(const CorpusView& posts) const {
  std::vector<PredictionRecord> out;
  out.reserve(posts.size());
  for (const Post* p : posts) {
    const double prob = std::clamp(net_->class_probabilities(*p)[1], 0.0, 1.0);
    out.push_back({p->id, p->lang, prob, prob >= cfg_.threshold ? 1 : 0});
  }
  return out;
}

TrainingTrace Classifier::fine_tune(const CorpusView& train, const CorpusView& val,
                                    const FineTuneConfig& cfg, const BatchObserver& observer) {
  cfg.validate();
  for (const auto* view : {&train, &val}) {
    for (const Post* p : *view) {
      if (!p->label) throw Error(Errc::UnlabeledPost, fmt::format("post '{}' has no label", p->id));
    }
  }
  cfg_ = cfg;
  net_->set_dropout(cfg.dropout);

  TrainingTrace trace;
  if (cfg.epochs == 0) return trace;
  if (train.empty()) throw Error(Errc::EmptyInput, "training set is empty");

  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = train.size();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(cfg.epochs);

  std::array<double, 2> class_weight{1.0, 1.0};
  if (cfg.class_weights) {
    std::array<std::size_t, 2> counts{};
    for (const Post* p : train) ++counts[static_cast<std::size_t>(*p->label)];
    for (std::size_t c = 0; c < 2; ++c) {
      if (counts[c] > 0) {
        class_weight[c] = static_cast<double>(n) / (2.0 * static_cast<double>(counts[c]));
      }
    }
  }

  Rng rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<const Post*> order(train.begin(), train.end());
  std::size_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const auto first = b * batch;
      std::span<const Post* const> items(order.data() + first, std::min(batch, n - first));
      ++step;
      const double lr = learning_rate_at(step, total_steps, cfg.learning_rate, cfg.warmup_proportion);
      const double loss = net_->train_step(items, lr, cfg, class_weight, rng);
      if (observer) observer(epoch, items);
      if (!std::isfinite(loss)) {
        trace.wall_time_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        throw NonFiniteLossError(fmt::format("loss is {} at epoch {} step {}", loss, epoch, step),
                                 trace);
      }
      loss_sum += loss * static_cast<double>(items.size());
    }
    EpochStats stats{epoch, loss_sum / static_cast<double>(n), std::nullopt};
    if (!val.empty()) {
      const auto preds = predict_proba(val);
      std::vector<int> hard, gold;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        hard.push_back(preds[i].pred_label);
        gold.push_back(*val[i].label);
      }
      stats.val_f1 = metrics::classification_metrics(hard, gold).f1;
    }
    trace.entries.push_back(stats);
  }
  trace.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

// --- serialization -------------------------------------------------------------

void to_json(json& j, const BackboneSpec& s) {
  j = json{{"family", to_string(s.family)},
           {"checkpoint_id", s.checkpoint_id},
           {"max_sequence_tokens", s.max_sequence_tokens},
           {"num_labels", s.num_labels}};
}

void from_json(const json& j, BackboneSpec& s) {
  s.family = family_from_string(j.at("family").get<std::string>());
  s.checkpoint_id = j.at("checkpoint_id");
  s.max_sequence_tokens = j.at("max_sequence_tokens");
  s.num_labels = j.at("num_labels");
}

void to_json(json& j, const FineTuneConfig& c) {
  j = json{{"learning_rate", c.learning_rate},
           {"batch_size", c.batch_size},
           {"epochs", c.epochs},
           {"dropout", c.dropout},
           {"weight_decay", c.weight_decay},
           {"warmup_proportion", c.warmup_proportion},
           {"optimizer", c.optimizer},
           {"seed", c.seed},
           {"threshold", c.threshold},
           {"class_weights", c.class_weights}};
}

void from_json(const json& j, FineTuneConfig& c) {
  c.learning_rate = j.at("learning_rate");
  c.batch_size = j.at("batch_size");
  c.epochs = j.at("epochs");
  c.dropout = j.at("dropout");
  c.weight_decay = j.at("weight_decay");
  c.warmup_proportion = j.at("warmup_proportion");
  c.optimizer = j.at("optimizer");
  c.seed = j.at("seed");
  c.threshold = j.at("threshold");
  c.class_weights = j.value("class_weights", false);
}

void to_json(json& j, const TrainingTrace& t) {
  json entries = json::array();
  for (const auto& e : t.entries) {
    entries.push_back({{"epoch", e.epoch},
                       {"mean_train_loss", e.mean_train_loss},
                       {"val_f1", e.val_f1 ? json(*e.val_f1) : json(nullptr)}});
  }
  j = json{{"entries", entries}, {"wall_time_seconds", t.wall_time_seconds}};
}

void from_json(const json& j, TrainingTrace& t) {
  t.entries.clear();
  for (const auto& e : j.at("entries")) {
    EpochStats s;
    s.epoch = e.at("epoch");
    s.mean_train_loss = e.at("mean_train_loss");
    if (!e.at("val_f1").is_null()) s.val_f1 = e.at("val_f1").get<double>();
    t.entries.push_back(s);
  }
  t.wall_time_seconds = j.value("wall_time_seconds", 0.0);
}

json export_model(const Classifier& m, const fs::path& dir) {
  fs::create_directories(dir);
  const std::string blob = m.backbone().save();
  write_file_atomic(dir / "weights.bin", blob);
  const json labels{{"0", kNegativeLabelText}, {"1", kPositiveLabelText}};
  write_file_atomic(dir / "labels.json", labels.dump(2) + "\n");
  const json manifest{{"schema_version", kModelSchemaVersion},
                      {"spec", m.spec()},
                      {"config", m.config()},
                      {"weights", {{"file", "weights.bin"}, {"sha256", sha256_hex(blob)},
                                   {"bytes", blob.size()}}},
                      {"labels", {{"file", "labels.json"}, {"sha256", sha256_hex(labels.dump(2) + "\n")}}}};
  // manifest last: its presence marks a complete export
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

Classifier load_model(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::is_regular_file(manifest_path)) {
    throw Error(Errc::CorruptManifest, fmt::format("no manifest.json in {}", dir.string()));
  }
  json manifest;
  BackboneSpec spec;
  FineTuneConfig cfg;
  std::string weights_file, weights_sha, labels_file, labels_sha;
  try {
    manifest = json::parse(read_file(manifest_path));
    if (manifest.at("schema_version").get<int>() != kModelSchemaVersion) {
      throw Error(Errc::CorruptManifest, fmt::format("unsupported model schema_version {}",
                                                     manifest.at("schema_version").dump()));
    }
    spec = manifest.at("spec").get<BackboneSpec>();
    cfg = manifest.at("config").get<FineTuneConfig>();
    weights_file = manifest.at("weights").at("file");
    weights_sha = manifest.at("weights").at("sha256");
    labels_file = manifest.at("labels").at("file");
    labels_sha = manifest.at("labels").at("sha256");
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptManifest, fmt::format("{}: {}", manifest_path.string(), e.what()));
  }
  if (!fs::is_regular_file(dir / weights_file) || !fs::is_regular_file(dir / labels_file)) {
    throw Error(Errc::CorruptManifest, "manifest references missing files");
  }
  const std::string blob = read_file(dir / weights_file);
  if (sha256_hex(blob) != weights_sha) {
    throw Error(Errc::ChecksumMismatch, fmt::format("{} does not match its manifest checksum", weights_file));
  }
  if (sha256_hex(read_file(dir / labels_file)) != labels_sha) {
    throw Error(Errc::ChecksumMismatch, fmt::format("{} does not match its manifest checksum", labels_file));
  }
  Classifier m = build_classifier(spec, cfg);
  m.backbone().load(blob);
  return m;
}

}  // namespace poly::clf
