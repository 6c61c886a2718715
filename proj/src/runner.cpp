#include "poly/runner.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "poly/common.hpp"
#include "poly/csv.hpp"
#include "poly/error.hpp"

namespace poly {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kToolkitVersion = "poly 1.0.0";

// ---- json helpers ----

json value_json(const metrics::Value& v) { return v ? json(*v) : json(nullptr); }

metrics::Value value_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json metric_json(const metrics::MetricSet& m) {
  return json{{"n", m.n},
              {"accuracy", value_json(m.accuracy)},
              {"precision", value_json(m.precision)},
              {"recall", value_json(m.recall)},
              {"f1", value_json(m.f1)},
              {"auc", value_json(m.auc)},
              {"confusion",
               {{"tp", m.confusion.tp}, {"fp", m.confusion.fp}, {"fn", m.confusion.fn}, {"tn", m.confusion.tn}}}};
}

metrics::MetricSet metric_from(const json& j) {
  metrics::MetricSet m;
  m.n = j.at("n");
  m.accuracy = value_from(j.at("accuracy"));
  m.precision = value_from(j.at("precision"));
  m.recall = value_from(j.at("recall"));
  m.f1 = value_from(j.at("f1"));
  m.auc = value_from(j.at("auc"));
  const auto& c = j.at("confusion");
  m.confusion = {c.at("tp"), c.at("fp"), c.at("fn"), c.at("tn")};
  return m;
}

json lang_metrics_json(const std::vector<LanguageMetrics>& v) {
  json out = json::array();
  for (const auto& lm : v) out.push_back({{"lang", lm.lang}, {"metrics", metric_json(lm.metrics)}});
  return out;
}

std::vector<LanguageMetrics> lang_metrics_from(const json& j) {
  std::vector<LanguageMetrics> out;
  for (const auto& e : j) out.push_back({e.at("lang"), metric_from(e.at("metrics"))});
  return out;
}

json config_json(const ExperimentConfig& cfg) {
  json out = json::object();
  for (const auto& line : split(format_config(cfg), '\n')) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    out[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return out;
}

ExperimentConfig config_from(const json& j) {
  std::string text;
  for (const auto& [k, v] : j.items()) text += fmt::format("{} = {}\n", k, v.get<std::string>());
  return parse_config(text);
}

json fold_json(const FoldResult& f) {
  return json{{"fold_index", f.fold_index},
              {"per_language", lang_metrics_json(f.per_language)},
              {"trace", f.trace}};
}

FoldResult fold_from(const json& j) {
  return {j.at("fold_index"), lang_metrics_from(j.at("per_language")),
          j.at("trace").get<clf::TrainingTrace>()};
}

json mean_std_json(const std::optional<metrics::MeanStd>& m) {
  if (!m) return nullptr;
  return json{{"mean", m->mean}, {"std", value_json(m->std)}};
}

std::optional<metrics::MeanStd> mean_std_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return metrics::MeanStd{j.at("mean"), value_from(j.at("std"))};
}

// ---- run plumbing ----

Corpus load_for(const ExperimentConfig& cfg, const fs::path& path) {
  LoadOptions opts;
  opts.languages.insert(cfg.languages.begin(), cfg.languages.end());
  return load_corpus(path, opts);
}

void require_languages(const Corpus& c, const std::vector<std::string>& langs) {
  for (const auto& l : langs) {
    if (!c.languages.contains(l)) {
      throw Error(Errc::MissingLanguage, fmt::format("corpus {} has no '{}' posts", c.provenance, l));
    }
  }
}

std::set<std::string> lang_set(const ExperimentConfig& cfg) {
  return {cfg.languages.begin(), cfg.languages.end()};
}

clf::BatchObserver observer_for(const RunHooks& hooks, int fold) {
  if (!hooks.on_batch) return {};
  return [&hooks, fold](int epoch, std::span<const Post* const> batch) {
    hooks.on_batch(fold, epoch, batch);
  };
}

/// Per-language metrics on the posts of `ids`; writes predictions when
/// `pred_dir` is set. Languages without posts are skipped.
std::vector<LanguageMetrics> evaluate_languages(const clf::Classifier& model, const Corpus& corpus,
                                                const std::set<std::string>& ids,
                                                const std::vector<std::string>& langs,
                                                const std::optional<fs::path>& pred_dir,
                                                std::vector<std::string>* written = nullptr,
                                                const fs::path& rel_base = {}) {
  std::vector<LanguageMetrics> out;
  for (const auto& lang : langs) {
    const auto view = select_posts(corpus, ids, {lang});
    if (view.empty()) continue;
    const auto preds = model.predict_proba(view);
    std::vector<int> hard, gold;
    std::vector<double> scores;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      hard.push_back(preds[i].pred_label);
      scores.push_back(preds[i].p_positive);
      gold.push_back(*view[i].label);
    }
    out.push_back({lang, metrics::evaluate(hard, scores, gold)});
    if (pred_dir) {
      const auto file = *pred_dir / (lang + ".csv");
      write_file_atomic(file, format_predictions(preds, gold));
      if (written) written->push_back(fs::relative(file, rel_base).string());
    }
  }
  return out;
}

fs::path fresh_run_dir(const ExperimentConfig& cfg, std::string_view suffix) {
  std::string stamp = utc_timestamp();
  std::erase_if(stamp, [](char c) { return c == ':' || c == '-'; });
  const std::string base = fmt::format("{}-{}{}", config_hash(cfg), stamp, suffix);
  fs::path dir = cfg.outputs / base;
  for (int i = 2; fs::exists(dir); ++i) dir = cfg.outputs / fmt::format("{}-{}", base, i);
  fs::create_directories(dir);
  return dir;
}

/// Marks a directory as incomplete until dismissed.
class PartialRunMarker {
 public:
  explicit PartialRunMarker(fs::path dir) : path_(std::move(dir) / ".partial") {
    write_file_atomic(path_, "running\n");
  }
  void fail(std::string_view why) { write_file_atomic(path_, fmt::format("aborted: {}\n", why)); }
  void dismiss() { fs::remove(path_); }

 private:
  fs::path path_;
};

}  // namespace

const metrics::MetricSet* RunRecord::validation_for(const std::string& lang) const {
  for (const auto& lm : validation) {
    if (lm.lang == lang) return &lm.metrics;
  }
  return nullptr;
}

std::string format_predictions(const std::vector<clf::PredictionRecord>& preds,
                               const std::vector<int>& gold) {
  std::string out = "id,p_positive,pred_label,gold\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    out += csv::join_row({preds[i].id, format_exact(preds[i].p_positive),
                          std::to_string(preds[i].pred_label),
                          i < gold.size() ? std::to_string(gold[i]) : std::string{}});
  }
  return out;
}

ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const RunHooks& hooks) {
  ExperimentOutcome outcome;
  RunRecord& rec = outcome.record;
  rec.config = cfg;
  rec.started_at = utc_timestamp();

  const Corpus corpus = load_for(cfg, cfg.corpus_path);
  require_languages(corpus, cfg.languages);

  outcome.dir = fresh_run_dir(cfg, "");
  const fs::path& dir = outcome.dir;
  PartialRunMarker marker(dir);
  try {
    const std::string snapshot = format_config(cfg);
    write_file_atomic(dir / "config.snapshot", snapshot);
    rec.fingerprint = sha256_hex(fmt::format("{}\n{}\n{}", kToolkitVersion, snapshot,
                                             sha256_hex(read_file(cfg.corpus_path))));

    const auto split = split_corpus(corpus, cfg.split_ratio, cfg.split_seed);
    const auto langs = lang_set(cfg);
    const auto train = select_posts(corpus, split.train_ids, langs);
    const auto val = select_posts(corpus, split.val_ids, langs);

    auto model = clf::build_classifier(cfg.backbone, cfg.finetune);
    rec.trace = model.fine_tune(train, val, cfg.finetune, observer_for(hooks, 0));

    rec.validation = evaluate_languages(model, corpus, split.val_ids, cfg.languages,
                                        dir / "predictions", &rec.prediction_files, dir);
    if (cfg.test_corpus_path) {
      const Corpus test = load_for(cfg, *cfg.test_corpus_path);
      rec.test = evaluate_languages(model, test, source_ids(test), cfg.languages,
                                    dir / "predictions" / "test", &rec.prediction_files, dir);
    }
    clf::export_model(model, dir / "model");
    rec.finished_at = utc_timestamp();
    persist_run(rec, dir);
  } catch (const std::exception& e) {
    marker.fail(e.what());
    throw;
  }
  marker.dismiss();
  return outcome;
}

FoldResult run_fold(const Corpus& corpus, const FoldPartition& folds, int fold_index,
                    const ExperimentConfig& cfg, const RunHooks& hooks) {
  const auto& held_out = folds.folds.at(static_cast<std::size_t>(fold_index));
  std::set<std::string> train_ids;
  for (int i = 0; i < folds.k; ++i) {
    if (i == fold_index) continue;
    const auto& f = folds.folds[static_cast<std::size_t>(i)];
    train_ids.insert(f.begin(), f.end());
  }
  const auto langs = lang_set(cfg);
  const auto train = select_posts(corpus, train_ids, langs);
  const auto val = select_posts(corpus, held_out, langs);

  // fresh weights per fold: no warm start from earlier folds
  auto model = clf::build_classifier(cfg.backbone, cfg.finetune);
  FoldResult result;
  result.fold_index = fold_index + 1;
  result.trace = model.fine_tune(train, val, cfg.finetune, observer_for(hooks, fold_index + 1));
  result.per_language = evaluate_languages(model, corpus, held_out, cfg.languages, std::nullopt);
  return result;
}

std::vector<LanguageSummary> summarize_folds(const std::vector<FoldResult>& folds) {
  std::vector<std::string> order;
  for (const auto& f : folds) {
    for (const auto& lm : f.per_language) {
      if (std::find(order.begin(), order.end(), lm.lang) == order.end()) order.push_back(lm.lang);
    }
  }
  auto summarize = [&](const std::string& lang, metrics::Value metrics::MetricSet::*field)
      -> std::optional<metrics::MeanStd> {
    std::vector<double> values;
    for (const auto& f : folds) {
      for (const auto& lm : f.per_language) {
        if (lm.lang == lang && (lm.metrics.*field)) values.push_back(*(lm.metrics.*field));
      }
    }
    if (values.empty()) return std::nullopt;
    return metrics::mean_and_std(values);
  };
  std::vector<LanguageSummary> out;
  for (const auto& lang : order) {
    out.push_back({lang, summarize(lang, &metrics::MetricSet::accuracy),
                   summarize(lang, &metrics::MetricSet::f1), summarize(lang, &metrics::MetricSet::auc)});
  }
  return out;
}

CrossValResult run_crossval(const ExperimentConfig& cfg, int k, const RunHooks& hooks) {
  const Corpus corpus = load_for(cfg, cfg.corpus_path);
  require_languages(corpus, cfg.languages);
  const auto split = split_corpus(corpus, cfg.split_ratio, cfg.split_seed);
  const auto labels = source_labels(corpus);
  const auto partition = kfold_partition(split.train_ids, k, cfg.split_seed,
                                         cfg.crossval_stratified ? &labels : nullptr);

  CrossValResult result;
  result.backbone_name = cfg.backbone_name;
  result.k = k;
  result.dir = fresh_run_dir(cfg, "-cv");
  PartialRunMarker marker(result.dir);
  try {
    write_file_atomic(result.dir / "config.snapshot", format_config(cfg));
    for (int i = 0; i < k; ++i) {
      auto fold = run_fold(corpus, partition, i, cfg, hooks);
      const auto fold_dir = result.dir / "folds" / std::to_string(fold.fold_index);
      write_file_atomic(fold_dir / "fold.json", fold_json(fold).dump(2) + "\n");
      json ids = json::array();
      for (const auto& id : partition.folds[static_cast<std::size_t>(i)]) ids.push_back(id);
      write_file_atomic(fold_dir / "held_out_ids.json", ids.dump() + "\n");
      result.folds.push_back(std::move(fold));
    }
    result.summary = summarize_folds(result.folds);

    json summary = json::array();
    for (const auto& s : result.summary) {
      summary.push_back({{"lang", s.lang},
                         {"accuracy", mean_std_json(s.accuracy)},
                         {"f1", mean_std_json(s.f1)},
                         {"auc", mean_std_json(s.auc)}});
    }
    json folds = json::array();
    for (const auto& f : result.folds) folds.push_back(fold_json(f));
    const json doc{{"schema_version", kRunSchemaVersion},
                   {"backbone", cfg.backbone_name},
                   {"k", k},
                   {"config", config_json(cfg)},
                   {"folds", folds},
                   {"summary", summary}};
    write_file_atomic(result.dir / "crossval.json", doc.dump(2) + "\n");
  } catch (const std::exception& e) {
    marker.fail(e.what());
    throw;
  }
  marker.dismiss();
  return result;
}

CrossValResult load_crossval(const fs::path& dir) {
  const auto path = dir / "crossval.json";
  if (!fs::is_regular_file(path)) {
    throw Error(Errc::Io, fmt::format("no crossval.json in {}", dir.string()));
  }
  try {
    const auto j = json::parse(read_file(path));
    if (j.at("schema_version").get<int>() != kRunSchemaVersion) {
      throw Error(Errc::SchemaVersionMismatch,
                  fmt::format("crossval schema_version {} (reader is {})",
                              j.at("schema_version").dump(), kRunSchemaVersion));
    }
    CrossValResult r;
    r.backbone_name = j.at("backbone");
    r.k = j.at("k");
    for (const auto& f : j.at("folds")) r.folds.push_back(fold_from(f));
    for (const auto& s : j.at("summary")) {
      r.summary.push_back({s.at("lang"), mean_std_from(s.at("accuracy")), mean_std_from(s.at("f1")),
                           mean_std_from(s.at("auc"))});
    }
    r.dir = dir;
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptRecord, fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::string run_to_json(const RunRecord& r) {
  json doc{{"schema_version", r.schema_version},
           {"config", config_json(r.config)},
           {"fingerprint", r.fingerprint},
           {"validation", lang_metrics_json(r.validation)},
           {"test", r.test ? lang_metrics_json(*r.test) : json(nullptr)},
           {"trace", r.trace},
           {"started_at", r.started_at},
           {"finished_at", r.finished_at},
           {"prediction_files", r.prediction_files}};
  return doc.dump(2) + "\n";
}

RunRecord run_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptRecord, e.what());
  }
  try {
    RunRecord r;
    r.schema_version = j.at("schema_version");
    if (r.schema_version != kRunSchemaVersion) {
      throw Error(Errc::SchemaVersionMismatch, fmt::format("run schema_version {} (reader is {})",
                                                           r.schema_version, kRunSchemaVersion));
    }
    r.config = config_from(j.at("config"));
    r.fingerprint = j.at("fingerprint");
    r.validation = lang_metrics_from(j.at("validation"));
    if (!j.at("test").is_null()) r.test = lang_metrics_from(j.at("test"));
    r.trace = j.at("trace").get<clf::TrainingTrace>();
    r.started_at = j.at("started_at");
    r.finished_at = j.at("finished_at");
    r.prediction_files = j.at("prediction_files").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptRecord, e.what());
  }
}

void persist_run(const RunRecord& r, const fs::path& dir) {
  write_file_atomic(dir / "run.json", run_to_json(r));
}

RunRecord load_run(const fs::path& dir) {
  const auto path = dir / "run.json";
  if (!fs::is_regular_file(path)) throw Error(Errc::Io, fmt::format("no run.json in {}", dir.string()));
  return run_from_json(read_file(path));
}

}  // namespace poly
