// One PASS/FAIL line per acceptance criterion. Exit status is non-zero if any
// criterion fails. Tolerances and time limits are fixed below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include <fmt/format.h>

#include "fixtures.hpp"
#include "reference_values.hpp"
#include "poly/clf.hpp"
#include "poly/config.hpp"
#include "poly/engine.hpp"
#include "poly/metrics.hpp"
#include "poly/perplexity.hpp"
#include "poly/report.hpp"
#include "poly/runner.hpp"
#include "poly/translate.hpp"

using namespace poly;
namespace fs = std::filesystem;

namespace {

constexpr double kMetricTol = 1e-12;
constexpr double kPerplexityTol = 1e-9;
constexpr double kLearnF1 = 0.95;

const fs::path kTestData = POLY_TEST_DATA;
const fs::path kSourceDir = POLY_SOURCE_DIR;

struct Outcome {
  bool ok;
  std::string detail;
};

int failures = 0;

void criterion(int number, const char* name, double limit_seconds, const std::function<Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, fmt::format("exception: {}", e.what())};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = limit_seconds <= 0 || secs < limit_seconds;
  const bool ok = o.ok && in_time;
  if (!ok) ++failures;
  const std::string limit = limit_seconds > 0 ? fmt::format(" < {:g}s", limit_seconds) : "";
  std::printf("%s [%2d] %s: %s (%.2fs%s)\n", ok ? "PASS" : "FAIL", number, name, o.detail.c_str(), secs,
              limit.c_str());
  std::fflush(stdout);
}

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& g) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (g[i] != 1 || g[j] != 0) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

bool close(const metrics::Value& v, std::optional<double> want) {
  if (v.has_value() != want.has_value()) return false;
  return !want || std::abs(*v - *want) <= kMetricTol;
}

Outcome metric_oracle() {
  Rng rng(20240501);
  int checked_auc = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<int> p, g;
    std::vector<double> s;
    for (std::size_t i = 0; i < n; ++i) {
      p.push_back(static_cast<int>(rng.below(2)));
      g.push_back(static_cast<int>(rng.below(2)));
      s.push_back(static_cast<double>(rng.below(8)) / 7.0);
    }
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      tp += p[i] && g[i];
      fp += p[i] && !g[i];
      fn += !p[i] && g[i];
      tn += !p[i] && !g[i];
    }
    const auto m = metrics::classification_metrics(p, g);
    std::optional<double> prec, rec, f1;
    if (tp + fp > 0) prec = tp / (tp + fp);
    if (tp + fn > 0) rec = tp / (tp + fn);
    if (prec && rec && *prec + *rec > 0) f1 = 2 * *prec * *rec / (*prec + *rec);
    if (!close(m.accuracy, (tp + tn) / n) || !close(m.precision, prec) || !close(m.recall, rec) ||
        !close(m.f1, f1)) {
      return {false, fmt::format("classification_metrics differs on instance {}", trial)};
    }
    const bool both = tp + fn > 0 && fp + tn > 0;
    const auto auc = metrics::roc_auc(s, g);
    if (!close(auc, both ? std::optional<double>(pairwise_auc(s, g)) : std::nullopt)) {
      return {false, fmt::format("roc_auc differs on instance {}", trial)};
    }
    checked_auc += both;
  }
  return {true, fmt::format("200 instances (n <= 12, {} with defined AUC) agree to {:g}", checked_auc, kMetricTol)};
}

Outcome split_reproduction() {
  const auto c = fx::labeled_sources(2068, 498);
  const auto s = split_corpus(c, 0.8, 42);
  const auto labels = source_labels(c);
  std::size_t pos = 0;
  for (const auto& id : s.train_ids) pos += labels.at(id);
  // "24%" is the dataset's positive share, 498/2068
  const double share = 498.0 / 2068.0;
  const double expected = share * static_cast<double>(s.train_ids.size());
  const double dev = std::abs(static_cast<double>(pos) - expected);
  const double dev_flat = std::abs(static_cast<double>(pos) - 0.24 * static_cast<double>(s.train_ids.size()));
  const bool ok = s.train_ids.size() == 1654 && s.val_ids.size() == 414 && dev <= 1.0;
  return {ok, fmt::format("train {} / val {}; train positives {} vs {:.2f} expected at 498/2068 (|d| = {:.2f}; "
                          "vs flat 0.24: |d| = {:.2f})",
                          s.train_ids.size(), s.val_ids.size(), pos, expected, dev, dev_flat)};
}

Outcome fold_arithmetic() {
  std::set<std::string> ids;
  for (int i = 0; i < 1654; ++i) ids.insert(fx::source_name(i));
  const auto a = kfold_partition(ids, 10, 7);
  const auto b = kfold_partition(ids, 10, 7);
  std::map<std::size_t, int> sizes;
  std::set<std::string> seen;
  bool disjoint = true;
  for (const auto& f : a.folds) {
    ++sizes[f.size()];
    for (const auto& id : f) disjoint &= seen.insert(id).second;
  }
  const bool ok = sizes == std::map<std::size_t, int>{{165, 6}, {166, 4}} && disjoint && seen == ids &&
                  a.folds == b.folds;
  return {ok, fmt::format("{} folds of 166, {} of 165; disjoint cover {}; repeatable {}", sizes[166], sizes[165],
                          disjoint && seen == ids, a.folds == b.folds)};
}

Corpus augment(const Corpus& spanish, const fs::path& cache, mt::StubEngine& engine, mt::TranslateStats* st) {
  mt::TranslateOptions opts;
  opts.cache_dir = cache;
  opts.retry.sleep = [](std::chrono::milliseconds) {};
  return mt::translate_corpus(spanish, {"en", "de", "ca", "pt", "it"}, engine, opts, st);
}

Outcome leakage_guard() {
  fx::TempDir dir;
  mt::StubEngine engine;
  engine.set_tagging(true);
  const auto c = augment(fx::labeled_sources(2068, 498), dir / "cache", engine, nullptr);
  int seeds = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto s = split_corpus(c, 0.8, seed * 7919);
    std::set<std::string> train_src, val_src;
    for (const auto* p : select_posts(c, s.train_ids, c.languages)) train_src.insert(p->source_id);
    for (const auto* p : select_posts(c, s.val_ids, c.languages)) {
      if (train_src.contains(p->source_id)) return {false, fmt::format("source {} leaks under seed {}", p->source_id, seed)};
      val_src.insert(p->source_id);
    }
    if (val_src.size() != 414) return {false, "validation share is not 414 sources"};
    ++seeds;
  }
  return {true, fmt::format("{} seeds over {} posts in {} languages: train and validation sources disjoint", seeds,
                            c.size(), c.languages.size())};
}

Outcome augmentation_count() {
  fx::TempDir dir;
  const auto spanish = fx::labeled_sources(2068, 498);
  mt::StubEngine first;
  first.set_tagging(true);
  mt::TranslateStats s1;
  const auto out1 = augment(spanish, dir / "cache", first, &s1);
  std::map<std::string, int> label_of;
  for (const auto& p : spanish.posts) label_of[p.source_id] = *p.label;
  std::size_t inherited = 0;
  for (const auto& p : out1.posts) inherited += p.label && *p.label == label_of.at(p.source_id);

  mt::StubEngine second;
  second.set_tagging(true);
  mt::TranslateStats s2;
  const auto out2 = augment(spanish, dir / "cache", second, &s2);
  const bool ok = out1.size() == 12408 && inherited == out1.size() && second.calls() == 0 && out2.posts == out1.posts;
  return {ok, fmt::format("{} posts, {} labels inherited, first run {} engine calls, rerun {} calls ({} cache hits)",
                          out1.size(), inherited, first.calls(), second.calls(), s2.cache_hits)};
}

class FixedScorer final : public mt::LanguageModelScorer {
 public:
  std::string lm_id() const override { return "fixed"; }
  std::string language() const override { return "en"; }
  std::vector<double> token_nll(std::string_view text) const override {
    if (text == "a") return {std::log(2.0), std::log(2.0)};
    return {std::log(8.0)};
  }
};

Outcome perplexity_oracle() {
  Rng rng(4);
  std::string detail;
  for (std::size_t v : {4u, 100u}) {
    std::vector<Post> posts;
    for (int i = 0; i < 50; ++i) {
      std::string text = "w";
      for (std::size_t k = rng.below(10); k > 0; --k) text += fmt::format(" t{}", rng.below(30));
      const auto sid = fx::source_name(i);
      posts.push_back({sid + ".en", sid, "en", text, 0});
    }
    mt::ScorerMap scorers{{"en", std::make_shared<mt::UniformScorer>(v, "en")}};
    const double ppl = mt::score_translation_quality(Corpus::from_posts(posts), scorers).entries.at(0).perplexity;
    if (std::abs(ppl - static_cast<double>(v)) > kPerplexityTol) {
      return {false, fmt::format("uniform-{} gives {}", v, ppl)};
    }
    detail += fmt::format("uniform-{} -> {:.12f}; ", v, ppl);
  }
  const auto c = Corpus::from_posts({{"a.en", "a", "en", "a", 0}, {"b.en", "b", "en", "b", 0}});
  mt::ScorerMap scorers{{"en", std::make_shared<FixedScorer>()}};
  const double mixed = mt::score_translation_quality(c, scorers).entries.at(0).perplexity;
  const double want = std::exp(std::log(32.0) / 3.0);
  detail += fmt::format("mixed [ln2,ln2]+[ln8] -> {:.10f}", mixed);
  return {std::abs(mixed - want) <= kPerplexityTol, detail};
}

Outcome desk_learning() {
  std::string detail;
  bool ok = true;
  for (const char* name : {"stub-tiny", "stub-tiny-gen"}) {
    const auto c = fx::separable_corpus(100, 2024);
    const auto s = split_corpus(c, 0.8, 2024);
    const auto train = select_posts(c, s.train_ids, c.languages);
    const auto val = select_posts(c, s.val_ids, c.languages);
    const auto p = clf::preset(name);
    auto m = clf::build_classifier(p.spec, p.config);
    const auto trace = clf::fine_tune(m, train, val, p.config);
    auto f1_on = [](const clf::Classifier& model, const CorpusView& view) {
      std::vector<int> preds, gold;
      for (std::size_t i = 0; const auto& r : model.predict_proba(view)) {
        preds.push_back(r.pred_label);
        gold.push_back(*view[i++].label);
      }
      return metrics::classification_metrics(preds, gold).f1.value_or(0.0);
    };
    const double val_f1 = f1_on(m, val);
    const double l1 = trace.entries.at(0).mean_train_loss, l3 = trace.entries.at(2).mean_train_loss;

    const auto small = fx::separable_corpus(16, 77);
    const auto all = CorpusView::all(small);
    auto overfit = clf::build_classifier(p.spec, p.config);
    clf::fine_tune(overfit, all, {}, p.config);
    const double fit_f1 = f1_on(overfit, all);

    ok &= c.size() == 200 && trace.entries.size() == 10 && val_f1 >= kLearnF1 && l3 < l1 && fit_f1 == 1.0 &&
          all.size() == 32;
    detail += fmt::format("{}: val F1 {:.3f}, loss e1 {:.4f} > e3 {:.4f}, 32-post train F1 {:.3f}; ", name, val_f1,
                          l1, l3, fit_f1);
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

Outcome report_regression() {
  const auto golden = kTestData / "golden";
  const auto t2 = report::render_results_table(fx::reference_run_records());
  const auto t3 = report::render_perplexity_table(fx::reference_perplexities());
  int same = 0, total = 0;
  for (auto [file, text] : std::vector<std::pair<std::string, std::string>>{
           {"table2.txt", report::render(t2, report::Format::Text)},
           {"table2.md", report::render(t2, report::Format::Markdown)},
           {"table2.csv", report::render(t2, report::Format::Csv)},
           {"table3.txt", report::render(t3, report::Format::Text)},
           {"table3.md", report::render(t3, report::Format::Markdown)},
           {"table3.csv", report::render(t3, report::Format::Csv)}}) {
    ++total;
    same += fs::exists(golden / file) && read_file(golden / file) == text;
  }
  const bool cells = t2.rows[0][7] == "87.9" && t2.rows[0][8] == "87.7" && t2.rows[0][9] == "87.8" &&
                     t3.rows[0][1] == "3.43" && t3.rows[4][1] == "4.61";
  return {same == total && cells, fmt::format("{}/{} golden files byte-identical; mT5/Spanish {} {} {}; "
                                              "English {} ... Portuguese {}",
                                              same, total, t2.rows[0][7], t2.rows[0][8], t2.rows[0][9],
                                              t3.rows[0][1], t3.rows[4][1])};
}

Outcome not_desk_reproducible(bool replays_ok) {
  const bool script = fs::exists(kSourceDir / "scripts" / "full_scale.py");
  return {replays_ok && script,
          fmt::format("full-scale numbers need the original tweets, the external translation engine and GPU "
                      "fine-tuning; covered here by golden replays ({}) and the property suites; opt-in "
                      "scripts/full_scale.py present: {}",
                      replays_ok ? "ok" : "failing", script)};
}

Outcome determinism() {
  fx::TempDir dir;
  write_corpus(fx::separable_corpus(100, 31), dir / "corpus.csv");
  ExperimentConfig cfg;
  cfg.corpus_path = dir / "corpus.csv";
  cfg.languages = {"es", "en"};
  cfg.outputs = dir / "runs";
  cfg.finetune.seed = 99;
  cfg.split_seed = 99;
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  const bool same = a.record.validation == b.record.validation && a.record.trace == b.record.trace &&
                    a.dir != b.dir;
  return {same, fmt::format("two runs into {} and {}: validation metrics and traces {}", a.dir.filename().string(),
                            b.dir.filename().string(), same ? "bit-identical" : "differ")};
}

}  // namespace

int main() {
  criterion(1, "metric oracle", 5, metric_oracle);
  criterion(2, "split reproduction", 1, split_reproduction);
  criterion(3, "fold arithmetic", 1, fold_arithmetic);
  criterion(4, "leakage guard", 5, leakage_guard);
  criterion(5, "augmentation count", 30, augmentation_count);
  criterion(6, "perplexity oracle", 1, perplexity_oracle);
  criterion(7, "desk-scale learning", 300, desk_learning);
  const int before = failures;
  criterion(8, "report regression", 0, report_regression);
  const bool replays_ok = failures == before;
  criterion(9, "not desk-reproducible", 0, [&] { return not_desk_reproducible(replays_ok); });
  criterion(10, "determinism", 0, determinism);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
