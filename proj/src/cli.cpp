#include "poly/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "poly/common.hpp"
#include "poly/config.hpp"
#include "poly/corpus.hpp"
#include "poly/csv.hpp"
#include "poly/error.hpp"
#include "poly/perplexity.hpp"
#include "poly/report.hpp"
#include "poly/runner.hpp"
#include "poly/translate.hpp"

namespace poly {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kSynopsis =
    "usage: poly <command> [options]\n"
    "\n"
    "commands:\n"
    "  ingest      load and validate a corpus CSV, optionally rewrite it canonically\n"
    "  translate   expand a single-language corpus into target languages\n"
    "  train       split, fine-tune one joint model, evaluate per language\n"
    "  eval        score a saved model on a corpus, or recompute metrics from predictions\n"
    "  crossval    k-fold cross-validation over the training split\n"
    "  perplexity  translation-quality perplexity per language\n"
    "  report      render results, perplexity, cross-validation tables and fold charts\n"
    "\n"
    "run 'poly <command> --help' for options\n";

std::vector<std::string> csv_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto& item : split(s, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

struct ExperimentFlags {
  std::string config;
  std::string corpus;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string backbone;
  std::string languages;
  std::string format = "text";

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "experiment config file (dotted key = value)");
    cmd->add_option("--corpus", corpus, "corpus CSV");
    cmd->add_option("--out", out, "outputs directory");
    cmd->add_option("--seed", seed, "seed for split, folds and training");
    cmd->add_option("--backbone", backbone, "backbone preset")
        ->check(CLI::IsMember({"mbert", "xlmr", "mt5", "stub-tiny", "stub-tiny-gen"}));
    cmd->add_option("--languages", languages, "comma-separated language codes");
    cmd->add_option("--format", format, "table format")->check(CLI::IsMember({"text", "csv", "md"}));
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg;
    if (!config.empty()) {
      cfg = load_config(config);
    } else if (corpus.empty()) {
      throw CLI::ValidationError("--config or --corpus", "one of them is required");
    }
    if (!backbone.empty()) cfg.use_preset(backbone);
    if (!corpus.empty()) cfg.corpus_path = corpus;
    if (!out.empty()) cfg.outputs = out;
    if (seed) {
      cfg.finetune.seed = *seed;
      cfg.split_seed = *seed;
    }
    if (!languages.empty()) cfg.languages = csv_list(languages);
    return cfg;
  }
};

std::string metrics_table(const std::vector<LanguageMetrics>& rows, report::Format fmt) {
  report::RenderedTable t;
  t.headers = {"Lang.", "n", "Acc.", "Prec.", "Rec.", "F1.", "AUC"};
  auto cell = [](const metrics::Value& v) { return v ? report::fixed_half_even(*v * 100.0, 1) : "n/a"; };
  for (const auto& lm : rows) {
    const auto& m = lm.metrics;
    t.rows.push_back({report::language_name(lm.lang), std::to_string(m.n), cell(m.accuracy),
                      cell(m.precision), cell(m.recall), cell(m.f1), cell(m.auc)});
  }
  t.caption = "Per-language metrics (percent).";
  return report::render(t, fmt);
}

// predictions/<lang>.csv with id,p_positive,pred_label,gold
LanguageMetrics metrics_from_predictions(const fs::path& file) {
  const auto records = csv::parse(read_file(file));
  if (records.empty() || records[0].fields != std::vector<std::string>{"id", "p_positive", "pred_label", "gold"}) {
    throw Error(Errc::MalformedRow, fmt::format("{}: expected header id,p_positive,pred_label,gold", file.string()));
  }
  std::vector<int> preds, gold;
  std::vector<double> scores;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& f = records[i].fields;
    if (f.size() != 4 || (f[2] != "0" && f[2] != "1") || (f[3] != "0" && f[3] != "1")) {
      throw Error(Errc::MalformedRow, fmt::format("{}: row {} is malformed", file.string(), records[i].row));
    }
    scores.push_back(std::stod(f[1]));
    preds.push_back(f[2] == "1");
    gold.push_back(f[3] == "1");
  }
  return {file.stem().string(), metrics::evaluate(preds, scores, gold)};
}

std::shared_ptr<const mt::LanguageModelScorer> make_scorer(const std::string& kind,
                                                           const std::string& lang,
                                                           const std::map<std::string, std::string>& refs) {
  if (kind.rfind("uniform:", 0) == 0) {
    return std::make_shared<mt::UniformScorer>(std::stoul(kind.substr(8)), lang);
  }
  if (kind == "unigram") {
    auto it = refs.find(lang);
    if (it == refs.end()) return nullptr;
    std::vector<std::string> texts;
    for (auto& line : split(read_file(it->second), '\n')) {
      if (!trim(line).empty()) texts.push_back(line);
    }
    return std::make_shared<mt::UnigramScorer>(texts, lang, fmt::format("unigram:{}", fs::path(it->second).filename().string()));
  }
  throw Error(Errc::Config, fmt::format("unknown scorer '{}' (uniform:V or unigram)", kind));
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multilingual suicide-text classification experiment toolkit", "poly"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "load and validate a corpus");
  std::string ingest_corpus, ingest_out, ingest_langs;
  ingest->add_option("--corpus", ingest_corpus, "corpus CSV")->required();
  ingest->add_option("--out", ingest_out, "write the canonical form here");
  ingest->add_option("--languages", ingest_langs, "allowed language codes (default: es,en,de,ca,pt,it)");

  // translate
  auto* translate = app.add_subcommand("translate", "machine-translate a corpus into target languages");
  std::string tr_corpus, tr_out, tr_langs, tr_engine = "stub", tr_url, tr_cmd, tr_engine_id, tr_cache,
                                             tr_provenance;
  bool tr_skip_failed = false;
  std::size_t tr_batch = 32, tr_concurrency = 4;
  translate->add_option("--corpus", tr_corpus, "source-language corpus CSV")->required();
  translate->add_option("--languages", tr_langs, "target languages, comma-separated")->required();
  translate->add_option("--out", tr_out, "augmented corpus CSV")->required();
  translate->add_option("--engine", tr_engine, "stub | http | cmd")->check(CLI::IsMember({"stub", "http", "cmd"}));
  translate->add_option("--engine-url", tr_url, "base URL of the translation service (http)");
  translate->add_option("--engine-cmd", tr_cmd, "command reading a request on stdin (cmd)");
  translate->add_option("--engine-id", tr_engine_id, "cache identity of the engine");
  translate->add_option("--cache", tr_cache, "cache root (default $POLY_CACHE_DIR or .poly-cache)");
  translate->add_option("--provenance", tr_provenance, "JSON-lines sidecar (default <out>.provenance.jsonl)");
  translate->add_option("--batch-size", tr_batch, "texts per engine call");
  translate->add_option("--max-concurrent", tr_concurrency, "engine calls in flight");
  translate->add_flag("--skip-failed", tr_skip_failed, "skip posts whose translation keeps failing");

  // train / crossval
  auto* train = app.add_subcommand("train", "fine-tune and evaluate per language");
  ExperimentFlags train_flags;
  train_flags.attach(train);

  auto* crossval = app.add_subcommand("crossval", "k-fold cross-validation");
  ExperimentFlags cv_flags;
  std::optional<int> cv_k;
  cv_flags.attach(crossval);
  crossval->add_option("--k", cv_k, "number of folds (default: config crossval.k)");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a saved model or a predictions directory");
  std::string ev_model, ev_corpus, ev_langs, ev_out, ev_predictions, ev_format = "text";
  eval->add_option("--model", ev_model, "exported model directory");
  eval->add_option("--corpus", ev_corpus, "labeled corpus CSV to score");
  eval->add_option("--languages", ev_langs, "languages to evaluate (default: all in corpus)");
  eval->add_option("--out", ev_out, "write predictions/<lang>.csv here");
  eval->add_option("--predictions", ev_predictions, "directory of <lang>.csv prediction files");
  eval->add_option("--format", ev_format)->check(CLI::IsMember({"text", "csv", "md"}));

  // perplexity
  auto* perplexity = app.add_subcommand("perplexity", "translation-quality perplexity");
  std::string px_corpus, px_scorer = "unigram", px_out, px_replay, px_format = "text", px_langs;
  std::vector<std::string> px_refs;
  perplexity->add_option("--corpus", px_corpus, "augmented corpus CSV");
  perplexity->add_option("--scorer", px_scorer, "uniform:V | unigram");
  perplexity->add_option("--reference", px_refs, "lang=PATH reference text for the unigram scorer");
  perplexity->add_option("--languages", px_langs, "languages to score (default: all but es)");
  perplexity->add_option("--out", px_out, "write the report JSON here");
  perplexity->add_option("--replay", px_replay, "render a saved report JSON instead of scoring");
  perplexity->add_option("--format", px_format)->check(CLI::IsMember({"text", "csv", "md"}));

  // report
  auto* rep = app.add_subcommand("report", "render tables and charts from persisted records");
  std::vector<std::string> rep_runs, rep_cvs;
  std::string rep_table = "results", rep_format = "text", rep_px, rep_out, rep_split = "validation";
  rep->add_option("--run", rep_runs, "run directory (repeat per backbone)");
  rep->add_option("--crossval", rep_cvs, "cross-validation directory (repeat per backbone)");
  rep->add_option("--perplexity", rep_px, "perplexity report JSON");
  rep->add_option("--table", rep_table, "results | perplexity | crossval | folds")
      ->check(CLI::IsMember({"results", "perplexity", "crossval", "folds"}));
  rep->add_option("--split", rep_split, "validation | test")->check(CLI::IsMember({"validation", "test"}));
  rep->add_option("--format", rep_format)->check(CLI::IsMember({"text", "csv", "md"}));
  rep->add_option("--out", rep_out, "directory for the fold chart and its sidecar");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    if (args.empty()) {
      err << kSynopsis;
    } else {
      err << "error: " << e.what() << "\n\n" << kSynopsis;
    }
    return 2;
  }

  try {
    if (*ingest) {
      LoadOptions opts;
      if (!ingest_langs.empty()) {
        const auto l = csv_list(ingest_langs);
        opts.languages = {l.begin(), l.end()};
      }
      const auto c = load_corpus(ingest_corpus, opts);
      const auto v = validate_corpus(c);
      out << fmt::format("posts: {}\n", c.size());
      for (const auto& [lang, n] : v.posts_per_language) out << fmt::format("  {}: {}\n", lang, n);
      out << fmt::format("labels: {} positive, {} negative, {} unlabeled (positive share {:.4f})\n",
                         v.positives, v.negatives, v.unlabeled, v.positive_proportion());
      out << fmt::format("violations: {}\n", v.violations.size());
      for (const auto& viol : v.violations) out << fmt::format("  {} {}: {}\n", viol.kind, viol.post_id, viol.message);
      out << fmt::format("duplicate texts: {}\n", v.duplicate_texts.size());
      if (!ingest_out.empty()) write_corpus(c, ingest_out);
      return v.violations.empty() ? 0 : 1;
    }

    if (*translate) {
      const auto c = load_corpus(tr_corpus);
      std::unique_ptr<mt::TranslationEngine> engine;
      if (tr_engine == "stub") {
        engine = std::make_unique<mt::StubEngine>(tr_engine_id.empty() ? "stub-identity" : tr_engine_id);
      } else if (tr_engine == "http") {
        if (tr_url.empty()) throw CLI::ValidationError("--engine-url", "required with --engine http");
        engine = std::make_unique<mt::HttpEngine>(tr_url, tr_engine_id.empty() ? "http" : tr_engine_id);
      } else {
        if (tr_cmd.empty()) throw CLI::ValidationError("--engine-cmd", "required with --engine cmd");
        engine = std::make_unique<mt::SubprocessEngine>(tr_cmd, tr_engine_id.empty() ? "subprocess" : tr_engine_id);
      }
      mt::TranslateOptions opts;
      opts.cache_dir = tr_cache.empty() ? mt::cache_root(".poly-cache") : fs::path(tr_cache);
      opts.provenance_path = tr_provenance.empty() ? fs::path(tr_out + ".provenance.jsonl") : fs::path(tr_provenance);
      opts.skip_failed = tr_skip_failed;
      opts.batch_size = tr_batch;
      opts.max_concurrent_batches = tr_concurrency;
      mt::TranslateStats stats;
      const auto augmented = mt::translate_corpus(c, csv_list(tr_langs), *engine, opts, &stats);
      write_corpus(augmented, tr_out);
      out << fmt::format("wrote {} posts to {} ({} translated, {} cache hits, {} skipped)\n",
                         augmented.size(), tr_out, stats.translated, stats.cache_hits, stats.failed_ids.size());
      return 0;
    }

    if (*train) {
      ExperimentConfig cfg;
      try {
        cfg = train_flags.resolve();
      } catch (const CLI::ValidationError& e) {
        err << "error: " << e.what() << "\n\n" << train->help();
        return 2;
      }
      const auto outcome = run_experiment(cfg);
      out << report::render(report::render_results_table({outcome.record}),
                            report::format_from_string(train_flags.format));
      out << "run: " << outcome.dir.string() << "\n";
      return 0;
    }

    if (*crossval) {
      ExperimentConfig cfg;
      try {
        cfg = cv_flags.resolve();
      } catch (const CLI::ValidationError& e) {
        err << "error: " << e.what() << "\n\n" << crossval->help();
        return 2;
      }
      const int k = cv_k.value_or(cfg.crossval_k);
      const auto result = run_crossval(cfg, k);
      out << report::render(report::render_crossval_table({result}),
                            report::format_from_string(cv_flags.format));
      const auto files = report::render_fold_chart({report::fold_series(result)}, result.dir);
      out << "crossval: " << result.dir.string() << "\n";
      out << "chart: " << (files.chart.empty() ? "(failed)" : files.chart.string()) << "\n";
      return 0;
    }

    if (*eval) {
      const auto fmt_kind = report::format_from_string(ev_format);
      std::vector<LanguageMetrics> rows;
      if (!ev_predictions.empty()) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(ev_predictions)) {
          if (entry.path().extension() == ".csv") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw Error(Errc::EmptyInput, fmt::format("no <lang>.csv files in {}", ev_predictions));
        for (const auto& f : files) rows.push_back(metrics_from_predictions(f));
      } else {
        if (ev_model.empty() || ev_corpus.empty()) {
          err << "error: eval needs --model and --corpus, or --predictions\n\n" << eval->help();
          return 2;
        }
        const auto model = clf::load_model(ev_model);
        const auto c = load_corpus(ev_corpus);
        std::vector<std::string> langs = ev_langs.empty()
                                             ? std::vector<std::string>(c.languages.begin(), c.languages.end())
                                             : csv_list(ev_langs);
        const auto ids = source_ids(c);
        for (const auto& lang : langs) {
          const auto view = select_posts(c, ids, {lang});
          if (view.empty()) continue;
          const auto preds = model.predict_proba(view);
          std::vector<int> hard, gold;
          std::vector<double> scores;
          for (std::size_t i = 0; i < preds.size(); ++i) {
            if (!view[i].label) throw Error(Errc::UnlabeledPost, fmt::format("post '{}' has no label", view[i].id));
            hard.push_back(preds[i].pred_label);
            scores.push_back(preds[i].p_positive);
            gold.push_back(*view[i].label);
          }
          rows.push_back({lang, metrics::evaluate(hard, scores, gold)});
          if (!ev_out.empty()) {
            write_file_atomic(fs::path(ev_out) / "predictions" / (lang + ".csv"), format_predictions(preds, gold));
          }
        }
      }
      out << metrics_table(rows, fmt_kind);
      return 0;
    }

    if (*perplexity) {
      const auto fmt_kind = report::format_from_string(px_format);
      mt::PerplexityReport r;
      if (!px_replay.empty()) {
        r = mt::report_from_json(read_file(px_replay));
      } else {
        if (px_corpus.empty()) {
          err << "error: perplexity needs --corpus or --replay\n\n" << perplexity->help();
          return 2;
        }
        const auto c = load_corpus(px_corpus);
        std::map<std::string, std::string> refs;
        for (const auto& spec : px_refs) {
          const auto eq = spec.find('=');
          if (eq == std::string::npos) throw Error(Errc::Config, fmt::format("--reference '{}' is not lang=PATH", spec));
          refs[spec.substr(0, eq)] = spec.substr(eq + 1);
        }
        std::vector<std::string> langs;
        if (px_langs.empty()) {
          for (const auto& l : c.languages) {
            if (l != "es") langs.push_back(l);
          }
        } else {
          langs = csv_list(px_langs);
        }
        mt::ScorerMap scorers;
        for (const auto& l : langs) {
          if (auto s = make_scorer(px_scorer, l, refs)) scorers[l] = std::move(s);
        }
        r = mt::score_translation_quality(c, scorers);
      }
      if (!px_out.empty()) write_file_atomic(px_out, mt::report_to_json(r));
      out << report::render(report::render_perplexity_table(r), fmt_kind);
      return 0;
    }

    if (*rep) {
      const auto fmt_kind = report::format_from_string(rep_format);
      if (rep_table == "results") {
        if (rep_runs.empty()) {
          err << "error: --table results needs at least one --run\n";
          return 2;
        }
        std::vector<RunRecord> records;
        for (const auto& d : rep_runs) records.push_back(load_run(d));
        out << report::render(report::render_results_table(
                                  records, rep_split == "test" ? report::Split::Test : report::Split::Validation),
                              fmt_kind);
      } else if (rep_table == "perplexity") {
        if (rep_px.empty()) {
          err << "error: --table perplexity needs --perplexity FILE\n";
          return 2;
        }
        out << report::render(report::render_perplexity_table(mt::report_from_json(read_file(rep_px))), fmt_kind);
      } else {
        if (rep_cvs.empty()) {
          err << fmt::format("error: --table {} needs at least one --crossval\n", rep_table);
          return 2;
        }
        std::vector<CrossValResult> runs;
        for (const auto& d : rep_cvs) runs.push_back(load_crossval(d));
        if (rep_table == "crossval") {
          out << report::render(report::render_crossval_table(runs), fmt_kind);
        } else {
          if (rep_out.empty()) {
            err << "error: --table folds needs --out DIR\n";
            return 2;
          }
          std::vector<report::FoldSeries> series;
          for (const auto& r : runs) series.push_back(report::fold_series(r));
          const auto files = report::render_fold_chart(series, rep_out);
          out << "sidecar: " << files.sidecar.string() << "\n";
          out << "chart: " << (files.chart.empty() ? "(failed)" : files.chart.string()) << "\n";
        }
      }
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << "\n\n" << kSynopsis;
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << kSynopsis;
  return 2;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  return dispatch(args, out, err);
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace poly
