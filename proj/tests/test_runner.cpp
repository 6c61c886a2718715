#include <gtest/gtest.h>

#include <csignal>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "fixtures.hpp"
#include "poly/config.hpp"
#include "poly/error.hpp"
#include "poly/runner.hpp"

using namespace poly;
using poly::fx::TempDir;
namespace fs = std::filesystem;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected poly::Error";
  return Errc::Io;
}

ExperimentConfig separable_config(const TempDir& dir, std::size_t n_sources = 100, std::uint64_t seed = 11) {
  const auto corpus = dir / "corpus.csv";
  write_corpus(fx::separable_corpus(n_sources, seed), corpus);
  ExperimentConfig cfg;
  cfg.corpus_path = corpus;
  cfg.languages = {"es", "en"};
  cfg.outputs = dir / "runs";
  cfg.finetune.epochs = 4;
  return cfg;
}

std::set<std::string> source_ids_of(const std::vector<std::string>& ids) {
  std::set<std::string> out;
  for (const auto& id : ids) out.insert(id.substr(0, id.find('.')));
  return out;
}

std::vector<std::string> prediction_ids(const fs::path& file) {
  std::vector<std::string> ids;
  const auto lines = split(read_file(file), '\n');
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (!lines[i].empty()) ids.push_back(lines[i].substr(0, lines[i].find(',')));
  }
  return ids;
}

RunRecord fixture_record(double f1) {
  RunRecord r;
  r.config.corpus_path = "corpus.csv";
  r.config.languages = {"es"};
  r.fingerprint = std::string(64, 'a');
  metrics::MetricSet m;
  m.n = 10;
  m.accuracy = 0.9;
  m.precision = 1.0;
  m.recall = 2.0 / 3.0;
  m.f1 = f1;
  m.auc = std::nullopt;
  m.confusion = {2, 0, 1, 7};
  r.validation = {{"es", m}};
  r.trace.entries = {{1, 0.69314718055994529, 0.5}, {2, 0.1, std::nullopt}};
  r.started_at = "2024-01-01T00:00:00Z";
  r.finished_at = "2024-01-01T00:01:00Z";
  r.prediction_files = {"predictions/es.csv"};
  return r;
}

}  // namespace

TEST(Config, ParseOverridesAndErrors) {
  const auto cfg = parse_config(
      "# comment\n"
      "corpus_path = data/c.csv\n"
      "languages = es, en\n"
      "finetune.epochs = 3\n"
      "backbone = mt5\n"
      "split.seed = 7\n");
  EXPECT_EQ(cfg.backbone_name, "mt5");
  EXPECT_EQ(cfg.backbone.family, clf::Family::EncoderDecoderGenerative);
  EXPECT_EQ(cfg.finetune.learning_rate, 3e-5);
  EXPECT_EQ(cfg.finetune.epochs, 3);
  EXPECT_EQ(cfg.languages, (std::vector<std::string>{"es", "en"}));
  EXPECT_EQ(cfg.split_seed, 7u);
  EXPECT_EQ(parse_config(format_config(cfg)), cfg);
  EXPECT_EQ(code_of([] { parse_config("finetune.learning_rat = 1\n"); }), Errc::Config);
  EXPECT_EQ(code_of([] { parse_config("finetune.epochs = many\n"); }), Errc::Config);
  EXPECT_EQ(code_of([] { parse_config("just words\n"); }), Errc::Config);
}

TEST(Config, MissingFileMessage) {
  try {
    load_config("missing.cfg");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Config);
    EXPECT_NE(std::string(e.what()).find("config not found"), std::string::npos);
  }
}

TEST(Config, RelativePathsResolveAgainstConfigFile) {
  TempDir dir;
  fs::create_directories(dir / "sub");
  write_file_atomic(dir / "sub" / "x.cfg", "corpus_path = c.csv\noutputs = out\n");
  const auto cfg = load_config(dir / "sub" / "x.cfg");
  EXPECT_EQ(cfg.corpus_path, dir / "sub" / "c.csv");
  EXPECT_EQ(cfg.outputs, dir / "sub" / "out");
}

TEST(RunRecordIo, RoundTripAndSchema) {
  TempDir dir;
  const auto r = fixture_record(0.8);
  persist_run(r, dir.path());
  EXPECT_EQ(load_run(dir.path()), r);

  auto j = nlohmann::json::parse(read_file(dir / "run.json"));
  j["schema_version"] = 0;
  write_file_atomic(dir / "run.json", j.dump());
  EXPECT_EQ(code_of([&] { load_run(dir.path()); }), Errc::SchemaVersionMismatch);

  write_file_atomic(dir / "run.json", "{\"schema_version\": 1, \"config\"");
  EXPECT_EQ(code_of([&] { load_run(dir.path()); }), Errc::CorruptRecord);

  TempDir empty;
  EXPECT_EQ(code_of([&] { load_run(empty.path()); }), Errc::Io);
}

TEST(RunRecordIo, KilledWriterNeverLeavesTornFile) {
  TempDir dir;
  const auto old_record = fixture_record(0.25);
  const auto new_record = fixture_record(0.75);
  Rng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    const bool start_empty = trial % 5 == 0;
    fs::remove(dir / "run.json");
    if (!start_empty) persist_run(old_record, dir.path());

    const pid_t pid = ::fork();
    ASSERT_GE(pid, 0);
    if (pid == 0) {
      for (;;) {
        persist_run(new_record, dir.path());
        persist_run(old_record, dir.path());
      }
    }
    ::usleep(static_cast<useconds_t>(200 + rng.below(5000)));
    ::kill(pid, SIGKILL);
    int status = 0;
    ::waitpid(pid, &status, 0);

    if (start_empty && !fs::exists(dir / "run.json")) continue;  // none: acceptable
    const auto loaded = load_run(dir.path());
    EXPECT_TRUE(loaded == old_record || loaded == new_record) << "trial " << trial;
  }
}

TEST(RunExperiment, WritesRunDirectoryAndLearns) {
  TempDir dir;
  auto cfg = separable_config(dir);
  cfg.finetune.epochs = 10;
  const auto out = run_experiment(cfg);
  EXPECT_TRUE(fs::exists(out.dir / "config.snapshot"));
  EXPECT_TRUE(fs::exists(out.dir / "run.json"));
  EXPECT_TRUE(fs::exists(out.dir / "model" / "manifest.json"));
  EXPECT_FALSE(fs::exists(out.dir / ".partial"));
  EXPECT_EQ(parse_config(read_file(out.dir / "config.snapshot")), cfg);
  ASSERT_EQ(out.record.validation.size(), 2u);
  EXPECT_EQ(out.record.validation[0].lang, "es");
  EXPECT_EQ(out.record.validation[1].lang, "en");
  for (const auto& lm : out.record.validation) EXPECT_GE(lm.metrics.f1.value_or(0), 0.95) << lm.lang;
  EXPECT_EQ(out.record.trace.entries.size(), 10u);
  EXPECT_EQ(load_run(out.dir), out.record);
  EXPECT_EQ(out.record.prediction_files,
            (std::vector<std::string>{"predictions/es.csv", "predictions/en.csv"}));
  EXPECT_EQ(read_file(out.dir / "predictions" / "es.csv").substr(0, 30), "id,p_positive,pred_label,gold\n");
  EXPECT_EQ(out.dir.filename().string().substr(0, 12), config_hash(cfg));
}

TEST(RunExperiment, ReproducibleMetrics) {
  TempDir dir;
  const auto cfg = separable_config(dir);
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  EXPECT_NE(a.dir, b.dir);
  EXPECT_EQ(a.record.validation, b.record.validation);
  EXPECT_EQ(a.record.trace, b.record.trace);
  EXPECT_EQ(a.record.fingerprint, b.record.fingerprint);
  EXPECT_EQ(read_file(a.dir / "predictions" / "en.csv"), read_file(b.dir / "predictions" / "en.csv"));
}

TEST(RunExperiment, ZeroEpochsStillProducesRecord) {
  TempDir dir;
  auto cfg = separable_config(dir);
  cfg.finetune.epochs = 0;
  const auto out = run_experiment(cfg);
  EXPECT_TRUE(out.record.trace.entries.empty());
  ASSERT_EQ(out.record.validation.size(), 2u);
  EXPECT_GT(out.record.validation[0].metrics.n, 0u);
}

TEST(RunExperiment, SingleLanguage) {
  TempDir dir;
  auto cfg = separable_config(dir);
  cfg.languages = {"en"};
  cfg.finetune.epochs = 10;
  const auto out = run_experiment(cfg);
  ASSERT_EQ(out.record.validation.size(), 1u);
  EXPECT_GE(out.record.validation[0].metrics.f1.value_or(0), 0.95);
}

TEST(RunExperiment, MissingLanguageAndPartialMarker) {
  TempDir dir;
  auto cfg = separable_config(dir);
  cfg.languages = {"es", "de"};
  EXPECT_EQ(code_of([&] { run_experiment(cfg); }), Errc::MissingLanguage);

  cfg.languages = {"es", "en"};
  cfg.test_corpus_path = dir / "no-such-test.csv";
  EXPECT_THROW(run_experiment(cfg), Error);
  bool found_partial = false;
  for (const auto& e : fs::directory_iterator(cfg.outputs)) {
    if (fs::exists(e.path() / ".partial")) found_partial = true;
  }
  EXPECT_TRUE(found_partial);
}

TEST(RunExperiment, TestCorpusScoredSeparately) {
  TempDir dir;
  auto cfg = separable_config(dir);
  write_corpus(fx::separable_corpus(10, 99), dir / "test.csv");
  cfg.test_corpus_path = dir / "test.csv";
  const auto out = run_experiment(cfg);
  ASSERT_TRUE(out.record.test.has_value());
  ASSERT_EQ(out.record.test->size(), 2u);
  EXPECT_EQ((*out.record.test)[0].metrics.n, 10u);
  EXPECT_TRUE(fs::exists(out.dir / "predictions" / "test" / "es.csv"));
}

TEST(RunExperiment, ValidationPostsNeverTrained) {
  TempDir dir;
  const auto cfg = separable_config(dir);
  std::set<std::string> trained;
  RunHooks hooks;
  hooks.on_batch = [&](int fold, int, std::span<const Post* const> batch) {
    EXPECT_EQ(fold, 0);
    for (const auto* p : batch) trained.insert(p->source_id);
  };
  const auto out = run_experiment(cfg, hooks);
  std::vector<std::string> val_ids;
  for (const auto& f : out.record.prediction_files) {
    const auto ids = prediction_ids(out.dir / f);
    val_ids.insert(val_ids.end(), ids.begin(), ids.end());
  }
  ASSERT_FALSE(val_ids.empty());
  for (const auto& sid : source_ids_of(val_ids)) EXPECT_FALSE(trained.contains(sid)) << sid;
}

TEST(Crossval, KFoldsPersistedAndPure) {
  TempDir dir;
  auto cfg = separable_config(dir, 40);
  cfg.finetune.epochs = 2;
  std::map<int, std::set<std::string>> trained;
  RunHooks hooks;
  hooks.on_batch = [&](int fold, int, std::span<const Post* const> batch) {
    for (const auto* p : batch) trained[fold].insert(p->source_id);
  };
  const auto cv = run_crossval(cfg, 4, hooks);
  ASSERT_EQ(cv.folds.size(), 4u);
  EXPECT_TRUE(fs::exists(cv.dir / "crossval.json"));

  const auto corpus = load_corpus(cfg.corpus_path);
  const auto split = split_corpus(corpus, cfg.split_ratio, cfg.split_seed);
  std::set<std::string> covered;
  for (int i = 1; i <= 4; ++i) {
    EXPECT_EQ(cv.folds[i - 1].fold_index, i);
    const auto held = nlohmann::json::parse(read_file(cv.dir / "folds" / std::to_string(i) / "held_out_ids.json"))
                          .get<std::vector<std::string>>();
    EXPECT_TRUE(fs::exists(cv.dir / "folds" / std::to_string(i) / "fold.json"));
    for (const auto& id : held) {
      EXPECT_FALSE(trained[i].contains(id)) << "fold " << i << " trained on held-out " << id;
      EXPECT_TRUE(covered.insert(id).second);
    }
    for (const auto& id : split.val_ids) EXPECT_FALSE(trained[i].contains(id));
  }
  EXPECT_EQ(covered, split.train_ids);

  const auto loaded = load_crossval(cv.dir);
  EXPECT_EQ(loaded.folds, cv.folds);
  EXPECT_EQ(loaded.k, 4);
}

TEST(Crossval, MeanF1MatchesMeanAndStd) {
  TempDir dir;
  auto cfg = separable_config(dir, 40);
  cfg.finetune.epochs = 2;
  const auto cv = load_crossval(run_crossval(cfg, 3).dir);
  for (const auto& s : cv.summary) {
    std::vector<double> f1s;
    for (const auto& f : cv.folds) {
      for (const auto& lm : f.per_language) {
        if (lm.lang == s.lang && lm.metrics.f1) f1s.push_back(*lm.metrics.f1);
      }
    }
    ASSERT_TRUE(s.f1.has_value());
    const auto want = metrics::mean_and_std(f1s);
    EXPECT_EQ(s.f1->mean, want.mean);
    EXPECT_EQ(s.f1->std, want.std);
  }
}

TEST(Crossval, TwoFoldsOnFourItemsDeterministic) {
  TempDir dir;
  auto cfg = separable_config(dir, 4);
  cfg.split_ratio = 1.0;
  cfg.finetune.epochs = 2;
  const auto a = run_crossval(cfg, 2);
  const auto b = run_crossval(cfg, 2);
  ASSERT_EQ(a.folds.size(), 2u);
  EXPECT_EQ(a.folds, b.folds);
  EXPECT_EQ(code_of([&] { run_crossval(cfg, 5); }), Errc::TooFewItems);
}

TEST(Crossval, FoldsIndependentOfExecutionOrder) {
  TempDir dir;
  auto cfg = separable_config(dir, 40);
  cfg.finetune.epochs = 2;
  const auto corpus = load_corpus(cfg.corpus_path);
  const auto split = split_corpus(corpus, cfg.split_ratio, cfg.split_seed);
  const auto partition = kfold_partition(split.train_ids, 4, cfg.split_seed);
  std::vector<FoldResult> forward(4), backward(4);
  for (int i = 0; i < 4; ++i) forward[i] = run_fold(corpus, partition, i, cfg);
  for (int i = 3; i >= 0; --i) backward[i] = run_fold(corpus, partition, i, cfg);
  EXPECT_EQ(forward, backward);
}
