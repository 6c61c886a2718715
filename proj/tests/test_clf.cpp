#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "fixtures.hpp"
#include "poly/clf.hpp"
#include "poly/error.hpp"
#include "poly/metrics.hpp"

using namespace poly;
using namespace poly::clf;
using poly::fx::TempDir;

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

double f1_of(const std::vector<PredictionRecord>& preds, const CorpusView& view) {
  std::vector<int> p, g;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    p.push_back(preds[i].pred_label);
    g.push_back(*view[i].label);
  }
  return metrics::classification_metrics(p, g).f1.value_or(0.0);
}

struct Split {
  Corpus corpus;
  CorpusView train, val;
};

Split separable_split(std::size_t n_sources, std::uint64_t seed) {
  Split s{fx::separable_corpus(n_sources, seed), {}, {}};
  const auto a = split_corpus(s.corpus, 0.8, seed);
  s.train = select_posts(s.corpus, a.train_ids, s.corpus.languages);
  s.val = select_posts(s.corpus, a.val_ids, s.corpus.languages);
  return s;
}

}  // namespace

TEST(Schedule, WarmupThenLinearDecay) {
  const std::size_t total = 1000;
  const double peak = 3e-5;
  const auto w = warmup_steps(total, 0.01);
  EXPECT_EQ(w, 10u);
  for (std::size_t s = 1; s <= w; ++s) {
    EXPECT_NEAR(learning_rate_at(s, total, peak, 0.01), peak * s / w, 1e-18);
  }
  EXPECT_DOUBLE_EQ(learning_rate_at(w, total, peak, 0.01), peak);
  double prev = peak;
  for (std::size_t s = w + 1; s <= total; ++s) {
    const double lr = learning_rate_at(s, total, peak, 0.01);
    EXPECT_LT(lr, prev);
    EXPECT_NEAR(lr, peak * double(total - s) / double(total - w), 1e-18);
    prev = lr;
  }
  EXPECT_EQ(learning_rate_at(total, total, peak, 0.01), 0.0);
}

TEST(Schedule, CeilingOfWarmupProportion) {
  EXPECT_EQ(warmup_steps(1035, 0.01), 11u);  // 10.35 -> 11
  EXPECT_EQ(warmup_steps(100, 0.01), 1u);
  EXPECT_EQ(warmup_steps(50, 0.01), 1u);
  EXPECT_EQ(warmup_steps(200, 0.1), 20u);
  EXPECT_DOUBLE_EQ(learning_rate_at(1, 100, 1.0, 0.01), 1.0);
}

TEST(Presets, BackboneHyperparameters) {
  const auto mbert = preset("mbert");
  EXPECT_EQ(mbert.spec.checkpoint_id, "bert-base-multilingual-cased");
  EXPECT_EQ(mbert.config.learning_rate, 2e-5);
  EXPECT_EQ(mbert.config.batch_size, 16);
  EXPECT_EQ(mbert.config.dropout, 0.3);
  const auto xlmr = preset("xlmr");
  EXPECT_EQ(xlmr.config.learning_rate, 3e-5);
  EXPECT_EQ(xlmr.config.batch_size, 16);
  EXPECT_EQ(xlmr.config.dropout, 0.5);
  const auto mt5 = preset("mt5");
  EXPECT_EQ(mt5.spec.family, Family::EncoderDecoderGenerative);
  EXPECT_EQ(mt5.config.learning_rate, 3e-5);
  EXPECT_EQ(mt5.config.batch_size, 32);
  EXPECT_EQ(mt5.config.dropout, 0.5);
  for (const auto* name : {"mbert", "xlmr", "mt5"}) {
    const auto p = preset(name);
    EXPECT_EQ(p.config.epochs, 10);
    EXPECT_EQ(p.config.weight_decay, 0.01);
    EXPECT_EQ(p.config.warmup_proportion, 0.01);
    EXPECT_EQ(p.config.optimizer, "AdamW");
    EXPECT_EQ(p.spec.max_sequence_tokens, 128);
  }
  EXPECT_EQ(code_of([] { preset("gpt"); }), Errc::UnknownCheckpoint);
}

TEST(Build, Errors) {
  auto p = preset("stub-tiny-gen");
  p.spec.num_labels = 3;
  EXPECT_EQ(code_of([&] { build_classifier(p.spec, p.config); }), Errc::UnsupportedFamily);
  const auto real = preset("xlmr");
  EXPECT_EQ(code_of([&] { build_classifier(real.spec, real.config); }), Errc::UnknownCheckpoint);
  EXPECT_EQ(code_of([] { family_from_string("decoder-only"); }), Errc::UnsupportedFamily);
}

TEST(Build, DropoutAndSeededInit) {
  auto p = preset("stub-tiny");
  p.config.dropout = 0.25;
  const auto a = build_classifier(p.spec, p.config);
  const auto b = build_classifier(p.spec, p.config);
  EXPECT_EQ(a.backbone().dropout(), 0.25);
  EXPECT_EQ(a.backbone().save(), b.backbone().save());
  p.config.seed = 43;
  EXPECT_NE(build_classifier(p.spec, p.config).backbone().save(), a.backbone().save());
}

TEST(FineTune, ZeroEpochsLeavesWeightsUnchanged) {
  const auto s = separable_split(40, 1);
  auto p = preset("stub-tiny");
  p.config.epochs = 0;
  auto m = build_classifier(p.spec, p.config);
  const auto before = m.backbone().save();
  const auto trace = fine_tune(m, s.train, s.val, p.config);
  EXPECT_TRUE(trace.entries.empty());
  EXPECT_EQ(m.backbone().save(), before);
}

TEST(FineTune, RejectsUnlabeledAndEmpty) {
  const auto c = Corpus::from_posts({{"a", "a", "es", "hola", std::nullopt}});
  auto p = preset("stub-tiny");
  auto m = build_classifier(p.spec, p.config);
  EXPECT_EQ(code_of([&] { fine_tune(m, CorpusView::all(c), {}, p.config); }), Errc::UnlabeledPost);
  EXPECT_EQ(code_of([&] { fine_tune(m, {}, {}, p.config); }), Errc::EmptyInput);
}

TEST(FineTune, LearnsSeparableBilingualCorpus) {
  const auto s = separable_split(100, 3);  // 200 posts
  ASSERT_EQ(s.corpus.size(), 200u);
  for (const auto* name : {"stub-tiny", "stub-tiny-gen"}) {
    const auto p = preset(name);
    auto m = build_classifier(p.spec, p.config);
    const auto trace = fine_tune(m, s.train, s.val, p.config);
    ASSERT_EQ(trace.entries.size(), 10u) << name;
    EXPECT_LT(trace.entries[2].mean_train_loss, trace.entries[0].mean_train_loss) << name;
    for (const auto& e : trace.entries) {
      EXPECT_TRUE(std::isfinite(e.mean_train_loss));
      EXPECT_TRUE(e.val_f1.has_value());
    }
    EXPECT_GE(f1_of(predict_proba(m, s.val), s.val), 0.95) << name;
  }
}

TEST(FineTune, OverfitsThirtyTwoPosts) {
  const auto c = fx::separable_corpus(16, 8);  // 32 posts
  const auto train = CorpusView::all(c);
  for (const auto* name : {"stub-tiny", "stub-tiny-gen"}) {
    const auto p = preset(name);
    auto m = build_classifier(p.spec, p.config);
    fine_tune(m, train, {}, p.config);
    EXPECT_EQ(f1_of(predict_proba(m, train), train), 1.0) << name;
  }
}

TEST(FineTune, DeterministicUnderSeed) {
  const auto s = separable_split(40, 4);
  auto p = preset("stub-tiny");
  p.config.epochs = 3;
  auto a = build_classifier(p.spec, p.config);
  auto b = build_classifier(p.spec, p.config);
  const auto ta = fine_tune(a, s.train, s.val, p.config);
  const auto tb = fine_tune(b, s.train, s.val, p.config);
  EXPECT_EQ(ta, tb);
  EXPECT_EQ(a.backbone().save(), b.backbone().save());
  EXPECT_EQ(predict_proba(a, s.val), predict_proba(b, s.val));
  EXPECT_EQ(predict_proba(a, s.val), predict_proba(a, s.val));
}

TEST(FineTune, ObserverSeesEveryTrainingPostOncePerEpoch) {
  const auto s = separable_split(30, 5);
  auto p = preset("stub-tiny");
  p.config.epochs = 2;
  p.config.batch_size = 7;
  auto m = build_classifier(p.spec, p.config);
  std::map<int, std::multiset<std::string>> seen;
  fine_tune(m, s.train, s.val, p.config, [&](int epoch, std::span<const Post* const> batch) {
    EXPECT_LE(batch.size(), 7u);
    for (const auto* post : batch) seen[epoch].insert(post->id);
  });
  std::multiset<std::string> expected;
  for (const auto* post : s.train) expected.insert(post->id);
  ASSERT_EQ(seen.size(), 2u);
  for (const auto& [epoch, ids] : seen) EXPECT_EQ(ids, expected);
}

TEST(FineTune, HugeLearningRateRaisesNonFiniteLoss) {
  const auto s = separable_split(40, 6);
  auto p = preset("stub-tiny");
  p.config.learning_rate = 1e300;
  p.config.warmup_proportion = 0.0;
  auto m = build_classifier(p.spec, p.config);
  try {
    fine_tune(m, s.train, s.val, p.config);
    FAIL() << "expected NonFiniteLossError";
  } catch (const NonFiniteLossError& e) {
    EXPECT_EQ(e.code(), Errc::NonFiniteLoss);
    EXPECT_LT(e.trace().entries.size(), 10u);
  }
}

TEST(Predict, ProbabilitiesAndThreshold) {
  const auto s = separable_split(40, 7);
  for (const auto* name : {"stub-tiny", "stub-tiny-gen"}) {
    auto p = preset(name);
    p.config.epochs = 2;
    for (double threshold : {0.1, 0.5, 0.9}) {
      p.config.threshold = threshold;
      auto m = build_classifier(p.spec, p.config);
      fine_tune(m, s.train, {}, p.config);
      const auto preds = predict_proba(m, s.val);
      ASSERT_EQ(preds.size(), s.val.size());
      for (std::size_t i = 0; i < preds.size(); ++i) {
        EXPECT_EQ(preds[i].id, s.val[i].id);
        EXPECT_GE(preds[i].p_positive, 0.0);
        EXPECT_LE(preds[i].p_positive, 1.0);
        EXPECT_EQ(preds[i].pred_label, preds[i].p_positive >= threshold ? 1 : 0);
        const auto probs = m.backbone().class_probabilities(s.val[i]);
        EXPECT_NEAR(probs[0] + probs[1], 1.0, 1e-6);
      }
    }
  }
  const auto p = preset("stub-tiny");
  EXPECT_TRUE(predict_proba(build_classifier(p.spec, p.config), {}).empty());
}

TEST(ExportLoad, RoundTripPredictsIdentically) {
  TempDir dir;
  const auto s = separable_split(25, 9);  // 50 posts
  const auto all = CorpusView::all(s.corpus);
  ASSERT_EQ(all.size(), 50u);
  for (const auto* name : {"stub-tiny", "stub-tiny-gen"}) {
    auto p = preset(name);
    p.config.epochs = 3;
    auto m = build_classifier(p.spec, p.config);
    fine_tune(m, s.train, s.val, p.config);
    const auto out = dir / name;
    const auto manifest = export_model(m, out);
    EXPECT_EQ(manifest["schema_version"], kModelSchemaVersion);
    const auto loaded = load_model(out);
    EXPECT_EQ(loaded.spec(), m.spec());
    EXPECT_EQ(loaded.config(), m.config());
    EXPECT_EQ(predict_proba(loaded, all), predict_proba(m, all));
    const auto labels = nlohmann::json::parse(read_file(out / "labels.json"));
    EXPECT_EQ(labels["1"], "suicidal");
    EXPECT_EQ(labels["0"], "non-suicidal");
  }
}

TEST(ExportLoad, CorruptionDetected) {
  TempDir dir;
  EXPECT_EQ(code_of([&] { load_model(dir.path()); }), Errc::CorruptManifest);

  const auto p = preset("stub-tiny");
  const auto m = build_classifier(p.spec, p.config);
  const auto out = dir / "model";
  export_model(m, out);

  auto weights = read_file(out / "weights.bin");
  weights[weights.size() / 2] ^= 0x01;
  {
    std::ofstream f(out / "weights.bin", std::ios::binary | std::ios::trunc);
    f << weights;
  }
  EXPECT_EQ(code_of([&] { load_model(out); }), Errc::ChecksumMismatch);

  export_model(m, out);
  auto manifest = nlohmann::json::parse(read_file(out / "manifest.json"));
  manifest["schema_version"] = 99;
  write_file_atomic(out / "manifest.json", manifest.dump());
  EXPECT_EQ(code_of([&] { load_model(out); }), Errc::CorruptManifest);

  write_file_atomic(out / "manifest.json", "{ not json");
  EXPECT_EQ(code_of([&] { load_model(out); }), Errc::CorruptManifest);
}

TEST(Json, ConfigRoundTrip) {
  auto p = preset("mt5");
  p.config.class_weights = true;
  p.config.seed = 1234567890123ULL;
  nlohmann::json j = p.config;
  EXPECT_EQ(j.get<FineTuneConfig>(), p.config);
  nlohmann::json js = p.spec;
  EXPECT_EQ(js.get<BackboneSpec>(), p.spec);
  TrainingTrace t{{{1, 0.5, 0.75}, {2, 0.25, std::nullopt}}, 3.0};
  nlohmann::json jt = t;
  EXPECT_EQ(jt.get<TrainingTrace>(), t);
}
