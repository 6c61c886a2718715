#include "poly/perplexity.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "poly/common.hpp"
#include "poly/error.hpp"

namespace poly::mt {

using nlohmann::json;

UniformScorer::UniformScorer(std::size_t vocabulary_size, std::string language)
    : vocab_(vocabulary_size), language_(std::move(language)) {
  if (vocab_ == 0) throw Error(Errc::Config, "uniform scorer needs a non-empty vocabulary");
}

std::string UniformScorer::lm_id() const { return fmt::format("uniform-{}", vocab_); }

std::vector<double> UniformScorer::token_nll(std::string_view text) const {
  return std::vector<double>(word_tokens(text).size(), std::log(static_cast<double>(vocab_)));
}

UnigramScorer::UnigramScorer(const std::vector<std::string>& reference_texts,
                             std::string language, std::string id)
    : language_(std::move(language)), id_(std::move(id)) {
  for (const auto& t : reference_texts) {
    for (auto& tok : word_tokens(t)) {
      ++counts_[tok];
      ++total_;
    }
  }
}

std::vector<double> UnigramScorer::token_nll(std::string_view text) const {
  const double denom = static_cast<double>(total_ + counts_.size() + 1);
  std::vector<double> out;
  for (const auto& tok : word_tokens(text)) {
    auto it = counts_.find(tok);
    const double count = it == counts_.end() ? 0.0 : static_cast<double>(it->second);
    out.push_back(-std::log((count + 1.0) / denom));
  }
  return out;
}

namespace {

// Neumaier-compensated sum; keeps uniform-model perplexity exact to ~1e-15.
struct CompensatedSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + comp; }
};

struct TextScore {
  double nll = 0.0;
  std::size_t tokens = 0;
};

std::vector<TextScore> score_texts(const LanguageModelScorer& scorer,
                                   const std::vector<const Post*>& posts) {
  std::vector<TextScore> out(posts.size());
  const std::size_t n_threads = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, 8);
  const std::size_t chunk = (posts.size() + n_threads - 1) / n_threads;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n_threads && w * chunk < posts.size(); ++w) {
    pool.emplace_back([&, w] {
      const std::size_t end = std::min(posts.size(), (w + 1) * chunk);
      for (std::size_t i = w * chunk; i < end; ++i) {
        CompensatedSum s;
        const auto nll = scorer.token_nll(posts[i]->text);
        for (double v : nll) s.add(v);
        out[i] = {s.value(), nll.size()};
      }
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace

PerplexityReport score_translation_quality(const Corpus& c, const ScorerMap& scorers) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const Post*>> by_lang;
  for (const auto& p : c.posts) {
    auto& bucket = by_lang[p.lang];
    if (bucket.empty()) order.push_back(p.lang);
    bucket.push_back(&p);
  }
  for (const auto& [lang, scorer] : scorers) {
    if (!by_lang.contains(lang)) {
      throw Error(Errc::EmptyLanguage, fmt::format("no '{}' posts to score", lang));
    }
  }

  PerplexityReport rep;
  for (const auto& lang : order) {
    auto it = scorers.find(lang);
    if (it == scorers.end() || !it->second) {
      rep.skipped.push_back(lang);
      continue;
    }
    const auto& posts = by_lang[lang];
    const auto scores = score_texts(*it->second, posts);
    CompensatedSum total;
    std::size_t tokens = 0;
    for (const auto& s : scores) {  // input order, so the result is thread-count independent
      total.add(s.nll);
      tokens += s.tokens;
    }
    if (tokens == 0) {
      throw Error(Errc::EmptyLanguage, fmt::format("'{}' texts produced no tokens", lang));
    }
    rep.entries.push_back({lang, it->second->lm_id(), posts.size(), tokens,
                           std::exp(total.value() / static_cast<double>(tokens))});
  }
  return rep;
}

std::string report_to_json(const PerplexityReport& r) {
  json entries = json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"lang", e.lang},
                       {"lm_id", e.lm_id},
                       {"n_texts", e.n_texts},
                       {"n_tokens", e.n_tokens},
                       {"perplexity", e.perplexity}});
  }
  return json{{"entries", entries}, {"skipped", r.skipped}}.dump(2) + "\n";
}

PerplexityReport report_from_json(std::string_view text) {
  try {
    const auto j = json::parse(text);
    PerplexityReport r;
    for (const auto& e : j.at("entries")) {
      r.entries.push_back({e.at("lang"), e.at("lm_id"), e.at("n_texts"), e.at("n_tokens"),
                           e.at("perplexity")});
    }
    if (j.contains("skipped")) r.skipped = j.at("skipped").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptRecord, fmt::format("perplexity report: {}", e.what()));
  }
}

}  // namespace poly::mt
