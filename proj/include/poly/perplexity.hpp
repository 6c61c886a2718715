#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "poly/corpus.hpp"

namespace poly::mt {

/// Monolingual language model used to judge translation fluency. token_nll
/// returns one natural-log negative log-likelihood per token, using the
/// scorer's own deterministic tokenization. Must be safe for concurrent calls.
class LanguageModelScorer {
 public:
  virtual ~LanguageModelScorer() = default;
  virtual std::string lm_id() const = 0;
  virtual std::string language() const = 0;
  virtual std::vector<double> token_nll(std::string_view text) const = 0;
};

/// Every token costs ln(V).
class UniformScorer final : public LanguageModelScorer {
 public:
  UniformScorer(std::size_t vocabulary_size, std::string language);

  std::string lm_id() const override;
  std::string language() const override { return language_; }
  std::vector<double> token_nll(std::string_view text) const override;

 private:
  std::size_t vocab_;
  std::string language_;
};

/// Add-one smoothed unigram model over word tokens, with one extra slot for
/// unseen words.
class UnigramScorer final : public LanguageModelScorer {
 public:
  UnigramScorer(const std::vector<std::string>& reference_texts, std::string language,
                std::string id = "unigram");

  std::string lm_id() const override { return id_; }
  std::string language() const override { return language_; }
  std::vector<double> token_nll(std::string_view text) const override;

 private:
  std::unordered_map<std::string, std::size_t> counts_;
  std::size_t total_ = 0;
  std::string language_;
  std::string id_;
};

struct PerplexityEntry {
  std::string lang;
  std::string lm_id;
  std::size_t n_texts = 0;
  std::size_t n_tokens = 0;
  double perplexity = 0.0;

  friend bool operator==(const PerplexityEntry&, const PerplexityEntry&) = default;
};

struct PerplexityReport {
  std::vector<PerplexityEntry> entries;
  std::vector<std::string> skipped;  // languages present without a scorer

  friend bool operator==(const PerplexityReport&, const PerplexityReport&) = default;
};

using ScorerMap = std::map<std::string, std::shared_ptr<const LanguageModelScorer>>;

/// Per language: exp(sum of token NLLs / number of tokens) over all of that
/// language's texts. Entries follow the order languages first appear in the
/// corpus. Throws EmptyLanguage for a scorer whose language has no posts or
/// no tokens.
PerplexityReport score_translation_quality(const Corpus& c, const ScorerMap& scorers);

std::string report_to_json(const PerplexityReport& r);
PerplexityReport report_from_json(std::string_view text);

}  // namespace poly::mt
