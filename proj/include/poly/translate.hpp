#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "poly/corpus.hpp"
#include "poly/engine.hpp"

namespace poly::mt {

struct TranslationRecord {
  std::string source_id;
  std::string src_lang;
  std::string tgt_lang;
  std::string src_text;
  std::string tgt_text;
  std::string engine_id;
  std::string created_at;
  bool cache_hit = false;
};

/// Content-addressed store: <root>/<engine_id>/<src>-<tgt>/<sha256(src_text)>.txt
/// Entries never expire.
class TranslationCache {
 public:
  explicit TranslationCache(std::filesystem::path root) : root_(std::move(root)) {}

  std::filesystem::path path_for(const std::string& engine_id, const std::string& src,
                                 const std::string& tgt, const std::string& src_text) const;
  std::optional<std::string> get(const std::string& engine_id, const std::string& src,
                                 const std::string& tgt, const std::string& src_text) const;
  /// Atomic (temp file + rename).
  void put(const std::string& engine_id, const std::string& src, const std::string& tgt,
           const std::string& src_text, const std::string& tgt_text) const;

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

/// Cache root: $POLY_CACHE_DIR when set, else `fallback`.
std::filesystem::path cache_root(const std::filesystem::path& fallback);

struct TranslateOptions {
  std::filesystem::path cache_dir = ".poly-cache";
  /// JSON-lines sidecar of TranslationRecords; skipped when unset.
  std::optional<std::filesystem::path> provenance_path;
  /// Drop posts whose batch still fails after retries instead of aborting.
  bool skip_failed = false;
  std::size_t batch_size = 32;
  std::size_t max_concurrent_batches = 4;
  RetryPolicy retry;
};

struct TranslateStats {
  std::size_t cache_hits = 0;
  std::size_t translated = 0;
  std::size_t batches_sent = 0;
  std::vector<std::string> failed_ids;  // "{source_id}.{tgt}" ids that were skipped
};

/// Returns the input posts followed, per target in the given order, by one
/// translation per post with id "{source_id}.{tgt}", the source_id kept and
/// the label inherited. Targets equal to the source language are skipped.
Corpus translate_corpus(const Corpus& c, const std::vector<std::string>& targets,
                        TranslationEngine& engine, const TranslateOptions& opts,
                        TranslateStats* stats = nullptr);

std::string record_to_jsonl(const TranslationRecord& r);
std::vector<TranslationRecord> read_provenance(const std::filesystem::path& path);

}  // namespace poly::mt
