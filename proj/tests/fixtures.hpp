#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include <fmt/format.h>

#include "poly/common.hpp"
#include "poly/corpus.hpp"

namespace poly::fx {

namespace fs = std::filesystem;

/// Directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            fmt::format("poly-test-{}-{}", ::getpid(), counter.fetch_add(1));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string source_name(std::size_t i) { return fmt::format("s{:05}", i); }

/// Spanish-only corpus of n sources, the first `positives` labeled 1. Text
/// content is arbitrary but unique.
inline Corpus labeled_sources(std::size_t n, std::size_t positives) {
  std::vector<Post> posts;
  posts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = source_name(i);
    posts.push_back({id, id, "es", fmt::format("texto numero {}", i), i < positives ? 1 : 0});
  }
  return Corpus::from_posts(std::move(posts), "synthetic");
}

/// Same sources mirrored into every language in `langs` (first one is the
/// original), as an augmented corpus would look.
inline Corpus parallel_corpus(std::size_t n, std::size_t positives, const std::vector<std::string>& langs) {
  std::vector<Post> posts;
  for (const auto& lang : langs) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto sid = source_name(i);
      const auto id = lang == langs.front() ? sid : sid + "." + lang;
      posts.push_back({id, sid, lang, fmt::format("[{}] texto numero {}", lang, i), i < positives ? 1 : 0});
    }
  }
  return Corpus::from_posts(std::move(posts), "synthetic");
}

/// Bilingual es/en corpus where every positive contains a marker word and no
/// negative does. Filler words are drawn from a shared pool.
inline Corpus separable_corpus(std::size_t n_sources, std::uint64_t seed) {
  static const std::vector<std::string> es_fill = {
      "hoy", "casa", "sol", "cafe", "amigos", "trabajo", "calle", "perro", "libro", "tarde",
      "lluvia", "playa", "musica", "cena", "tren", "ciudad", "noche", "partido", "clase", "mercado"};
  static const std::vector<std::string> en_fill = {
      "today", "house", "sun", "coffee", "friends", "work", "street", "dog", "book", "afternoon",
      "rain", "beach", "music", "dinner", "train", "city", "night", "match", "class", "market"};
  Rng rng(seed);
  std::vector<Post> es, en;
  for (std::size_t i = 0; i < n_sources; ++i) {
    const int label = (i % 2 == 0) ? 1 : 0;
    const std::size_t len = 4 + rng.below(4);
    std::string es_text, en_text;
    for (std::size_t w = 0; w < len; ++w) {
      const auto k = rng.below(es_fill.size());
      es_text += (w ? " " : "") + es_fill[k];
      en_text += (w ? " " : "") + en_fill[k];
    }
    if (label == 1) {
      es_text += " quiero morir";
      en_text += " want to die";
    }
    const auto sid = source_name(i);
    es.push_back({sid, sid, "es", es_text, label});
    en.push_back({sid + ".en", sid, "en", en_text, label});
  }
  es.insert(es.end(), en.begin(), en.end());
  return Corpus::from_posts(std::move(es), "separable");
}

}  // namespace poly::fx
