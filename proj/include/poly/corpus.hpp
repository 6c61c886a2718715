#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace poly {

/// Canonical encoding: 1 = suicidal ideation, 0 = not.
inline constexpr int kPositive = 1;
inline constexpr int kNegative = 0;

struct Post {
  std::string id;
  std::string source_id;  // id of the original post; equals id for originals
  std::string lang;
  std::string text;
  std::optional<int> label;

  bool is_original() const { return id == source_id; }
  friend bool operator==(const Post&, const Post&) = default;
};

struct Corpus {
  std::vector<Post> posts;
  std::set<std::string> languages;
  std::string provenance;

  /// Builds a corpus whose language set is derived from the posts.
  static Corpus from_posts(std::vector<Post> posts, std::string provenance = {});

  std::size_t size() const { return posts.size(); }
  bool empty() const { return posts.empty(); }
};

/// Non-owning selection of posts; valid while the source Corpus lives.
struct CorpusView {
  std::vector<const Post*> posts;

  std::size_t size() const { return posts.size(); }
  bool empty() const { return posts.empty(); }
  auto begin() const { return posts.begin(); }
  auto end() const { return posts.end(); }
  const Post& operator[](std::size_t i) const { return *posts[i]; }

  static CorpusView all(const Corpus& c);
};

const std::set<std::string>& default_languages();

struct LoadOptions {
  std::set<std::string> languages = default_languages();
};

inline constexpr std::string_view kCorpusHeader = "id,source_id,lang,text,label";

Corpus parse_corpus(std::string_view text, std::string provenance = {},
                    const LoadOptions& opts = {});
Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& opts = {});

/// Canonical form: header, LF endings, minimal quoting.
std::string format_corpus(const Corpus& c);
void write_corpus(const Corpus& c, const std::filesystem::path& path);

struct Violation {
  std::string kind;  // duplicate_id, empty_text, bad_label, label_inheritance, ...
  std::string post_id;
  std::string message;
};

struct ValidationReport {
  std::map<std::string, std::size_t> posts_per_language;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t unlabeled = 0;
  std::vector<Violation> violations;
  /// Same (lang, text) under distinct ids. Allowed, reported for inspection.
  std::vector<std::pair<std::string, std::string>> duplicate_texts;

  double positive_proportion() const;
};

ValidationReport validate_corpus(const Corpus& c);

struct SplitAssignment {
  std::set<std::string> train_ids;
  std::set<std::string> val_ids;
  std::set<std::string> test_ids;
  std::uint64_t seed = 0;
  double ratio = 0.8;
};

/// Distinct source ids in the corpus.
std::set<std::string> source_ids(const Corpus& c);

/// Label per source id. Throws UnlabeledPost if any post lacks a label.
std::map<std::string, int> source_labels(const Corpus& c);

/// Stratified split over source ids: |train| = round(ratio * n_sources), each
/// class contributing floor(ratio * n_class) plus largest-remainder top-up.
SplitAssignment split_corpus(const Corpus& c, double ratio, std::uint64_t seed);

struct FoldPartition {
  int k = 0;
  std::vector<std::set<std::string>> folds;
  std::uint64_t seed = 0;
};

/// Random partition without replacement into k folds whose sizes differ by at
/// most one. With `stratify_by`, each class is dealt round-robin so every fold
/// holds a near-equal share of it.
FoldPartition kfold_partition(const std::set<std::string>& ids, int k, std::uint64_t seed,
                              const std::map<std::string, int>* stratify_by = nullptr);

CorpusView select_posts(const Corpus& c, const std::set<std::string>& ids,
                        const std::set<std::string>& langs);

}  // namespace poly
