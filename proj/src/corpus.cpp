#include "poly/corpus.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "poly/common.hpp"
#include "poly/csv.hpp"
#include "poly/error.hpp"

namespace poly {

Corpus Corpus::from_posts(std::vector<Post> posts, std::string provenance) {
  Corpus c;
  c.posts = std::move(posts);
  for (const auto& p : c.posts) c.languages.insert(p.lang);
  c.provenance = std::move(provenance);
  return c;
}

CorpusView CorpusView::all(const Corpus& c) {
  CorpusView v;
  v.posts.reserve(c.posts.size());
  for (const auto& p : c.posts) v.posts.push_back(&p);
  return v;
}

const std::set<std::string>& default_languages() {
  static const std::set<std::string> langs{"es", "en", "de", "ca", "pt", "it"};
  return langs;
}

namespace {

std::optional<int> parse_label(std::string_view s, std::size_t row) {
  if (s.empty()) return std::nullopt;
  if (s == "0") return kNegative;
  if (s == "1") return kPositive;
  throw Error(Errc::MalformedRow, fmt::format("row {}: label '{}' not in {{0,1,\"\"}}", row, s));
}

}  // namespace

Corpus parse_corpus(std::string_view text, std::string provenance, const LoadOptions& opts) {
  const auto records = csv::parse(text);
  if (records.empty()) throw Error(Errc::MalformedRow, "row 1: missing header");
  {
    std::string header;
    for (std::size_t i = 0; i < records[0].fields.size(); ++i) {
      if (i) header += ',';
      header += records[0].fields[i];
    }
    if (header != kCorpusHeader) {
      throw Error(Errc::MalformedRow,
                  fmt::format("row 1: expected header '{}', got '{}'", kCorpusHeader, header));
    }
  }

  std::vector<Post> posts;
  posts.reserve(records.size() - 1);
  std::map<std::string, std::size_t> row_of_id;
  std::vector<std::size_t> rows;

  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::size_t row = rec.row;
    if (rec.fields.size() != 5) {
      throw Error(Errc::MalformedRow,
                  fmt::format("row {}: expected 5 columns, got {}", row, rec.fields.size()));
    }
    for (const auto& f : rec.fields) {
      if (!is_valid_utf8(f)) throw Error(Errc::MalformedRow, fmt::format("row {}: invalid UTF-8", row));
    }
    Post p{rec.fields[0], rec.fields[1], rec.fields[2], rec.fields[3],
           parse_label(rec.fields[4], row)};
    if (p.id.empty() || p.source_id.empty()) {
      throw Error(Errc::MalformedRow, fmt::format("row {}: empty id or source_id", row));
    }
    if (!opts.languages.contains(p.lang)) {
      throw Error(Errc::MalformedRow, fmt::format("row {}: language '{}' not configured", row, p.lang));
    }
    if (trim(p.text).empty()) throw Error(Errc::EmptyText, fmt::format("row {}: empty text", row));
    if (auto [it, inserted] = row_of_id.emplace(p.id, row); !inserted) {
      throw Error(Errc::DuplicateId,
                  fmt::format("row {}: id '{}' already used at row {}", row, p.id, it->second));
    }
    posts.push_back(std::move(p));
    rows.push_back(row);
  }

  // Cross-row invariants: label inheritance and one translation per language.
  std::map<std::string, std::size_t> index_of_id;
  for (std::size_t i = 0; i < posts.size(); ++i) index_of_id[posts[i].id] = i;
  std::set<std::pair<std::string, std::string>> source_lang;
  for (std::size_t i = 0; i < posts.size(); ++i) {
    const auto& p = posts[i];
    if (!source_lang.emplace(p.source_id, p.lang).second) {
      throw Error(Errc::MalformedRow, fmt::format("row {}: second '{}' post for source '{}'", rows[i],
                                                  p.lang, p.source_id));
    }
    if (p.is_original()) continue;
    auto src = index_of_id.find(p.source_id);
    if (src != index_of_id.end() && posts[src->second].label != p.label) {
      throw Error(Errc::InconsistentLabel,
                  fmt::format("row {}: label differs from source '{}'", rows[i], p.source_id));
    }
  }
  return Corpus::from_posts(std::move(posts), std::move(provenance));
}

Corpus load_corpus(const std::filesystem::path& path, const LoadOptions& opts) {
  return parse_corpus(read_file(path), path.string(), opts);
}

std::string format_corpus(const Corpus& c) {
  std::string out(kCorpusHeader);
  out += '\n';
  for (const auto& p : c.posts) {
    out += csv::join_row({p.id, p.source_id, p.lang, p.text,
                          p.label ? std::to_string(*p.label) : std::string{}});
  }
  return out;
}

void write_corpus(const Corpus& c, const std::filesystem::path& path) {
  write_file_atomic(path, format_corpus(c));
}

double ValidationReport::positive_proportion() const {
  const auto labeled = positives + negatives;
  return labeled == 0 ? 0.0 : static_cast<double>(positives) / static_cast<double>(labeled);
}

ValidationReport validate_corpus(const Corpus& c) {
  ValidationReport rep;
  std::map<std::string, const Post*> by_id;
  std::set<std::string> langs_seen;
  std::map<std::pair<std::string, std::string>, std::string> first_with_text;
  std::set<std::pair<std::string, std::string>> source_lang;

  auto violate = [&](std::string kind, const Post& p, std::string msg) {
    rep.violations.push_back({std::move(kind), p.id, std::move(msg)});
  };

  for (const auto& p : c.posts) {
    rep.posts_per_language[p.lang]++;
    langs_seen.insert(p.lang);
    if (!p.label) {
      rep.unlabeled++;
    } else if (*p.label == kPositive) {
      rep.positives++;
    } else if (*p.label == kNegative) {
      rep.negatives++;
    } else {
      violate("bad_label", p, fmt::format("label {} not in {{0,1}}", *p.label));
    }
    if (!by_id.emplace(p.id, &p).second) violate("duplicate_id", p, "id appears more than once");
    if (trim(p.text).empty()) violate("empty_text", p, "text is empty after trimming");
    if (!source_lang.emplace(p.source_id, p.lang).second) {
      violate("duplicate_translation", p,
              fmt::format("source '{}' has more than one '{}' post", p.source_id, p.lang));
    }
    auto [it, fresh] = first_with_text.emplace(std::pair{p.lang, p.text}, p.id);
    if (!fresh && it->second != p.id) rep.duplicate_texts.emplace_back(it->second, p.id);
  }
  for (const auto& p : c.posts) {
    if (p.is_original()) continue;
    auto src = by_id.find(p.source_id);
    if (src != by_id.end() && src->second->label != p.label) {
      violate("label_inheritance", p, fmt::format("label differs from source '{}'", p.source_id));
    }
  }
  if (langs_seen != c.languages) {
    rep.violations.push_back(
        {"languages_mismatch", "", "declared language set differs from post languages"});
  }
  return rep;
}

std::set<std::string> source_ids(const Corpus& c) {
  std::set<std::string> ids;
  for (const auto& p : c.posts) ids.insert(p.source_id);
  return ids;
}

std::map<std::string, int> source_labels(const Corpus& c) {
  std::map<std::string, int> labels;
  for (const auto& p : c.posts) {
    if (!p.label) throw Error(Errc::UnlabeledPost, fmt::format("post '{}' has no label", p.id));
    // the original's label wins when present
    if (p.is_original()) {
      labels[p.source_id] = *p.label;
    } else {
      labels.emplace(p.source_id, *p.label);
    }
  }
  return labels;
}

SplitAssignment split_corpus(const Corpus& c, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw Error(Errc::Config, fmt::format("split ratio {} outside (0,1]", ratio));
  }
  const auto labels = source_labels(c);

  std::map<int, std::vector<std::string>> by_class;
  for (const auto& [sid, label] : labels) by_class[label].push_back(sid);

  const auto n = static_cast<double>(labels.size());
  const auto target = static_cast<std::size_t>(std::llround(ratio * n));

  struct Quota {
    int label;
    std::size_t take;
    double frac;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (const auto& [label, ids] : by_class) {
    const double exact = ratio * static_cast<double>(ids.size());
    const auto take = static_cast<std::size_t>(std::floor(exact + 1e-9));
    quotas.push_back({label, std::min(take, ids.size()), exact - static_cast<double>(take)});
    assigned += quotas.back().take;
  }
  auto order = quotas;
  std::stable_sort(order.begin(), order.end(),
                   [](const Quota& a, const Quota& b) { return a.frac > b.frac; });
  for (const auto& q : order) {
    if (assigned >= target) break;
    auto& slot = *std::find_if(quotas.begin(), quotas.end(),
                               [&](const Quota& x) { return x.label == q.label; });
    if (slot.take < by_class[slot.label].size()) {
      ++slot.take;
      ++assigned;
    }
  }

  SplitAssignment split;
  split.seed = seed;
  split.ratio = ratio;
  Rng rng(seed);
  for (const auto& q : quotas) {
    auto ids = by_class[q.label];  // sorted, since labels is an ordered map
    rng.shuffle(ids);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      (i < q.take ? split.train_ids : split.val_ids).insert(ids[i]);
    }
  }
  return split;
}

FoldPartition kfold_partition(const std::set<std::string>& ids, int k, std::uint64_t seed,
                              const std::map<std::string, int>* stratify_by) {
  if (k < 2) throw Error(Errc::TooFewItems, fmt::format("k = {} must be at least 2", k));
  if (ids.size() < static_cast<std::size_t>(k)) {
    throw Error(Errc::TooFewItems, fmt::format("{} items cannot fill {} folds", ids.size(), k));
  }
  Rng rng(seed);
  std::vector<std::string> order;
  order.reserve(ids.size());
  if (stratify_by) {
    std::map<int, std::vector<std::string>> by_class;
    for (const auto& id : ids) {
      auto it = stratify_by->find(id);
      if (it == stratify_by->end()) {
        throw Error(Errc::UnlabeledPost, fmt::format("no label for '{}'", id));
      }
      by_class[it->second].push_back(id);
    }
    for (auto& [label, members] : by_class) {
      rng.shuffle(members);
      order.insert(order.end(), members.begin(), members.end());
    }
  } else {
    order.assign(ids.begin(), ids.end());
    rng.shuffle(order);
  }

  FoldPartition part;
  part.k = k;
  part.seed = seed;
  part.folds.resize(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < order.size(); ++i) {
    part.folds[i % static_cast<std::size_t>(k)].insert(order[i]);
  }
  return part;
}

CorpusView select_posts(const Corpus& c, const std::set<std::string>& ids,
                        const std::set<std::string>& langs) {
  CorpusView v;
  for (const auto& p : c.posts) {
    if (ids.contains(p.source_id) && langs.contains(p.lang)) v.posts.push_back(&p);
  }
  return v;
}

}  // namespace poly
