#include "poly/translate.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "poly/common.hpp"
#include "poly/error.hpp"

namespace poly::mt {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string path_safe(std::string_view s) {
  std::string out;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
  }
  return out.empty() ? "_" : out;
}

json record_json(const TranslationRecord& r) {
  return json{{"source_id", r.source_id}, {"src_lang", r.src_lang}, {"tgt_lang", r.tgt_lang},
              {"src_text", r.src_text},   {"tgt_text", r.tgt_text}, {"engine_id", r.engine_id},
              {"created_at", r.created_at}, {"cache_hit", r.cache_hit}};
}

}  // namespace

fs::path TranslationCache::path_for(const std::string& engine_id, const std::string& src,
                                    const std::string& tgt, const std::string& src_text) const {
  return root_ / path_safe(engine_id) / fmt::format("{}-{}", path_safe(src), path_safe(tgt)) /
         (sha256_hex(src_text) + ".txt");
}

std::optional<std::string> TranslationCache::get(const std::string& engine_id,
                                                 const std::string& src, const std::string& tgt,
                                                 const std::string& src_text) const {
  const auto p = path_for(engine_id, src, tgt, src_text);
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) return std::nullopt;
  auto text = read_file(p);
  if (text.empty()) return std::nullopt;
  return text;
}

void TranslationCache::put(const std::string& engine_id, const std::string& src,
                           const std::string& tgt, const std::string& src_text,
                           const std::string& tgt_text) const {
  // Cheap to recompute, and get() treats an empty file as a miss.
  write_file_atomic(path_for(engine_id, src, tgt, src_text), tgt_text, false);
}

fs::path cache_root(const fs::path& fallback) {
  if (const char* env = std::getenv("POLY_CACHE_DIR"); env && *env) return env;
  return fallback;
}

std::string record_to_jsonl(const TranslationRecord& r) { return record_json(r).dump() + "\n"; }

std::vector<TranslationRecord> read_provenance(const fs::path& path) {
  std::vector<TranslationRecord> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    if (j.value("status", std::string("ok")) != "ok") continue;
    out.push_back({j.at("source_id"), j.at("src_lang"), j.at("tgt_lang"), j.at("src_text"),
                   j.at("tgt_text"), j.at("engine_id"), j.at("created_at"),
                   j.value("cache_hit", false)});
  }
  return out;
}

Corpus translate_corpus(const Corpus& c, const std::vector<std::string>& targets,
                        TranslationEngine& engine, const TranslateOptions& opts,
                        TranslateStats* stats) {
  TranslateStats local;
  TranslateStats& st = stats ? *stats : local;
  if (c.empty() || targets.empty()) return c;
  if (c.languages.size() != 1) {
    throw Error(Errc::Config, fmt::format("translation needs a single source language, corpus has {}",
                                          c.languages.size()));
  }
  const std::string src = *c.languages.begin();
  const std::string engine_id = engine.engine_id();

  std::vector<std::string> tgts;
  for (const auto& t : targets) {
    if (t == src || std::find(tgts.begin(), tgts.end(), t) != tgts.end()) continue;
    if (!engine.supports(src, t)) {
      throw Error(Errc::UnsupportedPair, fmt::format("{} does not translate {}->{}", engine_id, src, t));
    }
    tgts.push_back(t);
  }

  const TranslationCache cache(opts.cache_dir);
  const std::size_t n = c.posts.size();
  // outputs[t][i]: translation of post i into tgts[t]
  std::vector<std::vector<std::optional<std::string>>> outputs(
      tgts.size(), std::vector<std::optional<std::string>>(n));
  std::vector<std::vector<bool>> hit(tgts.size(), std::vector<bool>(n, false));

  struct Batch {
    std::size_t target;
    std::vector<std::size_t> posts;
    // posts left untranslated, with the error that stopped them
    std::vector<std::pair<std::size_t, std::exception_ptr>> failures;
  };
  std::vector<Batch> batches;
  for (std::size_t t = 0; t < tgts.size(); ++t) {
    Batch current{t, {}, {}};
    for (std::size_t i = 0; i < n; ++i) {
      if (auto cached = cache.get(engine_id, src, tgts[t], c.posts[i].text)) {
        outputs[t][i] = std::move(*cached);
        hit[t][i] = true;
        ++st.cache_hits;
        continue;
      }
      current.posts.push_back(i);
      if (current.posts.size() == std::max<std::size_t>(1, opts.batch_size)) {
        batches.push_back(std::move(current));
        current = Batch{t, {}, {}};
      }
    }
    if (!current.posts.empty()) batches.push_back(std::move(current));
  }
  st.batches_sent += batches.size();

  auto send = [&](std::size_t target, const std::vector<std::size_t>& ids) {
    std::vector<std::string> texts;
    texts.reserve(ids.size());
    for (auto i : ids) texts.push_back(c.posts[i].text);
    auto out = translate_batch(engine, texts, src, tgts[target], opts.retry);
    for (std::size_t k = 0; k < out.size(); ++k) {
      if (trim(out[k]).empty()) {
        throw Error(Errc::EngineFailure, fmt::format("empty translation for '{}'", c.posts[ids[k]].id));
      }
    }
    for (std::size_t k = 0; k < out.size(); ++k) {
      const auto i = ids[k];
      cache.put(engine_id, src, tgts[target], c.posts[i].text, out[k]);
      outputs[target][i] = std::move(out[k]);
    }
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t b = next.fetch_add(1); b < batches.size(); b = next.fetch_add(1)) {
      auto& batch = batches[b];
      try {
        send(batch.target, batch.posts);
      } catch (const Error& e) {
        if (e.code() != Errc::EngineFailure || batch.posts.size() == 1) {
          for (auto i : batch.posts) batch.failures.emplace_back(i, std::current_exception());
          continue;
        }
        // isolate the posts that keep failing instead of losing the whole batch
        for (auto i : batch.posts) {
          try {
            send(batch.target, {i});
          } catch (...) {
            batch.failures.emplace_back(i, std::current_exception());
          }
        }
      } catch (...) {
        for (auto i : batch.posts) batch.failures.emplace_back(i, std::current_exception());
      }
    }
  };
  const std::size_t n_workers =
      std::min<std::size_t>(std::max<std::size_t>(1, opts.max_concurrent_batches), batches.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  const std::string now = utc_timestamp();
  std::string sidecar;
  std::exception_ptr first_error;
  for (const auto& batch : batches) {
    for (const auto& [i, error] : batch.failures) {
      std::string what;
      try {
        std::rethrow_exception(error);
      } catch (const Error& e) {
        if (e.code() != Errc::EngineFailure) throw;
        what = e.what();
      }
      if (!first_error) first_error = error;
      const auto& p = c.posts[i];
      const auto& tgt = tgts[batch.target];
      st.failed_ids.push_back(fmt::format("{}.{}", p.source_id, tgt));
      sidecar += json{{"status", "failed"}, {"source_id", p.source_id}, {"src_lang", src},
                      {"tgt_lang", tgt},   {"src_text", p.text},      {"engine_id", engine_id},
                      {"created_at", now}, {"error", what}}
                     .dump() +
                 "\n";
      if (opts.skip_failed) std::cerr << "skipped " << p.id << " -> " << tgt << ": " << what << '\n';
    }
  }

  std::vector<Post> posts = c.posts;
  posts.reserve(n * (1 + tgts.size()));
  for (std::size_t t = 0; t < tgts.size(); ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!outputs[t][i]) continue;
      const auto& p = c.posts[i];
      posts.push_back({fmt::format("{}.{}", p.source_id, tgts[t]), p.source_id, tgts[t],
                       *outputs[t][i], p.label});
      if (!hit[t][i]) ++st.translated;
      sidecar += record_to_jsonl(
          {p.source_id, src, tgts[t], p.text, *outputs[t][i], engine_id, now, hit[t][i]});
    }
  }
  if (opts.provenance_path) write_file_atomic(*opts.provenance_path, sidecar);
  if (first_error && !opts.skip_failed) std::rethrow_exception(first_error);

  return Corpus::from_posts(std::move(posts), c.provenance);
}

}  // namespace poly::mt
