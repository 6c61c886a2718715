#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace poly::mt {

/// External machine-translation backend. Implementations must be safe to call
/// from several threads at once; translate_corpus keeps batches in flight
/// concurrently.
class TranslationEngine {
 public:
  virtual ~TranslationEngine() = default;

  /// Stable identifier; part of the cache key.
  virtual std::string engine_id() const = 0;

  virtual bool supports(std::string_view src, std::string_view tgt) const = 0;

  /// Exactly one output per input, order preserved. Throws
  /// Error(EngineFailure) for transient failures, Error(UnsupportedPair)
  /// otherwise.
  virtual std::vector<std::string> translate_batch(const std::vector<std::string>& texts,
                                                   std::string_view src, std::string_view tgt) = 0;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds base_delay{1000};
  double factor = 2.0;
  /// Replaceable so tests do not sleep.
  std::function<void(std::chrono::milliseconds)> sleep;

  std::chrono::milliseconds delay_before(int attempt) const;  // attempt >= 1
};

/// Calls engine.translate_batch with bounded retries on EngineFailure and
/// checks the one-output-per-input contract. UnsupportedPair is not retried.
std::vector<std::string> translate_batch(TranslationEngine& engine,
                                         const std::vector<std::string>& texts,
                                         std::string_view src, std::string_view tgt,
                                         const RetryPolicy& retry = {});

/// Deterministic in-process engine for tests and dry runs: identity, or a
/// dictionary lookup that falls back to identity. Supports fault injection.
class StubEngine final : public TranslationEngine {
 public:
  explicit StubEngine(std::string id = "stub-identity") : id_(std::move(id)) {}
  StubEngine(std::string id, std::map<std::string, std::string> dictionary)
      : id_(std::move(id)), dictionary_(std::move(dictionary)) {}

  std::string engine_id() const override { return id_; }
  bool supports(std::string_view src, std::string_view tgt) const override;
  std::vector<std::string> translate_batch(const std::vector<std::string>& texts,
                                           std::string_view src,
                                           std::string_view tgt) override;

  /// Restrict to the listed (src, tgt) pairs; empty means everything.
  void restrict_pairs(std::set<std::pair<std::string, std::string>> pairs) {
    pairs_ = std::move(pairs);
  }
  /// The next `n` calls throw EngineFailure.
  void fail_next(int n) { pending_failures_ = n; }
  /// Every call whose batch contains this text fails.
  void always_fail_on(std::string text);
  /// Tag outputs as "[tgt] text" instead of identity.
  void set_tagging(bool on) { tagging_ = on; }

  int calls() const { return calls_.load(); }
  int texts_translated() const { return texts_.load(); }

 private:
  std::string id_;
  std::map<std::string, std::string> dictionary_;
  std::set<std::pair<std::string, std::string>> pairs_;
  std::set<std::string> poison_;
  mutable std::mutex mu_;
  std::atomic<int> pending_failures_{0};
  std::atomic<int> calls_{0};
  std::atomic<int> texts_{0};
  bool tagging_ = false;
};

/// Client for a translation service speaking
///   POST /translate {"src","tgt","texts":[...]} -> {"texts":[...]}.
/// Any non-200 reply or transport error is a transient failure.
class HttpEngine final : public TranslationEngine {
 public:
  HttpEngine(std::string base_url, std::string id = "http",
             std::chrono::seconds timeout = std::chrono::seconds(120));

  std::string engine_id() const override { return id_; }
  bool supports(std::string_view, std::string_view) const override { return true; }
  std::vector<std::string> translate_batch(const std::vector<std::string>& texts,
                                           std::string_view src,
                                           std::string_view tgt) override;

 private:
  std::string base_url_;
  std::string id_;
  std::chrono::seconds timeout_;
};

/// Runs a local command per batch: the request JSON (same body as the HTTP
/// protocol) arrives on stdin and the response JSON is read from stdout. A
/// non-zero exit status is a transient failure.
class SubprocessEngine final : public TranslationEngine {
 public:
  SubprocessEngine(std::string command, std::string id = "subprocess");

  std::string engine_id() const override { return id_; }
  bool supports(std::string_view, std::string_view) const override { return true; }
  std::vector<std::string> translate_batch(const std::vector<std::string>& texts,
                                           std::string_view src,
                                           std::string_view tgt) override;

 private:
  std::string command_;
  std::string id_;
};

/// Shared by the HTTP and subprocess adapters.
std::string encode_request(const std::vector<std::string>& texts, std::string_view src,
                           std::string_view tgt);
std::vector<std::string> decode_response(std::string_view body);

}  // namespace poly::mt
