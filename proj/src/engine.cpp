#include "poly/engine.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include <sys/wait.h>
#include <unistd.h>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "poly/error.hpp"

namespace poly::mt {

using nlohmann::json;

std::chrono::milliseconds RetryPolicy::delay_before(int attempt) const {
  double ms = static_cast<double>(base_delay.count());
  for (int i = 1; i < attempt; ++i) ms *= factor;
  return std::chrono::milliseconds(static_cast<long long>(ms));
}

std::vector<std::string> translate_batch(TranslationEngine& engine,
                                         const std::vector<std::string>& texts,
                                         std::string_view src, std::string_view tgt,
                                         const RetryPolicy& retry) {
  if (texts.empty()) throw Error(Errc::EmptyInput, "translate_batch needs at least one text");
  if (!engine.supports(src, tgt)) {
    throw Error(Errc::UnsupportedPair,
                fmt::format("{} does not translate {}->{}", engine.engine_id(), src, tgt));
  }
  std::string last_error;
  for (int attempt = 1; attempt <= retry.attempts; ++attempt) {
    try {
      auto out = engine.translate_batch(texts, src, tgt);
      if (out.size() != texts.size()) {
        throw Error(Errc::EngineFailure, fmt::format("engine returned {} texts for {} inputs",
                                                     out.size(), texts.size()));
      }
      return out;
    } catch (const Error& e) {
      if (e.code() != Errc::EngineFailure) throw;
      last_error = e.what();
    }
    if (attempt < retry.attempts) {
      const auto delay = retry.delay_before(attempt);
      if (retry.sleep) {
        retry.sleep(delay);
      } else {
        std::this_thread::sleep_for(delay);
      }
    }
  }
  throw Error(Errc::EngineFailure, fmt::format("{} attempts failed; last: {}", retry.attempts,
                                               last_error));
}

// --- stub ------------------------------------------------------------------

bool StubEngine::supports(std::string_view src, std::string_view tgt) const {
  return pairs_.empty() || pairs_.contains({std::string(src), std::string(tgt)});
}

void StubEngine::always_fail_on(std::string text) {
  std::lock_guard lock(mu_);
  poison_.insert(std::move(text));
}

std::vector<std::string> StubEngine::translate_batch(const std::vector<std::string>& texts,
                                                     std::string_view src,
                                                     std::string_view tgt) {
  calls_.fetch_add(1);
  if (!supports(src, tgt)) {
    throw Error(Errc::UnsupportedPair, fmt::format("stub has no {}->{} pair", src, tgt));
  }
  if (int pending = pending_failures_.load(); pending > 0) {
    if (pending_failures_.compare_exchange_strong(pending, pending - 1)) {
      throw Error(Errc::EngineFailure, "injected transient failure");
    }
  }
  {
    std::lock_guard lock(mu_);
    for (const auto& t : texts) {
      if (poison_.contains(t)) throw Error(Errc::EngineFailure, "injected permanent failure");
    }
  }
  std::vector<std::string> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    if (auto it = dictionary_.find(t); it != dictionary_.end()) {
      out.push_back(it->second);
    } else if (tagging_) {
      out.push_back(fmt::format("[{}] {}", tgt, t));
    } else {
      out.push_back(t);
    }
  }
  texts_.fetch_add(static_cast<int>(texts.size()));
  return out;
}

// --- wire format -------------------------------------------------------------

std::string encode_request(const std::vector<std::string>& texts, std::string_view src,
                           std::string_view tgt) {
  return json{{"src", src}, {"tgt", tgt}, {"texts", texts}}.dump();
}

std::vector<std::string> decode_response(std::string_view body) {
  try {
    const auto doc = json::parse(body);
    return doc.at("texts").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(Errc::EngineFailure, fmt::format("bad response body: {}", e.what()));
  }
}

// --- http ----------------------------------------------------------------------

HttpEngine::HttpEngine(std::string base_url, std::string id, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), id_(std::move(id)), timeout_(timeout) {}

std::vector<std::string> HttpEngine::translate_batch(const std::vector<std::string>& texts,
                                                     std::string_view src,
                                                     std::string_view tgt) {
  // A client per call: httplib::Client is not safe to share across threads.
  httplib::Client client(base_url_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  auto res = client.Post("/translate", encode_request(texts, src, tgt), "application/json");
  if (!res) {
    throw Error(Errc::EngineFailure,
                fmt::format("POST {}/translate: {}", base_url_, httplib::to_string(res.error())));
  }
  if (res->status != 200) {
    throw Error(Errc::EngineFailure, fmt::format("POST {}/translate: HTTP {}", base_url_, res->status));
  }
  return decode_response(res->body);
}

// --- subprocess ----------------------------------------------------------------

SubprocessEngine::SubprocessEngine(std::string command, std::string id)
    : command_(std::move(command)), id_(std::move(id)) {}

std::vector<std::string> SubprocessEngine::translate_batch(const std::vector<std::string>& texts,
                                                           std::string_view src,
                                                           std::string_view tgt) {
  auto tmpl = (std::filesystem::temp_directory_path() / "poly-mt-XXXXXX").string();
  const int fd = ::mkstemp(tmpl.data());
  if (fd < 0) throw Error(Errc::Io, "mkstemp failed");
  const std::string request = encode_request(texts, src, tgt);
  const bool wrote = ::write(fd, request.data(), request.size()) ==
                     static_cast<ssize_t>(request.size());
  ::close(fd);
  if (!wrote) {
    std::filesystem::remove(tmpl);
    throw Error(Errc::Io, "cannot stage subprocess request");
  }

  const std::string cmd = fmt::format("{} < '{}'", command_, tmpl);
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) {
    std::filesystem::remove(tmpl);
    throw Error(Errc::EngineFailure, fmt::format("cannot start '{}'", command_));
  }
  std::string body;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) body.append(buf, n);
  const int status = ::pclose(pipe);
  std::filesystem::remove(tmpl);
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw Error(Errc::EngineFailure, fmt::format("'{}' exited with status {}", command_, status));
  }
  return decode_response(body);
}

}  // namespace poly::mt
