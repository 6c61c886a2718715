#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace poly {

/// Seeded generator used everywhere randomness matters. mt19937_64 output is
/// fixed by the standard; the distributions below are ours so results do not
/// depend on the standard library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, bound), unbiased.
  std::uint64_t below(std::uint64_t bound);

  /// Uniform real in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

std::uint64_t fnv1a64(std::string_view bytes) noexcept;

bool is_valid_utf8(std::string_view s) noexcept;

std::string trim(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file, flushes, then renames over `path`, so a
/// reader sees either the previous content or the new one.
/// `durable` adds an fsync before the rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content,
                       bool durable = true);

/// Lowercased word tokens. ASCII punctuation and whitespace separate tokens
/// and are dropped; bytes >= 0x80 (non-ASCII UTF-8) stay inside words.
std::vector<std::string> word_tokens(std::string_view text);

/// UTC timestamp, ISO-8601 with seconds.
std::string utc_timestamp();

/// Shortest text that parses back to the same double.
std::string format_exact(double value);

}  // namespace poly
