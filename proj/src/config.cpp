#include "poly/config.hpp"

#include <charconv>
#include <map>

#include <fmt/format.h>

#include "poly/common.hpp"
#include "poly/error.hpp"

namespace poly {

namespace fs = std::filesystem;

void ExperimentConfig::use_preset(std::string_view name) {
  const auto p = clf::preset(name);
  backbone_name = std::string(name);
  backbone = p.spec;
  const auto seed = finetune.seed;
  finetune = p.config;
  finetune.seed = seed;
}

namespace {

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw Error(Errc::Config, fmt::format("{}: '{}' is not a number", key, v));
}

template <typename Int>
Int to_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw Error(Errc::Config, fmt::format("{}: '{}' is not an integer", key, v));
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(Errc::Config, fmt::format("{}: '{}' is not a boolean", key, v));
}

std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  for (auto& item : split(v, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::Config, fmt::format("line {}: expected 'key = value'", line_no));
    }
    kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }

  ExperimentConfig cfg;
  for (const auto& [k, v] : kv) {
    if (k == "backbone") cfg.use_preset(v);
  }
  for (const auto& [k, v] : kv) {
    auto& ft = cfg.finetune;
    auto& bb = cfg.backbone;
    if (k == "backbone") continue;
    else if (k == "corpus_path") cfg.corpus_path = v;
    else if (k == "languages") cfg.languages = to_list(v);
    else if (k == "backbone.family") bb.family = clf::family_from_string(v);
    else if (k == "backbone.checkpoint_id") bb.checkpoint_id = v;
    else if (k == "backbone.max_sequence_tokens") bb.max_sequence_tokens = to_int<int>(k, v);
    else if (k == "backbone.num_labels") bb.num_labels = to_int<int>(k, v);
    else if (k == "finetune.learning_rate") ft.learning_rate = to_double(k, v);
    else if (k == "finetune.batch_size") ft.batch_size = to_int<int>(k, v);
    else if (k == "finetune.epochs") ft.epochs = to_int<int>(k, v);
    else if (k == "finetune.dropout") ft.dropout = to_double(k, v);
    else if (k == "finetune.weight_decay") ft.weight_decay = to_double(k, v);
    else if (k == "finetune.warmup_proportion") ft.warmup_proportion = to_double(k, v);
    else if (k == "finetune.optimizer") ft.optimizer = v;
    else if (k == "finetune.seed") ft.seed = to_int<std::uint64_t>(k, v);
    else if (k == "finetune.threshold") ft.threshold = to_double(k, v);
    else if (k == "finetune.class_weights") ft.class_weights = to_bool(k, v);
    else if (k == "split.ratio") cfg.split_ratio = to_double(k, v);
    else if (k == "split.seed") cfg.split_seed = to_int<std::uint64_t>(k, v);
    else if (k == "outputs") cfg.outputs = v;
    else if (k == "test_corpus_path") {
      if (v.empty()) {
        cfg.test_corpus_path.reset();
      } else {
        cfg.test_corpus_path = fs::path(v);
      }
    }
    else if (k == "crossval.k") cfg.crossval_k = to_int<int>(k, v);
    else if (k == "crossval.stratified") cfg.crossval_stratified = to_bool(k, v);
    else throw Error(Errc::Config, fmt::format("unknown key '{}'", k));
  }
  cfg.finetune.validate();
  if (cfg.languages.empty()) throw Error(Errc::Config, "languages must not be empty");
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) {
    throw Error(Errc::Config, fmt::format("config not found: {}", path.string()));
  }
  auto cfg = parse_config(read_file(path));
  const auto base = path.parent_path();
  auto resolve = [&](fs::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  resolve(cfg.corpus_path);
  resolve(cfg.outputs);
  if (cfg.test_corpus_path) resolve(*cfg.test_corpus_path);
  return cfg;
}

std::string format_config(const ExperimentConfig& c) {
  std::string langs;
  for (std::size_t i = 0; i < c.languages.size(); ++i) {
    if (i) langs += ',';
    langs += c.languages[i];
  }
  const auto& ft = c.finetune;
  const auto& bb = c.backbone;
  std::string out;
  auto line = [&](std::string_view k, const std::string& v) { out += fmt::format("{} = {}\n", k, v); };
  line("corpus_path", c.corpus_path.string());
  line("languages", langs);
  line("backbone", c.backbone_name);
  line("backbone.family", std::string(clf::to_string(bb.family)));
  line("backbone.checkpoint_id", bb.checkpoint_id);
  line("backbone.max_sequence_tokens", std::to_string(bb.max_sequence_tokens));
  line("backbone.num_labels", std::to_string(bb.num_labels));
  line("finetune.learning_rate", format_exact(ft.learning_rate));
  line("finetune.batch_size", std::to_string(ft.batch_size));
  line("finetune.epochs", std::to_string(ft.epochs));
  line("finetune.dropout", format_exact(ft.dropout));
  line("finetune.weight_decay", format_exact(ft.weight_decay));
  line("finetune.warmup_proportion", format_exact(ft.warmup_proportion));
  line("finetune.optimizer", ft.optimizer);
  line("finetune.seed", std::to_string(ft.seed));
  line("finetune.threshold", format_exact(ft.threshold));
  line("finetune.class_weights", ft.class_weights ? "true" : "false");
  line("split.ratio", format_exact(c.split_ratio));
  line("split.seed", std::to_string(c.split_seed));
  line("outputs", c.outputs.string());
  line("test_corpus_path", c.test_corpus_path ? c.test_corpus_path->string() : "");
  line("crossval.k", std::to_string(c.crossval_k));
  line("crossval.stratified", c.crossval_stratified ? "true" : "false");
  return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
  return sha256_hex(format_config(cfg)).substr(0, 12);
}

}  // namespace poly
