#include "stub_tiny.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <fmt/format.h>

namespace poly::clf::detail {

namespace {

constexpr std::size_t kBuckets = 4096;
constexpr std::size_t kEmbed = 32;
constexpr std::size_t kHidden = 32;

// Label-decoder vocabulary.
enum : std::size_t { kBos = 0, kEos = 1, kTokSuicidal = 2, kTokNon = 3, kTokDash = 4, kTargetVocab = 5 };

// "suicidal" and "non-suicidal", split at the hyphen
const std::vector<std::size_t>& label_sequence(int label) {
  static const std::vector<std::size_t> pos{kTokSuicidal, kEos};
  static const std::vector<std::size_t> neg{kTokNon, kTokDash, kTokSuicidal, kEos};
  return label == kPositive ? pos : neg;
}

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

constexpr char kMagic[8] = {'P', 'S', 'T', 'U', 'B', '0', '0', '1'};

struct Layout {
  std::size_t embed, w1, b1;
  // classifier head
  std::size_t w2, b2;
  // label decoder
  std::size_t dec, wo, bo;
  std::size_t total;
};

Layout make_layout(Family family) {
  Layout l{};
  std::size_t off = 0;
  auto take = [&](std::size_t n) {
    const auto at = off;
    off += n;
    return at;
  };
  l.embed = take(kBuckets * kEmbed);
  l.w1 = take(kHidden * kEmbed);
  l.b1 = take(kHidden);
  if (family == Family::EncoderClassifier) {
    l.w2 = take(2 * kHidden);
    l.b2 = take(2);
  } else {
    l.dec = take(kTargetVocab * kHidden);
    l.wo = take(kTargetVocab * kHidden);
    l.bo = take(kTargetVocab);
  }
  l.total = off;
  return l;
}

void log_softmax(std::span<double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  for (double& v : z) v -= lse;
}

class StubTiny final : public Backbone {
 public:
  StubTiny(const BackboneSpec& spec, const FineTuneConfig& cfg)
      : family_(spec.family),
        max_tokens_(static_cast<std::size_t>(std::max(1, spec.max_sequence_tokens))),
        layout_(make_layout(spec.family)),
        params_(layout_.total, 0.0),
        grads_(layout_.total, 0.0),
        m_(layout_.total, 0.0),
        v_(layout_.total, 0.0),
        decay_(layout_.total, 1),
        dropout_(cfg.dropout) {
    Rng rng(cfg.seed);
    auto fill_normal = [&](std::size_t at, std::size_t n, double scale) {
      for (std::size_t i = 0; i < n; ++i) params_[at + i] = scale * rng.normal();
    };
    auto fill_xavier = [&](std::size_t at, std::size_t rows, std::size_t cols) {
      const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
      for (std::size_t i = 0; i < rows * cols; ++i) params_[at + i] = a * (2.0 * rng.uniform() - 1.0);
    };
    auto no_decay = [&](std::size_t at, std::size_t n) {
      std::fill_n(decay_.begin() + static_cast<std::ptrdiff_t>(at), n, 0);
    };
    fill_normal(layout_.embed, kBuckets * kEmbed, 0.5);
    fill_xavier(layout_.w1, kHidden, kEmbed);
    no_decay(layout_.b1, kHidden);
    if (family_ == Family::EncoderClassifier) {
      fill_xavier(layout_.w2, 2, kHidden);
      no_decay(layout_.b2, 2);
    } else {
      fill_xavier(layout_.dec, kTargetVocab, kHidden);
      fill_xavier(layout_.wo, kTargetVocab, kHidden);
      no_decay(layout_.bo, kTargetVocab);
    }
  }

  void set_dropout(double p) override { dropout_ = p; }
  double dropout() const override { return dropout_; }

  double train_step(std::span<const Post* const> batch, double lr, const FineTuneConfig& cfg,
                    std::array<double, 2> class_weight, Rng& rng) override {
    std::fill(grads_.begin(), grads_.end(), 0.0);
    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const Post* p : batch) {
      const int y = *p->label;
      loss += backprop(*p, y, class_weight[static_cast<std::size_t>(y)], inv_b, rng);
    }
    ++adam_step_;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam_step_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam_step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const double g = grads_[i];
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g;
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * g * g;
      const double update = (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + kAdamEps);
      params_[i] -= lr * (update + (decay_[i] ? cfg.weight_decay * params_[i] : 0.0));
    }
    return loss * inv_b;
  }

  std::array<double, 2> class_probabilities(const Post& post) const override {
    const auto tokens = buckets(post.text);
    std::vector<double> pooled(kEmbed), hidden(kHidden);
    encode(tokens, pooled, hidden);
    if (family_ == Family::EncoderClassifier) {
      std::array<double, 2> z = head(hidden);
      log_softmax(z);
      return {std::exp(z[0]), std::exp(z[1])};
    }
    const double ll_pos = sequence_log_likelihood(hidden, label_sequence(kPositive));
    const double ll_neg = sequence_log_likelihood(hidden, label_sequence(kNegative));
    // softmax over the two sequence scores
    const double p_pos = 1.0 / (1.0 + std::exp(ll_neg - ll_pos));
    const double p_neg = 1.0 / (1.0 + std::exp(ll_pos - ll_neg));
    return {p_neg, p_pos};
  }

  std::string save() const override {
    std::string blob(kMagic, sizeof kMagic);
    const std::uint64_t header[4] = {static_cast<std::uint64_t>(family_), kBuckets, kEmbed,
                                     params_.size()};
    blob.append(reinterpret_cast<const char*>(header), sizeof header);
    blob.append(reinterpret_cast<const char*>(params_.data()), params_.size() * sizeof(double));
    return blob;
  }

  void load(std::string_view blob) override {
    constexpr std::size_t head_bytes = sizeof kMagic + 4 * sizeof(std::uint64_t);
    if (blob.size() < head_bytes || std::memcmp(blob.data(), kMagic, sizeof kMagic) != 0) {
      throw Error(Errc::CorruptManifest, "weights blob has no stub-tiny header");
    }
    std::uint64_t header[4];
    std::memcpy(header, blob.data() + sizeof kMagic, sizeof header);
    if (header[0] != static_cast<std::uint64_t>(family_) || header[1] != kBuckets ||
        header[2] != kEmbed || header[3] != params_.size() ||
        blob.size() != head_bytes + params_.size() * sizeof(double)) {
      throw Error(Errc::CorruptManifest, "weights blob does not match the stub-tiny layout");
    }
    std::memcpy(params_.data(), blob.data() + head_bytes, params_.size() * sizeof(double));
    std::fill(m_.begin(), m_.end(), 0.0);
    std::fill(v_.begin(), v_.end(), 0.0);
    adam_step_ = 0;
  }

 private:
  std::vector<std::size_t> buckets(std::string_view text) const {
    auto words = word_tokens(text);
    if (words.size() > max_tokens_) words.resize(max_tokens_);
    std::vector<std::size_t> out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(fnv1a64(w) % kBuckets);
    return out;
  }

  const double* row(std::size_t base, std::size_t r, std::size_t width) const {
    return params_.data() + base + r * width;
  }

  void encode(const std::vector<std::size_t>& tokens, std::vector<double>& pooled,
              std::vector<double>& hidden) const {
    std::fill(pooled.begin(), pooled.end(), 0.0);
    if (!tokens.empty()) {
      for (auto b : tokens) {
        const double* e = row(layout_.embed, b, kEmbed);
        for (std::size_t d = 0; d < kEmbed; ++d) pooled[d] += e[d];
      }
      const double inv = 1.0 / static_cast<double>(tokens.size());
      for (auto& x : pooled) x *= inv;
    }
    for (std::size_t h = 0; h < kHidden; ++h) {
      const double* w = row(layout_.w1, h, kEmbed);
      double a = params_[layout_.b1 + h];
      for (std::size_t d = 0; d < kEmbed; ++d) a += w[d] * pooled[d];
      hidden[h] = std::tanh(a);
    }
  }

  std::array<double, 2> head(std::span<const double> hidden) const {
    std::array<double, 2> z{};
    for (std::size_t c = 0; c < 2; ++c) {
      const double* w = row(layout_.w2, c, kHidden);
      z[c] = params_[layout_.b2 + c];
      for (std::size_t h = 0; h < kHidden; ++h) z[c] += w[h] * hidden[h];
    }
    return z;
  }

  // z = enc + dec[prev]; logits = Wo z + bo
  void decoder_logits(std::span<const double> enc, std::size_t prev, std::span<double> z,
                      std::span<double> logits) const {
    const double* d = row(layout_.dec, prev, kHidden);
    for (std::size_t h = 0; h < kHidden; ++h) z[h] = enc[h] + d[h];
    for (std::size_t t = 0; t < kTargetVocab; ++t) {
      const double* w = row(layout_.wo, t, kHidden);
      double a = params_[layout_.bo + t];
      for (std::size_t h = 0; h < kHidden; ++h) a += w[h] * z[h];
      logits[t] = a;
    }
  }

  double sequence_log_likelihood(std::span<const double> enc,
                                 const std::vector<std::size_t>& seq) const {
    std::array<double, kHidden> z{};
    std::array<double, kTargetVocab> logits{};
    double ll = 0.0;
    std::size_t prev = kBos;
    for (auto tok : seq) {
      decoder_logits(enc, prev, z, logits);
      log_softmax(logits);
      ll += logits[tok];
      prev = tok;
    }
    return ll;
  }

  // Accumulates d(weight * loss / batch)/dparams into grads_; returns weight * loss.
  double backprop(const Post& post, int y, double weight, double inv_batch, Rng& rng) {
    const double scale = weight * inv_batch;
    const auto tokens = buckets(post.text);
    std::vector<double> pooled(kEmbed), hidden(kHidden), dropped(kHidden), mask(kHidden, 1.0);
    encode(tokens, pooled, hidden);
    const double keep = 1.0 - dropout_;
    for (std::size_t h = 0; h < kHidden; ++h) {
      if (dropout_ > 0.0) mask[h] = rng.uniform() < dropout_ ? 0.0 : 1.0 / keep;
      dropped[h] = hidden[h] * mask[h];
    }

    std::vector<double> d_dropped(kHidden, 0.0);
    double loss = 0.0;
    if (family_ == Family::EncoderClassifier) {
      std::array<double, 2> z = head(dropped);
      log_softmax(z);
      loss = -z[static_cast<std::size_t>(y)];
      for (std::size_t c = 0; c < 2; ++c) {
        const double dz = scale * (std::exp(z[c]) - (static_cast<int>(c) == y ? 1.0 : 0.0));
        double* gw = grads_.data() + layout_.w2 + c * kHidden;
        const double* w = row(layout_.w2, c, kHidden);
        for (std::size_t h = 0; h < kHidden; ++h) {
          gw[h] += dz * dropped[h];
          d_dropped[h] += dz * w[h];
        }
        grads_[layout_.b2 + c] += dz;
      }
    } else {
      std::array<double, kHidden> z{};
      std::array<double, kTargetVocab> logits{};
      std::size_t prev = kBos;
      for (auto tok : label_sequence(y)) {
        decoder_logits(dropped, prev, z, logits);
        log_softmax(logits);
        loss -= logits[tok];
        std::array<double, kHidden> dz{};
        for (std::size_t t = 0; t < kTargetVocab; ++t) {
          const double dl = scale * (std::exp(logits[t]) - (t == tok ? 1.0 : 0.0));
          double* gw = grads_.data() + layout_.wo + t * kHidden;
          const double* w = row(layout_.wo, t, kHidden);
          for (std::size_t h = 0; h < kHidden; ++h) {
            gw[h] += dl * z[h];
            dz[h] += dl * w[h];
          }
          grads_[layout_.bo + t] += dl;
        }
        double* gd = grads_.data() + layout_.dec + prev * kHidden;
        for (std::size_t h = 0; h < kHidden; ++h) {
          gd[h] += dz[h];
          d_dropped[h] += dz[h];
        }
        prev = tok;
      }
    }

    // back through dropout, tanh, the first layer and the mean pool
    std::vector<double> d_pooled(kEmbed, 0.0);
    for (std::size_t h = 0; h < kHidden; ++h) {
      const double da = d_dropped[h] * mask[h] * (1.0 - hidden[h] * hidden[h]);
      double* gw = grads_.data() + layout_.w1 + h * kEmbed;
      const double* w = row(layout_.w1, h, kEmbed);
      for (std::size_t d = 0; d < kEmbed; ++d) {
        gw[d] += da * pooled[d];
        d_pooled[d] += da * w[d];
      }
      grads_[layout_.b1 + h] += da;
    }
    if (!tokens.empty()) {
      const double inv = 1.0 / static_cast<double>(tokens.size());
      for (auto b : tokens) {
        double* ge = grads_.data() + layout_.embed + b * kEmbed;
        for (std::size_t d = 0; d < kEmbed; ++d) ge[d] += d_pooled[d] * inv;
      }
    }
    return weight * loss;
  }

  Family family_;
  std::size_t max_tokens_;
  Layout layout_;
  std::vector<double> params_;
  std::vector<double> grads_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::vector<char> decay_;
  double dropout_;
  std::uint64_t adam_step_ = 0;
};

}  // namespace

std::unique_ptr<Backbone> make_stub_tiny(const BackboneSpec& spec, const FineTuneConfig& cfg) {
  return std::make_unique<StubTiny>(spec, cfg);
}

}  // namespace poly::clf::detail
