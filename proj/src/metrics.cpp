#include "poly/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <fmt/format.h>

#include "poly/error.hpp"

namespace poly::metrics {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw Error(Errc::LengthMismatch, fmt::format("lengths {} and {} differ", a, b));
}

Value ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

Value harmonic(Value p, Value r) {
  if (!p || !r || *p + *r == 0.0) return std::nullopt;
  return 2.0 * *p * *r / (*p + *r);
}

}  // namespace

Confusion confusion(std::span<const int> preds, std::span<const int> gold) {
  check_lengths(preds.size(), gold.size());
  if (preds.empty()) throw Error(Errc::EmptyInput, "confusion of zero pairs");
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] != 0;
    const bool g = gold[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

MetricSet classification_metrics(std::span<const int> preds, std::span<const int> gold,
                                 Averaging averaging) {
  MetricSet m;
  m.confusion = confusion(preds, gold);
  const auto& c = m.confusion;
  m.n = c.n();
  m.accuracy = ratio(c.tp + c.tn, m.n);
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.f1 = harmonic(m.precision, m.recall);
  if (averaging == Averaging::Macro) {
    // negative class: roles of tp/tn and fp/fn swap
    const Value f1_neg = harmonic(ratio(c.tn, c.tn + c.fn), ratio(c.tn, c.tn + c.fp));
    if (m.f1 && f1_neg) {
      m.f1 = (*m.f1 + *f1_neg) / 2.0;
    } else {
      m.f1 = std::nullopt;
    }
  }
  return m;
}

Value roc_auc(std::span<const double> scores, std::span<const int> gold) {
  check_lengths(scores.size(), gold.size());
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int g : gold) n_pos += g != 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of average ranks (1-based) of the positives.
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (gold[order[t]] != 0) pos_rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(n_pos);
  const double u = pos_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(n_neg));
}

MetricSet evaluate(std::span<const int> preds, std::span<const double> scores,
                   std::span<const int> gold, Averaging averaging) {
  MetricSet m = classification_metrics(preds, gold, averaging);
  m.auc = roc_auc(scores, gold);
  return m;
}

MeanStd mean_and_std(std::span<const double> values) {
  if (values.empty()) throw Error(Errc::EmptyInput, "mean of zero values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  MeanStd out{mean, std::nullopt};
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    out.std = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

}  // namespace poly::metrics
