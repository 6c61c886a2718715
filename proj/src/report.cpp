#include "poly/report.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <iostream>
#include <map>

#include <fmt/format.h>

#include "poly/common.hpp"
#include "poly/csv.hpp"
#include "poly/error.hpp"

namespace poly::report {

namespace fs = std::filesystem;

Format format_from_string(std::string_view s) {
  if (s == "text") return Format::Text;
  if (s == "csv") return Format::Csv;
  if (s == "md") return Format::Markdown;
  throw Error(Errc::Config, fmt::format("unknown format '{}'", s));
}

std::string language_name(std::string_view code) {
  static const std::map<std::string, std::string, std::less<>> names{
      {"es", "Spanish"}, {"en", "English"}, {"de", "German"},
      {"ca", "Catalan"}, {"pt", "Portuguese"}, {"it", "Italian"}};
  auto it = names.find(code);
  return it == names.end() ? std::string(code) : it->second;
}

std::string backbone_display_name(std::string_view preset) {
  if (preset == "mbert") return "mBERT";
  if (preset == "xlmr") return "XML-R";
  if (preset == "mt5") return "mT5";
  return std::string(preset);
}

std::string fixed_half_even(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  double r = std::nearbyint(value * scale);
  std::fesetround(saved);
  if (r == 0.0) r = 0.0;  // no "-0.0"
  return fmt::format("{:.{}f}", r / scale, decimals);
}

namespace {

std::string percent_cell(const metrics::Value& v) {
  return v ? fixed_half_even(*v * 100.0, 1) : "n/a";
}

}  // namespace

RenderedTable render_results_table(const std::vector<RunRecord>& records, Split split) {
  if (records.empty()) throw Error(Errc::EmptyReport, "no run records to render");
  const auto& langs = records.front().config.languages;
  for (const auto& r : records) {
    if (r.config.languages != langs) {
      throw Error(Errc::LanguageMismatch, "run records cover different language lists");
    }
  }
  RenderedTable t;
  t.headers.push_back("Lang.");
  std::string names;
  for (const auto& r : records) {
    const auto name = backbone_display_name(r.config.backbone_name);
    for (const char* m : {"Acc.", "F1.", "AUC"}) t.headers.push_back(fmt::format("{} {}", name, m));
    names += (names.empty() ? "" : ", ") + name;
  }
  for (const auto& lang : langs) {
    std::vector<std::string> row{language_name(lang)};
    for (const auto& r : records) {
      const std::vector<LanguageMetrics>* source = &r.validation;
      if (split == Split::Test) {
        if (!r.test) throw Error(Errc::EmptyReport, "run record has no test metrics");
        source = &*r.test;
      }
      auto it = std::find_if(source->begin(), source->end(),
                             [&](const LanguageMetrics& lm) { return lm.lang == lang; });
      if (it == source->end()) {
        row.insert(row.end(), {"n/a", "n/a", "n/a"});
        continue;
      }
      row.push_back(percent_cell(it->metrics.accuracy));
      row.push_back(percent_cell(it->metrics.f1));
      row.push_back(percent_cell(it->metrics.auc));
    }
    t.rows.push_back(std::move(row));
  }
  t.caption = fmt::format("{} results with {} across languages. Acc. = accuracy, F1. = F1-score.",
                          split == Split::Test ? "Test" : "Validation", names);
  return t;
}

RenderedTable render_perplexity_table(const mt::PerplexityReport& r) {
  if (r.entries.empty()) throw Error(Errc::EmptyReport, "perplexity report has no entries");
  RenderedTable t;
  t.headers = {"Translation to Language", "Perplexity Score"};
  for (const auto& e : r.entries) {
    t.rows.push_back({language_name(e.lang), fixed_half_even(e.perplexity, 2)});
  }
  t.caption = "Perplexity scores for each translation.";
  return t;
}

RenderedTable render_crossval_table(const std::vector<CrossValResult>& runs) {
  if (runs.empty()) throw Error(Errc::EmptyReport, "no cross-validation runs to render");
  RenderedTable t;
  t.headers.push_back("Lang.");
  std::vector<std::string> langs;
  for (const auto& run : runs) {
    const auto name = backbone_display_name(run.backbone_name);
    t.headers.push_back(fmt::format("{} F1 mean", name));
    t.headers.push_back(fmt::format("{} F1 std", name));
    for (const auto& s : run.summary) {
      if (std::find(langs.begin(), langs.end(), s.lang) == langs.end()) langs.push_back(s.lang);
    }
  }
  for (const auto& lang : langs) {
    std::vector<std::string> row{language_name(lang)};
    for (const auto& run : runs) {
      auto it = std::find_if(run.summary.begin(), run.summary.end(),
                             [&](const LanguageSummary& s) { return s.lang == lang; });
      if (it == run.summary.end() || !it->f1) {
        row.insert(row.end(), {"n/a", "n/a"});
        continue;
      }
      row.push_back(percent_cell(it->f1->mean));
      row.push_back(percent_cell(it->f1->std));
    }
    t.rows.push_back(std::move(row));
  }
  t.caption = fmt::format("{}-fold cross-validation F1 (mean and sample std over folds).",
                          runs.front().k);
  return t;
}

std::string render(const RenderedTable& t, Format f) {
  std::string out;
  switch (f) {
    case Format::Csv:
      out += csv::join_row(t.headers);
      for (const auto& row : t.rows) out += csv::join_row(row);
      return out;
    case Format::Markdown: {
      auto line = [&](const std::vector<std::string>& cells) {
        out += "|";
        for (const auto& c : cells) out += " " + c + " |";
        out += "\n";
      };
      line(t.headers);
      out += "|";
      for (std::size_t i = 0; i < t.headers.size(); ++i) out += i == 0 ? " --- |" : " ---: |";
      out += "\n";
      for (const auto& row : t.rows) line(row);
      out += "\n" + t.caption + "\n";
      return out;
    }
    case Format::Text: {
      std::vector<std::size_t> width(t.headers.size(), 0);
      auto measure = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size() && i < width.size(); ++i) {
          width[i] = std::max(width[i], cells[i].size());
        }
      };
      measure(t.headers);
      for (const auto& row : t.rows) measure(row);
      auto line = [&](const std::vector<std::string>& cells) {
        std::string l;
        for (std::size_t i = 0; i < cells.size(); ++i) {
          if (i) l += "  ";
          l += i == 0 ? fmt::format("{:<{}}", cells[i], width[i])
                      : fmt::format("{:>{}}", cells[i], width[i]);
        }
        while (!l.empty() && l.back() == ' ') l.pop_back();
        out += l + "\n";
      };
      line(t.headers);
      for (const auto& row : t.rows) line(row);
      out += "\n" + t.caption + "\n";
      return out;
    }
  }
  return out;
}

FoldSeries fold_series(const CrossValResult& cv) {
  FoldSeries s{backbone_display_name(cv.backbone_name), {}};
  for (const auto& fold : cv.folds) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& lm : fold.per_language) {
      if (lm.metrics.f1) {
        sum += *lm.metrics.f1;
        ++n;
      }
    }
    s.f1.push_back(n ? sum / static_cast<double>(n) : 0.0);
  }
  return s;
}

std::string fold_sidecar_csv(const std::vector<FoldSeries>& series) {
  std::string out = "backbone,fold,f1\n";
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.f1.size(); ++i) {
      out += csv::join_row({s.name, std::to_string(i + 1), format_exact(s.f1[i])});
    }
  }
  return out;
}

std::string fold_chart_svg(const std::vector<FoldSeries>& series) {
  constexpr double W = 640, H = 400, left = 60, right = 150, top = 30, bottom = 50;
  const double plot_w = W - left - right;
  const double plot_h = H - top - bottom;
  const std::size_t k = series.front().f1.size();

  double lo = 1.0, hi = 0.0;
  for (const auto& s : series) {
    for (double v : s.f1) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  lo = std::floor(lo * 10.0) / 10.0;
  hi = std::ceil(hi * 10.0) / 10.0;
  if (hi - lo < 0.1) hi = lo + 0.1;

  auto x_at = [&](std::size_t i) {
    return k == 1 ? left + plot_w / 2 : left + plot_w * static_cast<double>(i) / static_cast<double>(k - 1);
  };
  auto y_at = [&](double v) { return top + plot_h * (1.0 - (v - lo) / (hi - lo)); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      W, H);
  svg += fmt::format("<text x=\"{}\" y=\"18\" text-anchor=\"middle\">{}-fold cross-validation F1</text>\n",
                     left + plot_w / 2, k);
  svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", left, top,
                     top + plot_h);
  svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", left,
                     top + plot_h, left + plot_w);
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    svg += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.2f}</text>\n", left - 6,
                       y_at(v) + 4, v);
  }
  for (std::size_t i = 0; i < k; ++i) {
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", x_at(i),
                       top + plot_h + 18, i + 1);
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">fold</text>\n", left + plot_w / 2,
                     H - 10);
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % std::size(colors)];
    std::string points;
    for (std::size_t i = 0; i < k; ++i) {
      points += fmt::format("{}{:.2f},{:.2f}", i ? " " : "", x_at(i), y_at(series[s].f1[i]));
    }
    svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n",
                       color, points);
    for (std::size_t i = 0; i < k; ++i) {
      svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n", x_at(i),
                         y_at(series[s].f1[i]), color);
    }
    const double ly = top + 16.0 * static_cast<double>(s);
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/>\n",
                       left + plot_w + 12, ly, left + plot_w + 32, color);
    svg += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", left + plot_w + 38, ly + 4, series[s].name);
  }
  svg += "</svg>\n";
  return svg;
}

ChartFiles render_fold_chart(const std::vector<FoldSeries>& series, const fs::path& out_dir,
                             std::string_view stem) {
  if (series.empty()) throw Error(Errc::SeriesLengthMismatch, "no series to plot");
  const std::size_t k = series.front().f1.size();
  for (const auto& s : series) {
    if (s.f1.size() != k || k == 0) {
      throw Error(Errc::SeriesLengthMismatch,
                  fmt::format("series '{}' has {} points, expected {}", s.name, s.f1.size(), k));
    }
  }
  ChartFiles files;
  files.sidecar = out_dir / fmt::format("{}.csv", stem);
  write_file_atomic(files.sidecar, fold_sidecar_csv(series));
  try {
    const auto chart = out_dir / fmt::format("{}.svg", stem);
    write_file_atomic(chart, fold_chart_svg(series));
    files.chart = chart;
  } catch (const std::exception& e) {
    std::cerr << "chart rendering failed, sidecar kept: " << e.what() << '\n';
  }
  return files;
}

}  // namespace poly::report
