#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "poly/perplexity.hpp"
#include "poly/runner.hpp"

namespace poly::report {

struct RenderedTable {
  std::vector<std::string> headers;
  std::vector<std::vector<std::string>> rows;
  std::string caption;

  friend bool operator==(const RenderedTable&, const RenderedTable&) = default;
};

enum class Format { Text, Csv, Markdown };
Format format_from_string(std::string_view s);

/// "es" -> "Spanish"; unknown codes come back unchanged.
std::string language_name(std::string_view code);

/// "mbert" -> "mBERT", "xlmr" -> "XML-R", "mt5" -> "mT5".
std::string backbone_display_name(std::string_view preset);

/// Rounds half to even at `decimals` places and prints fixed-point.
std::string fixed_half_even(double value, int decimals);

enum class Split { Validation, Test };

/// Rows are languages in configured order; each record adds Acc./F1./AUC
/// columns as percentages with one decimal. Throws LanguageMismatch when the
/// records were run over different language lists.
RenderedTable render_results_table(const std::vector<RunRecord>& records,
                                   Split split = Split::Validation);

/// One row per language, perplexity to two decimals. Throws EmptyReport.
RenderedTable render_perplexity_table(const mt::PerplexityReport& r);

/// Cross-validation mean and sample std of F1 per language, one column pair
/// per backbone.
RenderedTable render_crossval_table(const std::vector<CrossValResult>& runs);

std::string render(const RenderedTable& t, Format f);

struct FoldSeries {
  std::string name;
  std::vector<double> f1;  // one value per fold, in fold order
};

struct ChartFiles {
  std::filesystem::path sidecar;  // backbone,fold,f1 with exact values
  std::filesystem::path chart;    // SVG line chart; empty if rendering failed
};

/// Per-fold F1 of each backbone (mean over languages in each fold).
FoldSeries fold_series(const CrossValResult& cv);

/// Writes <stem>.csv first, then <stem>.svg. Throws SeriesLengthMismatch
/// unless every series has the same non-zero length.
ChartFiles render_fold_chart(const std::vector<FoldSeries>& series,
                             const std::filesystem::path& out_dir, std::string_view stem = "folds");

std::string fold_sidecar_csv(const std::vector<FoldSeries>& series);
std::string fold_chart_svg(const std::vector<FoldSeries>& series);

}  // namespace poly::report
