#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polytx/dataset.hpp"
#include "polytx/eval.hpp"

namespace polytx {

/// One published number. The text fields keep the transcription verbatim so
/// tables reproduce it digit for digit.
struct ReferenceEntry {
  std::string model;
  std::size_t property = 0;
  std::string metric;  // test_rel_rmse | test_r2
  std::string mean_text;
  std::string std_text;  // empty when no spread was published
  double mean = 0.0;

  std::string display() const { return std_text.empty() ? mean_text : mean_text + "±" + std_text; }
};

class ReferenceTable {
 public:
  ReferenceTable() = default;
  explicit ReferenceTable(std::vector<ReferenceEntry> entries);

  const std::vector<ReferenceEntry>& entries() const noexcept { return entries_; }
  /// Model names in first-appearance order.
  const std::vector<std::string>& models() const noexcept { return models_; }
  const ReferenceEntry* find(std::string_view model, std::size_t property, std::string_view metric) const;

 private:
  std::vector<ReferenceEntry> entries_;
  std::vector<std::string> models_;
};

/// CSV with header model,property,metric,mean,std.
ReferenceTable parse_references(std::string_view text, const std::string& source = "<memory>");
ReferenceTable load_references(const std::filesystem::path& path);

/// Test-split summary for one (init, mode, fraction, property).
struct ResultRow {
  std::string init;
  std::string mode;
  std::string fraction;
  std::size_t property = 0;
  std::optional<MetricStat> test_rel_rmse;
  std::optional<MetricStat> test_r2;
};

/// Reads every CSV in `dir` that is either a wide metrics file or a
/// long-format sweep file; other CSVs are ignored. Throws MissingResults
/// when nothing usable is found.
std::vector<ResultRow> load_results(const std::filesystem::path& dir);
std::vector<ResultRow> parse_results_csv(std::string_view text, const std::string& source = "<memory>");

struct ReferenceCell {
  std::string model;
  const ReferenceEntry* rel_rmse = nullptr;
  const ReferenceEntry* r2 = nullptr;
  bool beats_rel_rmse = false;  // our test mean is lower
  bool beats_r2 = false;        // our test mean is higher
};

struct ComparisonRow {
  std::size_t property = 0;
  std::optional<MetricStat> rel_rmse;
  std::optional<MetricStat> r2;
  std::vector<ReferenceCell> references;
};

/// One table per (init, mode, fraction), always with all 8 properties in
/// dataset order.
struct ComparisonTable {
  std::string init;
  std::string mode;
  std::string fraction;
  std::vector<ComparisonRow> rows;
};

std::vector<ComparisonTable> build_comparison(std::span<const ResultRow> results, const ReferenceTable& references);

/// Markdown rendering, one section per table.
std::string format_comparison(std::span<const ComparisonTable> tables, const ReferenceTable& references);
/// Long CSV: init,mode,fraction,property,source,metric,value,beats.
void write_comparison_csv(const std::filesystem::path& path, std::span<const ComparisonTable> tables);

}  // namespace polytx
