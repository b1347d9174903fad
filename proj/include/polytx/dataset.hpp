#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace polytx {

inline constexpr std::size_t kNumProperties = 8;

struct PropertyInfo {
  std::string_view name;
  std::string_view unit;
  std::size_t samples;  // size of the open-source DFT set
  double min;
  double max;
};

/// DFT property table: names in dataset column order with the published
/// units, sample counts and value ranges. The ranges normalize the
/// relative RMSE.
const std::array<PropertyInfo, kNumProperties>& property_table();

/// Throws BadConfig for unknown names.
std::size_t property_index(std::string_view name);

struct PropertyRecord {
  std::string smiles;
  std::array<std::optional<double>, kNumProperties> values{};

  bool observed(std::size_t p) const { return values[p].has_value(); }
  std::size_t observed_count() const;
};

/// CSV with header `smiles,Eat,Xc,Egc,Egb,Eea,Ei,nc,eps`; empty cells are
/// unobserved. Records with no observed value are rejected.
std::vector<PropertyRecord> read_dataset(const std::filesystem::path& path);
std::vector<PropertyRecord> parse_dataset(std::string_view csv_text, std::string_view source = "<memory>");
void write_dataset(const std::filesystem::path& path, std::span<const PropertyRecord> records);

/// Per-property min/max fitted on training records; maps values to [0, 1].
class PropertyScaler {
 public:
  PropertyScaler();

  static PropertyScaler fit(std::span<const PropertyRecord> records);

  double scale(std::size_t p, double v) const { return (v - min_[p]) / (max_[p] - min_[p]); }
  double unscale(std::size_t p, double s) const { return min_[p] + s * (max_[p] - min_[p]); }
  double min(std::size_t p) const { return min_[p]; }
  double max(std::size_t p) const { return max_[p]; }
  std::size_t count(std::size_t p) const { return count_[p]; }

  void save(const std::filesystem::path& path) const;
  static PropertyScaler load(const std::filesystem::path& path);

 private:
  std::array<double, kNumProperties> min_{};
  std::array<double, kNumProperties> max_{};
  std::array<std::size_t, kNumProperties> count_{};
};

}  // namespace polytx
