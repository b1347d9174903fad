#include "polytx/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "polytx/error.hpp"
#include "polytx/tokenizer.hpp"

namespace polytx {

const std::array<PropertyInfo, kNumProperties>& property_table() {
  static const std::array<PropertyInfo, kNumProperties> table = {{
      {"Eat", "eV/atom", 390, -7.0, -5.0},
      {"Xc", "%", 432, 0.10, 100.0},
      {"Egc", "eV", 3380, 0.02, 10.0},
      {"Egb", "eV", 561, 0.4, 10.0},
      {"Eea", "eV", 368, 0.4, 5.0},
      {"Ei", "eV", 370, 4.0, 10.0},
      {"nc", "1", 382, 1.0, 3.0},
      {"eps", "1", 382, 3.0, 9.0},
  }};
  return table;
}

std::size_t property_index(std::string_view name) {
  const auto& t = property_table();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i].name == name) return i;
  }
  fail(ErrorCode::BadConfig, "unknown property '" + std::string(name) + "'");
}

std::size_t PropertyRecord::observed_count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](const auto& v) { return v.has_value(); }));
}

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

std::string expected_header() {
  std::string h = "smiles";
  for (const auto& p : property_table()) h += "," + std::string(p.name);
  return h;
}

}  // namespace

std::vector<PropertyRecord> parse_dataset(std::string_view text, std::string_view source) {
  std::vector<PropertyRecord> out;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  const std::string header = expected_header();
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto where = std::string(source) + ":" + std::to_string(line_no);
    if (!header_seen) {
      if (line != header) fail(ErrorCode::BadFormat, where + ": expected header '" + header + "'");
      header_seen = true;
      continue;
    }
    const auto cells = split_csv_line(line);
    if (cells.size() != kNumProperties + 1) {
      fail(ErrorCode::BadFormat, where + ": expected " + std::to_string(kNumProperties + 1) + " cells, found " +
                                     std::to_string(cells.size()));
    }
    PropertyRecord rec;
    rec.smiles = normalize_line(cells[0]);
    if (rec.smiles.empty()) fail(ErrorCode::BadFormat, where + ": empty SMILES");
    for (std::size_t p = 0; p < kNumProperties; ++p) {
      const auto cell = trim(cells[p + 1]);
      if (cell.empty()) continue;
      double v = 0.0;
      const auto* first = cell.data();
      const auto* last = cell.data() + cell.size();
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
        fail(ErrorCode::BadFormat, where + ": bad value '" + std::string(cell) + "' for " + std::string(property_table()[p].name));
      }
      rec.values[p] = v;
    }
    if (rec.observed_count() == 0) fail(ErrorCode::BadFormat, where + ": record has no observed property");
    out.push_back(std::move(rec));
    if (end == text.size()) break;
  }
  if (!header_seen) fail(ErrorCode::BadFormat, std::string(source) + ": missing header");
  return out;
}

std::vector<PropertyRecord> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read dataset " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str(), path.string());
}

void write_dataset(const std::filesystem::path& path, std::span<const PropertyRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write dataset " + path.string());
  out << expected_header() << '\n';
  out.precision(17);
  for (const auto& r : records) {
    out << r.smiles;
    for (const auto& v : r.values) {
      out << ',';
      if (v) out << *v;
    }
    out << '\n';
  }
}

PropertyScaler::PropertyScaler() {
  min_.fill(0.0);
  max_.fill(1.0);
  count_.fill(0);
}

PropertyScaler PropertyScaler::fit(std::span<const PropertyRecord> records) {
  PropertyScaler s;
  for (std::size_t p = 0; p < kNumProperties; ++p) {
    bool any = false;
    double lo = 0.0, hi = 0.0;
    for (const auto& r : records) {
      if (!r.values[p]) continue;
      const double v = *r.values[p];
      if (!any) {
        lo = hi = v;
        any = true;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      ++s.count_[p];
    }
    if (!any) continue;  // identity-like range [0, 1]
    s.min_[p] = lo;
    // A single distinct value gets a unit range so scaling stays finite.
    s.max_[p] = hi > lo ? hi : lo + 1.0;
  }
  return s;
}

void PropertyScaler::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write scaler " + path.string());
  out.precision(17);
  out << "property,min,max,count\n";
  for (std::size_t p = 0; p < kNumProperties; ++p) {
    out << property_table()[p].name << ',' << min_[p] << ',' << max_[p] << ',' << count_[p] << '\n';
  }
}

PropertyScaler PropertyScaler::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read scaler " + path.string());
  PropertyScaler s;
  std::string line;
  std::getline(in, line);
  if (trim(line) != "property,min,max,count") fail(ErrorCode::BadFormat, path.string() + ": bad scaler header");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(trim(line));
    if (cells.size() != 4) fail(ErrorCode::BadFormat, path.string() + ": bad scaler row '" + line + "'");
    const auto p = property_index(cells[0]);
    s.min_[p] = std::stod(cells[1]);
    s.max_[p] = std::stod(cells[2]);
    s.count_[p] = static_cast<std::size_t>(std::stoull(cells[3]));
    if (!(s.max_[p] > s.min_[p])) fail(ErrorCode::BadFormat, path.string() + ": degenerate range for " + cells[0]);
    ++rows;
  }
  if (rows != kNumProperties) fail(ErrorCode::BadFormat, path.string() + ": expected 8 scaler rows");
  return s;
}

}  // namespace polytx
