#include "polytx/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "polytx/error.hpp"
#include "polytx/tokenizer.hpp"

namespace polytx {

namespace {

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto c = line.find(',', start);
    cells.emplace_back(trim(line.substr(start, c == std::string_view::npos ? std::string_view::npos : c - start)));
    if (c == std::string_view::npos) break;
    start = c + 1;
  }
  return cells;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto l = trim(text.substr(pos, end - pos));
    if (!l.empty()) out.push_back(l);
    pos = end + 1;
  }
  return out;
}

double to_double(const std::string& s, const std::string& where) {
  if (s.empty()) fail(ErrorCode::BadFormat, where + ": empty number");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) fail(ErrorCode::BadFormat, where + ": bad number '" + s + "'");
  return v;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const std::string kWideHeader =
    "init,mode,fraction,property,folds,train_rel_rmse_mean,train_rel_rmse_std,test_rel_rmse_mean,test_rel_rmse_std,"
    "train_r2_mean,train_r2_std,test_r2_mean,test_r2_std";
const std::string kLongHeader = "init,mode,fraction,property,split,metric,mean,std";

std::optional<MetricStat> stat_of(double mean, double std) {
  if (!std::isfinite(mean)) return std::nullopt;
  return MetricStat{mean, std};
}

std::string fmt_stat(const std::optional<MetricStat>& s) {
  if (!s) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f±%.4f", s->mean, s->std);
  return buf;
}

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

ReferenceTable::ReferenceTable(std::vector<ReferenceEntry> entries) : entries_(std::move(entries)) {
  for (const auto& e : entries_) {
    if (std::find(models_.begin(), models_.end(), e.model) == models_.end()) models_.push_back(e.model);
  }
}

const ReferenceEntry* ReferenceTable::find(std::string_view model, std::size_t property, std::string_view metric) const {
  for (const auto& e : entries_) {
    if (e.model == model && e.property == property && e.metric == metric) return &e;
  }
  return nullptr;
}

ReferenceTable parse_references(std::string_view text, const std::string& source) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != "model,property,metric,mean,std") {
    fail(ErrorCode::BadFormat, source + ": expected header model,property,metric,mean,std");
  }
  std::vector<ReferenceEntry> entries;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string where = source + ":" + std::to_string(i + 1);
    auto cells = split(lines[i]);
    if (cells.size() != 5) fail(ErrorCode::BadFormat, where + ": expected 5 cells");
    if (cells[2] != "test_rel_rmse" && cells[2] != "test_r2") fail(ErrorCode::BadFormat, where + ": unknown metric " + cells[2]);
    ReferenceEntry e;
    e.model = cells[0];
    e.property = property_index(cells[1]);
    e.metric = cells[2];
    e.mean_text = cells[3];
    e.std_text = cells[4];
    e.mean = to_double(e.mean_text, where);
    if (!e.std_text.empty()) to_double(e.std_text, where);
    entries.push_back(std::move(e));
  }
  return ReferenceTable(std::move(entries));
}

ReferenceTable load_references(const std::filesystem::path& path) {
  return parse_references(read_text(path), path.string());
}

std::vector<ResultRow> parse_results_csv(std::string_view text, const std::string& source) {
  const auto lines = lines_of(text);
  std::vector<ResultRow> out;
  if (lines.empty()) return out;
  const std::string header(lines[0]);
  if (header == kWideHeader) {
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const std::string where = source + ":" + std::to_string(i + 1);
      auto c = split(lines[i]);
      if (c.size() != 13) fail(ErrorCode::BadFormat, where + ": expected 13 cells");
      ResultRow r{c[0], c[1], c[2], property_index(c[3]), {}, {}};
      r.test_rel_rmse = stat_of(to_double(c[7], where), to_double(c[8], where));
      r.test_r2 = stat_of(to_double(c[11], where), to_double(c[12], where));
      out.push_back(std::move(r));
    }
  } else if (header == kLongHeader) {
    std::map<std::tuple<std::string, std::string, std::string, std::size_t>, ResultRow> merged;
    std::vector<std::tuple<std::string, std::string, std::string, std::size_t>> order;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const std::string where = source + ":" + std::to_string(i + 1);
      auto c = split(lines[i]);
      if (c.size() != 8) fail(ErrorCode::BadFormat, where + ": expected 8 cells");
      if (c[4] != "test") continue;
      auto key = std::make_tuple(c[0], c[1], c[2], property_index(c[3]));
      auto [it, fresh] = merged.try_emplace(key, ResultRow{c[0], c[1], c[2], std::get<3>(key), {}, {}});
      if (fresh) order.push_back(key);
      const auto st = stat_of(to_double(c[6], where), to_double(c[7], where));
      if (c[5] == "rel_rmse") it->second.test_rel_rmse = st;
      else if (c[5] == "r2") it->second.test_r2 = st;
      else fail(ErrorCode::BadFormat, where + ": unknown metric " + c[5]);
    }
    for (const auto& k : order) out.push_back(merged.at(k));
  }
  return out;
}

std::vector<ResultRow> load_results(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorCode::MissingResults, "results directory " + dir.string() + " not found");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ResultRow> out;
  for (const auto& f : files) {
    auto rows = parse_results_csv(read_text(f), f.string());
    out.insert(out.end(), rows.begin(), rows.end());
  }
  if (out.empty()) fail(ErrorCode::MissingResults, "no metrics or sweep CSVs in " + dir.string());
  return out;
}

std::vector<ComparisonTable> build_comparison(std::span<const ResultRow> results, const ReferenceTable& references) {
  std::vector<ComparisonTable> tables;
  for (const auto& r : results) {
    auto it = std::find_if(tables.begin(), tables.end(), [&](const ComparisonTable& t) {
      return t.init == r.init && t.mode == r.mode && t.fraction == r.fraction;
    });
    if (it == tables.end()) {
      ComparisonTable t{r.init, r.mode, r.fraction, {}};
      for (std::size_t p = 0; p < kNumProperties; ++p) {
        ComparisonRow row;
        row.property = p;
        for (const auto& m : references.models()) {
          row.references.push_back({m, references.find(m, p, "test_rel_rmse"), references.find(m, p, "test_r2")});
        }
        t.rows.push_back(std::move(row));
      }
      tables.push_back(std::move(t));
      it = tables.end() - 1;
    }
    auto& row = it->rows[r.property];
    row.rel_rmse = r.test_rel_rmse;
    row.r2 = r.test_r2;
    for (auto& ref : row.references) {
      ref.beats_rel_rmse = row.rel_rmse && ref.rel_rmse && row.rel_rmse->mean < ref.rel_rmse->mean;
      ref.beats_r2 = row.r2 && ref.r2 && row.r2->mean > ref.r2->mean;
    }
  }
  return tables;
}

std::string format_comparison(std::span<const ComparisonTable> tables, const ReferenceTable& references) {
  std::ostringstream s;
  for (const auto& t : tables) {
    s << "## init=" << t.init << " mode=" << t.mode << " fraction=" << t.fraction << "\n\n";
    s << "| property | test relRMSE | test R2 |";
    for (const auto& m : references.models()) s << ' ' << m << " relRMSE | " << m << " R2 |";
    s << "\n|---|---|---|";
    for (std::size_t i = 0; i < references.models().size(); ++i) s << "---|---|";
    s << '\n';
    for (const auto& row : t.rows) {
      s << "| " << property_table()[row.property].name << " | " << fmt_stat(row.rel_rmse) << " | " << fmt_stat(row.r2) << " |";
      for (const auto& ref : row.references) {
        s << ' ' << (ref.rel_rmse ? ref.rel_rmse->display() : "-") << (ref.beats_rel_rmse ? " *" : "") << " | "
          << (ref.r2 ? ref.r2->display() : "-") << (ref.beats_r2 ? " *" : "") << " |";
      }
      s << '\n';
    }
    s << '\n';
  }
  s << "* this run's test mean beats the reference mean\n";
  return s.str();
}

void write_comparison_csv(const std::filesystem::path& path, std::span<const ComparisonTable> tables) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << "init,mode,fraction,property,source,metric,value,beats\n";
  for (const auto& t : tables) {
    for (const auto& row : t.rows) {
      const std::string prefix = t.init + ',' + t.mode + ',' + t.fraction + ',' + std::string(property_table()[row.property].name) + ',';
      out << prefix << "this,test_rel_rmse," << (row.rel_rmse ? fmt_num(row.rel_rmse->mean) + "±" + fmt_num(row.rel_rmse->std) : "")
          << ",\n";
      out << prefix << "this,test_r2," << (row.r2 ? fmt_num(row.r2->mean) + "±" + fmt_num(row.r2->std) : "") << ",\n";
      for (const auto& ref : row.references) {
        out << prefix << ref.model << ",test_rel_rmse," << (ref.rel_rmse ? ref.rel_rmse->display() : "") << ','
            << (ref.beats_rel_rmse ? 1 : 0) << '\n';
        out << prefix << ref.model << ",test_r2," << (ref.r2 ? ref.r2->display() : "") << ',' << (ref.beats_r2 ? 1 : 0) << '\n';
      }
    }
  }
}

}  // namespace polytx
