#include "polytx/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "polytx/error.hpp"
#include "polytx/rng.hpp"

namespace polytx {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kFoldStream = 0x464f4c44ULL;
constexpr std::uint64_t kEvalMaskStream = 0x45564d4bULL;

void check_pair(std::span<const double> pred, std::span<const double> truth, const char* what) {
  if (pred.size() != truth.size()) {
    fail(ErrorCode::ShapeMismatch, std::string(what) + ": " + std::to_string(pred.size()) + " predictions for " +
                                       std::to_string(truth.size()) + " targets");
  }
}

}  // namespace

FoldSplit kfold(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) fail(ErrorCode::BadConfig, "kfold: k must be >= 2");
  if (n < k) fail(ErrorCode::TooFewSamples, "kfold: " + std::to_string(n) + " samples for " + std::to_string(k) + " folds");
  const auto order = shuffled_indices(n, derive_seed(seed, kFoldStream));
  FoldSplit split;
  split.k = k;
  split.seed = seed;
  split.test.resize(k);
  split.train.resize(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    split.test[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos), order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  for (std::size_t f = 0; f < k; ++f) {
    for (std::size_t g = 0; g < k; ++g) {
      if (g != f) split.train[f].insert(split.train[f].end(), split.test[g].begin(), split.test[g].end());
    }
  }
  return split;
}

double relative_rmse(std::span<const double> pred, std::span<const double> truth, double prop_min, double prop_max) {
  check_pair(pred, truth, "relative_rmse");
  if (!(prop_max > prop_min)) fail(ErrorCode::DegenerateRange, "relative_rmse: range max must exceed min");
  if (pred.empty()) fail(ErrorCode::TooFewSamples, "relative_rmse: no samples");
  double se = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) se += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(se / static_cast<double>(pred.size())) / (prop_max - prop_min);
}

double relative_rmse(std::span<const double> pred, std::span<const double> truth, std::size_t property) {
  const auto& info = property_table().at(property);
  return relative_rmse(pred, truth, info.min, info.max);
}

double r2(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, "r2");
  if (truth.size() < 2) fail(ErrorCode::TooFewSamples, "r2: needs at least 2 samples");
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= static_cast<double>(truth.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
  }
  if (ss_tot == 0.0) fail(ErrorCode::ConstantTruth, "r2: truth values are constant");
  return 1.0 - ss_res / ss_tot;
}

MetricStat mean_std(std::span<const double> values) {
  std::vector<double> v;
  for (double x : values) {
    if (!std::isnan(x)) v.push_back(x);
  }
  if (v.empty()) return {kNaN, kNaN};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

InitSpec random_init(const EncoderConfig& config, std::uint64_t seed, std::string label) {
  return InitSpec{std::move(label), init_encoder<float>(config, seed)};
}

InitSpec checkpoint_init(const std::filesystem::path& path, std::string label) {
  return InitSpec{std::move(label), load_checkpoint<float>(path).model};
}

std::vector<std::size_t> mode_properties(std::string_view mode) {
  if (mode == "mt" || mode == "st") {
    std::vector<std::size_t> all(kNumProperties);
    for (std::size_t p = 0; p < kNumProperties; ++p) all[p] = p;
    return all;
  }
  if (mode.starts_with("st:")) return {property_index(mode.substr(3))};
  fail(ErrorCode::BadConfig, "unknown evaluation mode '" + std::string(mode) + "' (expected mt|st|st:<property>)");
}

namespace {

struct Job {
  std::size_t fold;
  TrainConfig config;
};

struct JobResult {
  std::vector<std::pair<std::size_t, FoldMetrics>> metrics;  // (property, metrics)
  std::vector<PredictionRow> rows;
};

std::vector<PropertyRecord> gather(std::span<const PropertyRecord> data, std::span<const std::size_t> idx) {
  std::vector<PropertyRecord> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(data[i]);
  return out;
}

std::string fold_context(std::size_t fold, std::size_t p, const char* split) {
  return "fold " + std::to_string(fold) + " property " + std::string(property_table()[p].name) + " (" + split + ")";
}

// Scores one split for one property over observed entries. Degenerate
// training splits yield NaN; degenerate test splits throw.
void score(std::span<const PropertyRecord> recs, std::span<const std::size_t> global_rows, std::span<const double> pred,
           std::size_t width, std::size_t column, std::size_t p, std::size_t fold, bool is_test, double& out_rmse,
           double& out_r2, std::size_t& out_n, std::vector<PredictionRow>& dump) {
  std::vector<double> pr, tr;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (!recs[i].observed(p)) continue;
    pr.push_back(pred[i * width + column]);
    tr.push_back(*recs[i].values[p]);
    dump.push_back({fold, is_test ? "test" : "train", global_rows[i], p, tr.back(), pr.back()});
  }
  out_n = pr.size();
  try {
    out_rmse = relative_rmse(pr, tr, p);
    out_r2 = r2(pr, tr);
  } catch (const Error& e) {
    if (!is_test) {
      if (pr.empty()) out_rmse = kNaN;
      out_r2 = kNaN;
      return;
    }
    fail(e.code(), fold_context(fold, p, "test") + ": " + e.what());
  }
}

JobResult run_job(std::span<const PropertyRecord> dataset, const FoldSplit& split, const InitSpec& init, double fraction,
                  const Job& job, const Tokenizer& tokenizer) {
  const auto& train_idx = split.train[job.fold];
  const auto& test_idx = split.test[job.fold];
  for (auto t : test_idx) {
    if (std::find(train_idx.begin(), train_idx.end(), t) != train_idx.end()) {
      fail(ErrorCode::DegenerateData, "fold " + std::to_string(job.fold) + ": test index " + std::to_string(t) + " is also in training");
    }
  }
  const auto train = gather(dataset, train_idx);
  const auto test = gather(dataset, test_idx);
  auto fit = finetune<float>(init.model, train, tokenizer, job.config, fraction);

  std::vector<std::size_t> local = fit.train_rows;
  if (fraction == 0.0) {
    local.resize(train.size());
    for (std::size_t i = 0; i < local.size(); ++i) local[i] = i;
  }
  std::vector<PropertyRecord> fitted;
  std::vector<std::size_t> fitted_global;
  for (auto r : local) {
    fitted.push_back(train[r]);
    fitted_global.push_back(train_idx[r]);
  }
  std::vector<std::size_t> trained_global;
  for (auto r : fit.train_rows) trained_global.push_back(train_idx[r]);
  std::sort(trained_global.begin(), trained_global.end());

  const auto pred_train = predict<float>(fit.model, fit.scaler, job.config, fitted, tokenizer);
  const auto pred_test = predict<float>(fit.model, fit.scaler, job.config, test, tokenizer);
  const std::size_t width = job.config.head_width();

  JobResult out;
  const auto props = job.config.mode == TrainMode::FinetuneST ? std::vector<std::size_t>{job.config.property}
                                                               : mode_properties("mt");
  for (std::size_t c = 0; c < props.size(); ++c) {
    const std::size_t p = props[c];
    const std::size_t column = width == 1 ? 0 : p;
    FoldMetrics m;
    m.fold = job.fold;
    m.train_rows = trained_global;
    score(fitted, fitted_global, pred_train, width, column, p, job.fold, false, m.train_rel_rmse, m.train_r2, m.n_train, out.rows);
    score(test, test_idx, pred_test, width, column, p, job.fold, true, m.test_rel_rmse, m.test_r2, m.n_test, out.rows);
    out.metrics.emplace_back(p, std::move(m));
  }
  return out;
}

std::string file_token(std::string s) {
  for (auto& c : s) {
    if (c == ':' || c == '/' || c == ' ') c = '-';
  }
  return s;
}

template <typename Fn>
void run_parallel(std::size_t count, std::size_t workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::string format_fraction(double f) {
  std::ostringstream s;
  s.precision(6);
  s << f;
  return s.str();
}

MetricsReport cv_evaluate(std::span<const PropertyRecord> dataset, const InitSpec& init, std::string_view mode,
                          double fraction, const TrainConfig& base_config, const Tokenizer& tokenizer,
                          const CvOptions& options) {
  const auto props = mode_properties(mode);
  const auto split = kfold(dataset.size(), options.folds, options.split_seed);
  std::vector<Job> jobs;
  for (std::size_t f = 0; f < split.k; ++f) {
    if (mode == "mt") {
      auto c = base_config;
      c.mode = TrainMode::FinetuneMT;
      jobs.push_back({f, c});
    } else {
      for (auto p : props) {
        auto c = base_config;
        c.mode = TrainMode::FinetuneST;
        c.property = p;
        jobs.push_back({f, c});
      }
    }
  }
  std::vector<JobResult> results(jobs.size());
  run_parallel(jobs.size(), options.workers,
               [&](std::size_t i) { results[i] = run_job(dataset, split, init, fraction, jobs[i], tokenizer); });

  MetricsReport report;
  report.init = init.label;
  report.mode = std::string(mode);
  report.fraction = fraction;
  report.seed = base_config.seed;
  for (auto p : props) {
    PropertyMetrics pm;
    pm.property = p;
    for (const auto& r : results) {
      for (const auto& [q, m] : r.metrics) {
        if (q == p) pm.folds.push_back(m);
      }
    }
    std::sort(pm.folds.begin(), pm.folds.end(), [](const auto& a, const auto& b) { return a.fold < b.fold; });
    std::vector<double> a, b, c, d;
    for (const auto& m : pm.folds) {
      a.push_back(m.train_rel_rmse);
      b.push_back(m.test_rel_rmse);
      c.push_back(m.train_r2);
      d.push_back(m.test_r2);
    }
    pm.train_rel_rmse = mean_std(a);
    pm.test_rel_rmse = mean_std(b);
    pm.train_r2 = mean_std(c);
    pm.test_r2 = mean_std(d);
    report.properties.push_back(std::move(pm));
  }

  if (!options.dump_dir.empty()) {
    std::filesystem::create_directories(options.dump_dir);
    for (std::size_t f = 0; f < split.k; ++f) {
      const auto path = options.dump_dir / ("pred_" + file_token(init.label) + "_" + file_token(std::string(mode)) + "_f" +
                                            format_fraction(fraction) + "_fold" + std::to_string(f) + ".csv");
      std::ofstream out(path, std::ios::binary);
      if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
      out.precision(17);
      out << "fold,split,row,property,truth,pred\n";
      for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (jobs[i].fold != f) continue;
        for (const auto& r : results[i].rows) {
          out << r.fold << ',' << r.split << ',' << r.row << ',' << property_table()[r.property].name << ',' << r.truth << ','
              << r.pred << '\n';
        }
      }
    }
  }
  return report;
}

std::vector<PredictionRow> read_prediction_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (trim(line) != "fold,split,row,property,truth,pred") fail(ErrorCode::BadFormat, path.string() + ": bad header");
  std::vector<PredictionRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string cell[6];
    for (auto& c : cell) std::getline(ss, c, ',');
    rows.push_back({std::stoull(cell[0]), cell[1], std::stoull(cell[2]), property_index(cell[3]), std::stod(cell[4]),
                    std::stod(cell[5])});
  }
  return rows;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsReport> reports) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.precision(10);
  out << "init,mode,fraction,property,folds,train_rel_rmse_mean,train_rel_rmse_std,test_rel_rmse_mean,test_rel_rmse_std,"
         "train_r2_mean,train_r2_std,test_r2_mean,test_r2_std\n";
  for (const auto& r : reports) {
    for (const auto& pm : r.properties) {
      out << r.init << ',' << r.mode << ',' << format_fraction(r.fraction) << ',' << property_table()[pm.property].name << ','
          << pm.folds.size() << ',' << pm.train_rel_rmse.mean << ',' << pm.train_rel_rmse.std << ',' << pm.test_rel_rmse.mean
          << ',' << pm.test_rel_rmse.std << ',' << pm.train_r2.mean << ',' << pm.train_r2.std << ',' << pm.test_r2.mean << ','
          << pm.test_r2.std << '\n';
    }
  }
}

namespace {

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json stat_json(const MetricStat& s) { return {{"mean", num(s.mean)}, {"std", num(s.std)}}; }

nlohmann::json report_json(const MetricsReport& r) {
  nlohmann::json props = nlohmann::json::array();
  for (const auto& pm : r.properties) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : pm.folds) {
      folds.push_back({{"fold", f.fold},
                       {"n_train", f.n_train},
                       {"n_test", f.n_test},
                       {"train_rel_rmse", num(f.train_rel_rmse)},
                       {"test_rel_rmse", num(f.test_rel_rmse)},
                       {"train_r2", num(f.train_r2)},
                       {"test_r2", num(f.test_r2)}});
    }
    props.push_back({{"property", property_table()[pm.property].name},
                     {"train_rel_rmse", stat_json(pm.train_rel_rmse)},
                     {"test_rel_rmse", stat_json(pm.test_rel_rmse)},
                     {"train_r2", stat_json(pm.train_r2)},
                     {"test_r2", stat_json(pm.test_r2)},
                     {"folds", folds}});
  }
  return {{"init", r.init}, {"mode", r.mode}, {"fraction", r.fraction}, {"seed", r.seed}, {"properties", props}};
}

}  // namespace

std::string metrics_json(std::span<const MetricsReport> reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(report_json(r));
  return arr.dump(2) + "\n";
}

// ---- MLM diagnostic ----------------------------------------------------------

MlmPredictor model_predictor(const EncoderModel<float>& model) {
  return [&model](std::span<const TokenSequence> batch) {
    ad::NoGradGuard guard;
    Rng unused(0);
    const auto logits = mlm_logits(model, encode(model, batch, false, unused));
    const std::size_t V = logits.shape().back();
    const std::size_t rows = logits.numel() / V;
    const auto data = logits.data();
    std::vector<int> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto* row = data.data() + r * V;
      out[r] = static_cast<int>(std::max_element(row, row + V) - row);
    }
    return out;
  };
}

std::map<int, std::size_t> token_counts(std::span<const std::string> corpus, const Tokenizer& tokenizer) {
  std::map<int, std::size_t> counts;
  for (const auto& line : corpus) {
    for (const auto& tok : tokenizer.tokenize(line)) {
      const int id = tokenizer.vocab().id_of(tok);
      if (!Vocabulary::is_special(id)) ++counts[id];
    }
  }
  return counts;
}

MaskedSequence eval_mask(std::string_view line, const TokenSequence& seq, std::uint64_t mask_seed, std::size_t vocab_size,
                         double rate) {
  return mask_tokens(seq, rate, derive_seed(derive_seed(mask_seed, kEvalMaskStream), hash_bytes(line)), vocab_size);
}

MlmAccuracy mlm_accuracy(const MlmPredictor& predict, std::span<const std::string> test_corpus, const Tokenizer& tokenizer,
                         std::size_t max_len, const std::map<int, std::size_t>& train_counts, std::uint64_t mask_seed,
                         double rate, std::size_t batch_size) {
  if (test_corpus.empty()) fail(ErrorCode::EmptyTestSet, "mlm_accuracy: test corpus is empty");
  const std::size_t V = tokenizer.vocab().size();
  std::vector<MaskedSequence> items;
  for (const auto& line : test_corpus) {
    auto m = eval_mask(line, tokenizer.encode(line, max_len), mask_seed, V, rate);
    if (m.selected) items.push_back(std::move(m));
  }
  if (items.empty()) fail(ErrorCode::EmptyTestSet, "mlm_accuracy: no position was masked");
  // Batches are formed in content order, so line order cannot change them.
  std::sort(items.begin(), items.end(), [](const MaskedSequence& a, const MaskedSequence& b) {
    return std::tie(a.input.ids, a.labels) < std::tie(b.input.ids, b.labels);
  });

  std::map<int, std::pair<std::size_t, std::size_t>> per;  // id -> (masked, correct)
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t begin = 0; begin < items.size(); begin += batch_size) {
    const std::size_t end = std::min(items.size(), begin + batch_size);
    std::vector<TokenSequence> inputs;
    for (std::size_t i = begin; i < end; ++i) inputs.push_back(items[i].input);
    const auto trimmed = trim_batch(inputs);
    const std::size_t L = trimmed[0].ids.size();
    const auto pred = predict(trimmed);
    if (pred.size() != trimmed.size() * L) {
      fail(ErrorCode::ShapeMismatch, "mlm_accuracy: predictor returned " + std::to_string(pred.size()) + " ids for " +
                                         std::to_string(trimmed.size() * L) + " positions");
    }
    for (std::size_t b = 0; b < trimmed.size(); ++b) {
      const auto& labels = items[begin + b].labels;
      for (std::size_t i = 0; i < L; ++i) {
        if (labels[i] == ad::kIgnoreIndex) continue;
        auto& slot = per[labels[i]];
        ++slot.first;
        if (pred[b * L + i] == labels[i]) ++slot.second;
      }
    }
  }

  std::size_t max_count = 0;
  for (const auto& [id, c] : train_counts) max_count = std::max(max_count, c);
  MlmAccuracy out;
  for (const auto& [id, mc] : per) {
    TokenAccuracy t;
    t.id = id;
    t.token = tokenizer.vocab().token_of(id);
    t.masked = mc.first;
    t.correct = mc.second;
    t.accuracy = static_cast<double>(mc.second) / static_cast<double>(mc.first);
    const auto it = train_counts.find(id);
    t.scaled_frequency = it == train_counts.end() || max_count == 0
                             ? 0.0
                             : static_cast<double>(it->second) / static_cast<double>(max_count);
    out.masked += mc.first;
    out.correct += mc.second;
    out.per_token.push_back(std::move(t));
  }
  out.accuracy = static_cast<double>(out.correct) / static_cast<double>(out.masked);
  return out;
}

MlmAccuracy mlm_accuracy(const EncoderModel<float>& model, std::span<const std::string> test_corpus,
                         const Tokenizer& tokenizer, const std::map<int, std::size_t>& train_counts,
                         std::uint64_t mask_seed, double rate) {
  return mlm_accuracy(model_predictor(model), test_corpus, tokenizer, model.config.max_len, train_counts, mask_seed, rate);
}

// ---- sweep -------------------------------------------------------------------

std::size_t SweepTable::failed() const {
  return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const auto& c) { return !c.report; }));
}

SweepTable efficiency_sweep(std::span<const PropertyRecord> dataset, std::span<const InitSpec> inits,
                            std::span<const std::string> modes, std::span<const double> fractions,
                            const TrainConfig& base_config, const Tokenizer& tokenizer, const CvOptions& options) {
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] >= 0.0 && fractions[i] <= 1.0)) fail(ErrorCode::BadConfig, "sweep: fractions must lie in [0, 1]");
    if (i && fractions[i] <= fractions[i - 1]) fail(ErrorCode::BadConfig, "sweep: fractions must be strictly increasing");
  }
  for (const auto& m : modes) mode_properties(m);
  SweepTable table;
  for (const auto& init : inits) {
    for (const auto& mode : modes) {
      for (double f : fractions) table.cells.push_back({init.label, mode, f, std::nullopt, {}});
    }
  }
  // Cells run one after another; each cell spreads its folds over the workers.
  std::size_t idx = 0;
  for (const auto& init : inits) {
    for (const auto& mode : modes) {
      for (double f : fractions) {
        auto& cell = table.cells[idx++];
        try {
          cell.report = cv_evaluate(dataset, init, mode, f, base_config, tokenizer, options);
        } catch (const std::exception& e) {
          cell.error = e.what();
        }
      }
    }
  }
  return table;
}

namespace {

constexpr std::array<const char*, 2> kSplits = {"train", "test"};
constexpr std::array<const char*, 2> kMetrics = {"rel_rmse", "r2"};

const MetricStat& pick(const PropertyMetrics& pm, std::size_t split, std::size_t metric) {
  if (metric == 0) return split == 0 ? pm.train_rel_rmse : pm.test_rel_rmse;
  return split == 0 ? pm.train_r2 : pm.test_r2;
}

}  // namespace

std::size_t sweep_row_count(const SweepTable& table) {
  std::size_t n = 0;
  for (const auto& c : table.cells) n += mode_properties(c.mode).size() * kSplits.size() * kMetrics.size();
  return n;
}

void write_sweep_csv(const std::filesystem::path& path, const SweepTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.precision(10);
  out << "init,mode,fraction,property,split,metric,mean,std\n";
  for (const auto& c : table.cells) {
    const auto props = mode_properties(c.mode);
    for (std::size_t pi = 0; pi < props.size(); ++pi) {
      for (std::size_t s = 0; s < kSplits.size(); ++s) {
        for (std::size_t m = 0; m < kMetrics.size(); ++m) {
          out << c.init << ',' << c.mode << ',' << format_fraction(c.fraction) << ',' << property_table()[props[pi]].name << ','
              << kSplits[s] << ',' << kMetrics[m] << ',';
          if (c.report) {
            const auto& st = pick(c.report->properties[pi], s, m);
            out << st.mean << ',' << st.std << '\n';
          } else {
            out << "nan,nan\n";
          }
        }
      }
    }
  }
}

std::string sweep_json(const SweepTable& table) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : table.cells) {
    nlohmann::json j = {{"init", c.init}, {"mode", c.mode}, {"fraction", c.fraction}, {"ok", c.report.has_value()}};
    if (c.report) j["report"] = report_json(*c.report);
    else j["error"] = c.error;
    cells.push_back(std::move(j));
  }
  return nlohmann::json{{"cells", cells}, {"failed", table.failed()}}.dump(2) + "\n";
}

}  // namespace polytx
