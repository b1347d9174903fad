#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polytx/dataset.hpp"
#include "polytx/encoder.hpp"
#include "polytx/train.hpp"

namespace polytx {

struct FoldSplit {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::size_t>> train;
  std::vector<std::vector<std::size_t>> test;
};

/// Seeded shuffle, then k contiguous chunks; the first n % k chunks get one
/// extra index.
FoldSplit kfold(std::size_t n, std::size_t k = 5, std::uint64_t seed = 0);

/// sqrt(mean squared error) / (max - min).
double relative_rmse(std::span<const double> pred, std::span<const double> truth, double prop_min, double prop_max);
/// Same, with the property's published range.
double relative_rmse(std::span<const double> pred, std::span<const double> truth, std::size_t property);
/// 1 - SS_res / SS_tot.
double r2(std::span<const double> pred, std::span<const double> truth);

struct MetricStat {
  double mean = 0.0;
  double std = 0.0;  // population (ddof = 0) over folds
};

MetricStat mean_std(std::span<const double> values);

struct FoldMetrics {
  std::size_t fold = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double train_rel_rmse = 0.0;
  double test_rel_rmse = 0.0;
  double train_r2 = 0.0;
  double test_r2 = 0.0;
  std::vector<std::size_t> train_rows;  // dataset indices the model was fitted on
};

struct PropertyMetrics {
  std::size_t property = 0;
  std::vector<FoldMetrics> folds;
  MetricStat train_rel_rmse, test_rel_rmse, train_r2, test_r2;
};

struct MetricsReport {
  std::string init;
  std::string mode;  // "mt", "st" (one model per property) or "st:<property>"
  double fraction = 1.0;
  std::uint64_t seed = 0;
  std::vector<PropertyMetrics> properties;
};

/// Starting point for fine-tuning.
struct InitSpec {
  std::string label;
  EncoderModel<float> model;
};

InitSpec random_init(const EncoderConfig& config, std::uint64_t seed, std::string label = "random");
InitSpec checkpoint_init(const std::filesystem::path& path, std::string label = "pretrained");

struct CvOptions {
  std::size_t folds = 5;
  std::uint64_t split_seed = 0;
  std::size_t workers = 1;
  std::filesystem::path dump_dir;  // prediction CSVs per fold when non-empty
};

/// Properties covered by a mode string.
std::vector<std::size_t> mode_properties(std::string_view mode);

/// Fine-tunes on each fold's training split and scores both splits in
/// range-normalized units. Throws ConstantTruth naming the fold and property.
MetricsReport cv_evaluate(std::span<const PropertyRecord> dataset, const InitSpec& init, std::string_view mode,
                          double fraction, const TrainConfig& base_config, const Tokenizer& tokenizer,
                          const CvOptions& options = {});

/// Prediction dump row: fold,split,row,property,truth,pred.
struct PredictionRow {
  std::size_t fold;
  std::string split;
  std::size_t row;
  std::size_t property;
  double truth;
  double pred;
};
std::vector<PredictionRow> read_prediction_dump(const std::filesystem::path& path);

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsReport> reports);
std::string metrics_json(std::span<const MetricsReport> reports);

// ---- MLM diagnostic ----------------------------------------------------------

struct TokenAccuracy {
  int id = 0;
  std::string token;
  std::size_t masked = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  double scaled_frequency = 0.0;
};

struct MlmAccuracy {
  double accuracy = 0.0;
  std::size_t masked = 0;
  std::size_t correct = 0;
  std::vector<TokenAccuracy> per_token;  // ascending id, tokens that were masked at least once
};

/// Input ids -> argmax id per position, flattened over the batch.
using MlmPredictor = std::function<std::vector<int>(std::span<const TokenSequence> batch)>;

MlmPredictor model_predictor(const EncoderModel<float>& model);

/// Non-special token counts over a corpus.
std::map<int, std::size_t> token_counts(std::span<const std::string> corpus, const Tokenizer& tokenizer);

/// The evaluation mask for one line: seeded by the mask seed and a hash of
/// the line text, so results do not depend on line order.
MaskedSequence eval_mask(std::string_view line, const TokenSequence& seq, std::uint64_t mask_seed, std::size_t vocab_size,
                         double rate = 0.15);

MlmAccuracy mlm_accuracy(const MlmPredictor& predict, std::span<const std::string> test_corpus, const Tokenizer& tokenizer,
                         std::size_t max_len, const std::map<int, std::size_t>& train_counts, std::uint64_t mask_seed,
                         double rate = 0.15, std::size_t batch_size = 64);
MlmAccuracy mlm_accuracy(const EncoderModel<float>& model, std::span<const std::string> test_corpus,
                         const Tokenizer& tokenizer, const std::map<int, std::size_t>& train_counts,
                         std::uint64_t mask_seed, double rate = 0.15);

// ---- learning-efficiency sweep ----------------------------------------------

inline constexpr std::array<double, 6> kDefaultFractions = {0.0, 0.0625, 0.125, 0.25, 0.5, 1.0};

struct SweepCell {
  std::string init;
  std::string mode;
  double fraction = 0.0;
  std::optional<MetricsReport> report;
  std::string error;  // set when the cell failed
};

struct SweepTable {
  std::vector<SweepCell> cells;  // init, mode, fraction order
  std::size_t failed() const;
};

SweepTable efficiency_sweep(std::span<const PropertyRecord> dataset, std::span<const InitSpec> inits,
                            std::span<const std::string> modes, std::span<const double> fractions,
                            const TrainConfig& base_config, const Tokenizer& tokenizer, const CvOptions& options = {});

/// Long format: init,mode,fraction,property,split,metric,mean,std. Failed
/// cells contribute rows with nan values.
void write_sweep_csv(const std::filesystem::path& path, const SweepTable& table);
std::size_t sweep_row_count(const SweepTable& table);
std::string sweep_json(const SweepTable& table);

std::string format_fraction(double f);

}  // namespace polytx
