#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polytx/dataset.hpp"
#include "polytx/encoder.hpp"
#include "polytx/optim.hpp"
#include "polytx/rng.hpp"
#include "polytx/tokenizer.hpp"

namespace polytx {

enum class TrainMode { Pretrain, FinetuneST, FinetuneMT };

struct TrainConfig {
  TrainMode mode = TrainMode::Pretrain;
  std::size_t property = 0;  // FinetuneST only
  OptimizerKind optimizer = OptimizerKind::Lamb;
  double peak_lr = 1e-3;
  double weight_decay = 0.01;
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  std::size_t grad_accum_steps = 3;
  double warmup_ratio = 0.1;
  double mask_rate = 0.15;
  std::size_t mask_views = 1;  // independently masked copies of each line per pretraining epoch
  std::uint64_t seed = 42;
  Schedule schedule = Schedule::WarmupDecay;

  void validate() const;
  /// Regression head width: 1 for ST, 8 for MT.
  std::size_t head_width() const { return mode == TrainMode::FinetuneST ? 1 : kNumProperties; }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// LAMB, peak lr 1e-3, warmup ratio 0.1, 15% masking, accumulation 3.
TrainConfig pretrain_defaults();
/// AdamW, lr 1e-5, zero weight decay, batch 16, 600 epochs, constant lr.
TrainConfig finetune_defaults(TrainMode mode = TrainMode::FinetuneMT, std::size_t property = 0);

/// "pretrain", "mt" or "st:<property>".
std::string mode_name(const TrainConfig& config);
void set_mode(TrainConfig& config, std::string_view mode);

/// `key = value` lines, `#` comments. Keys are the TrainConfig field names;
/// `mode` takes pretrain | mt | st:<property>. Unknown keys are errors.
TrainConfig parse_train_config(std::string_view text, TrainConfig base = pretrain_defaults());
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = pretrain_defaults());
std::string format_train_config(const TrainConfig& config);

// ---- masking ----------------------------------------------------------------

struct MaskingPolicy {
  double mask_share = 0.8;
  double random_share = 0.1;  // the remainder stays unchanged
};

struct MaskedSequence {
  TokenSequence input;
  std::vector<int> labels;  // original id at selected positions, ad::kIgnoreIndex elsewhere
  std::size_t selected = 0;
};

/// Specials ([PAD], [UNK], [CLS], [SEP], [MASK]) are never selected. Random
/// replacements are drawn uniformly from the non-special ids.
MaskedSequence mask_tokens(const TokenSequence& seq, double rate, Rng& rng, std::size_t vocab_size,
                           const MaskingPolicy& policy = {});
MaskedSequence mask_tokens(const TokenSequence& seq, double rate, std::uint64_t seed, std::size_t vocab_size,
                           const MaskingPolicy& policy = {});

// ---- pretraining -------------------------------------------------------------

using LogFn = std::function<void(const std::string&)>;

struct PretrainOptions {
  std::filesystem::path out_dir;         // empty: no files written
  std::size_t checkpoint_every = 0;      // epochs; 0 = final checkpoint only
  std::size_t log_every = 10;            // optimizer steps
  std::optional<std::filesystem::path> resume;
  LogFn log;
};

template <typename T>
struct PretrainResult {
  EncoderModel<T> model;
  std::vector<double> step_losses;   // mean micro-batch loss per optimizer step
  std::vector<double> epoch_losses;  // mean micro-batch loss per epoch
  std::size_t micro_batches_per_epoch = 0;
  std::size_t steps_per_epoch = 0;
  std::uint64_t optimizer_steps = 0;
};

/// Micro-batch count per epoch and optimizer steps per epoch (a trailing
/// partial accumulation group still steps).
std::size_t micro_batches_per_epoch(std::size_t corpus_size, std::size_t batch_size);
std::size_t optimizer_steps_per_epoch(std::size_t corpus_size, std::size_t batch_size, std::size_t grad_accum_steps);

template <typename T>
PretrainResult<T> pretrain(std::span<const std::string> corpus, const Tokenizer& tokenizer, const TrainConfig& config,
                           const EncoderConfig& encoder_config, const PretrainOptions& options = {});

// ---- fine-tuning -------------------------------------------------------------

/// Indices kept for a data fraction: the first ceil(f * n) of a seeded
/// shuffle, so smaller fractions are prefixes of larger ones.
std::vector<std::size_t> fraction_subset(std::size_t n, double fraction, std::uint64_t seed);

/// Copy of `init` with a fresh regression head sized for the mode.
template <typename T>
EncoderModel<T> prepare_finetune_model(const EncoderModel<T>& init, const TrainConfig& config);

/// Pre-tokenized regression data. Targets are scaled, row-major n x width.
template <typename T>
struct RegressionSet {
  std::vector<TokenSequence> inputs;
  std::vector<T> targets;
  std::vector<std::uint8_t> observed;
  std::size_t width = 0;

  std::size_t size() const { return inputs.size(); }
};

template <typename T>
RegressionSet<T> make_regression_set(std::span<const PropertyRecord> records, std::span<const std::size_t> rows,
                                     const Tokenizer& tokenizer, const PropertyScaler& scaler, const TrainConfig& config,
                                     std::size_t max_len);

using StepFn = std::function<void(std::uint64_t step, double loss)>;

/// L1 regression loop over a prepared set; returns mean loss per epoch.
template <typename T>
std::vector<double> fit_regression(EncoderModel<T>& model, const RegressionSet<T>& data, const TrainConfig& config,
                                   const StepFn& on_step = {});

template <typename T>
struct FinetuneResult {
  EncoderModel<T> model;
  PropertyScaler scaler;
  std::vector<std::size_t> train_rows;  // indices into the records actually trained on
  std::vector<double> epoch_losses;
};

/// Fits the scaler on all given records, takes the fraction subset, and
/// trains ST (records observing the property) or MT (masked L1).
template <typename T>
FinetuneResult<T> finetune(const EncoderModel<T>& init, std::span<const PropertyRecord> records,
                           const Tokenizer& tokenizer, const TrainConfig& config, double data_fraction,
                           const StepFn& on_step = {});

/// Unscaled predictions, row-major records.size() x head width.
template <typename T>
std::vector<double> predict(const EncoderModel<T>& model, const PropertyScaler& scaler, const TrainConfig& config,
                            std::span<const PropertyRecord> records, const Tokenizer& tokenizer,
                            std::size_t batch_size = 64);

}  // namespace polytx
