#include "polytx/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "polytx/error.hpp"

namespace polytx {

using ad::Tensor;

// ---- config ------------------------------------------------------------------

void TrainConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorCode::BadConfig, msg); };
  if (mode == TrainMode::FinetuneST && property >= kNumProperties) bad("property index out of range");
  if (!(peak_lr > 0.0) || !std::isfinite(peak_lr)) bad("peak_lr must be positive");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) bad("weight_decay must be >= 0");
  if (batch_size == 0) bad("batch_size must be >= 1");
  if (epochs == 0) bad("epochs must be >= 1");
  if (grad_accum_steps == 0) bad("grad_accum_steps must be >= 1");
  if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) bad("warmup_ratio must be in [0, 1]");
  if (!(mask_rate >= 0.0 && mask_rate <= 1.0)) bad("mask_rate must be in [0, 1]");
  if (mask_views == 0) bad("mask_views must be >= 1");
}

TrainConfig pretrain_defaults() { return TrainConfig{}; }

TrainConfig finetune_defaults(TrainMode mode, std::size_t property) {
  TrainConfig c;
  c.mode = mode;
  c.property = property;
  c.optimizer = OptimizerKind::AdamW;
  c.peak_lr = 1e-5;
  c.weight_decay = 0.0;
  c.batch_size = 16;
  c.epochs = 600;
  c.grad_accum_steps = 1;
  c.warmup_ratio = 0.0;
  c.schedule = Schedule::Constant;
  return c;
}

std::string mode_name(const TrainConfig& config) {
  switch (config.mode) {
    case TrainMode::Pretrain: return "pretrain";
    case TrainMode::FinetuneMT: return "mt";
    case TrainMode::FinetuneST: return "st:" + std::string(property_table()[config.property].name);
  }
  return "pretrain";
}

void set_mode(TrainConfig& config, std::string_view mode) {
  if (mode == "pretrain") {
    config.mode = TrainMode::Pretrain;
  } else if (mode == "mt") {
    config.mode = TrainMode::FinetuneMT;
  } else if (mode.starts_with("st:")) {
    config.mode = TrainMode::FinetuneST;
    config.property = property_index(mode.substr(3));
  } else {
    fail(ErrorCode::BadConfig, "unknown mode '" + std::string(mode) + "' (expected pretrain|mt|st:<property>)");
  }
}

namespace {

double parse_real(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    const std::string s(v);
    const double d = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    fail(ErrorCode::BadConfig, "config key '" + std::string(key) + "': bad number '" + std::string(v) + "'");
  }
}

std::uint64_t parse_uint(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    const std::string s(v);
    if (!s.empty() && s[0] == '-') throw std::invalid_argument("negative");
    const auto u = std::stoull(s, &used, 0);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return u;
  } catch (const std::exception&) {
    fail(ErrorCode::BadConfig, "config key '" + std::string(key) + "': bad integer '" + std::string(v) + "'");
  }
}

}  // namespace

TrainConfig parse_train_config(std::string_view text, TrainConfig c) {
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = std::string_view(raw);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorCode::BadConfig, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key == "mode") set_mode(c, value);
    else if (key == "optimizer") c.optimizer = parse_optimizer(value);
    else if (key == "peak_lr") c.peak_lr = parse_real(key, value);
    else if (key == "weight_decay") c.weight_decay = parse_real(key, value);
    else if (key == "batch_size") c.batch_size = parse_uint(key, value);
    else if (key == "epochs") c.epochs = parse_uint(key, value);
    else if (key == "grad_accum_steps") c.grad_accum_steps = parse_uint(key, value);
    else if (key == "warmup_ratio") c.warmup_ratio = parse_real(key, value);
    else if (key == "mask_rate") c.mask_rate = parse_real(key, value);
    else if (key == "mask_views") c.mask_views = parse_uint(key, value);
    else if (key == "seed") c.seed = parse_uint(key, value);
    else if (key == "schedule") c.schedule = parse_schedule(value);
    else fail(ErrorCode::BadConfig, "config line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str(), base);
}

std::string format_train_config(const TrainConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "mode = " << mode_name(c) << '\n'
      << "optimizer = " << optimizer_name(c.optimizer) << '\n'
      << "peak_lr = " << c.peak_lr << '\n'
      << "weight_decay = " << c.weight_decay << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "epochs = " << c.epochs << '\n'
      << "grad_accum_steps = " << c.grad_accum_steps << '\n'
      << "warmup_ratio = " << c.warmup_ratio << '\n'
      << "mask_rate = " << c.mask_rate << '\n'
      << "mask_views = " << c.mask_views << '\n'
      << "seed = " << c.seed << '\n'
      << "schedule = " << schedule_name(c.schedule) << '\n';
  return out.str();
}

// ---- masking -------------------------------------------------------------------

MaskedSequence mask_tokens(const TokenSequence& seq, double rate, Rng& rng, std::size_t vocab_size,
                           const MaskingPolicy& policy) {
  MaskedSequence out;
  out.input = seq;
  out.labels.assign(seq.ids.size(), ad::kIgnoreIndex);
  const auto specials = static_cast<std::size_t>(kNumSpecial);
  const bool can_randomize = vocab_size > specials;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    const int id = seq.ids[i];
    if (id < kNumSpecial) continue;
    if (!(rng.uniform() < rate)) continue;
    ++out.selected;
    out.labels[i] = id;
    const double u = rng.uniform();
    if (u < policy.mask_share) {
      out.input.ids[i] = kMaskId;
    } else if (u < policy.mask_share + policy.random_share && can_randomize) {
      out.input.ids[i] = static_cast<int>(specials + rng.below(vocab_size - specials));
    }
  }
  return out;
}

MaskedSequence mask_tokens(const TokenSequence& seq, double rate, std::uint64_t seed, std::size_t vocab_size,
                           const MaskingPolicy& policy) {
  Rng rng(seed);
  return mask_tokens(seq, rate, rng, vocab_size, policy);
}

// ---- pretraining ---------------------------------------------------------------

std::size_t micro_batches_per_epoch(std::size_t corpus_size, std::size_t batch_size) {
  return (corpus_size + batch_size - 1) / batch_size;
}

std::size_t optimizer_steps_per_epoch(std::size_t corpus_size, std::size_t batch_size, std::size_t grad_accum_steps) {
  return (micro_batches_per_epoch(corpus_size, batch_size) + grad_accum_steps - 1) / grad_accum_steps;
}

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kMaskStream = 0x4d41534bULL;
constexpr std::uint64_t kDropoutStream = 0x44524f50ULL;
constexpr std::uint64_t kSubsetStream = 0x53554253ULL;
constexpr std::uint64_t kHeadStream = 0x48454144ULL;

void emit(const LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

template <typename T>
std::vector<NamedArray> optimizer_extra(const Optimizer<T>& opt) {
  return opt.export_state();
}

constexpr std::size_t kLengthWindow = 50;  // batches per length-sorting window

// Shuffles the items, sorts windows of kLengthWindow batches by sequence
// length so batches carry little padding, then shuffles the batch order.
template <typename LengthOf>
std::vector<std::vector<std::size_t>> length_grouped_batches(std::size_t items, std::size_t batch_size, LengthOf length_of,
                                                             std::uint64_t seed) {
  auto order = shuffled_indices(items, derive_seed(seed, 1));
  const std::size_t window = batch_size * kLengthWindow;
  for (std::size_t w = 0; w < items; w += window) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(w);
    auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(items, w + window));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) { return length_of(a) < length_of(b); });
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < items; b += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(items, b + batch_size)));
  }
  const auto perm = shuffled_indices(batches.size(), derive_seed(seed, 2));
  std::vector<std::vector<std::size_t>> out;
  out.reserve(batches.size());
  for (auto i : perm) out.push_back(std::move(batches[i]));
  return out;
}

}  // namespace

template <typename T>
PretrainResult<T> pretrain(std::span<const std::string> corpus, const Tokenizer& tokenizer, const TrainConfig& config,
                           const EncoderConfig& encoder_config, const PretrainOptions& options) {
  config.validate();
  encoder_config.validate();
  if (corpus.empty()) fail(ErrorCode::EmptyCorpus, "pretrain: corpus is empty");
  if (encoder_config.vocab_size != tokenizer.vocab().size()) {
    fail(ErrorCode::BadConfig, "pretrain: encoder vocab_size " + std::to_string(encoder_config.vocab_size) +
                                   " differs from vocabulary size " + std::to_string(tokenizer.vocab().size()));
  }
  const std::size_t n = corpus.size();
  std::vector<TokenSequence> encoded;
  encoded.reserve(n);
  for (const auto& line : corpus) encoded.push_back(tokenizer.encode(line, encoder_config.max_len));

  const std::size_t items = n * config.mask_views;
  PretrainResult<T> result;
  result.micro_batches_per_epoch = micro_batches_per_epoch(items, config.batch_size);
  result.steps_per_epoch = optimizer_steps_per_epoch(items, config.batch_size, config.grad_accum_steps);
  const std::uint64_t total_steps = static_cast<std::uint64_t>(result.steps_per_epoch) * config.epochs;

  Optimizer<T> opt(config.optimizer, AdamHyper{0.9, 0.999, 1e-8, config.weight_decay});
  std::size_t start_epoch = 0;
  if (options.resume) {
    auto loaded = load_checkpoint<T>(*options.resume);
    if (!(loaded.model.config == encoder_config)) {
      fail(ErrorCode::BadConfig, "pretrain: resume checkpoint has a different encoder configuration");
    }
    result.model = std::move(loaded.model);
    auto params = result.model.parameters();
    opt.import_state(loaded.extra, params);
    start_epoch = static_cast<std::size_t>(loaded.meta.epoch);
    emit(options.log, "resumed from " + options.resume->string() + " at epoch " + std::to_string(start_epoch));
  } else {
    result.model = init_encoder<T>(encoder_config, config.seed);
  }
  auto params = result.model.parameters();

  std::ofstream loss_log;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    loss_log.open(options.out_dir / "pretrain_log.csv", start_epoch ? std::ios::app : std::ios::trunc);
    if (!loss_log) fail(ErrorCode::IoError, "cannot write " + (options.out_dir / "pretrain_log.csv").string());
    if (!start_epoch) loss_log << "epoch,step,lr,loss\n";
  }

  auto write_ckpt = [&](const std::filesystem::path& path, std::size_t epochs_done) {
    const auto extra = optimizer_extra(opt);
    save_checkpoint<T>(path, result.model, CheckpointMeta{opt.steps_taken(), epochs_done, config.seed}, extra);
  };

  const std::size_t V = encoder_config.vocab_size;
  for (std::size_t epoch = start_epoch; epoch < config.epochs; ++epoch) {
    const auto batches = length_grouped_batches(
        items, config.batch_size, [&](std::size_t item) { return encoded[item % n].length; },
        derive_seed(derive_seed(config.seed, kShuffleStream), epoch));
    double epoch_loss = 0.0;
    std::size_t epoch_batches = 0;
    std::size_t mb = 0;
    while (mb < result.micro_batches_per_epoch) {
      const std::size_t group = std::min(config.grad_accum_steps, result.micro_batches_per_epoch - mb);
      double group_loss = 0.0;
      std::size_t group_used = 0;
      for (std::size_t g = 0; g < group; ++g, ++mb) {
        std::vector<TokenSequence> inputs;
        std::vector<std::vector<int>> labels;
        std::size_t selected = 0;
        for (const std::size_t item : batches[mb]) {
          const std::size_t row = item % n;
          const auto mask_seed = derive_seed(derive_seed(config.seed, kMaskStream), epoch * items + item);
          auto masked = mask_tokens(encoded[row], config.mask_rate, mask_seed, V);
          selected += masked.selected;
          inputs.push_back(std::move(masked.input));
          labels.push_back(std::move(masked.labels));
        }
        if (selected == 0) continue;
        const auto trimmed = trim_batch(inputs);
        const std::size_t L = trimmed[0].ids.size();
        std::vector<int> flat;
        flat.reserve(trimmed.size() * L);
        for (const auto& l : labels) flat.insert(flat.end(), l.begin(), l.begin() + static_cast<std::ptrdiff_t>(L));

        const std::uint64_t global_mb = static_cast<std::uint64_t>(epoch) * result.micro_batches_per_epoch + mb;
        Rng drop_rng(derive_seed(derive_seed(config.seed, kDropoutStream), global_mb));
        const auto hidden = encode(result.model, std::span<const TokenSequence>(trimmed), true, drop_rng);
        const auto loss = ad::cross_entropy(mlm_logits(result.model, hidden), flat);
        const double value = static_cast<double>(loss.item());
        ad::backward(ad::scale(loss, static_cast<T>(1.0 / static_cast<double>(group))));
        group_loss += value;
        ++group_used;
        epoch_loss += value;
        ++epoch_batches;
      }
      const std::uint64_t step = opt.steps_taken() + 1;
      const double lr = lr_at(step, total_steps, config.peak_lr, config.warmup_ratio, config.schedule);
      opt.step(params, lr);
      result.model.zero_grad();
      const double mean_loss = group_used ? group_loss / static_cast<double>(group_used) : 0.0;
      result.step_losses.push_back(mean_loss);
      if (loss_log.is_open()) loss_log << epoch + 1 << ',' << step << ',' << lr << ',' << mean_loss << '\n';
      if (options.log_every && step % options.log_every == 0) {
        std::ostringstream msg;
        msg << "step " << step << "/" << total_steps << " lr " << lr << " loss " << mean_loss;
        emit(options.log, msg.str());
      }
    }
    result.epoch_losses.push_back(epoch_batches ? epoch_loss / static_cast<double>(epoch_batches) : 0.0);
    {
      std::ostringstream msg;
      msg << "epoch " << epoch + 1 << "/" << config.epochs << " loss " << result.epoch_losses.back();
      emit(options.log, msg.str());
    }
    if (!options.out_dir.empty() && options.checkpoint_every && (epoch + 1) % options.checkpoint_every == 0 &&
        epoch + 1 < config.epochs) {
      write_ckpt(options.out_dir / ("checkpoint_epoch" + std::to_string(epoch + 1) + ".bin"), epoch + 1);
    }
  }
  result.optimizer_steps = opt.steps_taken();
  if (!options.out_dir.empty()) write_ckpt(options.out_dir / "final.bin", config.epochs);
  return result;
}

// ---- fine-tuning ---------------------------------------------------------------

std::vector<std::size_t> fraction_subset(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) fail(ErrorCode::BadConfig, "data fraction must be in [0, 1]");
  auto order = shuffled_indices(n, derive_seed(seed, kSubsetStream));
  // The small slack keeps exact products such as 0.1 * 30 from rounding up.
  const double want = fraction * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(want - 1e-9 * std::max(1.0, want)));
  k = std::min(k, n);
  order.resize(k);
  return order;
}

template <typename T>
EncoderModel<T> prepare_finetune_model(const EncoderModel<T>& init, const TrainConfig& config) {
  auto model = init.clone();
  reset_regression_head(model, config.head_width(), derive_seed(config.seed, kHeadStream));
  return model;
}

template <typename T>
RegressionSet<T> make_regression_set(std::span<const PropertyRecord> records, std::span<const std::size_t> rows,
                                     const Tokenizer& tokenizer, const PropertyScaler& scaler, const TrainConfig& config,
                                     std::size_t max_len) {
  RegressionSet<T> set;
  set.width = config.head_width();
  for (auto r : rows) {
    const auto& rec = records[r];
    set.inputs.push_back(tokenizer.encode(rec.smiles, max_len));
    for (std::size_t j = 0; j < set.width; ++j) {
      const std::size_t p = config.mode == TrainMode::FinetuneST ? config.property : j;
      const bool seen = rec.observed(p);
      set.targets.push_back(seen ? static_cast<T>(scaler.scale(p, *rec.values[p])) : T(0));
      set.observed.push_back(seen ? 1 : 0);
    }
  }
  return set;
}

template <typename T>
std::vector<double> fit_regression(EncoderModel<T>& model, const RegressionSet<T>& data, const TrainConfig& config,
                                   const StepFn& on_step) {
  config.validate();
  if (model.config.num_properties != data.width) {
    fail(ErrorCode::ShapeMismatch, "fit_regression: head width " + std::to_string(model.config.num_properties) +
                                       " but targets have width " + std::to_string(data.width));
  }
  std::vector<double> epoch_losses;
  const std::size_t n = data.size();
  if (n == 0) return epoch_losses;
  const std::size_t W = data.width;
  const std::size_t mbs = micro_batches_per_epoch(n, config.batch_size);
  const std::size_t steps_per_epoch = optimizer_steps_per_epoch(n, config.batch_size, config.grad_accum_steps);
  const std::uint64_t total_steps = static_cast<std::uint64_t>(steps_per_epoch) * config.epochs;
  Optimizer<T> opt(config.optimizer, AdamHyper{0.9, 0.999, 1e-8, config.weight_decay});
  auto params = model.parameters();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batches = length_grouped_batches(
        n, config.batch_size, [&](std::size_t row) { return data.inputs[row].length; },
        derive_seed(derive_seed(config.seed, kShuffleStream), epoch));
    double epoch_loss = 0.0;
    std::size_t used = 0;
    std::size_t mb = 0;
    while (mb < mbs) {
      const std::size_t group = std::min(config.grad_accum_steps, mbs - mb);
      double group_loss = 0.0;
      std::size_t group_used = 0;
      for (std::size_t g = 0; g < group; ++g, ++mb) {
        std::vector<TokenSequence> inputs;
        std::vector<T> targets;
        std::vector<std::uint8_t> observed;
        for (const std::size_t row : batches[mb]) {
          inputs.push_back(data.inputs[row]);
          targets.insert(targets.end(), data.targets.begin() + row * W, data.targets.begin() + (row + 1) * W);
          observed.insert(observed.end(), data.observed.begin() + row * W, data.observed.begin() + (row + 1) * W);
        }
        if (std::none_of(observed.begin(), observed.end(), [](auto o) { return o != 0; })) continue;
        const auto trimmed = trim_batch(inputs);
        const std::uint64_t global_mb = static_cast<std::uint64_t>(epoch) * mbs + mb;
        Rng drop_rng(derive_seed(derive_seed(config.seed, kDropoutStream), global_mb));
        const auto hidden = encode(model, std::span<const TokenSequence>(trimmed), true, drop_rng);
        const auto pred = regress(model, hidden, true, drop_rng);
        const auto target = Tensor<T>::from({trimmed.size(), W}, std::move(targets));
        const auto loss = ad::l1_loss(pred, target, observed);
        const double value = static_cast<double>(loss.item());
        ad::backward(ad::scale(loss, static_cast<T>(1.0 / static_cast<double>(group))));
        group_loss += value;
        ++group_used;
        epoch_loss += value;
        ++used;
      }
      const std::uint64_t step = opt.steps_taken() + 1;
      opt.step(params, lr_at(step, total_steps, config.peak_lr, config.warmup_ratio, config.schedule));
      model.zero_grad();
      if (on_step) on_step(step, group_used ? group_loss / static_cast<double>(group_used) : 0.0);
    }
    epoch_losses.push_back(used ? epoch_loss / static_cast<double>(used) : 0.0);
  }
  return epoch_losses;
}

template <typename T>
FinetuneResult<T> finetune(const EncoderModel<T>& init, std::span<const PropertyRecord> records,
                           const Tokenizer& tokenizer, const TrainConfig& config, double data_fraction,
                           const StepFn& on_step) {
  config.validate();
  if (config.mode == TrainMode::Pretrain) fail(ErrorCode::BadConfig, "finetune: mode must be st:<property> or mt");
  if (records.empty() && data_fraction > 0.0) fail(ErrorCode::EmptyInput, "finetune: no training records");
  FinetuneResult<T> out;
  out.model = prepare_finetune_model(init, config);
  out.scaler = PropertyScaler::fit(records);
  if (data_fraction == 0.0) return out;

  for (auto r : fraction_subset(records.size(), data_fraction, config.seed)) {
    if (config.mode == TrainMode::FinetuneST && !records[r].observed(config.property)) continue;
    out.train_rows.push_back(r);
  }
  if (out.train_rows.empty()) {
    const std::string what = config.mode == TrainMode::FinetuneST
                                 ? "no training record observes " + std::string(property_table()[config.property].name)
                                 : "no training records";
    fail(ErrorCode::AllUnobserved, "finetune: " + what);
  }
  const auto data =
      make_regression_set<T>(records, out.train_rows, tokenizer, out.scaler, config, out.model.config.max_len);
  out.epoch_losses = fit_regression(out.model, data, config, on_step);
  return out;
}

template <typename T>
std::vector<double> predict(const EncoderModel<T>& model, const PropertyScaler& scaler, const TrainConfig& config,
                            std::span<const PropertyRecord> records, const Tokenizer& tokenizer, std::size_t batch_size) {
  const std::size_t W = model.config.num_properties;
  if (W != config.head_width()) {
    fail(ErrorCode::ShapeMismatch, "predict: head width " + std::to_string(W) + " does not fit mode " + mode_name(config));
  }
  ad::NoGradGuard guard;
  Rng unused(0);
  std::vector<double> out;
  out.reserve(records.size() * W);
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t begin = 0; begin < records.size(); begin += batch_size) {
    const std::size_t end = std::min(records.size(), begin + batch_size);
    std::vector<TokenSequence> inputs;
    for (std::size_t i = begin; i < end; ++i) inputs.push_back(tokenizer.encode(records[i].smiles, model.config.max_len));
    const auto trimmed = trim_batch(inputs);
    const auto hidden = encode(model, std::span<const TokenSequence>(trimmed), false, unused);
    const auto pred = regress(model, hidden, false, unused);
    const auto values = pred.data();
    for (std::size_t b = 0; b < trimmed.size(); ++b) {
      for (std::size_t j = 0; j < W; ++j) {
        const std::size_t p = config.mode == TrainMode::FinetuneST ? config.property : j;
        out.push_back(scaler.unscale(p, static_cast<double>(values[b * W + j])));
      }
    }
  }
  return out;
}

#define POLYTX_INSTANTIATE_TRAIN(T)                                                                                   \
  template PretrainResult<T> pretrain<T>(std::span<const std::string>, const Tokenizer&, const TrainConfig&,           \
                                         const EncoderConfig&, const PretrainOptions&);                                \
  template EncoderModel<T> prepare_finetune_model<T>(const EncoderModel<T>&, const TrainConfig&);                      \
  template RegressionSet<T> make_regression_set<T>(std::span<const PropertyRecord>, std::span<const std::size_t>,      \
                                                   const Tokenizer&, const PropertyScaler&, const TrainConfig&,        \
                                                   std::size_t);                                                       \
  template std::vector<double> fit_regression<T>(EncoderModel<T>&, const RegressionSet<T>&, const TrainConfig&,        \
                                                 const StepFn&);                                                       \
  template FinetuneResult<T> finetune<T>(const EncoderModel<T>&, std::span<const PropertyRecord>, const Tokenizer&,    \
                                         const TrainConfig&, double, const StepFn&);                                   \
  template std::vector<double> predict<T>(const EncoderModel<T>&, const PropertyScaler&, const TrainConfig&,           \
                                          std::span<const PropertyRecord>, const Tokenizer&, std::size_t);

POLYTX_INSTANTIATE_TRAIN(float)
POLYTX_INSTANTIATE_TRAIN(double)

}  // namespace polytx
