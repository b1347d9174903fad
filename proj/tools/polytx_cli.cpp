// polytx: command-line entry point for every pipeline stage.

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "polytx/analysis.hpp"
#include "polytx/dataset.hpp"
#include "polytx/encoder.hpp"
#include "polytx/error.hpp"
#include "polytx/eval.hpp"
#include "polytx/experiment.hpp"
#include "polytx/report.hpp"
#include "polytx/smiles_graph.hpp"
#include "polytx/tokenizer.hpp"
#include "polytx/train.hpp"

#ifndef POLYTX_DATA_DIR
#define POLYTX_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace polytx;

namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

std::size_t default_workers() {
  const char* v = std::getenv("POLYTX_WORKERS");
  if (v && *v) {
    try {
      const auto n = std::stoul(v);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
    fail(ErrorCode::BadConfig, "POLYTX_WORKERS must be a positive integer, got '" + std::string(v) + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void log_line(const std::string& s) { std::cerr << s << '\n'; }

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

fs::path dir_of(const fs::path& file) {
  auto p = file.parent_path();
  return p.empty() ? fs::path(".") : p;
}

std::vector<std::string> read_corpora(const std::vector<std::string>& paths) {
  std::vector<std::string> all;
  for (const auto& p : paths) {
    auto c = read_corpus(p);
    all.insert(all.end(), c.begin(), c.end());
  }
  return all;
}

// Flags shared by the training subcommands. Bound to a TrainConfig whose
// initial values are the recipe defaults, so --help shows them.
struct TrainFlags {
  TrainConfig cfg;
  std::string optimizer, schedule;
  std::string config_file;
  std::vector<std::pair<CLI::Option*, std::function<void(const TrainConfig&, TrainConfig&)>>> bound;

  explicit TrainFlags(TrainConfig defaults)
      : cfg(defaults), optimizer(optimizer_name(defaults.optimizer)), schedule(schedule_name(defaults.schedule)) {}

  template <typename F>
  void bind(CLI::App* app, const std::string& name, F TrainConfig::*field, const std::string& help) {
    auto* o = app->add_option(name, cfg.*field, help)->capture_default_str();
    bound.emplace_back(o, [field](const TrainConfig& from, TrainConfig& to) { to.*field = from.*field; });
  }

  void add(CLI::App* app, bool pretraining) {
    bind(app, "--lr", &TrainConfig::peak_lr, "Peak learning rate");
    bind(app, "--weight-decay", &TrainConfig::weight_decay, "Decoupled weight decay");
    bind(app, "--batch-size", &TrainConfig::batch_size, "Micro-batch size");
    bind(app, "--epochs", &TrainConfig::epochs, "Training epochs");
    bind(app, "--grad-accum", &TrainConfig::grad_accum_steps, "Micro-batches per optimizer step");
    bind(app, "--warmup-ratio", &TrainConfig::warmup_ratio, "Share of steps spent in linear warmup");
    if (pretraining) {
      bind(app, "--mask-rate", &TrainConfig::mask_rate, "Share of eligible tokens selected for masking");
      bind(app, "--mask-views", &TrainConfig::mask_views, "Independently masked copies of each line per epoch");
    }
    auto* o = app->add_option("--optimizer", optimizer, "adamw | lamb")->capture_default_str();
    bound.emplace_back(o, [](const TrainConfig& from, TrainConfig& to) { to.optimizer = from.optimizer; });
    o = app->add_option("--schedule", schedule, "warmup_decay | constant")->capture_default_str();
    bound.emplace_back(o, [](const TrainConfig& from, TrainConfig& to) { to.schedule = from.schedule; });
    app->add_option("--config", config_file, "key = value training config; explicit flags take precedence")
        ->check(CLI::ExistingFile);
  }

  // Final config: defaults, then the config file, then explicit flags.
  TrainConfig resolve(const TrainConfig& defaults, std::uint64_t seed) {
    cfg.optimizer = parse_optimizer(optimizer);
    cfg.schedule = parse_schedule(schedule);
    TrainConfig out = cfg;
    if (!config_file.empty()) {
      out = load_train_config(config_file, defaults);
      for (auto& [opt, copy] : bound) {
        if (opt->count() > 0) copy(cfg, out);
      }
    }
    out.seed = seed;
    out.validate();
    return out;
  }
};

struct Common {
  std::uint64_t seed = 42;
  std::string out_dir = env_or("POLYTX_OUT_DIR", "out");
  std::size_t workers = 1;
};

Tokenizer load_tokenizer(const std::string& vocab, const std::string& rule) {
  return Tokenizer(parse_token_rule(rule), Vocabulary::load(vocab));
}

InitSpec resolve_init(const std::string& init, const std::string& preset, const Tokenizer& tok, std::uint64_t seed) {
  if (init == "random") return random_init(preset_by_name(preset, tok.vocab().size()), seed, "random");
  auto spec = checkpoint_init(init, fs::path(init).stem().string());
  if (spec.model.config.vocab_size != tok.vocab().size()) {
    fail(ErrorCode::ShapeMismatch, "checkpoint vocabulary size " + std::to_string(spec.model.config.vocab_size) +
                                       " differs from the vocabulary's " + std::to_string(tok.vocab().size()));
  }
  return spec;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Polymer property prediction toolkit: tokenization, MLM pretraining, fine-tuning, evaluation and analysis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());
  Common common;
  common.workers = default_workers();
  const std::string data_dir = POLYTX_DATA_DIR;

  auto add_common = [&](CLI::App* sub, bool with_out_dir) {
    sub->add_option("--seed", common.seed, "Global seed")->capture_default_str();
    if (with_out_dir) {
      sub->add_option("--out-dir,--out", common.out_dir, "Output directory (env POLYTX_OUT_DIR)")->capture_default_str();
    }
  };

  // build-vocab
  auto* bv = app.add_subcommand("build-vocab", "Build a vocabulary from one or more corpora");
  std::vector<std::string> bv_corpus{data_dir + "/polymer_sample.txt", data_dir + "/molecule_sample.txt"};
  std::string bv_rule = "regex", bv_out = "vocab.txt";
  std::size_t bv_min_count = 1;
  bv->add_option("--corpus", bv_corpus, "Corpus files, one SMILES per line")->check(CLI::ExistingFile)->capture_default_str();
  bv->add_option("--rule", bv_rule, "regex | punct")->capture_default_str();
  bv->add_option("--min-word-count", bv_min_count, "punct rule: minimum count for whole words")->capture_default_str();
  bv->add_option("--out", bv_out, "Vocabulary file")->capture_default_str();
  add_common(bv, false);

  // tokenize
  auto* tk = app.add_subcommand("tokenize", "Tokenize a corpus or one string");
  std::string tk_vocab, tk_rule = "regex", tk_in, tk_out, tk_smiles;
  std::size_t tk_max_len = 128;
  bool tk_ids = false;
  tk->add_option("--vocab", tk_vocab, "Vocabulary file")->required()->check(CLI::ExistingFile);
  tk->add_option("--rule", tk_rule, "regex | punct")->capture_default_str();
  auto* tk_in_opt = tk->add_option("--in", tk_in, "Corpus file (default: stdin)")->check(CLI::ExistingFile);
  tk->add_option("--smiles", tk_smiles, "A single SMILES string")->excludes(tk_in_opt);
  tk->add_option("--max-len", tk_max_len, "Sequence length including [CLS]/[SEP], used with --ids")->capture_default_str();
  tk->add_flag("--ids", tk_ids, "Emit framed id sequences instead of tokens");
  tk->add_option("--out", tk_out, "Output file (default: stdout)");
  add_common(tk, false);

  // pretrain
  auto* pt = app.add_subcommand("pretrain", "Masked-language-model pretraining");
  TrainFlags pt_flags(pretrain_defaults());
  std::vector<std::string> pt_corpus{data_dir + "/polymer_sample.txt"};
  std::string pt_vocab, pt_rule = "regex", pt_preset = "desk", pt_resume;
  std::size_t pt_ckpt_every = 0, pt_log_every = 10, pt_max_len = 0;
  pt->add_option("--corpus", pt_corpus, "Corpus files")->check(CLI::ExistingFile)->capture_default_str();
  pt->add_option("--vocab", pt_vocab, "Vocabulary file")->required()->check(CLI::ExistingFile);
  pt->add_option("--rule", pt_rule, "regex | punct")->capture_default_str();
  pt->add_option("--preset", pt_preset, "Encoder preset: desk | paper")->capture_default_str();
  pt->add_option("--max-len", pt_max_len, "Override the preset's max_len (0 keeps it)")->capture_default_str();
  pt->add_option("--checkpoint-every", pt_ckpt_every, "Epochs between checkpoints (0: final only)")->capture_default_str();
  pt->add_option("--log-every", pt_log_every, "Optimizer steps between log lines")->capture_default_str();
  pt->add_option("--resume", pt_resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  pt_flags.add(pt, true);
  add_common(pt, true);

  // finetune
  auto* ft = app.add_subcommand("finetune", "Fine-tune on property data and save the model");
  TrainFlags ft_flags(finetune_defaults());
  std::string ft_data = data_dir + "/dft_sample.csv", ft_vocab, ft_rule = "regex", ft_init = "random", ft_mode = "mt",
              ft_preset = "desk";
  double ft_fraction = 1.0;
  ft->add_option("--data", ft_data, "Property CSV")->check(CLI::ExistingFile)->capture_default_str();
  ft->add_option("--vocab", ft_vocab, "Vocabulary file")->required()->check(CLI::ExistingFile);
  ft->add_option("--rule", ft_rule, "regex | punct")->capture_default_str();
  ft->add_option("--init", ft_init, "Checkpoint path or 'random'")->capture_default_str();
  ft->add_option("--preset", ft_preset, "Encoder preset for random init")->capture_default_str();
  ft->add_option("--mode", ft_mode, "mt | st:<property>")->capture_default_str();
  ft->add_option("--fraction", ft_fraction, "Share of the data used for training")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  long ft_fold = -1;
  std::size_t ft_folds = 5;
  std::uint64_t ft_split_seed = 0;
  ft->add_option("--fold", ft_fold, "Train on this fold's training split only (-1: all records)")->capture_default_str();
  ft->add_option("--folds", ft_folds, "Fold count for --fold")->capture_default_str();
  ft->add_option("--split-seed", ft_split_seed, "Seed of the fold shuffle")->capture_default_str();
  ft_flags.add(ft, false);
  add_common(ft, true);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "K-fold cross-validated fine-tuning");
  TrainFlags ev_flags(finetune_defaults());
  std::string ev_data = data_dir + "/dft_sample.csv", ev_vocab, ev_rule = "regex", ev_init = "random", ev_mode = "mt",
              ev_preset = "desk";
  double ev_fraction = 1.0;
  std::size_t ev_folds = 5;
  std::uint64_t ev_split_seed = 0;
  bool ev_dump = false;
  ev->add_option("--data", ev_data, "Property CSV")->check(CLI::ExistingFile)->capture_default_str();
  ev->add_option("--vocab", ev_vocab, "Vocabulary file")->required()->check(CLI::ExistingFile);
  ev->add_option("--rule", ev_rule, "regex | punct")->capture_default_str();
  ev->add_option("--init", ev_init, "Checkpoint path or 'random'")->capture_default_str();
  ev->add_option("--preset", ev_preset, "Encoder preset for random init")->capture_default_str();
  ev->add_option("--mode", ev_mode, "mt | st | st:<property>")->capture_default_str();
  ev->add_option("--fraction", ev_fraction, "Share of each training fold used")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  ev->add_option("--folds", ev_folds, "Cross-validation folds")->capture_default_str();
  ev->add_option("--split-seed", ev_split_seed, "Seed of the fold shuffle")->capture_default_str();
  ev->add_option("--workers", common.workers, "Parallel fine-tuning jobs (env POLYTX_WORKERS)")->capture_default_str();
  ev->add_flag("--dump", ev_dump, "Write per-fold prediction CSVs");
  std::string ev_refs = data_dir + "/reference_metrics.csv";
  bool ev_no_refs = false;
  ev->add_option("--references", ev_refs, "Reference metrics CSV mirrored into metrics.json")->capture_default_str();
  ev->add_flag("--no-references", ev_no_refs, "Leave reference rows out of metrics.json");
  ev_flags.add(ev, false);
  add_common(ev, true);

  // sweep
  auto* sw = app.add_subcommand("sweep", "Learning-efficiency sweep over data fractions");
  TrainFlags sw_flags(finetune_defaults());
  std::string sw_data = data_dir + "/dft_sample.csv", sw_vocab, sw_rule = "regex", sw_inits = "random", sw_modes = "mt,st",
              sw_preset = "desk", sw_fractions = "0,0.0625,0.125,0.25,0.5,1";
  std::size_t sw_folds = 5;
  std::uint64_t sw_split_seed = 0;
  sw->add_option("--data", sw_data, "Property CSV")->check(CLI::ExistingFile)->capture_default_str();
  sw->add_option("--vocab", sw_vocab, "Vocabulary file")->required()->check(CLI::ExistingFile);
  sw->add_option("--rule", sw_rule, "regex | punct")->capture_default_str();
  sw->add_option("--init", sw_inits, "Comma-separated checkpoints and/or 'random'")->capture_default_str();
  sw->add_option("--preset", sw_preset, "Encoder preset for random init")->capture_default_str();
  sw->add_option("--modes", sw_modes, "Comma-separated modes")->capture_default_str();
  sw->add_option("--fractions", sw_fractions, "Comma-separated data fractions")->capture_default_str();
  sw->add_option("--folds", sw_folds, "Cross-validation folds")->capture_default_str();
  sw->add_option("--split-seed", sw_split_seed, "Seed of the fold shuffle")->capture_default_str();
  sw->add_option("--workers", common.workers, "Parallel fine-tuning jobs (env POLYTX_WORKERS)")->capture_default_str();
  sw_flags.add(sw, false);
  add_common(sw, true);

  // mlm-eval
  auto* me = app.add_subcommand("mlm-eval", "Masked-token top-1 accuracy, overall and per token");
  std::string me_ckpt, me_vocab, me_rule = "regex", me_test, me_train;
  double me_rate = 0.15;
  me->add_option("--checkpoint", me_ckpt, "Model checkpoint or 'random'")->required();
  me->add_option("--vocab", me_vocab, "Vocabulary file")->required()->check(CLI::ExistingFile);
  me->add_option("--rule", me_rule, "regex | punct")->capture_default_str();
  me->add_option("--test", me_test, "Corpus to evaluate")->required()->check(CLI::ExistingFile);
  me->add_option("--train", me_train, "Training corpus for token frequencies (default: the test corpus)")
      ->check(CLI::ExistingFile);
  me->add_option("--mask-rate", me_rate, "Masking rate")->capture_default_str();
  std::string me_preset = "desk";
  me->add_option("--preset", me_preset, "Encoder preset for a random model")->capture_default_str();
  add_common(me, true);

  // fingerprint
  auto* fp = app.add_subcommand("fingerprint", "ECFP matrix of a sampled corpus");
  std::string fp_in, fp_out = "fingerprints.bin";
  std::size_t fp_samples = 50000, fp_bits = kDefaultFpBits;
  int fp_radius = kDefaultFpRadius;
  fp->add_option("--in", fp_in, "Corpus file")->required()->check(CLI::ExistingFile);
  fp->add_option("--sample,--samples", fp_samples, "Lines sampled without replacement")->capture_default_str();
  fp->add_option("--radius", fp_radius, "Morgan radius")->capture_default_str();
  fp->add_option("--bits", fp_bits, "Fingerprint length")->capture_default_str();
  fp->add_option("--out", fp_out, "Binary fingerprint matrix")->capture_default_str();
  add_common(fp, false);

  // pca
  auto* pc = app.add_subcommand("pca", "Joint PCA of fingerprint matrices and density grids");
  std::vector<std::string> pc_in, pc_labels;
  std::string pc_out = "coords.csv", pc_grid = "grid.csv";
  std::size_t pc_bins = 200;
  pc->add_option("--in", pc_in, "Fingerprint matrices")->required()->check(CLI::ExistingFile);
  pc->add_option("--labels", pc_labels, "One label per input, comma-separated (default: file stems)")->delimiter(',');
  pc->add_option("--out", pc_out, "Projected coordinates CSV")->capture_default_str();
  pc->add_option("--grid", pc_grid, "Density grid CSV")->capture_default_str();
  pc->add_option("--bins", pc_bins, "Bins per axis")->capture_default_str();
  add_common(pc, false);

  // report
  auto* rp = app.add_subcommand("report", "Compare results with published reference numbers");
  std::string rp_results = "out", rp_refs = data_dir + "/reference_metrics.csv", rp_out;
  bool rp_no_refs = false;
  rp->add_option("--results", rp_results, "Directory with metrics/sweep CSVs")->capture_default_str();
  rp->add_option("--references", rp_refs, "Reference metrics CSV")->capture_default_str();
  rp->add_flag("--no-references", rp_no_refs, "Omit the reference columns");
  rp->add_option("--out", rp_out, "Output directory (default: the results directory)");
  add_common(rp, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  }

  Stopwatch clock;
  ExperimentConfig ec;
  ec.seed = common.seed;
  std::vector<fs::path> outputs;

  if (*bv) {
    ec.command = "build-vocab";
    for (std::size_t i = 0; i < bv_corpus.size(); ++i) ec.inputs.emplace_back("corpus" + std::to_string(i), bv_corpus[i]);
    ec.out_dir = dir_of(bv_out);
    ec.options = {{"rule", bv_rule}, {"min_word_count", std::to_string(bv_min_count)}};
    ec.validate();
    ensure_dir(ec.out_dir);
    const auto vocab = build_vocab(read_corpora(bv_corpus), parse_token_rule(bv_rule), VocabOptions{bv_min_count});
    vocab.save(bv_out);
    log_line("vocabulary size " + std::to_string(vocab.size()));
    outputs.push_back(bv_out);
  } else if (*tk) {
    ec.command = "tokenize";
    ec.inputs = {{"vocab", tk_vocab}};
    if (!tk_in.empty()) ec.inputs.emplace_back("in", tk_in);
    ec.out_dir = dir_of(tk_out);
    ec.options = {{"rule", tk_rule}, {"max_len", std::to_string(tk_max_len)}, {"ids", tk_ids ? "1" : "0"}};
    ec.validate();
    const auto tok = load_tokenizer(tk_vocab, tk_rule);
    std::vector<std::string> lines;
    if (!tk_smiles.empty()) {
      lines.push_back(normalize_line(tk_smiles));
    } else if (tk_in.empty()) {
      std::string line;
      while (std::getline(std::cin, line)) {
        auto n = normalize_line(line);
        if (!n.empty()) lines.push_back(std::move(n));
      }
    } else {
      lines = read_corpus(tk_in);
    }
    std::ostringstream text;
    for (const auto& l : lines) {
      if (tk_ids) {
        const auto seq = tok.encode(l, tk_max_len);
        for (std::size_t i = 0; i < seq.ids.size(); ++i) text << (i ? " " : "") << seq.ids[i];
      } else {
        const auto toks = tok.tokenize(l);
        for (std::size_t i = 0; i < toks.size(); ++i) text << (i ? " " : "") << toks[i];
      }
      text << '\n';
    }
    if (tk_out.empty()) {
      std::cout << text.str();
      return 0;
    }
    ensure_dir(ec.out_dir);
    write_text(tk_out, text.str());
    outputs.push_back(tk_out);
  } else if (*pt) {
    ec.command = "pretrain";
    for (std::size_t i = 0; i < pt_corpus.size(); ++i) ec.inputs.emplace_back("corpus" + std::to_string(i), pt_corpus[i]);
    ec.inputs.emplace_back("vocab", pt_vocab);
    if (!pt_resume.empty()) ec.inputs.emplace_back("resume", pt_resume);
    ec.out_dir = common.out_dir;
    ec.preset = pt_preset;
    ec.train = pt_flags.resolve(pretrain_defaults(), common.seed);
    const auto tok = load_tokenizer(pt_vocab, pt_rule);
    auto enc = preset_by_name(pt_preset, tok.vocab().size());
    if (pt_max_len > 0) enc.max_len = pt_max_len;
    ec.encoder = enc;
    ec.options = {{"rule", pt_rule}, {"checkpoint_every", std::to_string(pt_ckpt_every)}};
    ec.validate();
    ensure_dir(ec.out_dir);
    PretrainOptions opts;
    opts.out_dir = ec.out_dir;
    opts.checkpoint_every = pt_ckpt_every;
    opts.log_every = pt_log_every;
    if (!pt_resume.empty()) opts.resume = pt_resume;
    opts.log = log_line;
    const auto result = pretrain<float>(read_corpora(pt_corpus), tok, *ec.train, enc, opts);
    log_line("optimizer steps " + std::to_string(result.optimizer_steps));
    outputs = {ec.out_dir / "final.bin", ec.out_dir / "pretrain_log.csv"};
  } else if (*ft) {
    ec.command = "finetune";
    ec.inputs = {{"data", ft_data}, {"vocab", ft_vocab}};
    if (ft_init != "random") ec.inputs.emplace_back("init", ft_init);
    ec.out_dir = common.out_dir;
    ec.preset = ft_preset;
    auto defaults = finetune_defaults();
    set_mode(defaults, ft_mode);
    ft_flags.cfg.mode = defaults.mode;
    ft_flags.cfg.property = defaults.property;
    auto cfg = ft_flags.resolve(defaults, common.seed);
    set_mode(cfg, ft_mode);
    if (cfg.mode == TrainMode::Pretrain) fail(ErrorCode::BadConfig, "finetune mode must be mt or st:<property>");
    ec.train = cfg;
    ec.fractions = {ft_fraction};
    ec.options = {{"rule", ft_rule}, {"init", ft_init}};
    ec.validate();
    ensure_dir(ec.out_dir);
    const auto tok = load_tokenizer(ft_vocab, ft_rule);
    const auto init = resolve_init(ft_init, ft_preset, tok, common.seed);
    ec.encoder = init.model.config;
    const auto all = read_dataset(ft_data);
    std::vector<std::string> split_of(all.size(), "train");
    std::vector<PropertyRecord> records;
    if (ft_fold >= 0) {
      const auto split = kfold(all.size(), ft_folds, ft_split_seed);
      if (static_cast<std::size_t>(ft_fold) >= ft_folds) fail(ErrorCode::BadConfig, "--fold must be below --folds");
      for (auto i : split.test[static_cast<std::size_t>(ft_fold)]) split_of[i] = "test";
      for (auto i : split.train[static_cast<std::size_t>(ft_fold)]) records.push_back(all[i]);
      ec.options.emplace_back("fold", std::to_string(ft_fold));
      ec.options.emplace_back("split_seed", std::to_string(ft_split_seed));
    } else {
      records = all;
    }
    auto result = finetune<float>(init.model, records, tok, cfg, ft_fraction, [&](std::uint64_t step, double loss) {
      if (step % 50 == 0) log_line("step " + std::to_string(step) + " loss " + std::to_string(loss));
    });
    save_checkpoint(ec.out_dir / "finetuned.bin", result.model, CheckpointMeta{0, cfg.epochs, cfg.seed});
    result.scaler.save(ec.out_dir / "scaler.csv");
    const auto preds = predict<float>(result.model, result.scaler, cfg, all, tok);
    std::ofstream out(ec.out_dir / "predictions.csv", std::ios::binary);
    out.precision(10);
    const std::size_t w = cfg.head_width();
    out << "row,split,smiles";
    for (std::size_t j = 0; j < w; ++j) out << ',' << property_table()[w == 1 ? cfg.property : j].name;
    out << '\n';
    for (std::size_t r = 0; r < all.size(); ++r) {
      out << r << ',' << split_of[r] << ',' << all[r].smiles;
      for (std::size_t j = 0; j < w; ++j) out << ',' << preds[r * w + j];
      out << '\n';
    }
    outputs = {ec.out_dir / "finetuned.bin", ec.out_dir / "scaler.csv", ec.out_dir / "predictions.csv"};
  } else if (*ev) {
    ec.command = "evaluate";
    ec.inputs = {{"data", ev_data}, {"vocab", ev_vocab}};
    if (ev_init != "random") ec.inputs.emplace_back("init", ev_init);
    if (!ev_no_refs) ec.inputs.emplace_back("references", ev_refs);
    ec.out_dir = common.out_dir;
    ec.preset = ev_preset;
    ec.folds = ev_folds;
    ec.fractions = {ev_fraction};
    auto cfg = ev_flags.resolve(finetune_defaults(), common.seed);
    ec.train = cfg;
    ec.options = {{"rule", ev_rule}, {"init", ev_init}, {"mode", ev_mode}, {"split_seed", std::to_string(ev_split_seed)}};
    ec.validate();
    mode_properties(ev_mode);
    ensure_dir(ec.out_dir);
    const auto tok = load_tokenizer(ev_vocab, ev_rule);
    const auto init = resolve_init(ev_init, ev_preset, tok, common.seed);
    ec.encoder = init.model.config;
    const auto records = read_dataset(ev_data);
    CvOptions cv{ev_folds, ev_split_seed, common.workers, ev_dump ? ec.out_dir : fs::path()};
    std::vector<MetricsReport> reports{cv_evaluate(records, init, ev_mode, ev_fraction, cfg, tok, cv)};
    write_metrics_csv(ec.out_dir / "metrics.csv", reports);
    nlohmann::ordered_json mj = {{"reports", nlohmann::ordered_json::parse(metrics_json(reports))}};
    if (!ev_no_refs) {
      const auto refs = load_references(ev_refs);
      auto rows = nlohmann::ordered_json::array();
      for (const auto& r : refs.entries()) {
        rows.push_back({{"model", r.model},
                        {"property", std::string(property_table()[r.property].name)},
                        {"metric", r.metric},
                        {"value", r.display()}});
      }
      mj["references"] = rows;
    }
    write_text(ec.out_dir / "metrics.json", mj.dump(2) + "\n");
    outputs = {ec.out_dir / "metrics.csv", ec.out_dir / "metrics.json"};
  } else if (*sw) {
    ec.command = "sweep";
    ec.inputs = {{"data", sw_data}, {"vocab", sw_vocab}};
    const auto init_names = split_list(sw_inits);
    for (const auto& i : init_names) {
      if (i != "random") ec.inputs.emplace_back("init", i);
    }
    ec.out_dir = common.out_dir;
    ec.preset = sw_preset;
    ec.folds = sw_folds;
    for (const auto& f : split_list(sw_fractions)) {
      try {
        std::size_t used = 0;
        ec.fractions.push_back(std::stod(f, &used));
        if (used != f.size()) throw std::invalid_argument(f);
      } catch (const std::exception&) {
        fail(ErrorCode::BadConfig, "bad fraction '" + f + "'");
      }
    }
    auto cfg = sw_flags.resolve(finetune_defaults(), common.seed);
    ec.train = cfg;
    const auto modes = split_list(sw_modes);
    for (const auto& m : modes) mode_properties(m);
    ec.options = {{"rule", sw_rule}, {"init", sw_inits}, {"modes", sw_modes}, {"split_seed", std::to_string(sw_split_seed)}};
    ec.validate();
    ensure_dir(ec.out_dir);
    const auto tok = load_tokenizer(sw_vocab, sw_rule);
    std::vector<InitSpec> inits;
    for (const auto& i : init_names) inits.push_back(resolve_init(i, sw_preset, tok, common.seed));
    ec.encoder = inits.at(0).model.config;
    const auto records = read_dataset(sw_data);
    CvOptions cv{sw_folds, sw_split_seed, common.workers, {}};
    const auto table = efficiency_sweep(records, inits, modes, ec.fractions, cfg, tok, cv);
    write_sweep_csv(ec.out_dir / "sweep.csv", table);
    write_text(ec.out_dir / "sweep.json", sweep_json(table));
    for (const auto& c : table.cells) {
      if (!c.report) log_line("cell " + c.init + " " + c.mode + " " + format_fraction(c.fraction) + " failed: " + c.error);
    }
    outputs = {ec.out_dir / "sweep.csv", ec.out_dir / "sweep.json"};
  } else if (*me) {
    ec.command = "mlm-eval";
    ec.inputs = {{"vocab", me_vocab}, {"test", me_test}};
    if (me_ckpt != "random") ec.inputs.emplace_back("checkpoint", me_ckpt);
    if (!me_train.empty()) ec.inputs.emplace_back("train", me_train);
    ec.out_dir = common.out_dir;
    ec.preset = me_preset;
    ec.options = {{"rule", me_rule}, {"mask_rate", std::to_string(me_rate)}};
    ec.validate();
    ensure_dir(ec.out_dir);
    const auto tok = load_tokenizer(me_vocab, me_rule);
    const auto init = resolve_init(me_ckpt, me_preset, tok, common.seed);
    ec.encoder = init.model.config;
    const auto test = read_corpus(me_test);
    const auto counts = token_counts(me_train.empty() ? test : read_corpus(me_train), tok);
    const auto acc = mlm_accuracy(init.model, test, tok, counts, common.seed, me_rate);
    std::ofstream out(ec.out_dir / "mlm_tokens.csv", std::ios::binary);
    out.precision(10);
    out << "id,token,masked,correct,accuracy,scaled_frequency\n";
    for (const auto& t : acc.per_token) {
      out << t.id << ',' << t.token << ',' << t.masked << ',' << t.correct << ',' << t.accuracy << ',' << t.scaled_frequency
          << '\n';
    }
    nlohmann::ordered_json j = {{"accuracy", acc.accuracy}, {"masked", acc.masked}, {"correct", acc.correct}};
    write_text(ec.out_dir / "mlm_summary.json", j.dump(2) + "\n");
    std::cout << "accuracy " << acc.accuracy << " (" << acc.correct << "/" << acc.masked << ")\n";
    outputs = {ec.out_dir / "mlm_tokens.csv", ec.out_dir / "mlm_summary.json"};
  } else if (*fp) {
    ec.command = "fingerprint";
    ec.inputs = {{"in", fp_in}};
    ec.out_dir = dir_of(fp_out);
    ec.options = {{"samples", std::to_string(fp_samples)}, {"radius", std::to_string(fp_radius)}, {"bits", std::to_string(fp_bits)}};
    ec.validate();
    ensure_dir(ec.out_dir);
    const auto m = fingerprint_matrix(read_corpus(fp_in), fp_samples, common.seed, fp_radius, fp_bits);
    write_fingerprint_matrix(fp_out, m);
    const fs::path sidecar = fp_out + ".smiles.txt";
    std::ostringstream rows;
    for (const auto& smi : m.smiles) rows << smi << '\n';
    write_text(sidecar, rows.str());
    log_line("rows " + std::to_string(m.rows) + ", skipped " + std::to_string(m.skipped));
    outputs = {fp_out, sidecar};
  } else if (*pc) {
    ec.command = "pca";
    for (std::size_t i = 0; i < pc_in.size(); ++i) ec.inputs.emplace_back("in" + std::to_string(i), pc_in[i]);
    if (!pc_labels.empty() && pc_labels.size() != pc_in.size()) fail(ErrorCode::BadConfig, "one label per --in file required");
    if (pc_labels.empty()) {
      for (const auto& p : pc_in) pc_labels.push_back(fs::path(p).stem().string());
    }
    ec.out_dir = dir_of(pc_out);
    ec.options = {{"bins", std::to_string(pc_bins)}};
    ec.validate();
    ensure_dir(ec.out_dir);
    ensure_dir(dir_of(pc_grid));
    std::vector<Matrix> parts;
    std::vector<std::string> row_labels;
    for (std::size_t i = 0; i < pc_in.size(); ++i) {
      parts.push_back(to_matrix(read_fingerprint_matrix(pc_in[i])));
      row_labels.insert(row_labels.end(), parts.back().rows, pc_labels[i]);
    }
    const auto x = stack_rows(parts);
    const auto model = pca_fit(x, 2, PcaOptions{5000, 1e-13, common.seed});
    const auto coords = project(model, x);
    write_coords_csv(pc_out, coords, row_labels);
    const auto grid = density_grid(coords, row_labels, pc_bins);
    write_grid_csv(pc_grid, grid);
    log_line("explained variance " + std::to_string(model.explained_variance[0]) + ", " +
             std::to_string(model.explained_variance[1]));
    outputs = {pc_out, pc_grid};
  } else if (*rp) {
    ec.command = "report";
    if (!rp_no_refs) ec.inputs = {{"references", rp_refs}};
    ec.out_dir = rp_out.empty() ? fs::path(rp_results) : fs::path(rp_out);
    ec.reference_rows = !rp_no_refs;
    ec.options = {{"results", rp_results}};
    ec.validate();
    const auto results = load_results(rp_results);
    const auto refs = rp_no_refs ? ReferenceTable() : load_references(rp_refs);
    const auto tables = build_comparison(results, refs);
    ensure_dir(ec.out_dir);
    const auto text = format_comparison(tables, refs);
    write_text(ec.out_dir / "report.md", text);
    write_comparison_csv(ec.out_dir / "report.csv", tables);
    std::cout << text;
    outputs = {ec.out_dir / "report.md", ec.out_dir / "report.csv"};
  }

  write_manifest(ec, outputs, clock.seconds());
  return 0;
}

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << error_code_name(e.code()) << ": " << msg << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: Internal: " << msg << '\n';
    return 1;
  }
}
