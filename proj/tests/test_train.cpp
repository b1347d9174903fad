#include <doctest.h>

#include <algorithm>
#include <set>

#include "polytx/error.hpp"
#include "polytx/train.hpp"
#include "test_util.hpp"

using namespace polytx;

namespace {

EncoderConfig tiny_encoder(std::size_t vocab, std::size_t props = 8) {
  EncoderConfig c;
  c.num_layers = 1;
  c.num_heads = 2;
  c.hidden = 8;
  c.ffn = 16;
  c.max_len = 24;
  c.vocab_size = vocab;
  c.num_properties = props;
  return c;
}

std::vector<std::string> tiny_corpus() {
  auto all = read_corpus(testing::data_path("polymer_sample.txt"));
  all.resize(12);
  return all;
}

TokenSequence plain_sequence(std::size_t n, int first_id, int vocab) {
  TokenSequence s;
  s.ids.push_back(kClsId);
  for (std::size_t i = 0; i < n; ++i) s.ids.push_back(first_id + static_cast<int>(i % static_cast<std::size_t>(vocab - first_id)));
  s.ids.push_back(kSepId);
  s.ids.push_back(kPadId);
  s.attention_mask.assign(s.ids.size(), 1);
  s.attention_mask.back() = 0;
  s.length = s.ids.size() - 1;
  return s;
}

template <typename T>
bool same_params(EncoderModel<T>& a, EncoderModel<T>& b) {
  auto pa = a.parameters();
  auto pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!std::equal(pa[i].tensor->data().begin(), pa[i].tensor->data().end(), pb[i].tensor->data().begin())) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("defaults") {
    const auto p = pretrain_defaults();
    CHECK(p.optimizer == OptimizerKind::Lamb);
    CHECK(p.peak_lr == 1e-3);
    CHECK(p.warmup_ratio == 0.1);
    CHECK(p.mask_rate == 0.15);
    CHECK(p.grad_accum_steps == 3);
    const auto f = finetune_defaults();
    CHECK(f.optimizer == OptimizerKind::AdamW);
    CHECK(f.peak_lr == 1e-5);
    CHECK(f.weight_decay == 0.0);
    CHECK(f.batch_size == 16);
    CHECK(f.epochs == 600);
    CHECK(f.head_width() == 8);
    CHECK(finetune_defaults(TrainMode::FinetuneST, 2).head_width() == 1);
  }

  TEST_CASE("config text round trip and validation") {
    auto c = finetune_defaults(TrainMode::FinetuneST, property_index("Egc"));
    c.peak_lr = 3.5e-4;
    c.seed = 9;
    CHECK(parse_train_config(format_train_config(c)) == c);
    CHECK(mode_name(c) == "st:Egc");

    const auto p = parse_train_config("# comment\nepochs = 3\nmode = mt\n\noptimizer = adamw\n");
    CHECK(p.epochs == 3);
    CHECK(p.mode == TrainMode::FinetuneMT);
    CHECK(p.optimizer == OptimizerKind::AdamW);

    CHECK_THROWS_AS(parse_train_config("epochs = 0\n"), Error);
    CHECK_THROWS_AS(parse_train_config("colour = red\n"), Error);
    CHECK_THROWS_AS(parse_train_config("epochs = many\n"), Error);
    CHECK_THROWS_AS(parse_train_config("mode = st:Tg\n"), Error);
    CHECK_THROWS_AS(parse_train_config("no equals sign\n"), Error);
  }

  TEST_CASE("masking at rate 0 changes nothing") {
    const auto s = plain_sequence(50, kNumSpecial, 20);
    const auto m = mask_tokens(s, 0.0, std::uint64_t{3}, 20);
    CHECK(m.input.ids == s.ids);
    CHECK(m.selected == 0);
    for (int l : m.labels) CHECK(l == ad::kIgnoreIndex);
  }

  TEST_CASE("masking statistics over many positions") {
    const int V = 30;
    const auto s = plain_sequence(1000, kNumSpecial, V);
    Rng rng(12);
    std::size_t eligible = 0, selected = 0, masked = 0, replaced = 0, kept = 0;
    for (int rep = 0; rep < 100; ++rep) {
      const auto m = mask_tokens(s, 0.15, rng, V);
      for (std::size_t i = 0; i < s.ids.size(); ++i) {
        if (s.ids[i] < kNumSpecial) {
          CHECK(m.input.ids[i] == s.ids[i]);
          CHECK(m.labels[i] == ad::kIgnoreIndex);
          continue;
        }
        ++eligible;
        if (m.labels[i] == ad::kIgnoreIndex) {
          CHECK(m.input.ids[i] == s.ids[i]);
          continue;
        }
        ++selected;
        CHECK(m.labels[i] == s.ids[i]);
        if (m.input.ids[i] == kMaskId) {
          ++masked;
        } else if (m.input.ids[i] != s.ids[i]) {
          ++replaced;
          CHECK(m.input.ids[i] >= kNumSpecial);
          CHECK(m.input.ids[i] < V);
        } else {
          ++kept;
        }
      }
    }
    const double rate = static_cast<double>(selected) / static_cast<double>(eligible);
    CHECK(std::abs(rate - 0.15) <= 0.005);
    CHECK(std::abs(static_cast<double>(masked) / static_cast<double>(selected) - 0.8) <= 0.01);
    // a random draw may coincide with the original token (1/25 here)
    CHECK(static_cast<double>(replaced + kept) / static_cast<double>(selected) == doctest::Approx(0.2).epsilon(0.1));
  }

  TEST_CASE("batch and step counts") {
    CHECK(micro_batches_per_epoch(9, 1) == 9);
    CHECK(optimizer_steps_per_epoch(9, 1, 3) == 3);
    CHECK(optimizer_steps_per_epoch(10, 1, 3) == 4);
    CHECK(micro_batches_per_epoch(33, 16) == 3);
    CHECK(optimizer_steps_per_epoch(33, 16, 1) == 3);
  }

  TEST_CASE("fraction subsets are nested and sized by ceil") {
    const std::size_t n = 50;
    std::vector<std::size_t> prev;
    for (double f : {0.0, 0.0625, 0.125, 0.25, 0.5, 1.0}) {
      const auto s = fraction_subset(n, f, 5);
      CHECK(s.size() == static_cast<std::size_t>(std::ceil(f * n)));
      CHECK(std::equal(prev.begin(), prev.end(), s.begin()));
      CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == s.size());
      prev = s;
    }
    CHECK(fraction_subset(30, 0.1, 1).size() == 3);
    CHECK(fraction_subset(n, 0.5, 5) != fraction_subset(n, 0.5, 6));
    CHECK_THROWS_AS(fraction_subset(n, 1.5, 1), Error);
  }

  TEST_CASE("pretraining is deterministic and counts steps") {
    const auto corpus = tiny_corpus();
    const Tokenizer tok(TokenRule::Regex, build_vocab(corpus, TokenRule::Regex));
    auto cfg = pretrain_defaults();
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.grad_accum_steps = 2;
    const auto enc = tiny_encoder(tok.vocab().size());
    auto a = pretrain<float>(corpus, tok, cfg, enc);
    auto b = pretrain<float>(corpus, tok, cfg, enc);
    CHECK(a.micro_batches_per_epoch == 3);
    CHECK(a.steps_per_epoch == 2);
    CHECK(a.optimizer_steps == 4);
    CHECK(a.step_losses.size() == 4);
    CHECK(a.step_losses == b.step_losses);
    CHECK(same_params(a.model, b.model));

    cfg.seed = 43;
    auto c = pretrain<float>(corpus, tok, cfg, enc);
    CHECK(c.step_losses != a.step_losses);

    CHECK_THROWS_AS(pretrain<float>(std::span<const std::string>{}, tok, cfg, enc), Error);
    CHECK_THROWS_AS(pretrain<float>(corpus, tok, cfg, tiny_encoder(tok.vocab().size() + 1)), Error);
  }

  TEST_CASE("resuming from a checkpoint reproduces the uninterrupted run") {
    const auto corpus = tiny_corpus();
    const Tokenizer tok(TokenRule::Regex, build_vocab(corpus, TokenRule::Regex));
    auto cfg = pretrain_defaults();
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.grad_accum_steps = 1;
    const auto enc = tiny_encoder(tok.vocab().size());
    const auto dir = testing::scratch_dir("resume");
    PretrainOptions opts;
    opts.out_dir = dir / "full";
    opts.checkpoint_every = 1;
    auto full = pretrain<float>(corpus, tok, cfg, enc, opts);
    REQUIRE(std::filesystem::exists(dir / "full" / "checkpoint_epoch1.bin"));
    REQUIRE(std::filesystem::exists(dir / "full" / "final.bin"));

    PretrainOptions again;
    again.out_dir = dir / "resumed";
    again.resume = dir / "full" / "checkpoint_epoch1.bin";
    auto resumed = pretrain<float>(corpus, tok, cfg, enc, again);
    CHECK(same_params(full.model, resumed.model));
    CHECK(resumed.optimizer_steps == full.optimizer_steps);
  }

  TEST_CASE("finetuning with no data keeps the initial weights") {
    const auto recs = read_dataset(testing::data_path("dft_sample.csv"));
    const auto corpus = tiny_corpus();
    const Tokenizer tok(TokenRule::Regex, build_vocab(corpus, TokenRule::Regex));
    const auto init = init_encoder<float>(tiny_encoder(tok.vocab().size()), 1);
    auto cfg = finetune_defaults(TrainMode::FinetuneMT);
    cfg.epochs = 1;
    auto out = finetune(init, std::span<const PropertyRecord>(recs), tok, cfg, 0.0);
    CHECK(out.train_rows.empty());
    CHECK(out.epoch_losses.empty());
    auto prepared = prepare_finetune_model(init, cfg);
    CHECK(same_params(out.model, prepared));
  }

  TEST_CASE("ST finetuning keeps only rows observing the property") {
    const auto recs = read_dataset(testing::data_path("dft_sample.csv"));
    const Tokenizer tok(TokenRule::Regex, build_vocab(read_corpus(testing::data_path("polymer_sample.txt")), TokenRule::Regex));
    const auto p = property_index("Eat");
    auto cfg = finetune_defaults(TrainMode::FinetuneST, p);
    cfg.epochs = 1;
    const auto init = init_encoder<float>(tiny_encoder(tok.vocab().size()), 1);
    auto out = finetune(init, std::span<const PropertyRecord>(recs), tok, cfg, 0.5);
    CHECK(!out.train_rows.empty());
    for (auto r : out.train_rows) CHECK(recs[r].observed(p));
    CHECK(out.model.config.num_properties == 1);
    CHECK(out.epoch_losses.size() == 1);
  }

  TEST_CASE("MT loss sends no gradient into unobserved outputs") {
    const Tokenizer tok(TokenRule::Regex, build_vocab(std::vector<std::string>{"*CC(=O)O*", "*CN*"}, TokenRule::Regex));
    auto model = init_encoder<double>(tiny_encoder(tok.vocab().size()), 1);
    std::vector<TokenSequence> batch = {tok.encode("*CC(=O)O*", 12), tok.encode("*CN*", 12)};
    std::vector<double> targets(16, 0.5);
    std::vector<std::uint8_t> observed(16, 0);
    observed[0] = observed[3] = observed[8 + 3] = observed[8 + 6] = 1;
    Rng rng(0);
    const auto pred = regress(model, encode(model, std::span<const TokenSequence>(batch), false, rng), false, rng);
    ad::backward(ad::l1_loss(pred, ad::Tensor<double>::from({2, 8}, targets), observed));
    for (std::size_t k = 0; k < 8; ++k) {
      const bool any = observed[k] || observed[8 + k];
      const bool zero_bias = model.reg_b.grad()[k] == 0.0;
      CHECK(zero_bias == !any);
      for (std::size_t h = 0; h < 8; ++h) {
        if (!any) CHECK(model.reg_w.grad()[h * 8 + k] == 0.0);
      }
    }
  }

  TEST_CASE("ST loss equals the MT loss restricted to one column") {
    const Tokenizer tok(TokenRule::Regex, build_vocab(std::vector<std::string>{"*CC(=O)O*", "*CN*", "*c1ccccc1*"},
                                                      TokenRule::Regex));
    auto mt = init_encoder<double>(tiny_encoder(tok.vocab().size()), 2);
    const std::size_t p = 5;
    auto st = mt.clone();
    reset_regression_head(st, 1, 0);
    for (std::size_t h = 0; h < 8; ++h) st.reg_w.data()[h] = mt.reg_w.data()[h * 8 + p];
    st.reg_b.data()[0] = mt.reg_b.data()[p];

    std::vector<TokenSequence> batch = {tok.encode("*CC(=O)O*", 12), tok.encode("*CN*", 12), tok.encode("*c1ccccc1*", 12)};
    const std::vector<double> truth = {0.2, 0.9, 0.4};
    std::vector<double> mt_targets(24, 0.0);
    std::vector<std::uint8_t> mt_obs(24, 0);
    for (std::size_t b = 0; b < 3; ++b) {
      mt_targets[b * 8 + p] = truth[b];
      mt_obs[b * 8 + p] = 1;
    }
    Rng rng(0);
    const auto lm = ad::l1_loss(regress(mt, encode(mt, std::span<const TokenSequence>(batch), false, rng), false, rng),
                                ad::Tensor<double>::from({3, 8}, mt_targets), mt_obs);
    const auto ls = ad::l1_loss(regress(st, encode(st, std::span<const TokenSequence>(batch), false, rng), false, rng),
                                ad::Tensor<double>::from({3, 1}, truth), std::vector<std::uint8_t>(3, 1));
    CHECK(lm.item() == doctest::Approx(ls.item()).epsilon(1e-14));
  }

  TEST_CASE("regression set scales and masks targets") {
    const auto recs = read_dataset(testing::data_path("dft_sample.csv"));
    const Tokenizer tok(TokenRule::Regex, build_vocab(read_corpus(testing::data_path("polymer_sample.txt")), TokenRule::Regex));
    const auto scaler = PropertyScaler::fit(recs);
    const auto cfg = finetune_defaults(TrainMode::FinetuneMT);
    const std::vector<std::size_t> rows = {0, 1, 2};
    const auto set = make_regression_set<double>(recs, rows, tok, scaler, cfg, 64);
    REQUIRE(set.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t p = 0; p < 8; ++p) {
        const bool seen = recs[rows[i]].observed(p);
        CHECK(set.observed[i * 8 + p] == (seen ? 1 : 0));
        if (seen) CHECK(set.targets[i * 8 + p] == doctest::Approx(scaler.scale(p, *recs[rows[i]].values[p])));
      }
    }
  }
}
