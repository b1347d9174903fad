#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>

#include "polytx/error.hpp"
#include "polytx/rng.hpp"
#include "polytx/tokenizer.hpp"
#include "test_util.hpp"

using namespace polytx;
using Tokens = std::vector<std::string>;

namespace {

std::string join(const Tokens& t) { return std::accumulate(t.begin(), t.end(), std::string()); }

}  // namespace

TEST_SUITE("tokenizer") {
  TEST_CASE("regex rule splits atoms, bonds and branches") {
    CHECK(tokenize_regex("*CC(=O)N*") == Tokens{"*", "C", "C", "(", "=", "O", ")", "N", "*"});
    CHECK(tokenize_regex("Clc1ccccc1") == Tokens{"Cl", "c", "1", "c", "c", "c", "c", "c", "1"});
    CHECK(tokenize_regex("C") == Tokens{"C"});
    CHECK(tokenize_regex("Br/C=C\\Cl") == Tokens{"Br", "/", "C", "=", "C", "\\", "Cl"});
    CHECK(tokenize_regex("[nH]1cc[Si](C)c1") == Tokens{"[nH]", "1", "c", "c", "[Si]", "(", "C", ")", "c", "1"});
    CHECK(tokenize_regex("C%12CC%12") == Tokens{"C", "%12", "C", "C", "%12"});
    CHECK(tokenize_regex("[*]CC#N") == Tokens{"[*]", "C", "C", "#", "N"});
  }

  TEST_CASE("unmatched glyphs become single-character tokens") {
    const auto t = tokenize_regex("CXyC");
    CHECK(t == Tokens{"C", "X", "y", "C"});
  }

  TEST_CASE("empty input is rejected") {
    CHECK_THROWS_AS(tokenize_regex(""), Error);
    try {
      tokenize_regex("  \t ");
      FAIL("expected EmptyInput");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyInput);
    }
  }

  TEST_CASE("regex round trip on random strings over the SMILES alphabet") {
    const std::string alphabet = "CcNnOoSsPFIBrl[]()=#-+\\/%0123456789*.@H";
    Rng rng(11);
    for (int trial = 0; trial < 2000; ++trial) {
      std::string s;
      const auto len = 1 + rng.below(30);
      for (std::size_t i = 0; i < len; ++i) s += alphabet[rng.below(alphabet.size())];
      CHECK(join(tokenize_regex(s)) == s);
    }
  }

  TEST_CASE("regex round trip on the bundled corpora") {
    for (const char* name : {"polymer_sample.txt", "molecule_sample.txt"}) {
      for (const auto& s : read_corpus(testing::data_path(name))) REQUIRE(join(tokenize_regex(s)) == s);
    }
  }

  TEST_CASE("punct rule") {
    const auto vocab = build_vocab(std::vector<std::string>{"C(F)F", "CCO"}, TokenRule::Punct);
    CHECK(tokenize_punct("C(F)F", vocab) == Tokens{"C", "(", "F", ")", "F"});
    CHECK(tokenize_punct("*", vocab) == Tokens{"*"});
    const auto t = tokenize_punct("CQ", vocab);
    CHECK(std::find(t.begin(), t.end(), "[UNK]") != t.end());
    CHECK(split_punct("C(=O)N") == Tokens{"C", "(", "=", "O", ")", "N"});
  }

  TEST_CASE("punct rule decomposes unseen words into pieces") {
    const auto vocab = build_vocab(std::vector<std::string>{"CCO", "CCCC"}, TokenRule::Punct);
    const auto t = tokenize_punct("CCOC", vocab);
    REQUIRE(!t.empty());
    CHECK(std::find(t.begin(), t.end(), "[UNK]") == t.end());
    std::string rebuilt;
    for (const auto& piece : t) rebuilt += piece.rfind("##", 0) == 0 ? piece.substr(2) : piece;
    CHECK(rebuilt == "CCOC");
  }

  TEST_CASE("build_vocab: fixed classes plus observed tokens") {
    const auto v = build_vocab(std::vector<std::string>{"CC"}, TokenRule::Regex);
    CHECK(v.size() == 16);
    for (const char* t : {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "1", "9", "*", "C"}) CHECK(v.contains(t));
    CHECK(v.id_of("[PAD]") == 0);
    CHECK(v.id_of("[MASK]") == kMaskId);
    CHECK_THROWS_AS(build_vocab(std::vector<std::string>{}, TokenRule::Regex), Error);
  }

  TEST_CASE("build_vocab ordering: specials first, then code-point order") {
    const auto v = build_vocab(std::vector<std::string>{"c1ccccc1Cl", "OCC(=O)N"}, TokenRule::Regex);
    for (int i = 0; i < kNumSpecial; ++i) CHECK(v.token_of(i) == kSpecialTokens[static_cast<std::size_t>(i)]);
    const auto& toks = v.tokens();
    CHECK(std::is_sorted(toks.begin() + kNumSpecial, toks.end()));
  }

  TEST_CASE("build_vocab is independent of corpus order") {
    auto corpus = read_corpus(testing::data_path("polymer_sample.txt"));
    const auto a = build_vocab(corpus, TokenRule::Regex);
    Rng rng(3);
    rng.shuffle(corpus);
    CHECK(build_vocab(corpus, TokenRule::Regex) == a);
    const auto pa = build_vocab(corpus, TokenRule::Punct);
    std::reverse(corpus.begin(), corpus.end());
    CHECK(build_vocab(corpus, TokenRule::Punct) == pa);
  }

  TEST_CASE("vocabulary ids and tokens are mutual inverses") {
    const auto v = build_vocab(read_corpus(testing::data_path("molecule_sample.txt")), TokenRule::Regex);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v.id_of(v.token_of(static_cast<int>(i))) == static_cast<int>(i));
    CHECK(v.id_of("not-a-token") == kUnkId);
    CHECK_THROWS_AS(v.token_of(static_cast<int>(v.size())), Error);
  }

  TEST_CASE("vocabulary file round trip and validation") {
    const auto dir = testing::scratch_dir("vocab");
    const auto v = build_vocab(std::vector<std::string>{"*CC(Cl)*"}, TokenRule::Regex);
    v.save(dir / "v.txt");
    CHECK(Vocabulary::load(dir / "v.txt") == v);
    CHECK_THROWS_AS(Vocabulary(std::vector<std::string>{"[UNK]", "[PAD]", "[CLS]", "[SEP]", "[MASK]", "*"}), Error);
    CHECK_THROWS_AS(Vocabulary(std::vector<std::string>{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "C"}), Error);
    CHECK_THROWS_AS(Vocabulary(std::vector<std::string>{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "*", "*"}), Error);
  }

  TEST_CASE("encode framing, padding and truncation") {
    const auto v = build_vocab(std::vector<std::string>{"CCO"}, TokenRule::Regex);
    const int c = v.id_of("C"), o = v.id_of("O");
    auto s = encode(v, Tokens{"C", "C", "O"}, 8);
    CHECK(s.ids == std::vector<int>{kClsId, c, c, o, kSepId, kPadId, kPadId, kPadId});
    CHECK(s.attention_mask == std::vector<std::uint8_t>{1, 1, 1, 1, 1, 0, 0, 0});
    CHECK(s.length == 5);

    s = encode(v, Tokens{}, 3);
    CHECK(s.ids == std::vector<int>{kClsId, kSepId, kPadId});
    CHECK(s.attention_mask == std::vector<std::uint8_t>{1, 1, 0});

    s = encode(v, Tokens(100, "C"), 10);
    CHECK(s.ids.size() == 10);
    CHECK(std::count(s.ids.begin(), s.ids.end(), c) == 8);
    CHECK(s.ids.back() == kSepId);

    CHECK(encode(v, Tokens{"Zz"}, 4).ids[1] == kUnkId);
    try {
      encode(v, Tokens{"C"}, 2);
      FAIL("expected BadMaxLen");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BadMaxLen);
    }
  }

  TEST_CASE("encode then decode recovers the truncated tokens; ids stay in range") {
    const auto corpus = read_corpus(testing::data_path("polymer_sample.txt"));
    const Tokenizer tok(TokenRule::Regex, build_vocab(corpus, TokenRule::Regex));
    for (std::size_t max_len : {8u, 32u, 128u}) {
      for (const auto& s : corpus) {
        const auto tokens = tok.tokenize(s);
        const auto seq = tok.encode(s, max_len);
        const Tokens expect(tokens.begin(), tokens.begin() + static_cast<long>(std::min(tokens.size(), max_len - 2)));
        CHECK(decode(tok.vocab(), seq) == expect);
        for (int id : seq.ids) CHECK(static_cast<std::size_t>(id) < tok.vocab().size());
        CHECK(seq.ids[0] == kClsId);
        CHECK(seq.ids[seq.length - 1] == kSepId);
        for (std::size_t i = 0; i < max_len; ++i) {
          CHECK(seq.attention_mask[i] == (i < seq.length ? 1 : 0));
          if (i >= seq.length) CHECK(seq.ids[i] == kPadId);
        }
      }
    }
  }

  TEST_CASE("corpus ingestion normalizes [*] and skips comments") {
    CHECK(normalize_line("  [*]CC[*] \r") == "*CC*");
    CHECK(normalize_line("# comment").empty());
    CHECK(normalize_line("   ").empty());
    const auto dir = testing::scratch_dir("corpus");
    {
      std::ofstream f(dir / "c.txt");
      f << "# header\n[*]CC[*]\n\n  *OC*  \n";
    }
    CHECK(read_corpus(dir / "c.txt") == Tokens{"*CC*", "*OC*"});
  }
}
