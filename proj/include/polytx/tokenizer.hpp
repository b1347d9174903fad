#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace polytx {

enum class TokenRule { Regex, Punct };

TokenRule parse_token_rule(std::string_view name);
std::string_view token_rule_name(TokenRule rule);

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kMaskToken = "[MASK]";

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kMaskId = 4;
inline constexpr int kNumSpecial = 5;

inline constexpr std::array<std::string_view, kNumSpecial> kSpecialTokens = {
    kPadToken, kUnkToken, kClsToken, kSepToken, kMaskToken};

/// Immutable token <-> id mapping. Ids are dense; the five special tokens
/// occupy ids 0..4 and "*" is always present.
class Vocabulary {
 public:
  /// Builds from an ordered token list. The list must start with the
  /// special tokens in reserved order, contain "*", and have no duplicates.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// Returns kUnkId for tokens outside the vocabulary.
  int id_of(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token_of(int id) const;

  static bool is_special(int id) noexcept { return id >= 0 && id < kNumSpecial; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Framed id sequence: [CLS] payload [SEP] [PAD]...
struct TokenSequence {
  std::vector<int> ids;
  std::vector<std::uint8_t> attention_mask;
  std::size_t length = 0;  // non-[PAD] positions, including [CLS] and [SEP]
};

/// Atom-level SMILES splitting. Concatenating the tokens reproduces the
/// (whitespace-trimmed) input exactly.
std::vector<std::string> tokenize_regex(std::string_view smiles);

/// Punctuation split followed by greedy longest-match WordPiece against the
/// vocabulary. Continuation pieces carry a "##" prefix; words that cannot be
/// fully decomposed become [UNK].
std::vector<std::string> tokenize_punct(std::string_view smiles, const Vocabulary& vocab);

/// Punctuation split alone, before WordPiece. Exposed for vocabulary building.
std::vector<std::string> split_punct(std::string_view smiles);

struct VocabOptions {
  // Punct rule only: words seen fewer times than this are not added whole
  // (their characters are still added as pieces).
  std::size_t min_word_count = 1;
};

Vocabulary build_vocab(std::span<const std::string> corpus, TokenRule rule,
                       const VocabOptions& options = {});

TokenSequence encode(const Vocabulary& vocab, std::span<const std::string> tokens,
                     std::size_t max_len);

/// Drops specials and padding, mapping the remaining ids back to tokens.
std::vector<std::string> decode(const Vocabulary& vocab, const TokenSequence& seq);

/// A splitting rule bound to a vocabulary.
class Tokenizer {
 public:
  Tokenizer(TokenRule rule, Vocabulary vocab) : rule_(rule), vocab_(std::move(vocab)) {}

  TokenRule rule() const noexcept { return rule_; }
  const Vocabulary& vocab() const noexcept { return vocab_; }

  std::vector<std::string> tokenize(std::string_view smiles) const;
  TokenSequence encode(std::string_view smiles, std::size_t max_len) const;

 private:
  TokenRule rule_;
  Vocabulary vocab_;
};

/// Trims, maps "[*]" to "*", and returns an empty string for blank and
/// "#"-comment lines.
std::string normalize_line(std::string_view line);

/// Reads a one-SMILES-per-line corpus, skipping blank and comment lines.
std::vector<std::string> read_corpus(const std::filesystem::path& path);

std::string_view trim(std::string_view s);

}  // namespace polytx
