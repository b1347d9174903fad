#include "polytx/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <regex>
#include <set>

#include "polytx/error.hpp"

namespace polytx {

namespace {

// Ordered alternation: bracket atoms whole, two-letter halogens before their
// one-letter prefixes, two-digit ring closures before single digits.
const std::regex& atom_regex() {
  static const std::regex re(
      R"(\[[^\]]+\]|Br|Cl|%[0-9]{2}|[BCNOPSFI]|[bcnops]|[0-9]|\(|\)|\.|=|#|-|\+|\\|/|:|~|@|\?|>|\*|\$)",
      std::regex::ECMAScript | std::regex::optimize);
  return re;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// ASCII punctuation as BERT's basic tokenizer defines it.
bool is_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

// Length in bytes of the UTF-8 sequence starting with lead byte c.
std::size_t utf8_len(unsigned char c) {
  if (c < 0x80) return 1;
  if ((c >> 5) == 0x6) return 2;
  if ((c >> 4) == 0xe) return 3;
  if ((c >> 3) == 0x1e) return 4;
  return 1;
}

std::vector<std::string> utf8_chars(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    const std::size_t n = std::min(utf8_len(static_cast<unsigned char>(word[i])), word.size() - i);
    out.emplace_back(word.substr(i, n));
    i += n;
  }
  return out;
}

constexpr std::string_view kContinuation = "##";
constexpr std::size_t kMaxWordChars = 100;

std::string_view require_nonempty(std::string_view smiles) {
  const auto t = trim(smiles);
  if (t.empty()) fail(ErrorCode::EmptyInput, "empty SMILES input");
  return t;
}

}  // namespace

std::string_view trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

TokenRule parse_token_rule(std::string_view name) {
  if (name == "regex") return TokenRule::Regex;
  if (name == "punct") return TokenRule::Punct;
  fail(ErrorCode::BadConfig, "unknown tokenization rule '" + std::string(name) + "' (expected regex|punct)");
}

std::string_view token_rule_name(TokenRule rule) { return rule == TokenRule::Regex ? "regex" : "punct"; }

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kNumSpecial) fail(ErrorCode::BadFormat, "vocabulary shorter than the special-token block");
  for (int i = 0; i < kNumSpecial; ++i) {
    if (tokens_[static_cast<std::size_t>(i)] != kSpecialTokens[static_cast<std::size_t>(i)]) {
      fail(ErrorCode::BadFormat, "vocabulary id " + std::to_string(i) + " must be " +
                                     std::string(kSpecialTokens[static_cast<std::size_t>(i)]) + ", found '" +
                                     tokens_[static_cast<std::size_t>(i)] + "'");
    }
  }
  ids_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& t = tokens_[i];
    if (t.empty()) fail(ErrorCode::BadFormat, "empty token at id " + std::to_string(i));
    if (std::any_of(t.begin(), t.end(), is_space)) fail(ErrorCode::BadFormat, "token with whitespace at id " + std::to_string(i));
    if (!ids_.emplace(t, static_cast<int>(i)).second) fail(ErrorCode::BadFormat, "duplicate token '" + t + "'");
  }
  if (!ids_.contains("*")) fail(ErrorCode::BadFormat, "vocabulary lacks the polymerization token '*'");
}

int Vocabulary::id_of(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    fail(ErrorCode::BadFormat, "token id " + std::to_string(id) + " out of range for vocabulary of size " +
                                   std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) fail(ErrorCode::IoError, "failed writing vocabulary " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

std::vector<std::string> tokenize_regex(std::string_view smiles) {
  const auto s = require_nonempty(smiles);
  const auto& re = atom_regex();
  std::vector<std::string> tokens;
  auto it = s.begin();
  std::match_results<std::string_view::const_iterator> m;
  while (it != s.end()) {
    if (std::regex_search(it, s.end(), m, re, std::regex_constants::match_continuous) && m.length(0) > 0) {
      tokens.emplace_back(it, it + m.length(0));
      it += m.length(0);
    } else {
      tokens.emplace_back(1, *it);
      ++it;
    }
  }
  return tokens;
}

std::vector<std::string> split_punct(std::string_view smiles) {
  const auto s = require_nonempty(smiles);
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) words.push_back(std::move(cur));
    cur.clear();
  };
  for (char c : s) {
    if (is_space(c)) {
      flush();
    } else if (is_punct(static_cast<unsigned char>(c))) {
      flush();
      words.emplace_back(1, c);
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return words;
}

std::vector<std::string> tokenize_punct(std::string_view smiles, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (const auto& word : split_punct(smiles)) {
    const auto chars = utf8_chars(word);
    if (chars.size() > kMaxWordChars) {
      out.emplace_back(kUnkToken);
      continue;
    }
    std::vector<std::string> pieces;
    bool bad = false;
    std::size_t start = 0;
    while (start < chars.size()) {
      std::size_t end = chars.size();
      std::string found;
      while (end > start) {
        std::string piece = start > 0 ? std::string(kContinuation) : std::string();
        for (std::size_t k = start; k < end; ++k) piece += chars[k];
        if (vocab.contains(piece)) {
          found = std::move(piece);
          break;
        }
        --end;
      }
      if (found.empty()) {
        bad = true;
        break;
      }
      pieces.push_back(std::move(found));
      start = end;
    }
    if (bad) {
      out.emplace_back(kUnkToken);
    } else {
      for (auto& p : pieces) out.push_back(std::move(p));
    }
  }
  return out;
}

Vocabulary build_vocab(std::span<const std::string> corpus, TokenRule rule, const VocabOptions& options) {
  if (corpus.empty()) fail(ErrorCode::EmptyCorpus, "cannot build a vocabulary from an empty corpus");
  std::set<std::string> observed;
  for (char d = '1'; d <= '9'; ++d) observed.insert(std::string(1, d));
  observed.insert("*");
  if (rule == TokenRule::Regex) {
    for (const auto& s : corpus) {
      for (auto& t : tokenize_regex(s)) observed.insert(std::move(t));
    }
  } else {
    std::map<std::string, std::size_t> word_counts;
    for (const auto& s : corpus) {
      for (auto& w : split_punct(s)) {
        if (w.size() == 1 && is_punct(static_cast<unsigned char>(w[0]))) {
          observed.insert(std::move(w));
        } else {
          ++word_counts[w];
        }
      }
    }
    for (const auto& [word, count] : word_counts) {
      if (count >= options.min_word_count) observed.insert(word);
      const auto chars = utf8_chars(word);
      for (std::size_t k = 0; k < chars.size(); ++k) {
        observed.insert(chars[k]);
        if (k > 0) observed.insert(std::string(kContinuation) + chars[k]);
      }
    }
  }
  for (auto sp : kSpecialTokens) observed.erase(std::string(sp));

  std::vector<std::string> tokens;
  tokens.reserve(kNumSpecial + observed.size());
  for (auto sp : kSpecialTokens) tokens.emplace_back(sp);
  tokens.insert(tokens.end(), observed.begin(), observed.end());  // std::set order is bytewise
  return Vocabulary(std::move(tokens));
}

TokenSequence encode(const Vocabulary& vocab, std::span<const std::string> tokens, std::size_t max_len) {
  if (max_len < 3) fail(ErrorCode::BadMaxLen, "max_len must be >= 3, got " + std::to_string(max_len));
  const std::size_t payload = std::min(tokens.size(), max_len - 2);
  TokenSequence seq;
  seq.ids.assign(max_len, kPadId);
  seq.attention_mask.assign(max_len, 0);
  seq.ids[0] = kClsId;
  for (std::size_t i = 0; i < payload; ++i) seq.ids[i + 1] = vocab.id_of(tokens[i]);
  seq.ids[payload + 1] = kSepId;
  seq.length = payload + 2;
  for (std::size_t i = 0; i < seq.length; ++i) seq.attention_mask[i] = 1;
  return seq;
}

std::vector<std::string> decode(const Vocabulary& vocab, const TokenSequence& seq) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < seq.length && i < seq.ids.size(); ++i) {
    const int id = seq.ids[i];
    if (id == kClsId || id == kSepId || id == kPadId) continue;
    out.push_back(vocab.token_of(id));
  }
  return out;
}

std::vector<std::string> Tokenizer::tokenize(std::string_view smiles) const {
  return rule_ == TokenRule::Regex ? tokenize_regex(smiles) : tokenize_punct(smiles, vocab_);
}

TokenSequence Tokenizer::encode(std::string_view smiles, std::size_t max_len) const {
  const auto tokens = tokenize(smiles);
  return polytx::encode(vocab_, tokens, max_len);
}

std::string normalize_line(std::string_view line) {
  const auto t = trim(line);
  if (t.empty() || t.front() == '#') return {};
  std::string out;
  out.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.compare(i, 3, "[*]") == 0) {
      out.push_back('*');
      i += 2;
    } else {
      out.push_back(t[i]);
    }
  }
  return out;
}

std::vector<std::string> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read corpus " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    auto norm = normalize_line(line);
    if (!norm.empty()) lines.push_back(std::move(norm));
  }
  return lines;
}

}  // namespace polytx
