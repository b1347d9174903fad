#include "polytx/smiles_graph.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <map>
#include <optional>

#include "binio.hpp"
#include "polytx/rng.hpp"

namespace polytx {

namespace {

struct RingOpen {
  std::size_t atom;
  std::optional<BondOrder> order;
  std::size_t offset;
};

std::optional<BondOrder> bond_from_char(char c) {
  switch (c) {
    case '-':
    case '/':
    case '\\':
      return BondOrder::Single;
    case '=':
      return BondOrder::Double;
    case '#':
      return BondOrder::Triple;
    case ':':
      return BondOrder::Aromatic;
    default:
      return std::nullopt;
  }
}

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  MolGraph run() {
    if (s_.empty()) throw SmilesParseError(0, "empty SMILES");
    while (pos_ < s_.size()) step();
    if (pending_bond_) throw SmilesParseError(pending_offset_, "bond symbol without a following atom");
    if (!branches_.empty()) throw SmilesParseError(branches_.back().second, "unclosed branch '('");
    if (!rings_.empty()) {
      const auto& [num, open] = *rings_.begin();
      throw SmilesParseError(open.offset, "unclosed ring bond " + std::to_string(num));
    }
    return std::move(g_);
  }

 private:
  void step() {
    const char c = s_[pos_];
    if (auto order = bond_from_char(c)) {
      if (pending_bond_) throw SmilesParseError(pos_, "two consecutive bond symbols");
      pending_bond_ = order;
      pending_offset_ = pos_;
      ++pos_;
      return;
    }
    switch (c) {
      case '(':
        if (!prev_) throw SmilesParseError(pos_, "branch opened before any atom");
        if (pending_bond_) throw SmilesParseError(pos_, "bond symbol before '('");
        branches_.emplace_back(*prev_, pos_);
        ++pos_;
        return;
      case ')':
        if (branches_.empty()) throw SmilesParseError(pos_, "unbalanced ')'");
        if (pending_bond_) throw SmilesParseError(pending_offset_, "bond symbol before ')'");
        prev_ = branches_.back().first;
        branches_.pop_back();
        ++pos_;
        return;
      case '.':
        if (pending_bond_) throw SmilesParseError(pending_offset_, "bond symbol before '.'");
        prev_.reset();
        ++pos_;
        return;
      case '%': {
        if (pos_ + 2 >= s_.size() || !is_digit(s_[pos_ + 1]) || !is_digit(s_[pos_ + 2])) {
          throw SmilesParseError(pos_, "malformed two-digit ring closure");
        }
        const int num = (s_[pos_ + 1] - '0') * 10 + (s_[pos_ + 2] - '0');
        ring(num, pos_);
        pos_ += 3;
        return;
      }
      case '[':
        bracket_atom();
        return;
      default:
        break;
    }
    if (is_digit(c)) {
      ring(c - '0', pos_);
      ++pos_;
      return;
    }
    organic_atom();
  }

  void ring(int num, std::size_t offset) {
    if (!prev_) throw SmilesParseError(offset, "ring closure before any atom");
    auto it = rings_.find(num);
    if (it == rings_.end()) {
      rings_.emplace(num, RingOpen{*prev_, pending_bond_, offset});
      pending_bond_.reset();
      return;
    }
    const RingOpen open = it->second;
    rings_.erase(it);
    if (open.order && pending_bond_ && *open.order != *pending_bond_) {
      throw SmilesParseError(offset, "conflicting ring-closure bond orders");
    }
    auto order = pending_bond_ ? pending_bond_ : open.order;
    pending_bond_.reset();
    add_bond(open.atom, *prev_, order, offset);
  }

  void organic_atom() {
    const char c = s_[pos_];
    Atom atom;
    std::size_t len = 1;
    if (c == '*') {
      atom.element = "*";
      atom.wildcard = true;
    } else if (c == 'C' && pos_ + 1 < s_.size() && s_[pos_ + 1] == 'l') {
      atom.element = "Cl";
      len = 2;
    } else if (c == 'B' && pos_ + 1 < s_.size() && s_[pos_ + 1] == 'r') {
      atom.element = "Br";
      len = 2;
    } else if (c == 'B' || c == 'C' || c == 'N' || c == 'O' || c == 'P' || c == 'S' || c == 'F' || c == 'I') {
      atom.element = std::string(1, c);
    } else if (c == 'b' || c == 'c' || c == 'n' || c == 'o' || c == 'p' || c == 's') {
      atom.element = std::string(1, static_cast<char>(c - 'a' + 'A'));
      atom.aromatic = true;
    } else {
      throw SmilesParseError(pos_, std::string("unknown glyph '") + c + "'");
    }
    place(std::move(atom), pos_);
    pos_ += len;
  }

  void bracket_atom() {
    const std::size_t open = pos_;
    const auto close = s_.find(']', pos_);
    if (close == std::string_view::npos) throw SmilesParseError(open, "unterminated bracket atom");
    std::size_t i = pos_ + 1;
    while (i < close && is_digit(s_[i])) ++i;  // isotope, ignored
    if (i >= close) throw SmilesParseError(i, "bracket atom without element");
    Atom atom;
    const char c = s_[i];
    if (c == '*') {
      atom.element = "*";
      atom.wildcard = true;
      ++i;
    } else if (is_upper(c)) {
      atom.element = std::string(1, c);
      ++i;
      if (i < close && is_lower(s_[i]) && s_[i] != 'H') {
        atom.element.push_back(s_[i]);
        ++i;
      }
    } else if (is_lower(c)) {
      // aromatic: c n o s p b, se, as
      if (i + 1 < close && ((c == 's' && s_[i + 1] == 'e') || (c == 'a' && s_[i + 1] == 's'))) {
        atom.element = std::string(1, static_cast<char>(c - 'a' + 'A')) + s_[i + 1];
        i += 2;
      } else if (c == 'b' || c == 'c' || c == 'n' || c == 'o' || c == 's' || c == 'p') {
        atom.element = std::string(1, static_cast<char>(c - 'a' + 'A'));
        ++i;
      } else {
        throw SmilesParseError(i, std::string("unknown aromatic symbol '") + c + "'");
      }
      atom.aromatic = true;
    } else {
      throw SmilesParseError(i, std::string("unknown glyph '") + c + "' in bracket atom");
    }
    while (i < close && s_[i] == '@') ++i;  // chirality, ignored
    if (i < close && s_[i] == 'H') {
      ++i;
      while (i < close && is_digit(s_[i])) ++i;
    }
    if (i < close && (s_[i] == '+' || s_[i] == '-')) {
      const int sign = s_[i] == '+' ? 1 : -1;
      const char sym = s_[i];
      ++i;
      if (i < close && is_digit(s_[i])) {
        int mag = 0;
        while (i < close && is_digit(s_[i])) mag = mag * 10 + (s_[i++] - '0');
        atom.charge = sign * mag;
      } else {
        int mag = 1;
        while (i < close && s_[i] == sym) {
          ++mag;
          ++i;
        }
        atom.charge = sign * mag;
      }
    }
    if (i < close && s_[i] == ':') {
      ++i;
      while (i < close && is_digit(s_[i])) ++i;  // atom class, ignored
    }
    if (i != close) throw SmilesParseError(i, std::string("unexpected '") + s_[i] + "' in bracket atom");
    place(std::move(atom), open);
    pos_ = close + 1;
  }

  void place(Atom atom, std::size_t offset) {
    const std::size_t idx = g_.atoms.size();
    g_.atoms.push_back(std::move(atom));
    if (prev_) {
      add_bond(*prev_, idx, pending_bond_, offset);
    } else if (pending_bond_) {
      throw SmilesParseError(pending_offset_, "bond symbol without a preceding atom");
    }
    pending_bond_.reset();
    prev_ = idx;
  }

  void add_bond(std::size_t a, std::size_t b, std::optional<BondOrder> order, std::size_t offset) {
    if (a == b) throw SmilesParseError(offset, "atom bonded to itself");
    for (const auto& bond : g_.bonds) {
      if ((bond.a == a && bond.b == b) || (bond.a == b && bond.b == a)) {
        throw SmilesParseError(offset, "duplicate bond");
      }
    }
    BondOrder o = BondOrder::Single;
    if (order) {
      o = *order;
    } else if (g_.atoms[a].aromatic && g_.atoms[b].aromatic) {
      o = BondOrder::Aromatic;
    }
    g_.bonds.push_back(Bond{a, b, o});
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  MolGraph g_;
  std::optional<std::size_t> prev_;
  std::optional<BondOrder> pending_bond_;
  std::size_t pending_offset_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> branches_;  // (atom, offset of '(')
  std::map<int, RingOpen> rings_;
};

// Fixed seed and combiner for fingerprint identifiers; changing either
// changes every fingerprint ever written.
constexpr std::uint64_t kEcfpSeed = 0x45434650'32303234ULL;

std::uint64_t combine(std::uint64_t h, std::uint64_t v) {
  return mix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

std::uint64_t atom_invariant(const Atom& atom, std::size_t degree) {
  std::uint64_t h = kEcfpSeed;
  h = combine(h, hash_bytes(atom.element, kEcfpSeed));
  h = combine(h, degree);
  h = combine(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(atom.charge)));
  h = combine(h, atom.aromatic ? 1U : 0U);
  h = combine(h, atom.wildcard ? 1U : 0U);
  return h;
}

}  // namespace

std::vector<std::vector<std::pair<std::size_t, std::size_t>>> MolGraph::adjacency() const {
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(atoms.size());
  for (std::size_t i = 0; i < bonds.size(); ++i) {
    adj[bonds[i].a].emplace_back(bonds[i].b, i);
    adj[bonds[i].b].emplace_back(bonds[i].a, i);
  }
  return adj;
}

MolGraph parse_smiles(std::string_view smiles) { return Parser(smiles).run(); }

std::size_t Fingerprint::count() const {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::vector<std::uint64_t> morgan_identifiers(const MolGraph& graph, int radius) {
  if (radius < 0) fail(ErrorCode::BadConfig, "fingerprint radius must be non-negative");
  const auto adj = graph.adjacency();
  const std::size_t n = graph.atoms.size();
  std::vector<std::uint64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = atom_invariant(graph.atoms[i], adj[i].size());

  std::vector<std::uint64_t> all(ids);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> env;
  for (int round = 1; round <= radius; ++round) {
    std::vector<std::uint64_t> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      env.clear();
      for (const auto& [nbr, bond] : adj[i]) {
        env.emplace_back(static_cast<std::uint64_t>(graph.bonds[bond].order), ids[nbr]);
      }
      std::sort(env.begin(), env.end());  // order-independent aggregation
      std::uint64_t h = combine(static_cast<std::uint64_t>(round), ids[i]);
      for (const auto& [order, id] : env) h = combine(combine(h, order), id);
      next[i] = h;
    }
    ids = std::move(next);
    all.insert(all.end(), ids.begin(), ids.end());
  }
  return all;
}

Fingerprint ecfp(const MolGraph& graph, int radius, std::size_t nbits) {
  if (nbits == 0) fail(ErrorCode::BadConfig, "fingerprint length must be positive");
  for (const auto& b : graph.bonds) {
    if (b.a >= graph.atoms.size() || b.b >= graph.atoms.size() || b.a == b.b) {
      fail(ErrorCode::BadFormat, "invalid bond endpoints in molecular graph");
    }
  }
  Fingerprint fp(nbits, radius);
  for (auto id : morgan_identifiers(graph, radius)) fp.set(static_cast<std::size_t>(id % nbits));
  return fp;
}

FingerprintMatrix fingerprint_matrix(std::span<const std::string> corpus, std::size_t sample_size,
                                     std::uint64_t seed, int radius, std::size_t nbits) {
  FingerprintMatrix m;
  m.cols = nbits;
  if (sample_size == 0) return m;
  std::vector<std::size_t> order;
  if (corpus.size() <= sample_size) {
    if (corpus.size() < sample_size) {
      m.warnings.push_back("corpus has " + std::to_string(corpus.size()) + " lines, fewer than the requested sample of " +
                           std::to_string(sample_size) + "; using the full corpus");
    }
    order = shuffled_indices(corpus.size(), seed);
  } else {
    // Partial Fisher-Yates: the first sample_size slots are the sample.
    order.resize(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    for (std::size_t i = 0; i < sample_size; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(order.size() - i));
      std::swap(order[i], order[j]);
    }
    order.resize(sample_size);
  }
  for (auto idx : order) {
    Fingerprint fp(nbits, radius);
    try {
      fp = ecfp(parse_smiles(corpus[idx]), radius, nbits);
    } catch (const Error&) {
      ++m.skipped;
      continue;
    }
    for (std::size_t c = 0; c < nbits; ++c) m.bits.push_back(fp.test(c) ? 1 : 0);
    m.smiles.push_back(corpus[idx]);
    ++m.rows;
  }
  return m;
}

namespace {
constexpr char kFpMagic[8] = {'P', 'T', 'X', 'F', 'P', 'B', 'M', '1'};
}

void write_fingerprint_matrix(const std::filesystem::path& path, const FingerprintMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.write(kFpMagic, 8);
  binio::put_u64(out, m.rows);
  binio::put_u64(out, m.cols);
  const std::size_t row_bytes = (m.cols + 7) / 8;
  std::vector<char> buf(row_bytes);
  for (std::size_t r = 0; r < m.rows; ++r) {
    std::fill(buf.begin(), buf.end(), 0);
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (m.at(r, c)) buf[c / 8] = static_cast<char>(buf[c / 8] | (1 << (c % 8)));
    }
    out.write(buf.data(), static_cast<std::streamsize>(row_bytes));
  }
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
}

FingerprintMatrix read_fingerprint_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read " + path.string());
  char magic[8];
  binio::get_exact(in, magic, 8, "fingerprint magic");
  if (!std::equal(magic, magic + 8, kFpMagic)) fail(ErrorCode::BadFormat, path.string() + " is not a fingerprint matrix");
  FingerprintMatrix m;
  m.rows = binio::get_u64(in, "row count");
  m.cols = binio::get_u64(in, "column count");
  if (m.cols == 0 || m.cols > (1U << 20)) fail(ErrorCode::BadFormat, "implausible fingerprint width");
  const std::size_t row_bytes = (m.cols + 7) / 8;
  std::vector<char> buf(row_bytes);
  m.bits.reserve(m.rows * m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    binio::get_exact(in, buf.data(), row_bytes, "fingerprint row");
    for (std::size_t c = 0; c < m.cols; ++c) m.bits.push_back((static_cast<unsigned char>(buf[c / 8]) >> (c % 8)) & 1U);
  }
  return m;
}

}  // namespace polytx
