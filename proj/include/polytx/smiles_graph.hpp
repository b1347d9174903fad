#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polytx/error.hpp"

namespace polytx {

enum class BondOrder : std::uint8_t { Single = 1, Double = 2, Triple = 3, Aromatic = 4 };

struct Atom {
  std::string element;  // "*" for wildcards, capitalized symbol otherwise
  int charge = 0;
  bool aromatic = false;
  bool wildcard = false;
};

struct Bond {
  std::size_t a = 0;
  std::size_t b = 0;
  BondOrder order = BondOrder::Single;
};

struct MolGraph {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;

  /// Adjacency as (neighbor, bond index) pairs, in bond order.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adjacency() const;
};

class SmilesParseError : public Error {
 public:
  SmilesParseError(std::size_t offset, const std::string& what)
      : Error(ErrorCode::ParseError, what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Parses the organic subset, bracket atoms, bonds, branches, ring closures
/// (digits and %NN), "." and "*". Throws SmilesParseError.
MolGraph parse_smiles(std::string_view smiles);

inline constexpr std::size_t kDefaultFpBits = 1024;
inline constexpr int kDefaultFpRadius = 2;

class Fingerprint {
 public:
  Fingerprint(std::size_t nbits, int radius) : nbits_(nbits), radius_(radius), words_((nbits + 63) / 64, 0) {}

  std::size_t nbits() const noexcept { return nbits_; }
  int radius() const noexcept { return radius_; }
  bool test(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1U; }
  void set(std::size_t i) { words_[i / 64] |= std::uint64_t{1} << (i % 64); }
  std::size_t count() const;

  friend bool operator==(const Fingerprint&, const Fingerprint&) = default;

 private:
  std::size_t nbits_;
  int radius_;
  std::vector<std::uint64_t> words_;
};

/// Raw Morgan identifiers for every atom and round (radius + 1 rounds),
/// before folding. Exposed for testing the fold.
std::vector<std::uint64_t> morgan_identifiers(const MolGraph& graph, int radius);

Fingerprint ecfp(const MolGraph& graph, int radius = kDefaultFpRadius, std::size_t nbits = kDefaultFpBits);

struct FingerprintMatrix {
  std::size_t rows = 0;
  std::size_t cols = kDefaultFpBits;
  std::vector<std::uint8_t> bits;  // rows * cols, 0/1, row-major
  std::vector<std::string> smiles;
  std::size_t skipped = 0;
  std::vector<std::string> warnings;

  std::uint8_t at(std::size_t r, std::size_t c) const { return bits[r * cols + c]; }
};

/// Seeded uniform sample without replacement; rows follow the sampled order.
/// Unparseable lines are skipped and counted.
FingerprintMatrix fingerprint_matrix(std::span<const std::string> corpus, std::size_t sample_size,
                                     std::uint64_t seed, int radius = kDefaultFpRadius,
                                     std::size_t nbits = kDefaultFpBits);

/// Binary layout (little-endian): "PTXFPBM1", u64 rows, u64 cols, then each
/// row packed LSB-first into ceil(cols/8) bytes.
void write_fingerprint_matrix(const std::filesystem::path& path, const FingerprintMatrix& m);
FingerprintMatrix read_fingerprint_matrix(const std::filesystem::path& path);

}  // namespace polytx
