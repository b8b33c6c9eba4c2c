#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "exactk/numcore/random.hpp"

namespace exactk::dataio {

using ItemId = std::int64_t;
using UserId = std::int64_t;

// One exact-K record: a shown card of K items drawn from N candidates, the
// click label, and for clicked cards the item that was actually clicked.
struct Sample {
  UserId user = 0;
  std::vector<ItemId> card;
  std::vector<ItemId> candidates;
  int label = 0;
  std::optional<ItemId> positive_item;

  std::size_t k() const { return card.size(); }
  std::size_t n() const { return candidates.size(); }
  // Position of each card item inside `candidates` (node indices).
  std::vector<std::size_t> card_nodes() const;

  friend bool operator==(const Sample&, const Sample&) = default;
};

// Empty string when `s` satisfies every Sample invariant, else the reason.
std::string sample_violation(const Sample& s);
// Throws DataError naming `context` when invalid.
void validate_sample(const Sample& s, const std::string& context = "sample");

struct DatasetSpec {
  std::size_t k = 4;
  std::size_t n = 20;
  double split_ratio = 0.8;
  std::uint64_t seed = 0;

  // Throws ConfigError("K must be < N") and friends.
  void validate() const;
};

struct SplitResult {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

// Shuffled partition with |train| = floor(ratio * |samples|).
SplitResult split(const std::vector<Sample>& samples, double ratio, numcore::Rng& rng);

std::vector<Sample> labeled(const std::vector<Sample>& samples, int label);

// Tab-separated, one header line:
//   user<TAB>card<TAB>candidates<TAB>label<TAB>positive_item
// Id lists are comma-joined; an absent positive item is written as "-".
inline constexpr const char* kSampleHeader = "user\tcard\tcandidates\tlabel\tpositive_item";

std::string format_sample(const Sample& s);
Sample parse_sample_row(const std::string& row, std::size_t line_number);
std::vector<Sample> parse_samples(std::istream& in, const std::string& origin);
std::vector<Sample> read_samples(const std::filesystem::path& path);
void write_samples(const std::vector<Sample>& samples, const std::filesystem::path& path);
void write_samples(const std::vector<Sample>& samples, std::ostream& out);

}  // namespace exactk::dataio
