#pragma once

#include <vector>

#include "exactk/dataio/sample.hpp"

namespace exactk::dataio {

struct Rating {
  UserId user = 0;
  ItemId item = 0;
  double rating = 0.0;
};

inline constexpr double kPositiveRating = 5.0;

struct ImplicitBuildResult {
  std::vector<Sample> samples;
  std::size_t skipped_users = 0;
};

// Turns explicit ratings into exact-K samples. Only 5-star ratings count as
// positive; everything else a user rated is unknown feedback. Per positive
// event one clicked card (the positive plus K-1 non-positive items) and one
// non-clicked card (K non-positive items) are emitted, each with candidates
// filled from the user's rated items up to N. Users with fewer than N rated
// items, or fewer than K non-positive ones, are skipped and counted.
ImplicitBuildResult build_from_implicit_feedback(const std::vector<Rating>& ratings, const DatasetSpec& spec,
                                                 numcore::Rng& rng);

std::vector<Rating> read_ratings(const std::filesystem::path& path);

// Synthetic MovieLens-like ratings (1..5 stars) from a low-rank preference
// model; stands in for a real ratings dump.
std::vector<Rating> synthesize_ratings(std::size_t users, std::size_t items, std::size_t per_user, numcore::Rng& rng);

}  // namespace exactk::dataio
