#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "exactk/dataio/sample.hpp"
#include "exactk/numcore/archive.hpp"

namespace exactk::dataio {

struct OracleWorldParams {
  std::size_t users = 1000;
  std::size_t items = 200;
  std::size_t dim = 8;
  std::size_t clusters = 4;
  double beta = 1.0;
  double temperature = 0.0;
  double cluster_noise = 0.15;
  bool titles = true;
};

// Synthetic ground truth. Users and items are indexed 0..count-1 and carry
// non-negative latent vectors; the utility of a card is
//   U(A, u) = sum_i <z_u, z_ai> + beta * sum_{i<j} <z_ai, z_aj>.
struct OracleWorld {
  std::size_t dim = 0;
  std::size_t user_count = 0;
  std::size_t item_count = 0;
  std::vector<double> user_vectors;  // user_count x dim
  std::vector<double> item_vectors;  // item_count x dim
  double beta = 0.0;
  double temperature = 0.0;
  std::vector<std::string> item_titles;  // empty or item_count entries

  std::span<const double> user(UserId u) const;
  std::span<const double> item(ItemId i) const;
  double affinity(UserId u, ItemId i) const;
  double synergy(ItemId a, ItemId b) const;
  double utility(UserId u, std::span<const ItemId> card) const;

  void validate() const;
};

OracleWorld make_oracle_world(const OracleWorldParams& params, numcore::Rng& rng);

numcore::Archive world_to_archive(const OracleWorld& world);
OracleWorld world_from_archive(const numcore::Archive& archive);

// Returns true when two items may share a card.
using PairFeasibility = std::function<bool(ItemId, ItemId)>;

inline constexpr std::size_t kClickCandidates = 5;

// For each of the first `n_users` users: draws N candidate items, then
// kClickCandidates random feasible K-cards. The card with the highest
// (optionally Gumbel-perturbed) utility becomes the clicked sample, the
// lowest the non-clicked one. The clicked card's positive item is its
// highest-affinity member (ties to the lowest item id).
std::vector<Sample> generate_oracle_dataset(const OracleWorld& world, const DatasetSpec& spec, std::size_t n_users,
                                            numcore::Rng& rng, const PairFeasibility& feasible = {});

}  // namespace exactk::dataio
