#include "exactk/dataio/implicit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "exactk/errors.hpp"

namespace exactk::dataio {

namespace {

std::vector<ItemId> without(const std::vector<ItemId>& pool, const std::vector<ItemId>& drop) {
  std::set<ItemId> dropped(drop.begin(), drop.end());
  std::vector<ItemId> out;
  std::copy_if(pool.begin(), pool.end(), std::back_inserter(out), [&](ItemId i) { return !dropped.count(i); });
  return out;
}

Sample make_sample(UserId user, std::vector<ItemId> card, const std::vector<ItemId>& known, std::size_t n, int label,
                   std::optional<ItemId> positive, numcore::Rng& rng) {
  numcore::shuffle(card, rng);
  auto fill = numcore::sample_without_replacement(without(known, card), n - card.size(), rng);
  std::vector<ItemId> candidates = card;
  candidates.insert(candidates.end(), fill.begin(), fill.end());
  numcore::shuffle(candidates, rng);
  return Sample{user, std::move(card), std::move(candidates), label, positive};
}

}  // namespace

ImplicitBuildResult build_from_implicit_feedback(const std::vector<Rating>& ratings, const DatasetSpec& spec,
                                                 numcore::Rng& rng) {
  if (ratings.empty()) throw DataError("implicit feedback: no ratings");
  spec.validate();
  std::map<UserId, std::map<ItemId, double>> by_user;
  for (const auto& r : ratings) {
    auto& best = by_user[r.user][r.item];
    best = std::max(best, r.rating);
  }
  ImplicitBuildResult result;
  for (const auto& [user, items] : by_user) {
    std::vector<ItemId> known, positives, others;
    for (const auto& [item, rating] : items) {
      known.push_back(item);
      (rating >= kPositiveRating ? positives : others).push_back(item);
    }
    if (known.size() < spec.n || others.size() < spec.k) {
      ++result.skipped_users;
      continue;
    }
    for (auto pos : positives) {
      auto card = numcore::sample_without_replacement(others, spec.k - 1, rng);
      card.push_back(pos);
      result.samples.push_back(make_sample(user, std::move(card), known, spec.n, 1, pos, rng));
      auto negative = numcore::sample_without_replacement(others, spec.k, rng);
      result.samples.push_back(make_sample(user, std::move(negative), known, spec.n, 0, std::nullopt, rng));
    }
  }
  return result;
}

std::vector<Rating> read_ratings(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<Rating> out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(f, line)) {
    ++line_number;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    Rating r;
    if (!(ss >> r.user >> r.item >> r.rating)) {
      throw DataError(path.string() + ": line " + std::to_string(line_number) + ": expected 'user item rating'");
    }
    out.push_back(r);
  }
  return out;
}

std::vector<Rating> synthesize_ratings(std::size_t users, std::size_t items, std::size_t per_user, numcore::Rng& rng) {
  if (per_user > items) throw ConfigError("synthesize_ratings: per_user exceeds item count");
  constexpr std::size_t kRank = 4;
  auto latent = [&](std::size_t count) {
    std::vector<std::vector<double>> v(count, std::vector<double>(kRank));
    for (auto& row : v)
      for (auto& x : row) x = numcore::normal(rng);
    return v;
  };
  auto user_vecs = latent(users);
  auto item_vecs = latent(items);
  std::vector<ItemId> all(items);
  for (std::size_t i = 0; i < items; ++i) all[i] = static_cast<ItemId>(i + 1);
  std::vector<Rating> out;
  for (std::size_t u = 0; u < users; ++u) {
    for (auto item : numcore::sample_without_replacement(all, per_user, rng)) {
      double score = 0.0;
      for (std::size_t d = 0; d < kRank; ++d) score += user_vecs[u][d] * item_vecs[static_cast<std::size_t>(item - 1)][d];
      score += numcore::normal(rng, 0.0, 0.5);
      const double stars = std::clamp(std::round(3.0 + score), 1.0, 5.0);
      out.push_back({static_cast<UserId>(u + 1), item, stars});
    }
  }
  return out;
}

}  // namespace exactk::dataio
