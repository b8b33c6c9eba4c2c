#include "exactk/dataio/oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

#include "exactk/errors.hpp"

namespace exactk::dataio {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

constexpr std::array<const char*, 8> kTitleStems = {"hat", "scarf", "glove", "shoe", "umbrella", "coat", "bag", "sock"};

std::string synth_title(std::size_t cluster, numcore::Rng& rng) {
  std::string title = kTitleStems[cluster % kTitleStems.size()];
  title += ' ';
  for (int i = 0; i < 3; ++i) title += static_cast<char>('a' + numcore::index_below(rng, 26));
  return title;
}

std::vector<ItemId> random_feasible_card(const std::vector<ItemId>& candidates, std::size_t k, numcore::Rng& rng,
                                         const PairFeasibility& feasible) {
  constexpr int kAttempts = 100;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    auto order = candidates;
    numcore::shuffle(order, rng);
    std::vector<ItemId> card;
    for (auto item : order) {
      bool ok = !feasible || std::all_of(card.begin(), card.end(), [&](ItemId c) { return feasible(c, item); });
      if (ok) card.push_back(item);
      if (card.size() == k) return card;
    }
  }
  throw InfeasibleError("oracle generator: no feasible card found among candidates");
}

double gumbel(numcore::Rng& rng) {
  double u = numcore::uniform01(rng);
  u = std::clamp(u, 1e-300, 1.0 - 1e-16);
  return -std::log(-std::log(u));
}

}  // namespace

std::span<const double> OracleWorld::user(UserId u) const {
  if (u < 0 || static_cast<std::size_t>(u) >= user_count) throw DataError("oracle world: unknown user " + std::to_string(u));
  return {user_vectors.data() + static_cast<std::size_t>(u) * dim, dim};
}

std::span<const double> OracleWorld::item(ItemId i) const {
  if (i < 0 || static_cast<std::size_t>(i) >= item_count) throw DataError("oracle world: unknown item " + std::to_string(i));
  return {item_vectors.data() + static_cast<std::size_t>(i) * dim, dim};
}

double OracleWorld::affinity(UserId u, ItemId i) const { return dot(user(u), item(i)); }

double OracleWorld::synergy(ItemId a, ItemId b) const { return dot(item(a), item(b)); }

double OracleWorld::utility(UserId u, std::span<const ItemId> card) const {
  double total = 0.0;
  for (std::size_t i = 0; i < card.size(); ++i) {
    total += affinity(u, card[i]);
    for (std::size_t j = i + 1; j < card.size(); ++j) total += beta * synergy(card[i], card[j]);
  }
  return total;
}

void OracleWorld::validate() const {
  if (dim == 0) throw DataError("oracle world: zero dimension");
  if (user_vectors.size() != user_count * dim || item_vectors.size() != item_count * dim) {
    throw DataError("oracle world: latent vectors do not share dimension " + std::to_string(dim));
  }
  if (!std::isfinite(beta)) throw DataError("oracle world: beta must be finite");
  if (!item_titles.empty() && item_titles.size() != item_count) throw DataError("oracle world: title count mismatch");
}

OracleWorld make_oracle_world(const OracleWorldParams& p, numcore::Rng& rng) {
  if (p.dim == 0 || p.clusters == 0 || p.clusters > p.dim) {
    throw ConfigError("oracle world: need 0 < clusters <= dim");
  }
  OracleWorld w;
  w.dim = p.dim;
  w.user_count = p.users;
  w.item_count = p.items;
  w.beta = p.beta;
  w.temperature = p.temperature;
  const std::size_t per_cluster = p.dim / p.clusters;
  w.item_vectors.resize(p.items * p.dim);
  for (std::size_t i = 0; i < p.items; ++i) {
    const std::size_t cluster = numcore::index_below(rng, p.clusters);
    double* v = w.item_vectors.data() + i * p.dim;
    for (std::size_t d = 0; d < p.dim; ++d) {
      const bool home = d / per_cluster == cluster && d < per_cluster * p.clusters;
      v[d] = (home ? 1.0 : 0.0) + p.cluster_noise * std::abs(numcore::normal(rng));
    }
    double norm = 0.0;
    for (std::size_t d = 0; d < p.dim; ++d) norm += v[d] * v[d];
    norm = std::sqrt(norm);
    for (std::size_t d = 0; d < p.dim; ++d) v[d] /= norm;
    if (p.titles) w.item_titles.push_back(synth_title(cluster, rng));
  }
  w.user_vectors.resize(p.users * p.dim);
  for (auto& x : w.user_vectors) x = numcore::uniform01(rng);
  return w;
}

numcore::Archive world_to_archive(const OracleWorld& w) {
  w.validate();
  numcore::Archive a;
  a.set("kind", "oracle_world");
  a.set("dim", std::to_string(w.dim));
  a.set("users", std::to_string(w.user_count));
  a.set("items", std::to_string(w.item_count));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", w.beta);
  a.set("beta", buf);
  std::snprintf(buf, sizeof buf, "%.17g", w.temperature);
  a.set("temperature", buf);
  a.set("titles", w.item_titles.empty() ? "0" : "1");
  for (std::size_t i = 0; i < w.item_titles.size(); ++i) a.set("title." + std::to_string(i), w.item_titles[i]);
  a.records.push_back({"user_vectors", {std::max<std::size_t>(w.user_count, 1), w.dim}, w.user_vectors});
  a.records.push_back({"item_vectors", {std::max<std::size_t>(w.item_count, 1), w.dim}, w.item_vectors});
  return a;
}

OracleWorld world_from_archive(const numcore::Archive& a) {
  if (a.get("kind") != "oracle_world") throw DataError("archive does not hold an oracle world");
  OracleWorld w;
  w.dim = std::stoul(a.require("dim"));
  w.user_count = std::stoul(a.require("users"));
  w.item_count = std::stoul(a.require("items"));
  w.beta = std::stod(a.require("beta"));
  w.temperature = std::stod(a.require("temperature"));
  w.user_vectors = a.record("user_vectors").data;
  w.item_vectors = a.record("item_vectors").data;
  if (a.require("titles") == "1") {
    for (std::size_t i = 0; i < w.item_count; ++i) w.item_titles.push_back(a.require("title." + std::to_string(i)));
  }
  w.validate();
  return w;
}

std::vector<Sample> generate_oracle_dataset(const OracleWorld& world, const DatasetSpec& spec, std::size_t n_users,
                                            numcore::Rng& rng, const PairFeasibility& feasible) {
  spec.validate();
  world.validate();
  if (n_users > world.user_count) throw ConfigError("oracle generator: more users requested than the world holds");
  if (spec.n > world.item_count) throw ConfigError("oracle generator: N exceeds the item pool");
  std::vector<ItemId> pool(world.item_count);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<ItemId>(i);
  std::vector<Sample> out;
  out.reserve(2 * n_users);
  for (std::size_t u = 0; u < n_users; ++u) {
    const auto user = static_cast<UserId>(u);
    auto candidates = numcore::sample_without_replacement(pool, spec.n, rng);
    std::size_t best = 0, worst = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    double worst_score = std::numeric_limits<double>::infinity();
    std::vector<std::vector<ItemId>> cards;
    for (std::size_t c = 0; c < kClickCandidates; ++c) {
      cards.push_back(random_feasible_card(candidates, spec.k, rng, feasible));
      double score = world.utility(user, cards.back());
      if (world.temperature > 0.0) score += world.temperature * gumbel(rng);
      if (score > best_score) best_score = score, best = c;
      if (score < worst_score) worst_score = score, worst = c;
    }
    const auto& clicked = cards[best];
    ItemId positive = clicked.front();
    double top = -std::numeric_limits<double>::infinity();
    for (auto item : clicked) {
      const double a = world.affinity(user, item);
      if (a > top || (a == top && item < positive)) top = a, positive = item;
    }
    out.push_back(Sample{user, clicked, candidates, 1, positive});
    out.push_back(Sample{user, cards[worst], candidates, 0, std::nullopt});
  }
  return out;
}

}  // namespace exactk::dataio
