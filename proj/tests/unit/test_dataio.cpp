#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

#include "exactk/dataio/features.hpp"
#include "exactk/dataio/implicit.hpp"
#include "exactk/dataio/oracle.hpp"
#include "exactk/errors.hpp"
#include "exactk/graph/graph.hpp"

using namespace exactk;
using namespace exactk::dataio;

namespace {

std::string ids(int lo, int hi) {
  std::string s;
  for (int i = lo; i <= hi; ++i) s += (i > lo ? "," : "") + std::to_string(i);
  return s;
}

Sample random_sample(numcore::Rng& rng, std::size_t k, std::size_t n) {
  Sample s;
  s.user = static_cast<UserId>(numcore::index_below(rng, 100000));
  std::vector<ItemId> pool(500);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<ItemId>(i);
  s.candidates = numcore::sample_without_replacement(pool, n, rng);
  s.card = numcore::sample_without_replacement(s.candidates, k, rng);
  s.label = static_cast<int>(numcore::index_below(rng, 2));
  if (s.label == 1) s.positive_item = s.card[numcore::index_below(rng, k)];
  return s;
}

std::vector<Sample> numbered(std::size_t count) {
  std::vector<Sample> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i].user = static_cast<UserId>(i);
    out[i].card = {0};
    out[i].candidates = {0, 1};
  }
  return out;
}

}  // namespace

TEST(SampleFormat, ParsesClickedRow) {
  const Sample s = parse_sample_row("1\t1,2,3,4\t" + ids(1, 20) + "\t1\t2", 2);
  EXPECT_EQ(s.user, 1);
  EXPECT_EQ(s.card, (std::vector<ItemId>{1, 2, 3, 4}));
  EXPECT_EQ(s.n(), 20u);
  EXPECT_EQ(s.label, 1);
  ASSERT_TRUE(s.positive_item.has_value());
  EXPECT_EQ(*s.positive_item, 2);
}

TEST(SampleFormat, ParsesNonClickedRow) {
  const Sample s = parse_sample_row("1\t5,6,7,8\t" + ids(1, 20) + "\t0\t-", 3);
  EXPECT_EQ(s.label, 0);
  EXPECT_FALSE(s.positive_item.has_value());
}

TEST(SampleFormat, MalformedRowsNameTheLine) {
  const std::vector<std::string> bad = {
      "1\t1,2\t1,2,3",                // column count
      "x\t1,2\t1,2,3\t0\t-",          // non-integer user
      "1\t1,9\t1,2,3\t0\t-",          // card not within candidates
      "1\t1,2\t1,2,3\t1\t-",          // clicked without positive
      "1\t1,2\t1,2,3\t0\t1",          // non-clicked with positive
      "1\t1,1\t1,2,3\t0\t-",          // duplicate card item
      "1\t1,2\t1,2,3\t2\t-",          // label range
  };
  for (const auto& row : bad) {
    std::istringstream in(std::string(kSampleHeader) + "\n1\t1,2\t1,2,3\t0\t-\n" + row + "\n");
    try {
      parse_samples(in, "t.tsv");
      ADD_FAILURE() << "accepted: " << row;
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
  }
}

TEST(SampleFormat, RoundTripOfRandomSamples) {
  numcore::Rng rng(17);
  std::vector<Sample> samples;
  for (int i = 0; i < 1000; ++i) samples.push_back(random_sample(rng, 1 + numcore::index_below(rng, 5), 20));
  const auto path = std::filesystem::temp_directory_path() / "exactk_roundtrip.tsv";
  write_samples(samples, path);
  EXPECT_EQ(read_samples(path), samples);
  std::filesystem::remove(path);
  EXPECT_THROW(read_samples(path), IoError);
}

TEST(DatasetSpec, Validation) {
  EXPECT_NO_THROW((DatasetSpec{4, 20, 0.8, 0}.validate()));
  try {
    DatasetSpec{20, 10, 0.8, 0}.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_STREQ(e.what(), "K must be < N");
  }
  EXPECT_THROW((DatasetSpec{4, 4, 0.8, 0}.validate()), ConfigError);
  EXPECT_THROW((DatasetSpec{4, 20, 1.0, 0}.validate()), ConfigError);
}

TEST(Split, TenSamples) {
  numcore::Rng rng(1);
  const auto r = split(numbered(10), 0.8, rng);
  EXPECT_EQ(r.train.size(), 8u);
  EXPECT_EQ(r.test.size(), 2u);
}

TEST(Split, LargeCountUsesFloor) {
  numcore::Rng rng(1);
  const auto r = split(numbered(40036), 0.8, rng);
  EXPECT_EQ(r.train.size(), 32028u);
  EXPECT_LE(std::abs(static_cast<long>(r.train.size()) - 32029L), 1L);
  EXPECT_EQ(r.train.size() + r.test.size(), 40036u);
}

TEST(Split, DeterministicAndDisjoint) {
  numcore::Rng a(9), b(9);
  const auto x = split(numbered(137), 0.7, a);
  const auto y = split(numbered(137), 0.7, b);
  EXPECT_EQ(x.train, y.train);
  EXPECT_EQ(x.test, y.test);
  std::set<UserId> seen;
  for (const auto& s : x.train) seen.insert(s.user);
  for (const auto& s : x.test) EXPECT_TRUE(seen.insert(s.user).second);
  EXPECT_EQ(seen.size(), 137u);
}

TEST(Split, Errors) {
  numcore::Rng rng(1);
  EXPECT_THROW(split({}, 0.8, rng), DataError);
  EXPECT_THROW(split(numbered(3), 0.0, rng), ConfigError);
}

TEST(ImplicitFeedback, SingleFiveStarItem) {
  std::vector<Rating> ratings;
  for (int i = 0; i < 25; ++i) ratings.push_back({7, 100 + i, i == 3 ? 5.0 : 3.0});
  numcore::Rng rng(2);
  const auto r = build_from_implicit_feedback(ratings, {4, 20, 0.8, 0}, rng);
  ASSERT_EQ(r.samples.size(), 2u);
  const auto clicked = labeled(r.samples, 1);
  ASSERT_EQ(clicked.size(), 1u);
  EXPECT_EQ(clicked[0].positive_item, std::optional<ItemId>(103));
  EXPECT_NE(std::find(clicked[0].card.begin(), clicked[0].card.end(), 103), clicked[0].card.end());
  const auto unclicked = labeled(r.samples, 0);
  ASSERT_EQ(unclicked.size(), 1u);
  EXPECT_EQ(std::find(unclicked[0].card.begin(), unclicked[0].card.end(), 103), unclicked[0].card.end());
}

TEST(ImplicitFeedback, FourStarIsNotPositive) {
  std::vector<Rating> ratings;
  for (int i = 0; i < 25; ++i) ratings.push_back({7, 100 + i, i == 3 ? 4.0 : 2.0});
  numcore::Rng rng(2);
  EXPECT_TRUE(build_from_implicit_feedback(ratings, {4, 20, 0.8, 0}, rng).samples.empty());
}

TEST(ImplicitFeedback, SkipsUsersWithTooFewItems) {
  std::vector<Rating> ratings;
  for (int i = 0; i < 10; ++i) ratings.push_back({1, i, 5.0});
  for (int i = 0; i < 25; ++i) ratings.push_back({2, i, i < 2 ? 5.0 : 1.0});
  numcore::Rng rng(3);
  const auto r = build_from_implicit_feedback(ratings, {4, 20, 0.8, 0}, rng);
  EXPECT_EQ(r.skipped_users, 1u);
  EXPECT_EQ(r.samples.size(), 4u);
  EXPECT_THROW(build_from_implicit_feedback({}, {4, 20, 0.8, 0}, rng), DataError);
}

TEST(ImplicitFeedback, SyntheticRatingsGiveValidSamples) {
  numcore::Rng rng(4);
  const auto ratings = synthesize_ratings(150, 300, 40, rng);
  const auto r = build_from_implicit_feedback(ratings, {4, 20, 0.8, 0}, rng);
  ASSERT_FALSE(r.samples.empty());
  for (const auto& s : r.samples) {
    EXPECT_EQ(sample_violation(s), "");
    EXPECT_EQ(s.k(), 4u);
    EXPECT_EQ(s.n(), 20u);
  }
  EXPECT_EQ(labeled(r.samples, 1).size(), labeled(r.samples, 0).size());
}

TEST(Oracle, IdenticalVectorsBreakTiesByLowestId) {
  numcore::Rng rng(5);
  OracleWorld world = make_oracle_world({3, 12, 4, 2, 0.0, 0.0, 0.15, false}, rng);
  for (std::size_t i = 0; i < world.item_count; ++i) {
    for (std::size_t d = 0; d < world.dim; ++d) world.item_vectors[i * world.dim + d] = 0.5;
  }
  const auto samples = generate_oracle_dataset(world, {3, 8, 0.8, 0}, 3, rng);
  for (const auto& s : labeled(samples, 1)) {
    EXPECT_EQ(*s.positive_item, *std::min_element(s.card.begin(), s.card.end()));
  }
  std::vector<ItemId> a{0, 1, 2}, b{5, 7, 9};
  EXPECT_DOUBLE_EQ(world.utility(0, a), world.utility(0, b));
}

TEST(Oracle, ClickedCardDominatesAndOptimumIsEnumerable) {
  numcore::Rng rng(6);
  const OracleWorld world = make_oracle_world({1, 40, 6, 3, 0.7, 0.0, 0.15, false}, rng);
  const auto samples = generate_oracle_dataset(world, {2, 6, 0.8, 0}, 1, rng);
  ASSERT_EQ(samples.size(), 2u);
  const Sample clicked = labeled(samples, 1).at(0);
  const Sample other = labeled(samples, 0).at(0);
  EXPECT_GE(world.utility(0, clicked.card), world.utility(0, other.card));

  double best = -1e300;
  std::size_t count = 0;
  std::vector<ItemId> best_card;
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = i + 1; j < 6; ++j) {
      const std::vector<ItemId> card{clicked.candidates[i], clicked.candidates[j]};
      const auto& zu = world.user(0);
      double u = 0.0;
      for (auto item : card) {
        for (std::size_t d = 0; d < world.dim; ++d) u += zu[d] * world.item(item)[d];
      }
      for (std::size_t d = 0; d < world.dim; ++d) u += world.beta * world.item(card[0])[d] * world.item(card[1])[d];
      EXPECT_NEAR(u, world.utility(0, card), 1e-12);
      ++count;
      if (u > best) best = u, best_card = card;
    }
  }
  EXPECT_EQ(count, 15u);
  const auto g = graph::ConstraintGraph::complete(6);
  const auto nodes = graph::brute_force_best_card(
      g,
      [&](std::span<const graph::Node> c) {
        std::vector<ItemId> items;
        for (auto n : c) items.push_back(clicked.candidates[n]);
        return world.utility(0, items);
      },
      2);
  EXPECT_NEAR(world.utility(0, std::vector<ItemId>{clicked.candidates[nodes[0]], clicked.candidates[nodes[1]]}), best,
              1e-12);
  EXPECT_GE(best, world.utility(0, clicked.card));
}

TEST(Oracle, CountsAndInvariants) {
  numcore::Rng rng(7);
  const OracleWorld world = make_oracle_world({100, 60, 8, 4, 1.0, 0.0, 0.15, true}, rng);
  const auto samples = generate_oracle_dataset(world, {3, 10, 0.8, 0}, 100, rng);
  EXPECT_EQ(samples.size(), 200u);
  for (const auto& s : samples) {
    EXPECT_EQ(sample_violation(s), "");
    EXPECT_EQ(s.k(), 3u);
    EXPECT_EQ(s.n(), 10u);
  }
  EXPECT_EQ(labeled(samples, 1).size(), 100u);
}

TEST(Oracle, RespectsPairFeasibility) {
  numcore::Rng rng(8);
  const OracleWorld world = make_oracle_world({30, 40, 4, 2, 1.0, 0.0, 0.15, false}, rng);
  const PairFeasibility parity = [](ItemId a, ItemId b) { return (a + b) % 2 == 0; };
  for (const auto& s : generate_oracle_dataset(world, {2, 10, 0.8, 0}, 30, rng, parity)) {
    EXPECT_TRUE(parity(s.card[0], s.card[1]));
  }
}

// Adding c to every user-item affinity adds K*c to every card, so the argmax
// card cannot move.
TEST(Oracle, ArgmaxInvariantUnderCommonAffinityShift) {
  numcore::Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const OracleWorld world = make_oracle_world({1, 30, 5, 3, 0.5 * trial, 0.0, 0.15, false}, rng);
    const auto sample = generate_oracle_dataset(world, {3, 9, 0.8, 0}, 1, rng).front();
    const auto g = graph::ConstraintGraph::complete(9);
    const double c = 0.1 + trial;
    auto score = [&](double shift) {
      return [&, shift](std::span<const graph::Node> nodes) {
        std::vector<ItemId> items;
        double u = 0.0;
        for (auto n : nodes) items.push_back(sample.candidates[n]), u += shift;
        return world.utility(0, items) + u;
      };
    };
    EXPECT_EQ(graph::brute_force_best_card(g, score(0.0), 3), graph::brute_force_best_card(g, score(c), 3));
  }
}

TEST(Oracle, WorldArchiveRoundTrip) {
  numcore::Rng rng(10);
  const OracleWorld world = make_oracle_world({5, 7, 3, 2, 0.3, 0.2, 0.15, true}, rng);
  const OracleWorld back = world_from_archive(world_to_archive(world));
  EXPECT_EQ(back.user_vectors, world.user_vectors);
  EXPECT_EQ(back.item_vectors, world.item_vectors);
  EXPECT_EQ(back.item_titles, world.item_titles);
  EXPECT_EQ(back.beta, world.beta);
  EXPECT_EQ(back.temperature, world.temperature);
}

TEST(Oracle, GenerationIsDeterministic) {
  auto run = [] {
    numcore::Rng rng(11);
    const OracleWorld world = make_oracle_world({20, 30, 4, 2, 1.0, 0.5, 0.15, false}, rng);
    return generate_oracle_dataset(world, {3, 10, 0.8, 0}, 20, rng);
  };
  EXPECT_EQ(run(), run());
}

TEST(Features, DenseAndEmbeddingShapes) {
  numcore::Rng rng(12);
  auto world = std::make_shared<OracleWorld>(make_oracle_world({4, 9, 5, 2, 1.0, 0.0, 0.15, false}, rng));
  numcore::ParameterStore params;
  FeatureEncoder dense(dense_spec_for(*world), params, "f.", rng);
  EXPECT_FALSE(dense.ready());
  dense.attach(world);
  const std::vector<ItemId> items{1, 4, 8};
  EXPECT_EQ(dense.items(items).shape(), (numcore::Shape{3, 5}));
  EXPECT_EQ(dense.user(2).shape(), (numcore::Shape{1, 5}));
  EXPECT_EQ(dense.items(items).at(1, 2), world->item(4)[2]);

  FeatureEncoder ids(FeatureSpec{FeatureMode::id_embedding, 6, 6, 10, 5}, params, "g.", rng);
  EXPECT_TRUE(ids.ready());
  EXPECT_EQ(ids.items(items).shape(), (numcore::Shape{3, 6}));
  EXPECT_THROW(ids.user(5), DataError);
  EXPECT_THROW(parse_feature_mode("sparse"), ConfigError);
}
