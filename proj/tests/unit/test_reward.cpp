#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <sstream>

#include "exactk/errors.hpp"
#include "exactk/numcore/ops.hpp"
#include "exactk/reward/reward.hpp"
#include "gradcheck.hpp"

using namespace exactk;
using namespace exactk::reward;
namespace nc = exactk::numcore;

namespace {

RewardConfig id_config(std::size_t k, std::size_t hidden = 16) {
  RewardConfig c;
  c.k = k;
  c.hidden = hidden;
  c.features = {dataio::FeatureMode::id_embedding, 4, 4, 30, 10};
  return c;
}

Tensor random_const(nc::Rng& rng, nc::Shape shape) {
  std::vector<double> v(nc::shape_size(shape));
  for (auto& x : v) x = nc::uniform(rng, -1.0, 1.0);
  return Tensor(std::move(shape), v);
}

// Users whose first latent coordinate is positive click; the rest do not.
struct SignWorld {
  std::shared_ptr<dataio::OracleWorld> world = std::make_shared<dataio::OracleWorld>();
  std::vector<dataio::Sample> samples;
};

SignWorld sign_world(nc::Rng& rng, std::size_t users, std::size_t k) {
  SignWorld out;
  auto& w = *out.world;
  w.dim = 4;
  w.user_count = users;
  w.item_count = 20;
  for (std::size_t i = 0; i < users * w.dim; ++i) w.user_vectors.push_back(nc::uniform(rng, -1.0, 1.0));
  for (std::size_t i = 0; i < w.item_count * w.dim; ++i) w.item_vectors.push_back(nc::uniform(rng, 0.0, 1.0));
  std::vector<dataio::ItemId> pool(w.item_count);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<dataio::ItemId>(i);
  for (std::size_t u = 0; u < users; ++u) {
    dataio::Sample s;
    s.user = static_cast<dataio::UserId>(u);
    s.candidates = nc::sample_without_replacement(pool, k + 2, rng);
    s.card.assign(s.candidates.begin(), s.candidates.begin() + static_cast<std::ptrdiff_t>(k));
    s.label = w.user(s.user)[0] > 0.0 ? 1 : 0;
    if (s.label == 1) s.positive_item = s.card.front();
    out.samples.push_back(s);
  }
  return out;
}

}  // namespace

TEST(RewardConfigDefaults, HiddenWidthAndTying) {
  const RewardConfig c;
  EXPECT_EQ(c.hidden, 128u);
  EXPECT_TRUE(c.tied);
  EXPECT_EQ(c.cross, CrossMode::elementwise);
  EXPECT_EQ(RewardTrainConfig{}.batch_size, 32u);
  EXPECT_EQ(RewardTrainConfig{}.learning_rate, 1e-3);
  RewardConfig mismatched = c;
  mismatched.features.user_dim = 5;
  EXPECT_THROW(mismatched.validate(), ConfigError);
  EXPECT_THROW(parse_cross_mode("outer"), ConfigError);
}

TEST(ScoreCard, ZeroParametersGiveOneHalf) {
  nc::Rng rng(1);
  for (bool tied : {true, false}) {
    RewardConfig c = id_config(3);
    c.tied = tied;
    RewardModel m(c, rng);
    m.parameters().fill(0.0);
    const std::vector<dataio::ItemId> card{1, 5, 9};
    EXPECT_EQ(m.score_card(2, card), 0.5);
    EXPECT_EQ(m.reward(2, card), 0.0);
  }
}

TEST(ScoreCard, TiedWeightsArePermutationInvariant) {
  nc::Rng rng(2);
  for (auto cross : {CrossMode::elementwise, CrossMode::inner_product}) {
    RewardConfig c = id_config(4);
    c.cross = cross;
    const RewardModel m(c, rng);
    std::vector<dataio::ItemId> card{3, 8, 1, 20};
    const double base = m.score_card(4, card);
    for (int i = 0; i < 10; ++i) {
      nc::shuffle(card, rng);
      EXPECT_EQ(m.score_card(4, card), base);
    }
  }
}

TEST(ScoreCard, UntiedWeightsSeeSlotOrder) {
  nc::Rng rng(3);
  RewardConfig c = id_config(2);
  c.tied = false;
  const RewardModel m(c, rng);
  const std::vector<dataio::ItemId> ab{1, 2}, ba{2, 1};
  EXPECT_NE(m.score_card(0, ab), m.score_card(0, ba));
}

TEST(ScoreCard, OutputInUnitIntervalAndWrongKRejected) {
  nc::Rng rng(4);
  const RewardModel m(id_config(3), rng);
  for (int i = 0; i < 200; ++i) {
    const Tensor items = random_const(rng, {3, 4});
    const Tensor user = random_const(rng, {1, 4});
    const double s = 1.0 / (1.0 + std::exp(-m.logit(items, user).item()));
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
  const std::vector<dataio::ItemId> two{1, 2};
  EXPECT_THROW(m.score_card(0, two), ContractViolation);
  EXPECT_THROW(m.logit(random_const(rng, {4, 4}), random_const(rng, {1, 4})), ContractViolation);
}

TEST(ScoreCard, GradientMatchesFiniteDifferences) {
  nc::Rng rng(5);
  for (auto cross : {CrossMode::elementwise, CrossMode::inner_product}) {
    for (bool tied : {true, false}) {
      RewardConfig c = id_config(2, 6);
      c.cross = cross;
      c.tied = tied;
      const RewardModel m(c, rng);
      const std::vector<dataio::ItemId> card{4, 7};
      const auto r = exactk::testing::gradient_check(m.parameters().tensors(), [&] {
        return nc::binary_cross_entropy_with_logits(m.logit(1, card), 1.0);
      });
      EXPECT_LT(r.max_error, 1e-4) << cross_mode_name(cross) << " tied=" << tied << " worst "
                                   << m.parameters().names()[r.worst];
    }
  }
}

TEST(RewardValue, AffineRescale) {
  EXPECT_EQ(reward_value(0.5), 0.0);
  EXPECT_EQ(reward_value(1.0), 1.0);
  EXPECT_EQ(reward_value(0.0), -1.0);
  EXPECT_EQ(reward_value(0.75), 0.5);
  double prev = -2.0;
  for (int i = 1; i < 100; ++i) {
    const double r = reward_value(i / 100.0);
    EXPECT_GT(r, prev);
    EXPECT_GT(r, -1.0);
    EXPECT_LT(r, 1.0);
    prev = r;
  }
}

TEST(TrainReward, InitialLossIsLn2AtZeroParameters) {
  nc::Rng rng(6);
  auto data = sign_world(rng, 50, 2);
  RewardConfig c;
  c.k = 2;
  c.hidden = 8;
  c.features = dataio::dense_spec_for(*data.world);
  RewardModel m(c, rng);
  m.features().attach(data.world);
  m.parameters().fill(0.0);
  EXPECT_NEAR(mean_loss(m, data.samples), std::log(2.0), 1e-12);
  const auto r = train_reward(m, data.samples, {1, 32, 1e-3, 0});
  EXPECT_NEAR(r.loss.front(), std::log(2.0), 1e-12);
  EXPECT_EQ(r.loss.size(), 2u);
}

TEST(TrainReward, SeparableSetReachesHighAccuracy) {
  nc::Rng rng(7);
  auto data = sign_world(rng, 300, 3);
  RewardConfig c;
  c.k = 3;
  c.hidden = 32;
  c.features = dataio::dense_spec_for(*data.world);
  RewardModel m(c, rng);
  m.features().attach(data.world);
  std::size_t last_epoch = 0;
  const auto r = train_reward(m, data.samples, {200, 32, 1e-3, 1},
                              [&](std::size_t epoch, double) { last_epoch = epoch; });
  EXPECT_EQ(last_epoch, 200u);
  EXPECT_EQ(r.loss.size(), 201u);
  EXPECT_LT(r.loss.back(), r.loss.front());
  EXPECT_GT(accuracy(m, data.samples), 0.95);
  EXPECT_FALSE(r.single_class);
}

TEST(TrainReward, SingleClassWarnsAndProceeds) {
  nc::Rng rng(8);
  auto data = sign_world(rng, 40, 2);
  for (auto& s : data.samples) {
    s.label = 1;
    s.positive_item = s.card.front();
  }
  RewardConfig c;
  c.k = 2;
  c.hidden = 8;
  c.features = dataio::dense_spec_for(*data.world);
  RewardModel m(c, rng);
  m.features().attach(data.world);
  ::testing::internal::CaptureStderr();
  const auto r = train_reward(m, data.samples, {3, 32, 1e-3, 0});
  const std::string err = ::testing::internal::GetCapturedStderr();
  EXPECT_TRUE(r.single_class);
  EXPECT_NE(err.find("warning"), std::string::npos);
  EXPECT_LT(r.loss.back(), r.loss.front());
}

TEST(TrainReward, DeterministicGivenSeed) {
  auto run = [] {
    nc::Rng rng(9);
    auto data = sign_world(rng, 60, 2);
    RewardConfig c;
    c.k = 2;
    c.hidden = 8;
    c.features = dataio::dense_spec_for(*data.world);
    RewardModel m(c, rng);
    m.features().attach(data.world);
    return train_reward(m, data.samples, {4, 16, 1e-3, 5}).loss;
  };
  EXPECT_EQ(run(), run());
}

TEST(Checkpoint, RoundTripAndLossCurve) {
  nc::Rng rng(10);
  const RewardModel m(id_config(3), rng);
  const RewardModel back = RewardModel::from_archive(m.to_archive());
  const std::vector<dataio::ItemId> card{2, 4, 6};
  EXPECT_EQ(back.score_card(1, card), m.score_card(1, card));
  EXPECT_EQ(back.config().entries(), m.config().entries());
  std::ostringstream out;
  write_loss_curve({0.7, 0.5}, out);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "epoch,loss");
  std::size_t lines = 0;
  for (char ch : out.str()) lines += ch == '\n';
  EXPECT_EQ(lines, 3u);
}
