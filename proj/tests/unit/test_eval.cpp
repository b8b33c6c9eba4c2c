#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "exactk/errors.hpp"
#include "exactk/eval/eval.hpp"

using namespace exactk;
using namespace exactk::eval;
namespace nc = exactk::numcore;

TEST(HitRatio, Examples) {
  const std::vector<ItemCard> a{{1, 2, 3, 4}, {5, 6, 7, 8}};
  EXPECT_EQ(hr_at_k(a, a, 4), 1.0);
  const std::vector<ItemCard> disjoint{{9, 10, 11, 12}, {13, 14, 15, 16}};
  EXPECT_EQ(hr_at_k(a, disjoint, 4), 0.0);
  const std::vector<ItemCard> one{{1, 2, 3, 4}}, half{{3, 1, 20, 21}};
  EXPECT_EQ(hr_at_k(one, half, 4), 0.5);
}

TEST(HitRatio, PermutationInvariantAndValidated) {
  nc::Rng rng(1);
  std::vector<ItemCard> pred, truth;
  for (int i = 0; i < 50; ++i) {
    std::vector<dataio::ItemId> pool(12);
    std::iota(pool.begin(), pool.end(), 0);
    pred.push_back(nc::sample_without_replacement(pool, 4, rng));
    truth.push_back(nc::sample_without_replacement(pool, 4, rng));
  }
  const double base = hr_at_k(pred, truth, 4);
  EXPECT_GE(base, 0.0);
  EXPECT_LE(base, 1.0);
  for (auto& c : pred) nc::shuffle(c, rng);
  for (auto& c : truth) nc::shuffle(c, rng);
  EXPECT_EQ(hr_at_k(pred, truth, 4), base);
  EXPECT_THROW(hr_at_k(pred, std::vector<ItemCard>(truth.begin(), truth.end() - 1), 4), ContractViolation);
  const std::vector<ItemCard> short_card{{1, 2}};
  EXPECT_THROW(hr_at_k(short_card, short_card, 4), ContractViolation);
}

TEST(Precision, Examples) {
  const std::vector<ItemCard> cards{{1, 2}, {3, 4}, {5, 6}, {7, 8}};
  using P = std::optional<dataio::ItemId>;
  EXPECT_EQ(p_at_k(cards, std::vector<P>{1, 4, 5, 8}).value, 1.0);
  EXPECT_EQ(p_at_k(cards, std::vector<P>{9, 9, 9, 9}).value, 0.0);
  EXPECT_EQ(p_at_k(cards, std::vector<P>{2, 3, 6, 1}).value, 0.75);
  const auto r = p_at_k(cards, std::vector<P>{1, std::nullopt, 9, std::nullopt});
  EXPECT_EQ(r.value, 0.5);
  EXPECT_EQ(r.counted, 2u);
  EXPECT_EQ(r.excluded, 2u);
}

TEST(Methods, NamesAndErrors) {
  EXPECT_EQ(parse_method("policy_beam"), Method::policy_beam);
  EXPECT_EQ(parse_method("greedy_baseline"), Method::greedy_baseline);
  EXPECT_EQ(parse_method("brute_force_oracle"), Method::brute_force_oracle);
  try {
    parse_method("random");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(kMethodNames), std::string::npos);
  }
  EXPECT_EQ(kReferencePrecisionAt4, 0.4743);
  EXPECT_EQ(kReferenceHitRatioAt4, 0.2611);
}

TEST(GreedyBaseline, MatchesBruteForceWhenObjectiveIsAdditive) {
  nc::Rng rng(2);
  auto world = dataio::make_oracle_world({30, 50, 6, 3, 0.0, 0.0, 0.15, false}, rng);
  const auto samples = dataio::generate_oracle_dataset(world, {3, 10, 0.8, 0}, 30, rng);
  for (const auto& s : samples) {
    std::vector<double> w;
    for (auto item : s.candidates) w.push_back(world.affinity(s.user, item));
    const auto g = graph::ConstraintGraph::complete(s.n());
    auto greedy = graph::greedy_node_weight(g, w, 3);
    std::sort(greedy.begin(), greedy.end());
    const auto best = graph::brute_force_best_card(
        g,
        [&](std::span<const graph::Node> c) {
          std::vector<dataio::ItemId> items;
          for (auto n : c) items.push_back(s.candidates[n]);
          return world.utility(s.user, items);
        },
        3);
    EXPECT_EQ(greedy, best);
  }
}

class OracleEval : public ::testing::Test {
 protected:
  void SetUp() override {
    nc::Rng rng(3);
    world = std::make_shared<dataio::OracleWorld>(dataio::make_oracle_world({120, 60, 6, 3, 1.0, 0.0, 0.15, false}, rng));
    samples = dataio::generate_oracle_dataset(*world, {3, 8, 0.8, 0}, 120, rng);
    const auto spec = dataio::dense_spec_for(*world);
    scorer.emplace(spec, rng);
    scorer->features().attach(world);
    curve = train_pointwise(*scorer, samples, {5, 32, 1e-2, 1});
    gattn::ModelConfig mc;
    mc.k = 3;
    mc.n = 8;
    mc.d_x = mc.d_h = mc.rnn_units = 8;
    mc.d_k = 4;
    mc.features = spec;
    policy.emplace(mc, rng);
    policy->features().attach(world);
    reward::RewardConfig rc;
    rc.k = 3;
    rc.hidden = 8;
    rc.features = spec;
    reward_model.emplace(rc, rng);
    reward_model->features().attach(world);
    ctx.policy = &*policy;
    ctx.reward = &*reward_model;
    ctx.scorer = &*scorer;
    ctx.world = world.get();
  }

  std::shared_ptr<dataio::OracleWorld> world;
  std::vector<dataio::Sample> samples;
  std::optional<PointwiseScorer> scorer;
  std::optional<gattn::PolicyModel> policy;
  std::optional<reward::RewardModel> reward_model;
  std::vector<double> curve;
  EvalContext ctx;
};

TEST_F(OracleEval, PointwiseTrainingReducesLoss) {
  ASSERT_EQ(curve.size(), 6u);
  EXPECT_LT(curve.back(), curve.front());
  const std::vector<dataio::ItemId> items{1, 2, 3};
  for (double s : scorer->scores(0, items)) {
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
}

TEST_F(OracleEval, ReportsRespectBoundsAndOracleDominates) {
  const auto oracle = evaluate(Method::brute_force_oracle, samples, ctx);
  EXPECT_EQ(oracle.n, 120u);
  ASSERT_TRUE(oracle.oracle_ratio.has_value());
  EXPECT_NEAR(*oracle.oracle_ratio, 1.0, 1e-12);
  for (auto m : {Method::policy_beam, Method::greedy_baseline}) {
    const auto r = evaluate(m, samples, ctx);
    EXPECT_EQ(r.method, method_name(m));
    EXPECT_EQ(r.n + r.infeasible_count, 120u);
    EXPECT_GE(r.p_at_k, 0.0);
    EXPECT_LE(r.p_at_k, 1.0);
    EXPECT_GE(r.hr_at_k, 0.0);
    EXPECT_LE(r.hr_at_k, 1.0);
    ASSERT_TRUE(r.oracle_ratio.has_value());
    EXPECT_LE(*r.oracle_ratio, 1.0 + 1e-9);
    EXPECT_GE(*oracle.oracle_ratio, *r.oracle_ratio);
    ASSERT_TRUE(r.mean_reward.has_value());
    EXPECT_GT(*r.mean_reward, -1.0);
    EXPECT_LT(*r.mean_reward, 1.0);
  }
}

TEST_F(OracleEval, OnlyClickedSamplesAreScored) {
  const auto decisions = decide(Method::greedy_baseline, samples, ctx);
  EXPECT_EQ(decisions.size(), dataio::labeled(samples, 1).size());
  for (const auto& d : decisions) EXPECT_EQ(d.sample->label, 1);
}

TEST_F(OracleEval, MissingModelsAreConfigErrors) {
  EvalContext bare;
  EXPECT_THROW(evaluate(Method::policy_beam, samples, bare), ConfigError);
  EXPECT_THROW(evaluate(Method::greedy_baseline, samples, bare), ConfigError);
  EXPECT_THROW(evaluate(Method::brute_force_oracle, samples, bare), ConfigError);
  bare.scorer = &*scorer;
  const auto r = evaluate(Method::greedy_baseline, samples, bare);
  EXPECT_FALSE(r.oracle_ratio.has_value());
  EXPECT_FALSE(r.mean_reward.has_value());
}

TEST_F(OracleEval, DeadEndsAreCountedAndExcluded) {
  EvalContext constrained = ctx;
  constrained.builder = graph::GraphBuilder(graph::Constraint::min_ned(1.0), [&] {
    std::unordered_map<dataio::ItemId, std::string> titles;
    for (std::size_t i = 0; i < world->item_count; ++i) titles[static_cast<dataio::ItemId>(i)] = "same";
    return titles;
  }());
  const auto r = evaluate(Method::greedy_baseline, samples, constrained);
  EXPECT_EQ(r.n, 0u);
  EXPECT_EQ(r.infeasible_count, 120u);
  EXPECT_EQ(r.p_at_k, 0.0);
}

TEST(Reports, CsvAndTable) {
  EvalReport a{"policy_beam", 10, 0.5, 0.25, 0.125, std::nullopt, 2, 0};
  std::ostringstream csv, table;
  const std::vector<EvalReport> reports{a};
  write_report_csv(reports, csv);
  EXPECT_EQ(csv.str(), std::string(kReportHeader) + "\npolicy_beam,10,0.5,0.25,0.125,,2\n");
  write_report_table(reports, table);
  EXPECT_NE(table.str().find("policy_beam"), std::string::npos);
  EXPECT_NE(table.str().find("0.5000"), std::string::npos);
}
