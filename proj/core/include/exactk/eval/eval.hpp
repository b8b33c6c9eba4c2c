#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "exactk/dataio/oracle.hpp"
#include "exactk/gattn/model.hpp"
#include "exactk/graph/graph.hpp"
#include "exactk/reward/reward.hpp"

namespace exactk::eval {

using ItemCard = std::vector<dataio::ItemId>;

// Published MovieLens (K=4, N=20) figures of the strongest configuration,
// kept for orientation only.
inline constexpr double kReferencePrecisionAt4 = 0.4743;
inline constexpr double kReferenceHitRatioAt4 = 0.2611;

// mean_i |A_i ∩ A*_i| / K over item ids.
double hr_at_k(std::span<const ItemCard> predicted, std::span<const ItemCard> truth, std::size_t k);

struct PrecisionResult {
  double value = 0.0;
  std::size_t counted = 0;
  std::size_t excluded = 0;  // samples without a positive item
};

// Fraction of cards that contain the clicked item.
PrecisionResult p_at_k(std::span<const ItemCard> predicted, std::span<const std::optional<dataio::ItemId>> positives);

// Pointwise click model sigma(w^T (x_item ⊙ x_user) + b) that supplies node
// weights to the greedy baseline.
class PointwiseScorer {
 public:
  PointwiseScorer(dataio::FeatureSpec spec, numcore::Rng& rng);

  const dataio::FeatureSpec& spec() const { return spec_; }
  numcore::ParameterStore& parameters() { return params_; }
  dataio::FeatureEncoder& features() { return features_; }
  const dataio::FeatureEncoder& features() const { return features_; }

  // Per-candidate logits, [n, 1].
  numcore::Tensor logits(dataio::UserId user, std::span<const dataio::ItemId> items) const;
  std::vector<double> scores(dataio::UserId user, std::span<const dataio::ItemId> items) const;

 private:
  dataio::FeatureSpec spec_;
  numcore::ParameterStore params_;
  dataio::FeatureEncoder features_;
  numcore::Tensor w_, b_;
};

struct PointwiseTrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
};

// Every candidate of a clicked sample is one example; the clicked item is the
// positive. Returns mean loss before training and after each epoch.
std::vector<double> train_pointwise(PointwiseScorer& scorer, std::span<const dataio::Sample> samples,
                                    const PointwiseTrainConfig& config);

enum class Method { policy_beam, greedy_baseline, brute_force_oracle };

const char* method_name(Method method);
Method parse_method(const std::string& name);
inline constexpr const char* kMethodNames = "policy_beam, greedy_baseline, brute_force_oracle";

struct EvalReport {
  std::string method;
  std::size_t n = 0;
  double p_at_k = 0.0;
  double hr_at_k = 0.0;
  std::optional<double> mean_reward;
  std::optional<double> oracle_ratio;
  std::size_t infeasible_count = 0;
  std::size_t p_excluded = 0;
};

struct EvalContext {
  const gattn::PolicyModel* policy = nullptr;
  const reward::RewardModel* reward = nullptr;
  const PointwiseScorer* scorer = nullptr;
  const dataio::OracleWorld* world = nullptr;
  graph::GraphBuilder builder;
  // 0 keeps the policy's configured width.
  std::size_t beam_size = 0;
};

struct Decision {
  const dataio::Sample* sample = nullptr;
  std::optional<ItemCard> card;  // empty when decoding hit a dead end
};

// Decodes one card per clicked sample with the requested method.
std::vector<Decision> decide(Method method, std::span<const dataio::Sample> samples, const EvalContext& ctx);

// Clicked samples only; dead ends are counted and left out of every mean.
EvalReport evaluate(Method method, std::span<const dataio::Sample> samples, const EvalContext& ctx);

inline constexpr const char* kReportHeader = "method,n,p_at_k,hr_at_k,mean_reward,oracle_ratio,infeasible_count";

void write_report_csv(std::span<const EvalReport> reports, std::ostream& out);
void write_report_table(std::span<const EvalReport> reports, std::ostream& out);

}  // namespace exactk::eval
