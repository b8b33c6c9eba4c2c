#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "exactk/gattn/model.hpp"
#include "exactk/numcore/adam.hpp"
#include "exactk/reward/reward.hpp"

namespace exactk::training {

using numcore::Tensor;

// How the decoder state advances while the supervised targets are scored.
// `demonstration` replays the ground-truth card and equals teacher forcing.
enum class SlFeed { sampled, greedy, demonstration };

const char* sl_feed_name(SlFeed feed);
SlFeed parse_sl_feed(const std::string& name);

struct TrainConfig {
  double alpha = 0.5;
  std::size_t m = 5;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  bool policy_sampling = true;
  bool hill_climbing = true;
  SlFeed sl_feed = SlFeed::sampled;
  std::size_t reward_epochs = 10;
  double eval_fraction = 0.1;
  // Held-out P@K / HR@K are refreshed every `eval_interval` iterations.
  std::size_t eval_interval = 10;

  void validate() const;
  bool apply(const std::string& key, const std::string& value);
  std::vector<std::pair<std::string, std::string>> entries() const;
};

enum class SlMode { teacher_forced, policy_sampled };

struct SlOptions {
  SlMode mode = SlMode::teacher_forced;
  SlFeed feed = SlFeed::sampled;
};

// Mean over the K steps of -log p(a*_t). Under policy sampling the decoder
// state advances on the policy's own choices while every target is still
// scored against the demonstration's feasibility mask. Throws DataError when
// the demonstration is not a clique of `graph`.
Tensor sl_loss(const gattn::PolicyModel& policy, const gattn::Encoding& enc, const dataio::Sample& sample,
               const graph::ConstraintGraph& graph, const SlOptions& options, numcore::Rng& rng);
Tensor sl_loss(const gattn::PolicyModel& policy, const dataio::Sample& sample, const graph::ConstraintGraph& graph,
               const SlOptions& options, numcore::Rng& rng);

// Index of the largest reward; the earliest wins ties.
std::size_t select_best(std::span<const double> rewards);

struct RlResult {
  Tensor loss;
  double reward = 0.0;                  // R of the card the loss is built on
  graph::Card card;
  std::vector<double> buffer_rewards;   // every feasible draw, hill-climbing included
  std::size_t failed_draws = 0;
};

// Card reward R(A, u) for a node sequence of `sample`.
using RewardFn = std::function<double(const dataio::Sample&, std::span<const graph::Node>)>;

RewardFn reward_fn(const reward::RewardModel& model);

// -R(A, u) * log p(A) for one drawn card, or for the best of `m` draws when
// hill climbing. R is a constant of the policy parameters.
RlResult rl_loss(const gattn::PolicyModel& policy, const gattn::Encoding& enc, const dataio::Sample& sample,
                 const graph::ConstraintGraph& graph, const RewardFn& reward, bool hill_climbing, std::size_t m,
                 numcore::Rng& rng);

struct LossBreakdown {
  double loss_sl = 0.0;
  double loss_rl = 0.0;
  double loss_total = 0.0;
  std::optional<double> mean_reward;
  std::size_t rl_draws = 0;     // samples that needed a reinforcement card
  std::size_t rl_failures = 0;  // of those, samples where every draw dead-ended
  // Per sample with a reinforcement term: selected reward and the rest of the
  // buffer.
  std::vector<std::pair<double, std::vector<double>>> hill_climb;
};

// Builds the combined loss L = alpha L_S + (1 - alpha) L_R on the active tape
// without touching parameters. The per-sample random streams depend only on
// `step_seed` and the sample position, so the supervised and reinforcement
// terms draw identically for every alpha.
std::pair<Tensor, LossBreakdown> batch_loss(const gattn::PolicyModel& policy, std::span<const dataio::Sample> batch,
                                            const graph::GraphBuilder& builder, const RewardFn* reward,
                                            const TrainConfig& config, std::uint64_t step_seed);

// One Adam update on the combined loss.
LossBreakdown combined_step(gattn::PolicyModel& policy, numcore::Adam& optimizer, std::span<const dataio::Sample> batch,
                            const graph::GraphBuilder& builder, const RewardFn* reward, const TrainConfig& config,
                            std::uint64_t step_seed);

struct CurveRow {
  std::size_t iter = 0;
  double loss_sl = 0.0;
  double loss_rl = 0.0;
  double loss_total = 0.0;
  std::optional<double> mean_reward;
  std::optional<double> p_at_k;
  std::optional<double> hr_at_k;
};

inline constexpr const char* kCurveHeader = "iter,loss_sl,loss_rl,loss_total,mean_reward,p_at_k,hr_at_k";
void write_curve_row(const CurveRow& row, std::ostream& out);

struct TrainInputs {
  std::vector<dataio::Sample> train;
  graph::GraphBuilder builder;
  std::shared_ptr<const dataio::OracleWorld> world;  // dense features only
};

struct TrainOutputs {
  std::optional<gattn::PolicyModel> policy;
  std::optional<reward::RewardModel> reward;
  std::vector<double> reward_loss;
  std::vector<CurveRow> curve;
  // Selected reward and buffer rewards per hill-climbing step.
  std::vector<std::pair<double, std::vector<double>>> hill_climb;
  std::size_t rl_draws = 0;
  std::size_t rl_failures = 0;
  double infeasible_rate() const {
    return rl_draws == 0 ? 0.0 : static_cast<double>(rl_failures) / static_cast<double>(rl_draws);
  }
};

struct TrainPaths {
  std::optional<std::filesystem::path> out_dir;  // reward.bin, policy.bin, curve.csv, reward_loss.csv
  bool keep_hill_climb = false;
};

// Phase 1 fits the reward estimator on every labeled card (skipped when
// alpha = 1); Phase 2 trains the policy on the clicked cards with the
// estimator frozen. A slice of `eval_fraction` of the training samples is held
// out of both phases for the curve metrics.
TrainOutputs run_training(const TrainInputs& inputs, const gattn::ModelConfig& model_config,
                          const reward::RewardConfig& reward_config, const TrainConfig& config,
                          const TrainPaths& paths = {});

}  // namespace exactk::training
