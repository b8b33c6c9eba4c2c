#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "exactk/dataio/features.hpp"
#include "exactk/numcore/archive.hpp"
#include "exactk/numcore/parameters.hpp"

namespace exactk::reward {

using numcore::Tensor;

enum class CrossMode { elementwise, inner_product };

const char* cross_mode_name(CrossMode mode);
CrossMode parse_cross_mode(const std::string& name);

struct RewardConfig {
  std::size_t k = 4;
  std::size_t hidden = 128;
  CrossMode cross = CrossMode::elementwise;
  // Shared weights across item slots make the score a function of the set.
  bool tied = true;
  dataio::FeatureSpec features{dataio::FeatureMode::id_embedding, 16, 16, 0, 0};

  void validate() const;
  std::size_t input_width() const;
  bool apply(const std::string& key, const std::string& value);
  std::vector<std::pair<std::string, std::string>> entries() const;
};

// Card-level click probability
//   sigma(W2 ReLU(W1 [crosses; items; user] + b1) + b2)
// where each cross pairs one card item with the user.
class RewardModel {
 public:
  RewardModel(RewardConfig config, numcore::Rng& rng);

  const RewardConfig& config() const { return config_; }
  numcore::ParameterStore& parameters() { return params_; }
  const numcore::ParameterStore& parameters() const { return params_; }
  dataio::FeatureEncoder& features() { return features_; }
  const dataio::FeatureEncoder& features() const { return features_; }

  // Pre-sigmoid output, [1, 1]. `items` is [K, item_dim], `user` [1, user_dim].
  Tensor logit(const Tensor& items, const Tensor& user) const;
  Tensor logit(dataio::UserId user, std::span<const dataio::ItemId> card) const;

  double score_card(dataio::UserId user, std::span<const dataio::ItemId> card) const;
  double reward(dataio::UserId user, std::span<const dataio::ItemId> card) const;

  numcore::Archive to_archive() const;
  static RewardModel from_archive(const numcore::Archive& archive);

 private:
  RewardConfig config_;
  numcore::ParameterStore params_;
  dataio::FeatureEncoder features_;
  Tensor w1_, b1_, w2_, b2_;
};

// R = 2 (score - 0.5).
constexpr double reward_value(double score) { return 2.0 * (score - 0.5); }

struct RewardTrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct RewardTrainResult {
  // loss[0] is the mean loss before the first update, loss[e] after epoch e.
  std::vector<double> loss;
  bool single_class = false;
};

// Mean binary cross-entropy over `samples`, no gradients.
double mean_loss(const RewardModel& model, std::span<const dataio::Sample> samples);
// Fraction of samples whose thresholded score (0.5) matches the label.
double accuracy(const RewardModel& model, std::span<const dataio::Sample> samples);

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

// Adam mini-batch minimisation of the card click cross-entropy. A dataset
// holding a single label still trains; `single_class` is set and a warning is
// written to stderr.
RewardTrainResult train_reward(RewardModel& model, std::span<const dataio::Sample> samples,
                               const RewardTrainConfig& config, const EpochCallback& on_epoch = {});

void write_loss_curve(const std::vector<double>& loss, std::ostream& out);

}  // namespace exactk::reward
