#include "exactk/reward/reward.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>

#include "exactk/errors.hpp"
#include "exactk/kv.hpp"
#include "exactk/numcore/adam.hpp"
#include "exactk/numcore/ops.hpp"

namespace exactk::reward {

namespace nc = numcore;
using numcore::Init;

const char* cross_mode_name(CrossMode mode) {
  return mode == CrossMode::elementwise ? "elementwise" : "inner_product";
}

CrossMode parse_cross_mode(const std::string& name) {
  if (name == "elementwise") return CrossMode::elementwise;
  if (name == "inner_product") return CrossMode::inner_product;
  throw ConfigError("unknown cross mode '" + name + "' (expected elementwise or inner_product)");
}

void RewardConfig::validate() const {
  if (k == 0 || hidden == 0 || features.item_dim == 0 || features.user_dim == 0) {
    throw ConfigError("reward config: all sizes must be positive");
  }
  if (features.item_dim != features.user_dim) {
    throw ConfigError("reward config: item and user features must share a width to be crossed");
  }
}

std::size_t RewardConfig::input_width() const {
  const std::size_t cross_width = cross == CrossMode::elementwise ? features.item_dim : 1;
  const std::size_t slots = tied ? 1 : k;
  return slots * (cross_width + features.item_dim) + features.user_dim;
}

bool RewardConfig::apply(const std::string& key, const std::string& value) {
  if (key == "k") k = kv::to_size(key, value);
  else if (key == "hidden") hidden = kv::to_size(key, value);
  else if (key == "cross") cross = parse_cross_mode(value);
  else if (key == "tied") tied = kv::to_bool(key, value);
  else if (key == "feature_mode") features.mode = dataio::parse_feature_mode(value);
  else if (key == "item_dim") features.item_dim = kv::to_size(key, value);
  else if (key == "user_dim") features.user_dim = kv::to_size(key, value);
  else if (key == "item_vocab") features.item_vocab = kv::to_size(key, value);
  else if (key == "user_vocab") features.user_vocab = kv::to_size(key, value);
  else return false;
  return true;
}

std::vector<std::pair<std::string, std::string>> RewardConfig::entries() const {
  return {{"k", kv::format(k)},
          {"hidden", kv::format(hidden)},
          {"cross", cross_mode_name(cross)},
          {"tied", kv::format(tied)},
          {"feature_mode", dataio::feature_mode_name(features.mode)},
          {"item_dim", kv::format(features.item_dim)},
          {"user_dim", kv::format(features.user_dim)},
          {"item_vocab", kv::format(features.item_vocab)},
          {"user_vocab", kv::format(features.user_vocab)}};
}

RewardModel::RewardModel(RewardConfig config, nc::Rng& rng) : config_(std::move(config)) {
  config_.validate();
  features_ = dataio::FeatureEncoder(config_.features, params_, "reward.", rng);
  w1_ = params_.add("reward.W_R1", {config_.input_width(), config_.hidden}, Init::glorot_uniform, rng);
  b1_ = params_.add("reward.b_R1", {config_.hidden}, Init::zeros, rng);
  w2_ = params_.add("reward.W_R2", {config_.hidden, 1}, Init::glorot_uniform, rng);
  b2_ = params_.add("reward.b_R2", {1}, Init::zeros, rng);
}

Tensor RewardModel::logit(const Tensor& items, const Tensor& user) const {
  const auto& f = config_.features;
  if (items.rank() != 2 || items.rows() != config_.k) {
    throw ContractViolation("score_card: expected " + std::to_string(config_.k) + " items, got " +
                            nc::shape_string(items.shape()));
  }
  if (items.cols() != f.item_dim || user.size() != f.user_dim) {
    throw ContractViolation("score_card: feature widths " + nc::shape_string(items.shape()) + " / " +
                            nc::shape_string(user.shape()) + " do not match the model");
  }
  const Tensor u = nc::reshape(user, {1, f.user_dim});
  Tensor crosses = config_.cross == CrossMode::elementwise ? nc::elementwise_mul(items, u)
                                                           : nc::matmul(items, nc::transpose(u));
  Tensor item_block = items;
  if (config_.tied) {
    const Tensor ones = Tensor::filled({1, config_.k}, 1.0);
    crosses = nc::matmul(ones, crosses);
    item_block = nc::matmul(ones, item_block);
  } else {
    crosses = nc::reshape(crosses, {1, crosses.size()});
    item_block = nc::reshape(item_block, {1, item_block.size()});
  }
  const Tensor parts[] = {crosses, item_block, u};
  const Tensor hidden = nc::relu(nc::add(nc::matmul(nc::concat(parts, 1), w1_), b1_));
  return nc::add(nc::matmul(hidden, w2_), b2_);
}

Tensor RewardModel::logit(dataio::UserId user, std::span<const dataio::ItemId> card) const {
  return logit(features_.items(card), features_.user(user));
}

double RewardModel::score_card(dataio::UserId user, std::span<const dataio::ItemId> card) const {
  nc::NoGradScope no_grad;
  return nc::sigmoid(logit(user, card)).item();
}

double RewardModel::reward(dataio::UserId user, std::span<const dataio::ItemId> card) const {
  return reward_value(score_card(user, card));
}

nc::Archive RewardModel::to_archive() const {
  nc::Archive a;
  a.set("kind", "reward");
  for (const auto& [k, v] : config_.entries()) a.set(k, v);
  params_.save_to(a);
  return a;
}

RewardModel RewardModel::from_archive(const nc::Archive& archive) {
  if (archive.get("kind") != "reward") throw DataError("archive does not hold a reward checkpoint");
  RewardConfig config;
  for (const auto& [k, v] : archive.manifest) {
    if (k != "kind" && !config.apply(k, v)) throw DataError("reward checkpoint: unknown manifest key '" + k + "'");
  }
  nc::Rng rng(0);
  RewardModel model(config, rng);
  model.params_.load_from(archive);
  return model;
}

double mean_loss(const RewardModel& model, std::span<const dataio::Sample> samples) {
  if (samples.empty()) return 0.0;
  nc::NoGradScope no_grad;
  double total = 0.0;
  for (const auto& s : samples) {
    total += nc::binary_cross_entropy_with_logits(model.logit(s.user, s.card), s.label).item();
  }
  return total / static_cast<double>(samples.size());
}

double accuracy(const RewardModel& model, std::span<const dataio::Sample> samples) {
  if (samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : samples) {
    if ((model.score_card(s.user, s.card) > 0.5) == (s.label == 1)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

RewardTrainResult train_reward(RewardModel& model, std::span<const dataio::Sample> samples,
                               const RewardTrainConfig& config, const EpochCallback& on_epoch) {
  if (samples.empty()) throw DataError("train_reward: empty dataset");
  if (config.batch_size == 0) throw ConfigError("train_reward: batch size must be positive");
  RewardTrainResult result;
  const bool has_pos = std::any_of(samples.begin(), samples.end(), [](const auto& s) { return s.label == 1; });
  const bool has_neg = std::any_of(samples.begin(), samples.end(), [](const auto& s) { return s.label == 0; });
  if (!(has_pos && has_neg)) {
    result.single_class = true;
    std::cerr << "warning: reward training data holds a single label; the estimator will be degenerate\n";
  }

  nc::Adam adam(model.parameters().tensors(), {config.learning_rate});
  nc::Rng rng(nc::mix_seed(config.seed, 0x52455744ULL));
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  result.loss.push_back(mean_loss(model, samples));
  if (on_epoch) on_epoch(0, result.loss.back());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    nc::shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      nc::Tape tape;
      nc::TapeScope scope(tape);
      std::vector<Tensor> terms;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& s = samples[order[i]];
        terms.push_back(nc::binary_cross_entropy_with_logits(model.logit(s.user, s.card), s.label));
      }
      const Tensor loss = nc::mean(nc::concat(terms, 0));
      nc::backward(tape, loss);
      adam.step();
    }
    result.loss.push_back(mean_loss(model, samples));
    if (on_epoch) on_epoch(epoch, result.loss.back());
  }
  return result;
}

void write_loss_curve(const std::vector<double>& loss, std::ostream& out) {
  out << "epoch,loss\n";
  for (std::size_t e = 0; e < loss.size(); ++e) out << e << ',' << kv::format(loss[e]) << '\n';
}

}  // namespace exactk::reward
