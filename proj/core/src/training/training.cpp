#include "exactk/training/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "exactk/errors.hpp"
#include "exactk/eval/eval.hpp"
#include "exactk/gattn/decode.hpp"
#include "exactk/kv.hpp"
#include "exactk/numcore/ops.hpp"

namespace exactk::training {

namespace nc = numcore;
namespace fs = std::filesystem;

const char* sl_feed_name(SlFeed feed) {
  switch (feed) {
    case SlFeed::sampled: return "sampled";
    case SlFeed::greedy: return "greedy";
    case SlFeed::demonstration: return "demonstration";
  }
  return "?";
}

SlFeed parse_sl_feed(const std::string& name) {
  if (name == "sampled") return SlFeed::sampled;
  if (name == "greedy") return SlFeed::greedy;
  if (name == "demonstration") return SlFeed::demonstration;
  throw ConfigError("unknown sl_feed '" + name + "' (expected sampled, greedy or demonstration)");
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1], got " + kv::format(alpha));
  if (m == 0) throw ConfigError("m must be at least 1");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(eval_fraction >= 0.0 && eval_fraction < 1.0)) throw ConfigError("eval_fraction must lie in [0, 1)");
  if (eval_interval == 0) throw ConfigError("eval_interval must be positive");
}

bool TrainConfig::apply(const std::string& key, const std::string& value) {
  if (key == "alpha") alpha = kv::to_double(key, value);
  else if (key == "m") m = kv::to_size(key, value);
  else if (key == "epochs") epochs = kv::to_size(key, value);
  else if (key == "batch_size") batch_size = kv::to_size(key, value);
  else if (key == "learning_rate") learning_rate = kv::to_double(key, value);
  else if (key == "seed") seed = kv::to_u64(key, value);
  else if (key == "policy_sampling") policy_sampling = kv::to_bool(key, value);
  else if (key == "hill_climbing") hill_climbing = kv::to_bool(key, value);
  else if (key == "sl_feed") sl_feed = parse_sl_feed(value);
  else if (key == "reward_epochs") reward_epochs = kv::to_size(key, value);
  else if (key == "eval_fraction") eval_fraction = kv::to_double(key, value);
  else if (key == "eval_interval") eval_interval = kv::to_size(key, value);
  else return false;
  return true;
}

std::vector<std::pair<std::string, std::string>> TrainConfig::entries() const {
  return {{"alpha", kv::format(alpha)},
          {"m", kv::format(m)},
          {"epochs", kv::format(epochs)},
          {"batch_size", kv::format(batch_size)},
          {"learning_rate", kv::format(learning_rate)},
          {"seed", std::to_string(seed)},
          {"policy_sampling", kv::format(policy_sampling)},
          {"hill_climbing", kv::format(hill_climbing)},
          {"sl_feed", sl_feed_name(sl_feed)},
          {"reward_epochs", kv::format(reward_epochs)},
          {"eval_fraction", kv::format(eval_fraction)},
          {"eval_interval", kv::format(eval_interval)}};
}

namespace {

std::string describe(const dataio::Sample& s) {
  std::string ids;
  for (auto id : s.card) ids += (ids.empty() ? "" : ",") + std::to_string(id);
  return "sample (user " + std::to_string(s.user) + ", card " + ids + ")";
}

void mask_after(std::vector<bool>& masked, graph::Node chosen, const graph::ConstraintGraph& g) {
  for (graph::Node j = 0; j < masked.size(); ++j) {
    if (j == chosen || !g.adjacent(chosen, j)) masked[j] = true;
  }
}

graph::Node draw(std::span<const double> log_probs, const std::vector<bool>& masked, nc::Rng& rng) {
  double total = 0.0;
  for (std::size_t j = 0; j < masked.size(); ++j)
    if (!masked[j]) total += std::exp(log_probs[j]);
  double u = nc::uniform01(rng) * total;
  graph::Node pick = masked.size();
  for (std::size_t j = 0; j < masked.size(); ++j) {
    if (masked[j]) continue;
    pick = j;
    u -= std::exp(log_probs[j]);
    if (u < 0.0) break;
  }
  return pick;
}

graph::Node argmax(std::span<const double> log_probs, const std::vector<bool>& masked) {
  graph::Node best = masked.size();
  for (std::size_t j = 0; j < masked.size(); ++j) {
    if (!masked[j] && (best == masked.size() || log_probs[j] > log_probs[best])) best = j;
  }
  return best;
}

}  // namespace

Tensor sl_loss(const gattn::PolicyModel& policy, const gattn::Encoding& enc, const dataio::Sample& sample,
               const graph::ConstraintGraph& graph, const SlOptions& options, nc::Rng& rng) {
  if (sample.label != 1) throw ContractViolation("sl_loss: " + describe(sample) + " is not a clicked card");
  const auto target = sample.card_nodes();
  if (!graph.is_clique(target)) throw DataError("sl_loss: demonstration of " + describe(sample) + " is infeasible");
  const SlFeed feed = options.mode == SlMode::teacher_forced ? SlFeed::demonstration : options.feed;

  gattn::DecodeState walk = policy.initial_state(enc);
  std::vector<bool> demo_mask(enc.size(), false);
  std::vector<graph::Node> demo_prefix;
  std::vector<Tensor> terms;
  for (std::size_t t = 0; t < target.size(); ++t) {
    const gattn::DecodeState scoring{walk.rnn, demo_prefix, demo_mask, 0.0};
    const Tensor lp = policy.step_log_probs(scoring, enc);
    terms.push_back(nc::pick(lp, target[t]));
    if (t + 1 == target.size()) break;

    graph::Node next = target[t];
    if (feed != SlFeed::demonstration && walk.has_feasible()) {
      std::vector<double> values;
      if (walk.masked == demo_mask) {
        values.assign(lp.data().begin(), lp.data().end());
      } else {
        nc::NoGradScope no_grad;
        const Tensor own = policy.step_log_probs(walk, enc);
        values.assign(own.data().begin(), own.data().end());
      }
      next = feed == SlFeed::sampled ? draw(values, walk.masked, rng) : argmax(values, walk.masked);
    }
    if (walk.masked[next]) walk.masked[next] = false;
    walk = policy.advance_state(walk, next, graph, enc, 0.0);
    demo_prefix.push_back(target[t]);
    mask_after(demo_mask, target[t], graph);
  }
  return nc::scale(nc::mean(nc::concat(terms, 0)), -1.0);
}

Tensor sl_loss(const gattn::PolicyModel& policy, const dataio::Sample& sample, const graph::ConstraintGraph& graph,
               const SlOptions& options, nc::Rng& rng) {
  return sl_loss(policy, policy.encode_sample(sample), sample, graph, options, rng);
}

std::size_t select_best(std::span<const double> rewards) {
  if (rewards.empty()) throw ContractViolation("select_best: empty buffer");
  return static_cast<std::size_t>(std::max_element(rewards.begin(), rewards.end()) - rewards.begin());
}

RewardFn reward_fn(const reward::RewardModel& model) {
  return [&model](const dataio::Sample& s, std::span<const graph::Node> nodes) {
    return model.reward(s.user, gattn::to_items(s, nodes));
  };
}

RlResult rl_loss(const gattn::PolicyModel& policy, const gattn::Encoding& enc, const dataio::Sample& sample,
                 const graph::ConstraintGraph& graph, const RewardFn& reward, bool hill_climbing, std::size_t m,
                 nc::Rng& rng) {
  if (m == 0) throw ContractViolation("rl_loss: buffer size must be positive");
  const std::size_t k = sample.k();
  const std::size_t draws = hill_climbing ? m : 1;
  RlResult result;
  std::vector<graph::Card> buffer;
  for (std::size_t i = 0; i < draws; ++i) {
    try {
      auto card = gattn::sample_card(policy, enc, graph, k, rng);
      result.buffer_rewards.push_back(reward(sample, card.nodes));
      buffer.push_back(std::move(card.nodes));
    } catch (const InfeasibleError&) {
      ++result.failed_draws;
    }
  }
  if (buffer.empty()) throw InfeasibleError("rl_loss: every draw for " + describe(sample) + " reached a dead end");
  const std::size_t best = select_best(result.buffer_rewards);
  result.card = buffer[best];
  result.reward = result.buffer_rewards[best];
  result.loss = nc::scale(gattn::sequence_log_prob(policy, enc, graph, result.card), -result.reward);
  return result;
}

std::pair<Tensor, LossBreakdown> batch_loss(const gattn::PolicyModel& policy, std::span<const dataio::Sample> batch,
                                            const graph::GraphBuilder& builder, const RewardFn* reward,
                                            const TrainConfig& config, std::uint64_t step_seed) {
  config.validate();
  if (batch.empty()) throw ContractViolation("batch_loss: empty batch");
  const bool use_sl = config.alpha > 0.0;
  const bool use_rl = config.alpha < 1.0;
  if (use_rl && !reward) throw ConfigError("alpha < 1 needs a trained reward model");

  LossBreakdown info;
  std::vector<Tensor> sl_terms, rl_terms;
  double reward_total = 0.0;
  const SlOptions sl_options{config.policy_sampling ? SlMode::policy_sampled : SlMode::teacher_forced, config.sl_feed};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    const std::uint64_t base = nc::mix_seed(step_seed, i);
    const gattn::Encoding enc = policy.encode_sample(s);
    const graph::ConstraintGraph g = builder(s);
    if (use_sl) {
      nc::Rng rng(nc::mix_seed(base, 1));
      sl_terms.push_back(sl_loss(policy, enc, s, g, sl_options, rng));
    }
    if (use_rl) {
      nc::Rng rng(nc::mix_seed(base, 2));
      ++info.rl_draws;
      try {
        auto r = rl_loss(policy, enc, s, g, *reward, config.hill_climbing, config.m, rng);
        rl_terms.push_back(r.loss);
        reward_total += r.reward;
        if (config.hill_climbing) {
          std::vector<double> rest;
          const std::size_t best = select_best(r.buffer_rewards);
          for (std::size_t j = 0; j < r.buffer_rewards.size(); ++j)
            if (j != best) rest.push_back(r.buffer_rewards[j]);
          info.hill_climb.emplace_back(r.reward, std::move(rest));
        }
      } catch (const InfeasibleError&) {
        ++info.rl_failures;
      }
    }
  }

  const Tensor zero = Tensor::scalar(0.0);
  const Tensor l_s = sl_terms.empty() ? zero : nc::mean(nc::concat(sl_terms, 0));
  const Tensor l_r = rl_terms.empty() ? zero : nc::mean(nc::concat(rl_terms, 0));
  Tensor total;
  if (!use_rl) total = nc::scale(l_s, config.alpha);
  else if (!use_sl) total = nc::scale(l_r, 1.0 - config.alpha);
  else total = nc::add(nc::scale(l_s, config.alpha), nc::scale(l_r, 1.0 - config.alpha));

  info.loss_sl = l_s.item();
  info.loss_rl = l_r.item();
  info.loss_total = total.item();
  if (!rl_terms.empty()) info.mean_reward = reward_total / static_cast<double>(rl_terms.size());
  return {total, std::move(info)};
}

LossBreakdown combined_step(gattn::PolicyModel& policy, nc::Adam& optimizer, std::span<const dataio::Sample> batch,
                            const graph::GraphBuilder& builder, const RewardFn* reward, const TrainConfig& config,
                            std::uint64_t step_seed) {
  nc::Tape tape;
  LossBreakdown info;
  {
    nc::TapeScope scope(tape);
    auto [loss, breakdown] = batch_loss(policy, batch, builder, reward, config, step_seed);
    info = std::move(breakdown);
    if (tape.empty()) return info;
    nc::backward(tape, loss);
  }
  optimizer.step();
  return info;
}

void write_curve_row(const CurveRow& row, std::ostream& out) {
  const auto opt = [](const std::optional<double>& v) { return v ? kv::format(*v) : std::string(); };
  out << row.iter << ',' << kv::format(row.loss_sl) << ',' << kv::format(row.loss_rl) << ','
      << kv::format(row.loss_total) << ',' << opt(row.mean_reward) << ',' << opt(row.p_at_k) << ','
      << opt(row.hr_at_k) << '\n';
}

namespace {

void save_archive(const nc::Archive& archive, const fs::path& path) {
  const fs::path tmp = path.string() + ".tmp";
  nc::write_archive(archive, tmp);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

TrainOutputs run_training(const TrainInputs& inputs, const gattn::ModelConfig& model_config,
                          const reward::RewardConfig& reward_config, const TrainConfig& config,
                          const TrainPaths& paths) {
  config.validate();
  if (inputs.train.empty()) throw DataError("run_training: empty training set");
  TrainOutputs out;

  std::vector<std::size_t> order(inputs.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  nc::Rng split_rng(nc::mix_seed(config.seed, 0x4556414CULL));
  nc::shuffle(order, split_rng);
  const auto held = static_cast<std::size_t>(std::floor(config.eval_fraction * static_cast<double>(order.size()) + 1e-9));
  std::vector<dataio::Sample> eval_slice, fit;
  for (std::size_t i = 0; i < order.size(); ++i) (i < held ? eval_slice : fit).push_back(inputs.train[order[i]]);
  const std::vector<dataio::Sample> demos = dataio::labeled(fit, 1);
  if (demos.empty()) throw DataError("run_training: no clicked cards to learn from");

  if (paths.out_dir) fs::create_directories(*paths.out_dir);

  nc::Rng init_rng(nc::mix_seed(config.seed, 0x494E4954ULL));
  if (config.alpha < 1.0) {
    out.reward.emplace(reward_config, init_rng);
    if (reward_config.features.mode == dataio::FeatureMode::dense) out.reward->features().attach(inputs.world);
    const reward::RewardTrainConfig rc{config.reward_epochs, config.batch_size, config.learning_rate, config.seed};
    out.reward_loss = reward::train_reward(*out.reward, fit, rc).loss;
    if (paths.out_dir) {
      save_archive(out.reward->to_archive(), *paths.out_dir / "reward.bin");
      auto f = open_output(*paths.out_dir / "reward_loss.csv");
      reward::write_loss_curve(out.reward_loss, f);
    }
  }

  out.policy.emplace(model_config, init_rng);
  auto& policy = *out.policy;
  if (model_config.features.mode == dataio::FeatureMode::dense) policy.features().attach(inputs.world);
  nc::Adam optimizer(policy.parameters().tensors(), {config.learning_rate});
  std::optional<RewardFn> reward;
  if (out.reward) reward = reward_fn(*out.reward);

  std::optional<std::ofstream> curve_file;
  if (paths.out_dir) {
    curve_file.emplace(open_output(*paths.out_dir / "curve.csv"));
    *curve_file << kCurveHeader << '\n';
  }

  eval::EvalContext ctx;
  ctx.policy = &policy;
  ctx.builder = inputs.builder;
  const std::size_t batches = (demos.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_iters = batches * config.epochs;
  std::vector<std::size_t> demo_order(demos.size());
  std::iota(demo_order.begin(), demo_order.end(), std::size_t{0});
  nc::Rng order_rng(nc::mix_seed(config.seed, 0x4F524452ULL));
  std::size_t iter = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    nc::shuffle(demo_order, order_rng);
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<dataio::Sample> batch;
      for (std::size_t i = b * config.batch_size; i < std::min(demos.size(), (b + 1) * config.batch_size); ++i) {
        batch.push_back(demos[demo_order[i]]);
      }
      ++iter;
      auto info = combined_step(policy, optimizer, batch, inputs.builder, reward ? &*reward : nullptr, config,
                                nc::mix_seed(config.seed, 0x53544550ULL + iter));
      out.rl_draws += info.rl_draws;
      out.rl_failures += info.rl_failures;
      if (paths.keep_hill_climb) {
        for (auto& h : info.hill_climb) out.hill_climb.push_back(std::move(h));
      }
      CurveRow row{iter, info.loss_sl, info.loss_rl, info.loss_total, info.mean_reward, {}, {}};
      if (!eval_slice.empty() && (iter % config.eval_interval == 0 || iter == total_iters)) {
        const auto report = eval::evaluate(eval::Method::policy_beam, eval_slice, ctx);
        row.p_at_k = report.p_at_k;
        row.hr_at_k = report.hr_at_k;
      }
      if (curve_file) {
        write_curve_row(row, *curve_file);
        if (!*curve_file) throw IoError("failed writing curve.csv");
      }
      out.curve.push_back(row);
    }
    if (paths.out_dir) save_archive(policy.to_archive(), *paths.out_dir / "policy.bin");
  }
  if (paths.out_dir && config.epochs == 0) save_archive(policy.to_archive(), *paths.out_dir / "policy.bin");
  return out;
}

}  // namespace exactk::training
