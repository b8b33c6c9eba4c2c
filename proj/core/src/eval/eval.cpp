#include "exactk/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "exactk/errors.hpp"
#include "exactk/gattn/decode.hpp"
#include "exactk/kv.hpp"
#include "exactk/numcore/adam.hpp"
#include "exactk/numcore/ops.hpp"

namespace exactk::eval {

namespace nc = numcore;

double hr_at_k(std::span<const ItemCard> predicted, std::span<const ItemCard> truth, std::size_t k) {
  if (predicted.size() != truth.size()) {
    throw ContractViolation("hr_at_k: " + std::to_string(predicted.size()) + " predictions for " +
                            std::to_string(truth.size()) + " ground-truth cards");
  }
  if (k == 0) throw ContractViolation("hr_at_k: K must be positive");
  if (predicted.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i].size() != k || truth[i].size() != k) {
      throw ContractViolation("hr_at_k: card " + std::to_string(i) + " does not hold K=" + std::to_string(k) + " items");
    }
    std::size_t overlap = 0;
    for (auto item : predicted[i]) {
      if (std::find(truth[i].begin(), truth[i].end(), item) != truth[i].end()) ++overlap;
    }
    total += static_cast<double>(overlap) / static_cast<double>(k);
  }
  return total / static_cast<double>(predicted.size());
}

PrecisionResult p_at_k(std::span<const ItemCard> predicted, std::span<const std::optional<dataio::ItemId>> positives) {
  if (predicted.size() != positives.size()) {
    throw ContractViolation("p_at_k: " + std::to_string(predicted.size()) + " predictions for " +
                            std::to_string(positives.size()) + " samples");
  }
  PrecisionResult r;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (!positives[i]) {
      ++r.excluded;
      continue;
    }
    ++r.counted;
    if (std::find(predicted[i].begin(), predicted[i].end(), *positives[i]) != predicted[i].end()) ++hits;
  }
  r.value = r.counted == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(r.counted);
  return r;
}

PointwiseScorer::PointwiseScorer(dataio::FeatureSpec spec, nc::Rng& rng) : spec_(spec) {
  if (spec_.item_dim != spec_.user_dim) throw ConfigError("pointwise scorer: item and user widths differ");
  features_ = dataio::FeatureEncoder(spec_, params_, "pointwise.", rng);
  w_ = params_.add("pointwise.w", {spec_.item_dim, 1}, nc::Init::glorot_uniform, rng);
  b_ = params_.add("pointwise.b", {1}, nc::Init::zeros, rng);
}

nc::Tensor PointwiseScorer::logits(dataio::UserId user, std::span<const dataio::ItemId> items) const {
  const nc::Tensor crosses = nc::elementwise_mul(features_.items(items), features_.user(user));
  return nc::add(nc::matmul(crosses, w_), b_);
}

std::vector<double> PointwiseScorer::scores(dataio::UserId user, std::span<const dataio::ItemId> items) const {
  nc::NoGradScope no_grad;
  const nc::Tensor p = nc::sigmoid(logits(user, items));
  return {p.data().begin(), p.data().end()};
}

namespace {

struct PointExample {
  const dataio::Sample* sample;
  std::size_t candidate;
};

double target_of(const PointExample& e) {
  return e.sample->candidates[e.candidate] == *e.sample->positive_item ? 1.0 : 0.0;
}

nc::Tensor example_loss(const PointwiseScorer& scorer, const PointExample& e) {
  const dataio::ItemId item = e.sample->candidates[e.candidate];
  return nc::binary_cross_entropy_with_logits(scorer.logits(e.sample->user, std::span(&item, 1)), target_of(e));
}

double pointwise_mean_loss(const PointwiseScorer& scorer, const std::vector<PointExample>& examples) {
  nc::NoGradScope no_grad;
  double total = 0.0;
  for (const auto& e : examples) total += example_loss(scorer, e).item();
  return examples.empty() ? 0.0 : total / static_cast<double>(examples.size());
}

}  // namespace

std::vector<double> train_pointwise(PointwiseScorer& scorer, std::span<const dataio::Sample> samples,
                                    const PointwiseTrainConfig& config) {
  if (config.batch_size == 0) throw ConfigError("train_pointwise: batch size must be positive");
  std::vector<PointExample> examples;
  for (const auto& s : samples) {
    if (s.label != 1 || !s.positive_item) continue;
    for (std::size_t c = 0; c < s.n(); ++c) examples.push_back({&s, c});
  }
  if (examples.empty()) throw DataError("train_pointwise: no clicked samples with a positive item");
  nc::Adam adam(scorer.parameters().tensors(), {config.learning_rate});
  nc::Rng rng(nc::mix_seed(config.seed, 0x504F494EULL));
  std::vector<double> curve{pointwise_mean_loss(scorer, examples)};
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    nc::shuffle(examples, rng);
    for (std::size_t start = 0; start < examples.size(); start += config.batch_size) {
      const std::size_t stop = std::min(examples.size(), start + config.batch_size);
      nc::Tape tape;
      nc::TapeScope scope(tape);
      std::vector<nc::Tensor> terms;
      for (std::size_t i = start; i < stop; ++i) terms.push_back(example_loss(scorer, examples[i]));
      nc::backward(tape, nc::mean(nc::concat(terms, 0)));
      adam.step();
    }
    curve.push_back(pointwise_mean_loss(scorer, examples));
  }
  return curve;
}

const char* method_name(Method method) {
  switch (method) {
    case Method::policy_beam: return "policy_beam";
    case Method::greedy_baseline: return "greedy_baseline";
    case Method::brute_force_oracle: return "brute_force_oracle";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "policy_beam") return Method::policy_beam;
  if (name == "greedy_baseline") return Method::greedy_baseline;
  if (name == "brute_force_oracle") return Method::brute_force_oracle;
  throw ConfigError("unknown method '" + name + "'; valid methods: " + kMethodNames);
}

namespace {

std::size_t card_size(std::span<const dataio::Sample> samples) {
  for (const auto& s : samples) {
    if (s.label == 1) return s.k();
  }
  return 0;
}

graph::Card oracle_card(const dataio::OracleWorld& world, const dataio::Sample& s, const graph::ConstraintGraph& g,
                        std::size_t k) {
  const auto score = [&](std::span<const graph::Node> nodes) {
    return world.utility(s.user, gattn::to_items(s, nodes));
  };
  return graph::brute_force_best_card(g, score, k);
}

}  // namespace

std::vector<Decision> decide(Method method, std::span<const dataio::Sample> samples, const EvalContext& ctx) {
  switch (method) {
    case Method::policy_beam:
      if (!ctx.policy) throw ConfigError("policy_beam needs a policy checkpoint");
      break;
    case Method::greedy_baseline:
      if (!ctx.scorer) throw ConfigError("greedy_baseline needs a pointwise scorer");
      break;
    case Method::brute_force_oracle:
      if (!ctx.world) throw ConfigError("brute_force_oracle needs an oracle dataset");
      break;
  }
  const std::size_t k = card_size(samples);
  std::vector<Decision> out;
  for (const auto& s : samples) {
    if (s.label != 1) continue;
    Decision d{&s, std::nullopt};
    const graph::ConstraintGraph g = ctx.builder(s);
    try {
      graph::Card nodes;
      switch (method) {
        case Method::policy_beam: {
          nc::NoGradScope no_grad;
          const std::size_t width = ctx.beam_size ? ctx.beam_size : ctx.policy->config().beam_size;
          nodes = gattn::beam_search(*ctx.policy, ctx.policy->encode_sample(s), g, k, width).nodes;
          break;
        }
        case Method::greedy_baseline:
          nodes = graph::greedy_node_weight(g, ctx.scorer->scores(s.user, s.candidates), k);
          break;
        case Method::brute_force_oracle:
          nodes = oracle_card(*ctx.world, s, g, k);
          break;
      }
      d.card = gattn::to_items(s, nodes);
    } catch (const InfeasibleError&) {
    }
    out.push_back(std::move(d));
  }
  return out;
}

EvalReport evaluate(Method method, std::span<const dataio::Sample> samples, const EvalContext& ctx) {
  const auto decisions = decide(method, samples, ctx);
  EvalReport report;
  report.method = method_name(method);
  std::vector<ItemCard> predicted, truth;
  std::vector<std::optional<dataio::ItemId>> positives;
  double reward_total = 0.0, ratio_total = 0.0;
  const std::size_t k = card_size(samples);
  for (const auto& d : decisions) {
    if (!d.card) {
      ++report.infeasible_count;
      continue;
    }
    const auto& s = *d.sample;
    predicted.push_back(*d.card);
    truth.push_back(s.card);
    positives.push_back(s.positive_item);
    if (ctx.reward) reward_total += ctx.reward->reward(s.user, *d.card);
    if (ctx.world) {
      const auto g = ctx.builder(s);
      const double best = ctx.world->utility(s.user, gattn::to_items(s, oracle_card(*ctx.world, s, g, k)));
      ratio_total += ctx.world->utility(s.user, *d.card) / best;
    }
  }
  report.n = predicted.size();
  if (report.n > 0) {
    report.hr_at_k = hr_at_k(predicted, truth, k);
    const auto p = p_at_k(predicted, positives);
    report.p_at_k = p.value;
    report.p_excluded = p.excluded;
    const double n = static_cast<double>(report.n);
    if (ctx.reward) report.mean_reward = reward_total / n;
    if (ctx.world) report.oracle_ratio = ratio_total / n;
  }
  return report;
}

namespace {

std::string optional_field(const std::optional<double>& v) { return v ? kv::format(*v) : std::string(); }

std::string fixed(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

}  // namespace

void write_report_csv(std::span<const EvalReport> reports, std::ostream& out) {
  out << kReportHeader << '\n';
  for (const auto& r : reports) {
    out << r.method << ',' << r.n << ',' << kv::format(r.p_at_k) << ',' << kv::format(r.hr_at_k) << ','
        << optional_field(r.mean_reward) << ',' << optional_field(r.oracle_ratio) << ',' << r.infeasible_count << '\n';
  }
}

void write_report_table(std::span<const EvalReport> reports, std::ostream& out) {
  char line[160];
  std::snprintf(line, sizeof line, "%-20s %7s %8s %8s %12s %13s %11s\n", "method", "n", "P@K", "HR@K", "mean_reward",
                "oracle_ratio", "infeasible");
  out << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-20s %7zu %8.4f %8.4f %12s %13s %11zu\n", r.method.c_str(), r.n, r.p_at_k,
                  r.hr_at_k, fixed(r.mean_reward).c_str(), fixed(r.oracle_ratio).c_str(), r.infeasible_count);
    out << line;
  }
}

}  // namespace exactk::eval
