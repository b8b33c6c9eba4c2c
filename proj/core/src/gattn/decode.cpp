#include "exactk/gattn/decode.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "exactk/errors.hpp"
#include "exactk/numcore/ops.hpp"

namespace exactk::gattn {

namespace nc = numcore;

namespace {

struct Beam {
  DecodeState state;
  std::vector<double> steps;
};

struct Expansion {
  double score;
  std::size_t beam;
  graph::Node node;
  double step;
  graph::Card sequence;
};

}  // namespace

DecodedCard beam_search(const PolicyModel& model, const Encoding& enc, const graph::ConstraintGraph& graph,
                        std::size_t k, std::size_t beam_size) {
  if (beam_size == 0) throw ContractViolation("beam_search: beam size must be positive");
  if (k == 0 || k > enc.size()) throw ContractViolation("beam_search: K must lie in [1, N]");
  nc::NoGradScope no_grad;
  std::vector<Beam> beams{{model.initial_state(enc), {}}};
  for (std::size_t t = 0; t < k; ++t) {
    std::vector<Expansion> expansions;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      const auto& state = beams[b].state;
      if (!state.has_feasible()) continue;
      const Tensor lp = model.step_log_probs(state, enc);
      for (graph::Node j = 0; j < state.masked.size(); ++j) {
        if (state.masked[j]) continue;
        graph::Card seq = state.prefix;
        seq.push_back(j);
        expansions.push_back({state.log_prob + lp[j], b, j, lp[j], std::move(seq)});
      }
    }
    if (expansions.empty()) throw InfeasibleError("beam_search: every beam reached a dead end");
    std::sort(expansions.begin(), expansions.end(), [](const Expansion& a, const Expansion& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.sequence < b.sequence;
    });
    if (expansions.size() > beam_size) expansions.resize(beam_size);
    std::vector<Beam> next;
    next.reserve(expansions.size());
    for (const auto& e : expansions) {
      const auto& parent = beams[e.beam];
      Beam child{model.advance_state(parent.state, e.node, graph, enc, e.step), parent.steps};
      child.steps.push_back(e.step);
      next.push_back(std::move(child));
    }
    beams = std::move(next);
  }
  const auto& best = beams.front();
  return {best.state.prefix, best.state.log_prob, best.steps};
}

DecodedCard beam_search(const PolicyModel& model, const dataio::Sample& sample, const graph::ConstraintGraph& graph) {
  nc::NoGradScope no_grad;
  return beam_search(model, model.encode_sample(sample), graph, model.config().k, model.config().beam_size);
}

DecodedCard greedy_decode(const PolicyModel& model, const Encoding& enc, const graph::ConstraintGraph& graph,
                          std::size_t k) {
  nc::NoGradScope no_grad;
  DecodeState state = model.initial_state(enc);
  DecodedCard out;
  for (std::size_t t = 0; t < k; ++t) {
    if (!state.has_feasible()) throw InfeasibleError("greedy_decode: dead end at step " + std::to_string(t + 1));
    const Tensor lp = model.step_log_probs(state, enc);
    graph::Node best = state.masked.size();
    for (graph::Node j = 0; j < state.masked.size(); ++j) {
      if (!state.masked[j] && (best == state.masked.size() || lp[j] > lp[best])) best = j;
    }
    out.step_log_probs.push_back(lp[best]);
    state = model.advance_state(state, best, graph, enc, lp[best]);
  }
  out.nodes = state.prefix;
  out.log_prob = state.log_prob;
  return out;
}

DecodedCard sample_card(const PolicyModel& model, const Encoding& enc, const graph::ConstraintGraph& graph,
                        std::size_t k, nc::Rng& rng) {
  if (k == 0 || k > enc.size()) throw ContractViolation("sample_card: K must lie in [1, N]");
  nc::NoGradScope no_grad;
  const DecodeState start = model.initial_state(enc);
  for (int attempt = 0; attempt < kSampleAttempts; ++attempt) {
    DecodeState state = start;
    DecodedCard out;
    bool dead = false;
    for (std::size_t t = 0; t < k && !dead; ++t) {
      if (!state.has_feasible()) {
        dead = true;
        break;
      }
      const Tensor lp = model.step_log_probs(state, enc);
      double total = 0.0;
      for (graph::Node j = 0; j < state.masked.size(); ++j)
        if (!state.masked[j]) total += std::exp(lp[j]);
      double u = nc::uniform01(rng) * total;
      graph::Node pick = state.masked.size();
      for (graph::Node j = 0; j < state.masked.size(); ++j) {
        if (state.masked[j]) continue;
        pick = j;
        u -= std::exp(lp[j]);
        if (u < 0.0) break;
      }
      out.step_log_probs.push_back(lp[pick]);
      state = model.advance_state(state, pick, graph, enc, lp[pick]);
    }
    if (dead) continue;
    out.nodes = state.prefix;
    out.log_prob = state.log_prob;
    return out;
  }
  throw InfeasibleError("sample_card: no feasible card after " + std::to_string(kSampleAttempts) + " attempts");
}

DecodedCard sample_card(const PolicyModel& model, const dataio::Sample& sample, const graph::ConstraintGraph& graph,
                        nc::Rng& rng) {
  nc::NoGradScope no_grad;
  return sample_card(model, model.encode_sample(sample), graph, model.config().k, rng);
}

Tensor sequence_log_prob(const PolicyModel& model, const Encoding& enc, const graph::ConstraintGraph& graph,
                         std::span<const graph::Node> card) {
  if (card.empty()) throw ContractViolation("sequence_log_prob: empty card");
  DecodeState state = model.initial_state(enc);
  std::vector<Tensor> terms;
  for (auto node : card) {
    if (node >= state.masked.size() || state.masked[node]) {
      throw InfeasibleError("sequence_log_prob: node " + std::to_string(node) + " is not a feasible extension");
    }
    const Tensor lp = model.step_log_probs(state, enc);
    terms.push_back(nc::pick(lp, node));
    state = model.advance_state(state, node, graph, enc, terms.back().item());
  }
  return nc::sum(nc::concat(terms, 0));
}

std::vector<dataio::ItemId> to_items(const dataio::Sample& sample, std::span<const graph::Node> nodes) {
  std::vector<dataio::ItemId> items;
  items.reserve(nodes.size());
  for (auto n : nodes) items.push_back(sample.candidates.at(n));
  return items;
}

void write_attention_csv(const Encoding& enc, std::size_t heads, std::ostream& out) {
  out << "layer,head,node_i,node_j,weight\n";
  char buf[48];
  for (std::size_t m = 0; m < enc.attention.size(); ++m) {
    const auto& a = enc.attention[m];
    const std::size_t n = a.rows();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", a.at(i, j));
        out << m / heads << ',' << m % heads << ',' << i << ',' << j << ',' << buf << '\n';
      }
    }
  }
}

}  // namespace exactk::gattn
