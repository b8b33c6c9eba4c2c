#pragma once

#include <iosfwd>
#include <vector>

#include "exactk/gattn/model.hpp"

namespace exactk::gattn {

struct DecodedCard {
  graph::Card nodes;                  // in decode order
  double log_prob = 0.0;              // sum of step_log_probs
  std::vector<double> step_log_probs;
};

// Width-limited search over decode steps scored by accumulated
// log-probability; exactly `beam_size` partial cards survive each step.
// Ties between equal scores go to the lexicographically smaller node
// sequence. Throws InfeasibleError when every beam dies.
DecodedCard beam_search(const PolicyModel& model, const Encoding& enc, const graph::ConstraintGraph& graph,
                        std::size_t k, std::size_t beam_size);
// Encodes the sample and decodes with the configured K and beam size.
DecodedCard beam_search(const PolicyModel& model, const dataio::Sample& sample, const graph::ConstraintGraph& graph);

// Repeated argmax (lowest index on ties).
DecodedCard greedy_decode(const PolicyModel& model, const Encoding& enc, const graph::ConstraintGraph& graph,
                          std::size_t k);

inline constexpr int kSampleAttempts = 10;

// Ancestral sampling from the pointing distribution; a dead end restarts the
// draw, up to kSampleAttempts times.
DecodedCard sample_card(const PolicyModel& model, const Encoding& enc, const graph::ConstraintGraph& graph,
                        std::size_t k, numcore::Rng& rng);
DecodedCard sample_card(const PolicyModel& model, const dataio::Sample& sample, const graph::ConstraintGraph& graph,
                        numcore::Rng& rng);

// Chain-rule log-probability of a fixed node sequence, recomputed step by
// step. On an active tape the result is differentiable.
Tensor sequence_log_prob(const PolicyModel& model, const Encoding& enc, const graph::ConstraintGraph& graph,
                         std::span<const graph::Node> card);

std::vector<dataio::ItemId> to_items(const dataio::Sample& sample, std::span<const graph::Node> nodes);

// CSV rows "layer,head,node_i,node_j,weight" for every encoder attention map.
void write_attention_csv(const Encoding& enc, std::size_t heads, std::ostream& out);

}  // namespace exactk::gattn
