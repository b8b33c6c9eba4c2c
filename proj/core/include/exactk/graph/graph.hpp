#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "exactk/dataio/sample.hpp"

namespace exactk::graph {

using Node = std::size_t;
using Card = std::vector<Node>;

// Unit-cost Levenshtein distance over raw bytes.
std::size_t levenshtein(std::string_view a, std::string_view b);
// levenshtein / max(|a|, |b|); 0 for two empty strings.
double ned(std::string_view a, std::string_view b);

struct Constraint {
  enum class Kind { none, min_ned };
  Kind kind = Kind::none;
  std::optional<double> tau;

  static Constraint none() { return {}; }
  static Constraint min_ned(double tau) { return {Kind::min_ned, tau}; }
  void validate() const;
};

// Undirected graph over the N candidate nodes of one sample; an edge means the
// two items may appear in the same card.
class ConstraintGraph {
 public:
  ConstraintGraph() = default;
  explicit ConstraintGraph(std::vector<dataio::ItemId> item_ids, bool complete = false);
  static ConstraintGraph complete(std::size_t n);

  std::size_t size() const { return n_; }
  const std::vector<dataio::ItemId>& item_ids() const { return item_ids_; }
  bool adjacent(Node a, Node b) const { return adj_[a * n_ + b] != 0; }
  void connect(Node a, Node b);
  void disconnect(Node a, Node b);
  std::size_t edge_count() const;
  bool is_clique(std::span<const Node> nodes) const;

 private:
  std::size_t n_ = 0;
  std::vector<dataio::ItemId> item_ids_;
  std::vector<unsigned char> adj_;
};

struct ItemInfo {
  dataio::ItemId id = 0;
  std::optional<std::string> title;
};

// Edge (i, j) iff the constraint holds for the pair. min_ned needs titles.
ConstraintGraph build_graph(std::span<const ItemInfo> items, const Constraint& constraint);

// Builds the per-sample graph from a fixed id -> title catalogue.
class GraphBuilder {
 public:
  GraphBuilder() = default;
  GraphBuilder(Constraint constraint, std::unordered_map<dataio::ItemId, std::string> titles);

  const Constraint& constraint() const { return constraint_; }
  ConstraintGraph operator()(const dataio::Sample& sample) const;
  ConstraintGraph operator()(std::span<const dataio::ItemId> candidates) const;

 private:
  Constraint constraint_;
  std::unordered_map<dataio::ItemId, std::string> titles_;
};

// True iff `candidate` is not chosen yet and is adjacent to every chosen node.
// `chosen` must itself be a clique.
bool is_feasible_extension(const ConstraintGraph& graph, std::span<const Node> chosen, Node candidate);

// Naive node-weight baseline: repeatedly take the heaviest remaining node
// (lowest index on ties) and drop it together with every node not adjacent
// to it. Throws InfeasibleError when fewer nodes remain than picks needed.
Card greedy_node_weight(const ConstraintGraph& graph, std::span<const double> weights, std::size_t k);

using CardScore = std::function<double(std::span<const Node>)>;

inline constexpr double kMaxEnumeration = 1e6;

// Exhaustive search over all K-cliques (nodes in ascending order). Returns the
// first card, in lexicographic order, that attains the maximum score.
Card brute_force_best_card(const ConstraintGraph& graph, const CardScore& score, std::size_t k);

double binomial(std::size_t n, std::size_t k);

}  // namespace exactk::graph
