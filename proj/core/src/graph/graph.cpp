#include "exactk/graph/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "exactk/errors.hpp"

namespace exactk::graph {

std::size_t levenshtein(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

double ned(std::string_view a, std::string_view b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 0.0;
  return static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

void Constraint::validate() const {
  if (kind == Kind::none && tau) throw ConfigError("constraint: tau given without min_ned");
  if (kind == Kind::min_ned) {
    if (!tau) throw ConfigError("constraint: min_ned requires tau");
    if (!(*tau >= 0.0 && *tau <= 1.0)) throw ConfigError("constraint: tau must lie in [0, 1]");
  }
}

ConstraintGraph::ConstraintGraph(std::vector<dataio::ItemId> item_ids, bool complete)
    : n_(item_ids.size()), item_ids_(std::move(item_ids)), adj_(n_ * n_, 0) {
  if (complete) {
    for (Node a = 0; a < n_; ++a)
      for (Node b = 0; b < n_; ++b) adj_[a * n_ + b] = a != b;
  }
}

ConstraintGraph ConstraintGraph::complete(std::size_t n) {
  std::vector<dataio::ItemId> ids(n);
  std::iota(ids.begin(), ids.end(), dataio::ItemId{0});
  return ConstraintGraph(std::move(ids), true);
}

void ConstraintGraph::connect(Node a, Node b) {
  if (a >= n_ || b >= n_) throw ContractViolation("graph: node out of range");
  if (a == b) throw ContractViolation("graph: self-loops are not allowed");
  adj_[a * n_ + b] = adj_[b * n_ + a] = 1;
}

void ConstraintGraph::disconnect(Node a, Node b) {
  if (a >= n_ || b >= n_) throw ContractViolation("graph: node out of range");
  adj_[a * n_ + b] = adj_[b * n_ + a] = 0;
}

std::size_t ConstraintGraph::edge_count() const {
  return static_cast<std::size_t>(std::count(adj_.begin(), adj_.end(), 1)) / 2;
}

bool ConstraintGraph::is_clique(std::span<const Node> nodes) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i] >= n_) return false;
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      if (!adjacent(nodes[i], nodes[j])) return false;
    }
  }
  return true;
}

ConstraintGraph build_graph(std::span<const ItemInfo> items, const Constraint& constraint) {
  constraint.validate();
  if (items.size() < 2) throw ContractViolation("build_graph: need at least 2 items");
  std::vector<dataio::ItemId> ids;
  for (const auto& it : items) ids.push_back(it.id);
  if (constraint.kind == Constraint::Kind::none) return ConstraintGraph(std::move(ids), true);
  for (const auto& it : items) {
    if (!it.title) throw ConfigError("build_graph: min_ned constraint needs a title for item " + std::to_string(it.id));
  }
  ConstraintGraph g(std::move(ids));
  for (Node a = 0; a < items.size(); ++a) {
    for (Node b = a + 1; b < items.size(); ++b) {
      if (ned(*items[a].title, *items[b].title) >= *constraint.tau) g.connect(a, b);
    }
  }
  return g;
}

GraphBuilder::GraphBuilder(Constraint constraint, std::unordered_map<dataio::ItemId, std::string> titles)
    : constraint_(constraint), titles_(std::move(titles)) {
  constraint_.validate();
}

ConstraintGraph GraphBuilder::operator()(const dataio::Sample& sample) const { return (*this)(sample.candidates); }

ConstraintGraph GraphBuilder::operator()(std::span<const dataio::ItemId> candidates) const {
  if (constraint_.kind == Constraint::Kind::none) {
    return ConstraintGraph(std::vector<dataio::ItemId>(candidates.begin(), candidates.end()), true);
  }
  std::vector<ItemInfo> items;
  items.reserve(candidates.size());
  for (auto id : candidates) {
    auto it = titles_.find(id);
    items.push_back({id, it == titles_.end() ? std::nullopt : std::optional<std::string>(it->second)});
  }
  return build_graph(items, constraint_);
}

bool is_feasible_extension(const ConstraintGraph& graph, std::span<const Node> chosen, Node candidate) {
  if (!graph.is_clique(chosen)) throw ContractViolation("is_feasible_extension: chosen nodes do not form a clique");
  if (candidate >= graph.size()) throw ContractViolation("is_feasible_extension: candidate out of range");
  for (auto c : chosen) {
    if (c == candidate || !graph.adjacent(c, candidate)) return false;
  }
  return true;
}

Card greedy_node_weight(const ConstraintGraph& graph, std::span<const double> weights, std::size_t k) {
  const std::size_t n = graph.size();
  if (weights.size() != n) throw ContractViolation("greedy_node_weight: one weight per node required");
  if (k > n) throw ContractViolation("greedy_node_weight: K exceeds node count");
  for (double w : weights) {
    if (!std::isfinite(w)) throw ContractViolation("greedy_node_weight: non-finite weight");
  }
  std::vector<bool> alive(n, true);
  std::size_t remaining = n;
  Card card;
  for (std::size_t t = 0; t < k; ++t) {
    if (remaining < k - t) {
      throw InfeasibleError("greedy_node_weight: only " + std::to_string(remaining) + " nodes left for " +
                            std::to_string(k - t) + " picks");
    }
    Node best = n;
    for (Node v = 0; v < n; ++v) {
      if (alive[v] && (best == n || weights[v] > weights[best])) best = v;
    }
    card.push_back(best);
    for (Node v = 0; v < n; ++v) {
      if (alive[v] && (v == best || !graph.adjacent(best, v))) {
        alive[v] = false;
        --remaining;
      }
    }
  }
  return card;
}

double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(r);
}

Card brute_force_best_card(const ConstraintGraph& graph, const CardScore& score, std::size_t k) {
  const std::size_t n = graph.size();
  if (k == 0 || k > n) throw ContractViolation("brute_force_best_card: need 0 < K <= N");
  if (binomial(n, k) > kMaxEnumeration) throw ContractViolation("brute_force_best_card: C(N, K) exceeds 1e6");
  Card current;
  Card best;
  double best_score = -std::numeric_limits<double>::infinity();
  // Depth-first over ascending node lists, extending only by adjacent nodes.
  std::function<void(Node)> extend = [&](Node from) {
    if (current.size() == k) {
      const double s = score(current);
      if (best.empty() || s > best_score) {
        best_score = s;
        best = current;
      }
      return;
    }
    for (Node v = from; v + (k - current.size()) <= n; ++v) {
      bool ok = std::all_of(current.begin(), current.end(), [&](Node c) { return graph.adjacent(c, v); });
      if (!ok) continue;
      current.push_back(v);
      extend(v + 1);
      current.pop_back();
    }
  };
  extend(0);
  if (best.empty()) throw InfeasibleError("brute_force_best_card: graph has no clique of size " + std::to_string(k));
  return best;
}

}  // namespace exactk::graph
