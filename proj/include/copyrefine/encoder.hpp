#pragma once

#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "copyrefine/molgraph.hpp"
#include "copyrefine/nn.hpp"
#include "copyrefine/scaffold.hpp"
#include "copyrefine/tensor.hpp"

namespace copyrefine {

class EmptySetError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Atom features: element one-hot (10), formal charge one-hot -2..+2 (5),
/// valence one-hot 0..6 (7), aromatic flag (1), hydrogen count one-hot 0..4 (5).
inline constexpr int kAtomFeatureWidth = 28;
/// Bond features: order one-hot single/double/triple/aromatic (4), in-ring flag (1).
inline constexpr int kBondFeatureWidth = 5;
/// Tree edges carry one constant feature.
inline constexpr int kTreeEdgeFeatureWidth = 1;

Tensor atom_features(const MolecularGraph& graph);
/// One row per directed edge in message_graph(...) order.
Tensor bond_features(const MolecularGraph& graph);

/// Directed-edge bookkeeping for message passing. Undirected edge k becomes
/// directed edges 2k (a->b) and 2k+1 (b->a).
struct MessageGraph {
  int num_nodes = 0;
  std::vector<std::pair<int, int>> directed;
  /// For edge u->v: edges w->u with w != v.
  std::vector<std::vector<int>> feeding;
  /// For node u: all edges v->u.
  std::vector<std::vector<int>> incoming;
};

MessageGraph message_graph(int num_nodes, const std::vector<std::pair<int, int>>& edges);
MessageGraph message_graph(const MolecularGraph& graph);
MessageGraph message_graph(const ScaffoldTree& tree);

/// v_uv = g1([f_u, f_uv, sum of v_wu over w in N(u) \ v]) for `depth` rounds from zero,
/// then x_u = g2([f_u, sum of v_vu over v in N(u)]).
class MessagePassing {
 public:
  MessagePassing() = default;
  MessagePassing(ParameterSet& params, const std::string& name, int node_in, int edge_in, int dim, int depth,
                 std::mt19937_64& rng);

  /// node_features: n x node_in; edge_features: one row per directed edge.
  Var operator()(Tape& t, Var node_features, Var edge_features, const MessageGraph& mg) const;
  int dim() const { return dim_; }
  int depth() const { return depth_; }

 private:
  FeedForward g1_;
  FeedForward g2_;
  int dim_ = 0;
  int depth_ = 0;
};

class GraphEncoder {
 public:
  GraphEncoder() = default;
  /// With `marks`, atoms carry one extra feature flagging a chosen subset.
  GraphEncoder(ParameterSet& params, const std::string& name, int dim, int depth, std::mt19937_64& rng,
               bool marks = false);
  /// n_atoms x dim embeddings.
  Var operator()(Tape& t, const MolecularGraph& graph) const;
  Var operator()(Tape& t, const MolecularGraph& graph, const std::vector<int>& marked) const;

 private:
  MessagePassing mpn_;
  bool marks_ = false;
};

class TreeEncoder {
 public:
  TreeEncoder() = default;
  /// vocab_size excludes the UNK slot, which gets its own row.
  TreeEncoder(ParameterSet& params, const std::string& name, int vocab_size, int dim, int depth, std::mt19937_64& rng);
  /// n_nodes x dim embeddings; node ids must be assigned.
  Var operator()(Tape& t, const ScaffoldTree& tree) const;

 private:
  Parameter* embedding_ = nullptr;
  MessagePassing mpn_;
  int vocab_size_ = 0;
};

/// z = [mean of tree embeddings, mean of graph embeddings] as a 1 x 2d row.
Var global_embedding(Tape& t, Var tree_embeddings, Var graph_embeddings);

}  // namespace copyrefine
