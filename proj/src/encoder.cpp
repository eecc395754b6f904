#include "copyrefine/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace copyrefine {

namespace {

int element_slot(Element e) {
  switch (e) {
    case Element::B:
      return 0;
    case Element::C:
      return 1;
    case Element::N:
      return 2;
    case Element::O:
      return 3;
    case Element::F:
      return 4;
    case Element::P:
      return 5;
    case Element::S:
      return 6;
    case Element::Cl:
      return 7;
    case Element::Br:
      return 8;
    case Element::I:
      return 9;
  }
  return 0;
}

}  // namespace

Tensor atom_features(const MolecularGraph& g) {
  Tensor f(g.num_atoms(), kAtomFeatureWidth);
  for (int i = 0; i < g.num_atoms(); ++i) {
    const Atom& a = g.atom(i);
    f.at(i, element_slot(a.element)) = 1.0;
    f.at(i, 10 + std::clamp(a.formal_charge, -2, 2) + 2) = 1.0;
    f.at(i, 15 + std::clamp(a.valence, 0, 6)) = 1.0;
    f.at(i, 22) = a.aromatic ? 1.0 : 0.0;
    f.at(i, 23 + std::clamp(a.explicit_hydrogens, 0, 4)) = 1.0;
  }
  return f;
}

Tensor bond_features(const MolecularGraph& g) {
  Tensor f(2 * g.num_bonds(), kBondFeatureWidth);
  for (int b = 0; b < g.num_bonds(); ++b) {
    const int slot = static_cast<int>(g.bond(b).order) - 1;
    for (int r : {2 * b, 2 * b + 1}) {
      f.at(r, slot) = 1.0;
      f.at(r, 4) = g.bond_in_ring(b) ? 1.0 : 0.0;
    }
  }
  return f;
}

MessageGraph message_graph(int num_nodes, const std::vector<std::pair<int, int>>& edges) {
  MessageGraph mg;
  mg.num_nodes = num_nodes;
  for (const auto& [a, b] : edges) {
    mg.directed.emplace_back(a, b);
    mg.directed.emplace_back(b, a);
  }
  mg.incoming.assign(static_cast<std::size_t>(num_nodes), {});
  for (int e = 0; e < static_cast<int>(mg.directed.size()); ++e) {
    mg.incoming[static_cast<std::size_t>(mg.directed[static_cast<std::size_t>(e)].second)].push_back(e);
  }
  mg.feeding.resize(mg.directed.size());
  for (std::size_t e = 0; e < mg.directed.size(); ++e) {
    const auto [u, v] = mg.directed[e];
    for (int in : mg.incoming[static_cast<std::size_t>(u)]) {
      if (mg.directed[static_cast<std::size_t>(in)].first != v) mg.feeding[e].push_back(in);
    }
  }
  return mg;
}

MessageGraph message_graph(const MolecularGraph& graph) {
  std::vector<std::pair<int, int>> edges;
  for (const auto& b : graph.bonds()) edges.emplace_back(b.begin, b.end);
  return message_graph(graph.num_atoms(), edges);
}

MessageGraph message_graph(const ScaffoldTree& tree) { return message_graph(tree.size(), tree.edges); }

MessagePassing::MessagePassing(ParameterSet& params, const std::string& name, int node_in, int edge_in, int dim,
                               int depth, std::mt19937_64& rng)
    : g1_(params, name + ".g1", node_in + edge_in + dim, dim, dim, Activation::Tanh, rng),
      g2_(params, name + ".g2", node_in + dim, dim, dim, Activation::Tanh, rng),
      dim_(dim),
      depth_(depth) {
  if (depth < 1) throw std::invalid_argument("message passing depth must be at least 1");
}

Var MessagePassing::operator()(Tape& t, Var node_features, Var edge_features, const MessageGraph& mg) const {
  const int m = static_cast<int>(mg.directed.size());
  Var messages = t.constant(Tensor(m, dim_));
  if (m > 0) {
    std::vector<int> sources;
    sources.reserve(static_cast<std::size_t>(m));
    for (const auto& [u, v] : mg.directed) sources.push_back(u);
    const Var source_features = gather_rows(t, node_features, sources);
    for (int round = 0; round < depth_; ++round) {
      const Var incoming = gather_sum(t, messages, mg.feeding);
      messages = g1_(t, concat_cols(t, {source_features, edge_features, incoming}));
    }
  }
  const Var gathered = gather_sum(t, messages, mg.incoming);
  return g2_(t, concat_cols(t, {node_features, gathered}));
}

GraphEncoder::GraphEncoder(ParameterSet& params, const std::string& name, int dim, int depth, std::mt19937_64& rng,
                           bool marks)
    : mpn_(params, name, kAtomFeatureWidth + (marks ? 1 : 0), kBondFeatureWidth, dim, depth, rng), marks_(marks) {}

Var GraphEncoder::operator()(Tape& t, const MolecularGraph& graph) const { return (*this)(t, graph, {}); }

Var GraphEncoder::operator()(Tape& t, const MolecularGraph& graph, const std::vector<int>& marked) const {
  Tensor features = atom_features(graph);
  if (marks_) {
    Tensor wide(features.rows, kAtomFeatureWidth + 1);
    for (int i = 0; i < features.rows; ++i) {
      for (int j = 0; j < kAtomFeatureWidth; ++j) wide.at(i, j) = features.at(i, j);
    }
    for (int a : marked) wide.at(a, kAtomFeatureWidth) = 1.0;
    features = std::move(wide);
  } else if (!marked.empty()) {
    throw std::invalid_argument("encoder was built without atom marks");
  }
  return mpn_(t, t.constant(std::move(features)), t.constant(bond_features(graph)), message_graph(graph));
}

TreeEncoder::TreeEncoder(ParameterSet& params, const std::string& name, int vocab_size, int dim, int depth,
                         std::mt19937_64& rng)
    : vocab_size_(vocab_size) {
  embedding_ = &params.add_uniform(name + ".embedding", vocab_size + 1, dim, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
  mpn_ = MessagePassing(params, name, dim, kTreeEdgeFeatureWidth, dim, depth, rng);
}

Var TreeEncoder::operator()(Tape& t, const ScaffoldTree& tree) const {
  std::vector<int> ids;
  for (const auto& n : tree.nodes) {
    if (n.id < 0 || n.id > vocab_size_) throw std::invalid_argument("tree node id not assigned");
    ids.push_back(n.id);
  }
  const Var features = gather_rows(t, t.param(*embedding_), ids);
  const MessageGraph mg = message_graph(tree);
  const Var edges = t.constant(Tensor(static_cast<int>(mg.directed.size()), kTreeEdgeFeatureWidth, 1.0));
  return mpn_(t, features, edges, mg);
}

Var global_embedding(Tape& t, Var tree_embeddings, Var graph_embeddings) {
  if (t.rows(tree_embeddings) == 0 || t.rows(graph_embeddings) == 0) throw EmptySetError("empty embedding set");
  return concat_cols(t, {mean_rows(t, tree_embeddings), mean_rows(t, graph_embeddings)});
}

}  // namespace copyrefine
