#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "copyrefine/assembly.hpp"
#include "copyrefine/model.hpp"

namespace copyrefine {

struct Attention {
  Var tree_weights;   // 1 x |tree|
  Var graph_weights;  // 1 x |graph|
  Var context;        // 1 x 2d
};

/// Dot-product attention of `query` (1 x d) over both embedding sets.
Attention attention_context(Tape& t, Var query, Var tree_embeddings, Var graph_embeddings);

/// Expansion logit for node embedding f (1 x d) with summed incoming messages.
Var topo_logit(Tape& t, const CoreModel& model, const Encoding& enc, Var node_embedding, Var h_sum);
Var topo_probability(Tape& t, const CoreModel& model, const Encoding& enc, Var node_embedding, Var h_sum);

Var substructure_distribution(Tape& t, const CoreModel& model, Var h, Var context);
Var ooi_weight(Tape& t, const CoreModel& model, Var context, Var z);

/// Scatter-adds tree attention onto vocabulary ids. Nodes with the UNK id are
/// dropped and the rest renormalised; with no known node the result is `fallback`.
Var copy_vector(Tape& t, Var tree_weights, const std::vector<int>& ids, int vocab_size, Var fallback);
std::vector<double> copy_vector(const std::vector<int>& ids, const std::vector<double>& tree_weights, int vocab_size);

Var hybrid_distribution(Tape& t, Var w, Var q, Var a);
std::vector<double> hybrid_distribution(double w, const std::vector<double>& q, const std::vector<double>& a);

struct SubstructureStep {
  Attention attention;
  Var q;
  Var w;
  Var a;
  Var q_tilde;
};

/// From a message h to the hybrid distribution; `force_w` pins w.
SubstructureStep substructure_step(Tape& t, const CoreModel& model, const Encoding& enc, Var h,
                                   std::optional<double> force_w = std::nullopt);

struct DecoderStep {
  enum class Kind { Topo, Substructure };
  Kind kind = Kind::Topo;
  /// Node the decision is made at; for substructure steps the parent (-1 at the root).
  int node = -1;
  int incoming = 0;
  // topo fields
  double p = 0.0;
  bool expand = false;
  // substructure fields
  std::vector<double> h;
  std::vector<double> context;
  std::vector<double> alpha_tree;
  std::vector<double> alpha_graph;
  double w = 0.0;
  std::vector<double> q;
  std::vector<double> a;
  std::vector<double> q_tilde;
  int choice = -1;
};

struct DecodeOptions {
  bool sample = false;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  int budget = 50;
  std::optional<double> force_w;
};

struct DecodeTrace {
  std::vector<DecoderStep> steps;
  /// Nodes in creation order; node 0 is the root. Node atoms are empty.
  ScaffoldTree tree;
  std::vector<int> parent;
  /// Attention context (1 x 2d) at the step that created each node.
  std::vector<Tensor> node_context;
  bool budget_exceeded = false;
  std::string terminated_by() const { return budget_exceeded ? "budget" : "root_backtrack"; }
};

DecodeTrace decode_tree(const CoreModel& model, const MolecularGraph& x, const ScaffoldTree& x_tree,
                        const DecodeOptions& options = {});

/// A candidate as the scorer sees it: the partial graph with the new node's atoms flagged.
struct CandidateGraph {
  MolecularGraph graph;
  std::vector<int> marked;
};

CandidateGraph candidate_graph(const AssemblyCandidate& candidate);

/// 1 x k scores h_{G_i} . (W c) for candidate states under context c (1 x 2d).
Var candidate_scores(Tape& t, const CoreModel& model, const std::vector<CandidateGraph>& candidates, Var context);

struct AssemblyResult {
  MolecularGraph molecule;
  std::vector<std::vector<double>> scores;
};

/// Greedy assembly in creation order. Throws AssemblyError when a node cannot attach.
AssemblyResult assemble_graph(const CoreModel& model, const DecodeTrace& trace);

struct Translation {
  DecodeTrace trace;
  std::optional<MolecularGraph> molecule;
  std::string error;
};

/// Encode, decode and assemble one input.
Translation translate(const CoreModel& model, const MolecularGraph& x, const DecodeOptions& options = {});

}  // namespace copyrefine
