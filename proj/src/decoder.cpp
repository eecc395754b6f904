#include "copyrefine/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace copyrefine {

namespace {

std::vector<double> row_values(const Tensor& t) { return t.data; }

Var sum_or_zero(Tape& t, const std::vector<Var>& xs, int dim) {
  if (xs.empty()) return t.constant(Tensor(1, dim));
  Var s = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) s = add(t, s, xs[i]);
  return s;
}

// Row-vector attention weights of a 1 x d query against an n x d set.
Var attend(Tape& t, Var query, Var set) {
  if (t.rows(set) == 0) throw EmptySetError("attention over an empty set");
  return softmax(t, transpose(t, matmul(t, set, transpose(t, query))));
}

}  // namespace

Attention attention_context(Tape& t, Var query, Var tree_embeddings, Var graph_embeddings) {
  Attention out;
  out.tree_weights = attend(t, query, tree_embeddings);
  out.graph_weights = attend(t, query, graph_embeddings);
  out.context = concat_cols(t, {matmul(t, out.tree_weights, tree_embeddings), matmul(t, out.graph_weights, graph_embeddings)});
  return out;
}

Var topo_logit(Tape& t, const CoreModel& model, const Encoding& enc, Var node_embedding, Var h_sum) {
  const Var state = concat_cols(t, {node_embedding, h_sum});
  const Var tree_w = attend(t, matmul(t, state, t.param(model.topo_query_tree())), enc.tree);
  const Var graph_w = attend(t, matmul(t, state, t.param(model.topo_query_graph())), enc.graph);
  const Var context = concat_cols(t, {matmul(t, tree_w, enc.tree), matmul(t, graph_w, enc.graph)});
  return model.topo_head().logits(t, concat_cols(t, {state, context}));
}

Var topo_probability(Tape& t, const CoreModel& model, const Encoding& enc, Var node_embedding, Var h_sum) {
  return sigmoid(t, topo_logit(t, model, enc, node_embedding, h_sum));
}

Var substructure_distribution(Tape& t, const CoreModel& model, Var h, Var context) {
  return model.substructure_head()(t, concat_cols(t, {h, context}));
}

Var ooi_weight(Tape& t, const CoreModel& model, Var context, Var z) {
  return model.ooi_head()(t, concat_cols(t, {context, z}));
}

Var copy_vector(Tape& t, Var tree_weights, const std::vector<int>& ids, int vocab_size, Var fallback) {
  if (static_cast<int>(ids.size()) != t.cols(tree_weights)) throw ShapeMismatchError("copy vector id count");
  std::vector<int> columns, known;
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] >= 0 && ids[j] < vocab_size) {
      columns.push_back(static_cast<int>(j));
      known.push_back(ids[j]);
    }
  }
  if (known.empty()) return fallback;
  if (known.size() == ids.size()) return scatter_cols(t, tree_weights, ids, vocab_size);
  const Var kept = transpose(t, gather_rows(t, transpose(t, tree_weights), columns));
  return mul_scalar(t, scatter_cols(t, kept, known, vocab_size), reciprocal(t, sum(t, kept)));
}

std::vector<double> copy_vector(const std::vector<int>& ids, const std::vector<double>& tree_weights, int vocab_size) {
  if (ids.size() != tree_weights.size()) throw ShapeMismatchError("copy vector id count");
  std::vector<double> a(static_cast<std::size_t>(vocab_size), 0.0);
  double mass = 0.0;
  bool dropped = false;
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < 0 || ids[j] >= vocab_size) {
      dropped = true;
      continue;
    }
    a[static_cast<std::size_t>(ids[j])] += tree_weights[j];
    mass += tree_weights[j];
  }
  if (dropped && mass > 0.0) {
    for (auto& x : a) x *= 1.0 / mass;
  }
  return a;
}

Var hybrid_distribution(Tape& t, Var w, Var q, Var a) {
  if (t.rows(w) != 1 || t.cols(w) != 1) throw ShapeMismatchError("hybrid weight must be 1x1");
  return add(t, mul_scalar(t, q, w), mul_scalar(t, a, affine(t, w, -1.0, 1.0)));
}

std::vector<double> hybrid_distribution(double w, const std::vector<double>& q, const std::vector<double>& a) {
  if (q.size() != a.size()) throw ShapeMismatchError("hybrid inputs differ in length");
  std::vector<double> out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = q[i] * w + a[i] * (-w + 1.0);
  return out;
}

SubstructureStep substructure_step(Tape& t, const CoreModel& model, const Encoding& enc, Var h,
                                   std::optional<double> force_w) {
  SubstructureStep s;
  s.attention = attention_context(t, h, enc.tree, enc.graph);
  s.q = substructure_distribution(t, model, h, s.attention.context);
  s.w = force_w ? t.constant(Tensor(1, 1, *force_w)) : ooi_weight(t, model, s.attention.context, enc.z);
  s.a = copy_vector(t, s.attention.tree_weights, enc.ids, model.vocab_size(), s.q);
  s.q_tilde = hybrid_distribution(t, s.w, s.q, s.a);
  return s;
}

namespace {

class TreeDecoder {
 public:
  TreeDecoder(const CoreModel& model, const MolecularGraph& x, const ScaffoldTree& x_tree, const DecodeOptions& opt)
      : model_(model), opt_(opt), rng_(opt.seed), enc_(encode(t_, model, x, x_tree)) {
    embedding_ = t_.param(model.decoder_embedding());
  }

  DecodeTrace run() {
    const int d = model_.dim();
    const auto root = predict(t_.param(model_.root_state()), -1, 0);
    add_node(*root, -1);
    int cur = 0;
    while (true) {
      const std::vector<Var> incoming = messages_into(cur, -1);
      const Var f = embed(cur);
      const double p = t_.scalar(topo_probability(t_, model_, enc_, f, sum_or_zero(t_, incoming, d)));
      const bool expand = opt_.sample ? uniform01(rng_) < p : p >= 0.5;
      DecoderStep step;
      step.kind = DecoderStep::Kind::Topo;
      step.node = cur;
      step.incoming = static_cast<int>(incoming.size());
      step.p = p;
      step.expand = expand;
      const std::size_t topo_index = trace_.steps.size();
      trace_.steps.push_back(std::move(step));
      if (expand) {
        if (static_cast<int>(trace_.tree.nodes.size()) >= opt_.budget) {
          trace_.budget_exceeded = true;
          break;
        }
        const Var h = model_.gru()(t_, f, incoming);
        const auto child = predict(h, cur, static_cast<int>(incoming.size()));
        if (child) {
          add_node(*child, cur);
          const int j = static_cast<int>(trace_.tree.nodes.size()) - 1;
          messages_[{cur, j}] = h;
          cur = j;
          continue;
        }
        trace_.steps[topo_index].expand = false;  // nothing attachable
      }
      if (cur == 0) break;
      const int up = trace_.parent[static_cast<std::size_t>(cur)];
      messages_[{cur, up}] = model_.gru()(t_, f, messages_into(cur, up));
      cur = up;
    }
    return std::move(trace_);
  }

 private:
  Var embed(int node) {
    return gather_rows(t_, embedding_, {trace_.tree.nodes[static_cast<std::size_t>(node)].id});
  }

  std::vector<Var> messages_into(int node, int except) const {
    std::vector<Var> out;
    for (const auto& [edge, h] : messages_) {
      if (edge.second == node && edge.first != except) out.push_back(h);
    }
    return out;
  }

  // Substructure choice for a new child of `parent` (-1 for the root).
  std::optional<int> predict(Var h, int parent, int incoming) {
    const SubstructureStep s = substructure_step(t_, model_, enc_, h, opt_.force_w);
    DecoderStep step;
    step.kind = DecoderStep::Kind::Substructure;
    step.node = parent;
    step.incoming = incoming;
    step.h = row_values(t_.value(h));
    step.context = row_values(t_.value(s.attention.context));
    step.alpha_tree = row_values(t_.value(s.attention.tree_weights));
    step.alpha_graph = row_values(t_.value(s.attention.graph_weights));
    step.w = t_.scalar(s.w);
    step.q = row_values(t_.value(s.q));
    step.a = row_values(t_.value(s.a));
    step.q_tilde = row_values(t_.value(s.q_tilde));

    std::vector<double> dist = step.q_tilde;
    if (parent >= 0) {
      const int pid = trace_.tree.nodes[static_cast<std::size_t>(parent)].id;
      for (int j = 0; j < static_cast<int>(dist.size()); ++j) {
        if (dist[static_cast<std::size_t>(j)] > 0.0 && !model_.attachable(pid, j)) dist[static_cast<std::size_t>(j)] = 0.0;
      }
    }
    std::optional<int> choice;
    if (opt_.sample) {
      double total = 0.0;
      for (auto& v : dist) {
        if (v > 0.0) v = opt_.temperature == 1.0 ? v : std::pow(v, 1.0 / opt_.temperature);
        total += v;
      }
      if (total > 0.0) {
        const double u = uniform01(rng_) * total;
        double acc = 0.0;
        for (int j = 0; j < static_cast<int>(dist.size()); ++j) {
          if (dist[static_cast<std::size_t>(j)] <= 0.0) continue;
          acc += dist[static_cast<std::size_t>(j)];
          choice = j;
          if (u < acc) break;
        }
      }
    } else {
      for (int j = 0; j < static_cast<int>(dist.size()); ++j) {
        if (dist[static_cast<std::size_t>(j)] > 0.0 && (!choice || dist[static_cast<std::size_t>(j)] > dist[static_cast<std::size_t>(*choice)])) {
          choice = j;
        }
      }
    }
    step.choice = choice.value_or(-1);
    pending_context_ = t_.value(s.attention.context);
    trace_.steps.push_back(std::move(step));
    return choice;
  }

  void add_node(int id, int parent) {
    TreeNode node;
    node.id = id;
    node.key = model_.vocab().key(id);
    node.kind = model_.vocab().kind(id);
    trace_.tree.nodes.push_back(std::move(node));
    trace_.parent.push_back(parent);
    trace_.node_context.push_back(pending_context_);
    if (parent >= 0) trace_.tree.edges.emplace_back(parent, static_cast<int>(trace_.tree.nodes.size()) - 1);
  }

  const CoreModel& model_;
  const DecodeOptions& opt_;
  std::mt19937_64 rng_;
  Tape t_;
  Encoding enc_;
  Var embedding_;
  std::map<std::pair<int, int>, Var> messages_;
  Tensor pending_context_;
  DecodeTrace trace_;
};

}  // namespace

DecodeTrace decode_tree(const CoreModel& model, const MolecularGraph& x, const ScaffoldTree& x_tree,
                        const DecodeOptions& options) {
  if (options.budget < 1) throw std::invalid_argument("decode budget must be at least 1");
  if (!(options.temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  return TreeDecoder(model, x, x_tree, options).run();
}

CandidateGraph candidate_graph(const AssemblyCandidate& candidate) {
  std::vector<int> marked = candidate.child_atoms;
  std::sort(marked.begin(), marked.end());
  return {candidate.state.graph(), std::move(marked)};
}

Var candidate_scores(Tape& t, const CoreModel& model, const std::vector<CandidateGraph>& candidates, Var context) {
  if (candidates.empty()) throw std::invalid_argument("no candidates to score");
  const Var projected = matmul(t, context, t.param(model.assembly_projection()));
  std::vector<Var> scores;
  for (const auto& c : candidates) {
    scores.push_back(dot(t, mean_rows(t, model.assembly_encoder()(t, c.graph, c.marked)), projected));
  }
  return transpose(t, stack_rows(t, scores));
}

AssemblyResult assemble_graph(const CoreModel& model, const DecodeTrace& trace) {
  const auto& nodes = trace.tree.nodes;
  if (nodes.empty()) throw AssemblyError("empty tree");
  const int n = static_cast<int>(nodes.size());
  AssemblyResult result;
  result.scores.resize(static_cast<std::size_t>(n));
  PartialMolecule state = start_assembly(n, 0, model.vocab().fragment(nodes[0].id));
  for (int k = 1; k < n; ++k) {
    std::vector<AssemblyCandidate> cands;
    try {
      cands = enumerate_attachments(state, trace.parent[static_cast<std::size_t>(k)], k,
                                    model.vocab().fragment(nodes[static_cast<std::size_t>(k)].id));
    } catch (const NoValidAttachmentError& e) {
      throw AssemblyError("node " + std::to_string(k) + ": " + e.what());
    }
    std::size_t best = 0;
    if (cands.size() > 1) {
      Tape t;
      std::vector<CandidateGraph> graphs;
      for (const auto& c : cands) graphs.push_back(candidate_graph(c));
      const Tensor s = t.value(candidate_scores(t, model, graphs, t.constant(trace.node_context[static_cast<std::size_t>(k)])));
      result.scores[static_cast<std::size_t>(k)] = s.data;
      for (std::size_t i = 1; i < s.data.size(); ++i) {
        if (s.data[i] > s.data[best]) best = i;
      }
    }
    state = std::move(cands[best].state);
  }
  result.molecule = finalize(state);
  return result;
}

Translation translate(const CoreModel& model, const MolecularGraph& x, const DecodeOptions& options) {
  Translation out;
  out.trace = decode_tree(model, x, model.tree_of(x), options);
  try {
    out.molecule = assemble_graph(model, out.trace).molecule;
  } catch (const MoleculeError& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace copyrefine
