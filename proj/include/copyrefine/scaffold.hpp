#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "copyrefine/molgraph.hpp"

namespace copyrefine {

class DecompositionError : public MoleculeError {
 public:
  using MoleculeError::MoleculeError;
};

enum class SubstructureKind { Ring, Bond, Atom };

std::string_view kind_name(SubstructureKind kind);

struct TreeNode {
  /// Vocabulary id; -1 until assign_ids runs, Vocabulary::unk_id() when unknown.
  int id = -1;
  std::string key;
  SubstructureKind kind = SubstructureKind::Atom;
  /// Sorted atom indices into the source graph (empty for decoded trees).
  std::vector<int> atoms;
};

struct ScaffoldTree {
  std::vector<TreeNode> nodes;
  std::vector<std::pair<int, int>> edges;

  int size() const { return static_cast<int>(nodes.size()); }
  std::vector<std::vector<int>> adjacency() const;
};

/// Induced fragment on `atoms` (fragment atom i is source atom atoms[i]).
/// Hydrogens are dropped except on aromatic heteroatoms that carry them, so
/// equal fragments give equal keys regardless of their surroundings.
MolecularGraph fragment_graph(const MolecularGraph& graph, const std::vector<int>& atoms);
SubstructureKind fragment_kind(const MolecularGraph& fragment);

ScaffoldTree decompose(const MolecularGraph& graph);

/// Rebuilds a molecule by gluing the tree's fragments on their shared atoms.
MolecularGraph glue_fragments(const MolecularGraph& graph, const ScaffoldTree& tree);

/// Index of the node holding atom 0 (the lowest such node index).
int root_node(const ScaffoldTree& tree);

struct DfsStep {
  int from;
  int to;
  bool expand;

  bool operator==(const DfsStep&) const = default;
};

/// Children visited by ascending vocabulary id, ties by smallest atom index.
std::vector<DfsStep> dfs_order(const ScaffoldTree& tree, int root);

class Vocabulary {
 public:
  Vocabulary() = default;
  /// Entries are (key, frequency); ids follow the given order.
  explicit Vocabulary(std::vector<std::pair<std::string, long>> entries);

  int size() const { return static_cast<int>(keys_.size()); }
  int unk_id() const { return size(); }
  const std::string& key(int id) const;
  long frequency(int id) const;
  SubstructureKind kind(int id) const;
  const MolecularGraph& fragment(int id) const;
  /// unk_id() for keys not in the vocabulary.
  int id_of(const std::string& key) const;
  bool contains(const std::string& key) const { return index_.count(key) > 0; }

  void save(std::ostream& out) const;
  void save(const std::string& path) const;
  static Vocabulary load(std::istream& in);
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> keys_;
  std::vector<long> frequency_;
  std::vector<MolecularGraph> fragments_;
  std::vector<SubstructureKind> kinds_;
  std::map<std::string, int> index_;
};

/// Keys sorted lexicographically; frequency counts node occurrences.
Vocabulary build_vocabulary(const std::vector<MolecularGraph>& corpus);
Vocabulary build_vocabulary_from_trees(const std::vector<ScaffoldTree>& trees);

void assign_ids(ScaffoldTree& tree, const Vocabulary& vocab);
bool has_unknown(const ScaffoldTree& tree, const Vocabulary& vocab);

enum class FrequencyClass { Frequent, Infrequent };
inline constexpr long kInfrequentThreshold = 2000;

/// The UNK id counts as frequency 0. Throws std::out_of_range above it.
FrequencyClass classify_frequency(const Vocabulary& vocab, int id, long threshold = kInfrequentThreshold);

struct StableNoveltyStats {
  double pct_original = 0.0;
  double pct_with_novel = 0.0;
};

/// Pairs are (input tree, target tree); substructures are compared by key.
StableNoveltyStats stable_novelty_stats(const std::vector<std::pair<ScaffoldTree, ScaffoldTree>>& pairs);

}  // namespace copyrefine
