#pragma once

#include <string>
#include <vector>

#include "copyrefine/molgraph.hpp"
#include "copyrefine/scaffold.hpp"

namespace copyrefine {

class NoValidAttachmentError : public MoleculeError {
 public:
  using MoleculeError::MoleculeError;
};

class AssemblyError : public MoleculeError {
 public:
  using MoleculeError::MoleculeError;
};

inline constexpr int kCandidateCap = 200;

/// A molecule under construction. Atom hydrogens are only meaningful when
/// fixed (aromatic heteroatoms); everything else is filled in by finalize().
struct PartialMolecule {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  /// Atom indices per tree node; empty for nodes not yet placed.
  std::vector<std::vector<int>> node_atoms;

  MolecularGraph graph() const;
};

struct AssemblyCandidate {
  PartialMolecule state;
  /// Fragment atom i of the child sits at state atom child_atoms[i].
  std::vector<int> child_atoms;
  /// Canonical key including which tree nodes own each atom.
  std::string key;
};

PartialMolecule start_assembly(int num_nodes, int root, const MolecularGraph& root_fragment);

/// Every distinct way to place `child_fragment` as tree node `child` next to the
/// already-placed node `parent`: one shared atom, or for ring pairs a shared bond.
/// Atoms must agree on element, charge, aromaticity and fixed hydrogens, and no atom
/// may exceed its valence. Candidates equal up to symmetry are merged; at most `cap`
/// are returned in a deterministic order. Throws NoValidAttachmentError when none exist.
std::vector<AssemblyCandidate> enumerate_attachments(const PartialMolecule& state, int parent, int child,
                                                     const MolecularGraph& child_fragment, int cap = kCandidateCap);

/// Attachment count ignoring the cap, before symmetry merging.
int count_raw_attachments(const PartialMolecule& state, int parent, const MolecularGraph& child_fragment);

/// True when child can be placed next to parent when the parent stands alone.
bool can_attach(const MolecularGraph& parent_fragment, const MolecularGraph& child_fragment);

std::string assembly_key(const PartialMolecule& state);

/// State holding exactly the given tree nodes of a known molecule, as the
/// teacher-forced assembly would have built it.
PartialMolecule gold_state(const MolecularGraph& molecule, const ScaffoldTree& tree, const std::vector<int>& placed);

/// Fills hydrogens and validates; throws AssemblyError for unrealizable results
/// such as aromatic atoms outside any ring.
MolecularGraph finalize(const PartialMolecule& state);

}  // namespace copyrefine
