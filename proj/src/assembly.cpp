#include "copyrefine/assembly.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <unordered_set>

namespace copyrefine {

namespace {

Atom normalized(Atom a) {
  a.valence = 0;
  if (!a.fixed_hydrogens) a.explicit_hydrogens = 0;
  return a;
}

bool compatible(const Atom& a, const Atom& b) {
  if (a.element != b.element || a.formal_charge != b.formal_charge || a.aromatic != b.aromatic) return false;
  if (a.fixed_hydrogens != b.fixed_hydrogens) return false;
  return !a.fixed_hydrogens || a.explicit_hydrogens == b.explicit_hydrogens;
}

int find_bond(const std::vector<Bond>& bonds, int u, int v) {
  for (std::size_t i = 0; i < bonds.size(); ++i) {
    const Bond& b = bonds[i];
    if ((b.begin == u && b.end == v) || (b.begin == v && b.end == u)) return static_cast<int>(i);
  }
  return -1;
}

// FNV-1a over the owning node indices, folded to a positive int.
int ownership_mark(const std::vector<int>& nodes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (int n : nodes) {
    for (int k = 0; k < 4; ++k) {
      h ^= static_cast<std::uint64_t>((static_cast<unsigned>(n) >> (8 * k)) & 0xFFU);
      h *= 1099511628211ULL;
    }
    h ^= 0xFFU;
    h *= 1099511628211ULL;
  }
  return static_cast<int>(h & 0x3FFFFFFFULL);
}

struct Mapping {
  // child fragment atom -> existing state atom, or -1 for a new atom
  std::vector<int> fixed;
};

std::optional<AssemblyCandidate> apply(const PartialMolecule& state, int child, const MolecularGraph& frag,
                                       const Mapping& m) {
  AssemblyCandidate c;
  c.state = state;
  auto& s = c.state;
  c.child_atoms.resize(static_cast<std::size_t>(frag.num_atoms()));
  for (int i = 0; i < frag.num_atoms(); ++i) {
    int at = m.fixed[static_cast<std::size_t>(i)];
    if (at < 0) {
      at = static_cast<int>(s.atoms.size());
      s.atoms.push_back(normalized(frag.atom(i)));
    }
    c.child_atoms[static_cast<std::size_t>(i)] = at;
  }
  for (const auto& b : frag.bonds()) {
    const int u = c.child_atoms[static_cast<std::size_t>(b.begin)];
    const int v = c.child_atoms[static_cast<std::size_t>(b.end)];
    const int existing = find_bond(s.bonds, u, v);
    if (existing >= 0) {
      if (s.bonds[static_cast<std::size_t>(existing)].order != b.order) return std::nullopt;
      continue;
    }
    s.bonds.push_back({u, v, b.order});
  }
  std::vector<int> owned = c.child_atoms;
  std::sort(owned.begin(), owned.end());
  s.node_atoms[static_cast<std::size_t>(child)] = std::move(owned);
  try {
    MolecularGraph(s.atoms, s.bonds, {.require_connected = true, .check_valence = true});
  } catch (const MoleculeError&) {
    return std::nullopt;
  }
  return c;
}

std::vector<Mapping> raw_mappings(const PartialMolecule& state, int parent, const MolecularGraph& frag) {
  const auto& anchors = state.node_atoms.at(static_cast<std::size_t>(parent));
  if (anchors.empty()) throw std::invalid_argument("parent node has not been placed");
  const auto blank = std::vector<int>(static_cast<std::size_t>(frag.num_atoms()), -1);
  std::vector<Mapping> out;
  for (int c = 0; c < frag.num_atoms(); ++c) {
    for (int p : anchors) {
      if (!compatible(frag.atom(c), state.atoms[static_cast<std::size_t>(p)])) continue;
      Mapping m{blank};
      m.fixed[static_cast<std::size_t>(c)] = p;
      out.push_back(std::move(m));
    }
  }
  if (frag.rings().empty() || anchors.size() < 3) return out;
  const std::set<int> anchor_set(anchors.begin(), anchors.end());
  for (int cb = 0; cb < frag.num_bonds(); ++cb) {
    if (!frag.bond_in_ring(cb)) continue;
    const Bond& fb = frag.bond(cb);
    for (const auto& sb : state.bonds) {
      if (sb.order != fb.order || !anchor_set.count(sb.begin) || !anchor_set.count(sb.end)) continue;
      for (const auto& [p1, p2] : {std::pair{sb.begin, sb.end}, std::pair{sb.end, sb.begin}}) {
        if (!compatible(frag.atom(fb.begin), state.atoms[static_cast<std::size_t>(p1)]) ||
            !compatible(frag.atom(fb.end), state.atoms[static_cast<std::size_t>(p2)])) {
          continue;
        }
        Mapping m{blank};
        m.fixed[static_cast<std::size_t>(fb.begin)] = p1;
        m.fixed[static_cast<std::size_t>(fb.end)] = p2;
        out.push_back(std::move(m));
      }
    }
  }
  return out;
}

}  // namespace

MolecularGraph PartialMolecule::graph() const {
  return MolecularGraph(atoms, bonds, {.require_connected = true, .check_valence = false});
}

PartialMolecule start_assembly(int num_nodes, int root, const MolecularGraph& root_fragment) {
  if (root < 0 || root >= num_nodes) throw std::out_of_range("root node out of range");
  PartialMolecule s;
  for (const auto& a : root_fragment.atoms()) s.atoms.push_back(normalized(a));
  s.bonds.assign(root_fragment.bonds().begin(), root_fragment.bonds().end());
  s.node_atoms.assign(static_cast<std::size_t>(num_nodes), {});
  for (int i = 0; i < root_fragment.num_atoms(); ++i) s.node_atoms[static_cast<std::size_t>(root)].push_back(i);
  return s;
}

std::string assembly_key(const PartialMolecule& state) {
  std::vector<std::vector<int>> owners(state.atoms.size());
  for (std::size_t n = 0; n < state.node_atoms.size(); ++n) {
    for (int a : state.node_atoms[n]) owners[static_cast<std::size_t>(a)].push_back(static_cast<int>(n));
  }
  WriteOptions options;
  options.canonical = true;
  for (const auto& o : owners) options.atom_marks.push_back(ownership_mark(o));
  return write_smiles(state.graph(), options);
}

int count_raw_attachments(const PartialMolecule& state, int parent, const MolecularGraph& child_fragment) {
  // a scratch node slot for the child
  PartialMolecule scratch = state;
  scratch.node_atoms.emplace_back();
  const int child = static_cast<int>(scratch.node_atoms.size()) - 1;
  int count = 0;
  for (const auto& m : raw_mappings(scratch, parent, child_fragment)) {
    if (apply(scratch, child, child_fragment, m)) ++count;
  }
  return count;
}

std::vector<AssemblyCandidate> enumerate_attachments(const PartialMolecule& state, int parent, int child,
                                                     const MolecularGraph& child_fragment, int cap) {
  if (child < 0 || child >= static_cast<int>(state.node_atoms.size())) throw std::out_of_range("child node out of range");
  if (!state.node_atoms[static_cast<std::size_t>(child)].empty()) throw std::invalid_argument("child already placed");
  std::vector<AssemblyCandidate> out;
  std::unordered_set<std::string> seen;
  for (const auto& m : raw_mappings(state, parent, child_fragment)) {
    auto c = apply(state, child, child_fragment, m);
    if (!c) continue;
    c->key = assembly_key(c->state);
    if (!seen.insert(c->key).second) continue;
    out.push_back(std::move(*c));
    if (static_cast<int>(out.size()) >= cap) break;
  }
  if (out.empty()) throw NoValidAttachmentError("no valid attachment for child fragment");
  return out;
}

bool can_attach(const MolecularGraph& parent_fragment, const MolecularGraph& child_fragment) {
  const PartialMolecule s = start_assembly(2, 0, parent_fragment);
  try {
    enumerate_attachments(s, 0, 1, child_fragment, 1);
  } catch (const NoValidAttachmentError&) {
    return false;
  }
  return true;
}

PartialMolecule gold_state(const MolecularGraph& molecule, const ScaffoldTree& tree, const std::vector<int>& placed) {
  std::set<int> atom_set;
  for (int n : placed) {
    const auto& atoms = tree.nodes.at(static_cast<std::size_t>(n)).atoms;
    atom_set.insert(atoms.begin(), atoms.end());
  }
  std::map<int, int> local;
  PartialMolecule s;
  for (int a : atom_set) {
    local[a] = static_cast<int>(s.atoms.size());
    Atom atom = molecule.atom(a);
    atom.fixed_hydrogens = atom.aromatic && atom.element != Element::C && atom.explicit_hydrogens > 0;
    s.atoms.push_back(normalized(atom));
  }
  s.node_atoms.assign(tree.nodes.size(), {});
  std::set<std::pair<int, int>> added;
  for (int n : placed) {
    const auto& atoms = tree.nodes[static_cast<std::size_t>(n)].atoms;
    const std::set<int> inside(atoms.begin(), atoms.end());
    for (int a : atoms) s.node_atoms[static_cast<std::size_t>(n)].push_back(local[a]);
    std::sort(s.node_atoms[static_cast<std::size_t>(n)].begin(), s.node_atoms[static_cast<std::size_t>(n)].end());
    for (const auto& b : molecule.bonds()) {
      if (!inside.count(b.begin) || !inside.count(b.end)) continue;
      const int u = local[b.begin], v = local[b.end];
      if (added.insert(std::minmax(u, v)).second) s.bonds.push_back({u, v, b.order});
    }
  }
  return s;
}

MolecularGraph finalize(const PartialMolecule& state) {
  MolecularGraph g;
  try {
    g = build_molecule(state.atoms, state.bonds);
  } catch (const MoleculeError& e) {
    throw AssemblyError(std::string("assembled molecule is invalid: ") + e.what());
  }
  for (int i = 0; i < g.num_atoms(); ++i) {
    if (g.atom(i).aromatic && !g.atom_in_ring(i)) throw AssemblyError("aromatic atom outside a ring");
  }
  for (int b = 0; b < g.num_bonds(); ++b) {
    if (g.bond(b).order == BondOrder::Aromatic && !g.bond_in_ring(b)) throw AssemblyError("aromatic bond outside a ring");
  }
  return g;
}

}  // namespace copyrefine
