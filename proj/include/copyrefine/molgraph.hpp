#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace copyrefine {

/// Base class for every molecule-level failure (parse, valence, size limits).
class MoleculeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SmilesSyntaxError : public MoleculeError {
 public:
  SmilesSyntaxError(const std::string& what, std::size_t position)
      : MoleculeError(what + " at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class ValenceError : public MoleculeError {
 public:
  using MoleculeError::MoleculeError;
};

class UnsupportedFeatureError : public MoleculeError {
 public:
  using MoleculeError::MoleculeError;
};

class SizeLimitError : public MoleculeError {
 public:
  using MoleculeError::MoleculeError;
};

enum class Element : std::uint8_t { B = 5, C = 6, N = 7, O = 8, F = 9, P = 15, S = 16, Cl = 17, Br = 35, I = 53 };

int atomic_number(Element e);
std::string_view element_symbol(Element e);
std::optional<Element> element_from_symbol(std::string_view symbol);
/// Average atomic mass in daltons.
double atomic_mass(Element e);
/// Allowed total valences for an element with the given formal charge, ascending.
/// Empty when the charge leaves no valid electron configuration.
std::vector<int> allowed_valences(Element e, int formal_charge);

enum class BondOrder : std::uint8_t { Single = 1, Double = 2, Triple = 3, Aromatic = 4 };

/// Integer contribution of a bond to atom valence (aromatic counts as 1; the
/// pi electron is handled per atom, see MolecularGraph::valence).
int bond_valence(BondOrder order);

struct Atom {
  Element element = Element::C;
  int formal_charge = 0;
  /// Total number of attached hydrogens.
  int explicit_hydrogens = 0;
  bool aromatic = false;
  /// True when the hydrogen count was stated (bracket atom) rather than derived.
  bool fixed_hydrogens = false;
  /// Computed by MolecularGraph: bond contributions plus hydrogens.
  int valence = 0;

  bool operator==(const Atom&) const = default;
};

struct Bond {
  int begin = 0;
  int end = 0;
  BondOrder order = BondOrder::Single;

  int other(int atom) const { return atom == begin ? end : begin; }
};

struct Neighbor {
  int atom;
  int bond;
};

struct GraphOptions {
  bool require_connected = true;
  bool check_valence = true;
};

/// Immutable molecular graph. Construction validates the bond list, computes
/// per-atom valence and perceives the smallest set of smallest rings.
class MolecularGraph {
 public:
  MolecularGraph() = default;
  MolecularGraph(std::vector<Atom> atoms, std::vector<Bond> bonds, GraphOptions options = {});

  int num_atoms() const { return static_cast<int>(atoms_.size()); }
  int num_bonds() const { return static_cast<int>(bonds_.size()); }
  const std::vector<Atom>& atoms() const { return atoms_; }
  const std::vector<Bond>& bonds() const { return bonds_; }
  const Atom& atom(int i) const { return atoms_[static_cast<std::size_t>(i)]; }
  const Bond& bond(int i) const { return bonds_[static_cast<std::size_t>(i)]; }
  std::span<const Neighbor> neighbors(int atom) const;
  int degree(int atom) const { return static_cast<int>(neighbors(atom).size()); }
  /// Bond index joining a and b, or -1.
  int bond_between(int a, int b) const;

  const std::vector<std::vector<int>>& rings() const { return rings_; }
  bool atom_in_ring(int atom) const { return atom_in_ring_[static_cast<std::size_t>(atom)]; }
  bool bond_in_ring(int bond) const { return bond_in_ring_[static_cast<std::size_t>(bond)]; }
  bool connected() const;

 private:
  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
  std::vector<std::vector<Neighbor>> adjacency_;
  std::vector<std::vector<int>> rings_;
  std::vector<bool> atom_in_ring_;
  std::vector<bool> bond_in_ring_;
};

/// Fills implicit hydrogens on atoms without fixed_hydrogens, then constructs.
MolecularGraph build_molecule(std::vector<Atom> atoms, std::vector<Bond> bonds, GraphOptions options = {});

/// Valence of atom i in the given bond environment: bond contributions, the
/// aromatic pi contribution for aromatic carbon, and attached hydrogens.
int compute_valence(const std::vector<Atom>& atoms, const std::vector<Bond>& bonds,
                    const std::vector<std::vector<Neighbor>>& adjacency, int i);

/// Hydrogen count an organic-subset atom receives when written without brackets.
/// Returns nullopt when no allowed valence fits.
std::optional<int> default_hydrogens(const std::vector<Atom>& atoms, const std::vector<Bond>& bonds,
                                     const std::vector<std::vector<Neighbor>>& adjacency, int i);

MolecularGraph parse_smiles(std::string_view text);

struct WriteOptions {
  /// Canonical atom ordering (isomorphic graphs give identical strings).
  bool canonical = false;
  /// Extra per-atom label folded into canonical invariants (e.g. attachment marks).
  std::vector<int> atom_marks;
};

std::string write_smiles(const MolecularGraph& graph, const WriteOptions& options = {});
/// Shorthand for write_smiles with canonical ordering.
std::string canonical_smiles(const MolecularGraph& graph);

/// Smallest set of smallest rings; each ring lists atoms in cycle order.
std::vector<std::vector<int>> perceive_rings(const MolecularGraph& graph);
std::vector<std::vector<int>> perceive_rings(int num_atoms, const std::vector<Bond>& bonds);

inline constexpr int kIsomorphismAtomCap = 60;

/// Atom bijection preserving element, charge, aromaticity, hydrogen count and
/// bond orders. Throws SizeLimitError above kIsomorphismAtomCap atoms.
bool graph_isomorphic(const MolecularGraph& a, const MolecularGraph& b);

/// Reads a one-SMILES-per-line file; blank and '#' lines are skipped. The
/// first whitespace-separated token of each line is the SMILES.
struct SmilesRecord {
  std::size_t line;
  std::string smiles;
};
std::vector<SmilesRecord> read_smiles_file(const std::string& path);

}  // namespace copyrefine
