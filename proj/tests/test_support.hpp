#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "copyrefine/molgraph.hpp"

namespace copyrefine::testing {

inline std::string data_path(const std::string& name) { return std::string(COPYREFINE_TEST_DATA) + "/" + name; }

inline const std::vector<SmilesRecord>& corpus() {
  static const std::vector<SmilesRecord> records = read_smiles_file(data_path("corpus100.smi"));
  return records;
}

inline const std::vector<MolecularGraph>& corpus_molecules() {
  static const std::vector<MolecularGraph> mols = [] {
    std::vector<MolecularGraph> out;
    for (const auto& r : corpus()) out.push_back(parse_smiles(r.smiles));
    return out;
  }();
  return mols;
}

// Same molecule with atoms renumbered by a random permutation.
inline MolecularGraph relabel(const MolecularGraph& g, std::mt19937& rng) {
  std::vector<int> perm(static_cast<std::size_t>(g.num_atoms()));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Atom> atoms(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) atoms[static_cast<std::size_t>(perm[i])] = g.atom(static_cast<int>(i));
  std::vector<Bond> bonds;
  for (const auto& b : g.bonds()) bonds.push_back({perm[static_cast<std::size_t>(b.begin)], perm[static_cast<std::size_t>(b.end)], b.order});
  std::shuffle(bonds.begin(), bonds.end(), rng);
  return MolecularGraph(std::move(atoms), std::move(bonds));
}

// Random small connected molecule over C, N and O with optional ring closures.
inline MolecularGraph random_molecule(std::mt19937& rng, int max_atoms) {
  static constexpr Element kElements[] = {Element::C, Element::C, Element::C, Element::N, Element::O};
  while (true) {
    const int n = 1 + static_cast<int>(rng() % static_cast<unsigned>(max_atoms));
    std::vector<Atom> atoms(static_cast<std::size_t>(n));
    for (auto& a : atoms) a.element = kElements[rng() % 5];
    std::vector<Bond> bonds;
    for (int i = 1; i < n; ++i) {
      const int parent = static_cast<int>(rng() % static_cast<unsigned>(i));
      bonds.push_back({parent, i, rng() % 6 == 0 ? BondOrder::Double : BondOrder::Single});
    }
    if (n >= 5 && rng() % 2 == 0) {
      const int a = static_cast<int>(rng() % static_cast<unsigned>(n));
      const int b = static_cast<int>(rng() % static_cast<unsigned>(n));
      const bool exists = std::any_of(bonds.begin(), bonds.end(), [&](const Bond& x) {
        return (x.begin == a && x.end == b) || (x.begin == b && x.end == a);
      });
      if (a != b && !exists) bonds.push_back({a, b, BondOrder::Single});
    }
    try {
      return build_molecule(std::move(atoms), std::move(bonds));
    } catch (const MoleculeError&) {
    }
  }
}

}  // namespace copyrefine::testing
