#include "copyrefine/molgraph.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <functional>
#include <optional>
#include <queue>
#include <sstream>

namespace copyrefine {

namespace {

struct ElementInfo {
  Element element;
  std::string_view symbol;
  double mass;
  int valence_electrons;
};

constexpr std::array<ElementInfo, 10> kElements{{
    {Element::B, "B", 10.812, 3},
    {Element::C, "C", 12.011, 4},
    {Element::N, "N", 14.007, 5},
    {Element::O, "O", 15.999, 6},
    {Element::F, "F", 18.998, 7},
    {Element::P, "P", 30.974, 5},
    {Element::S, "S", 32.067, 6},
    {Element::Cl, "Cl", 35.453, 7},
    {Element::Br, "Br", 79.904, 7},
    {Element::I, "I", 126.904, 7},
}};

const ElementInfo& info(Element e) {
  for (const auto& entry : kElements) {
    if (entry.element == e) return entry;
  }
  throw UnsupportedFeatureError("unknown element");
}

bool is_halogen(Element e) {
  return e == Element::F || e == Element::Cl || e == Element::Br || e == Element::I;
}

}  // namespace

int atomic_number(Element e) { return static_cast<int>(e); }
std::string_view element_symbol(Element e) { return info(e).symbol; }
double atomic_mass(Element e) { return info(e).mass; }

std::optional<Element> element_from_symbol(std::string_view symbol) {
  for (const auto& entry : kElements) {
    if (entry.symbol == symbol) return entry.element;
  }
  return std::nullopt;
}

std::vector<int> allowed_valences(Element e, int formal_charge) {
  const int electrons = info(e).valence_electrons - formal_charge;
  if (electrons <= 0 || electrons > 7) return {};
  if (is_halogen(e)) {
    // Charged halogens (e.g. Cl+) keep the isoelectronic octet rule.
    return {electrons <= 4 ? electrons : 8 - electrons};
  }
  const bool hypervalent = e == Element::N || e == Element::P || e == Element::S;
  if (hypervalent && !(e == Element::N && formal_charge != 0)) {
    if (electrons == 5) return {3, 5};
    if (electrons == 6 && e == Element::S) return {2, 4, 6};
  }
  return {electrons <= 4 ? electrons : 8 - electrons};
}

int bond_valence(BondOrder order) {
  switch (order) {
    case BondOrder::Single:
    case BondOrder::Aromatic:
      return 1;
    case BondOrder::Double:
      return 2;
    case BondOrder::Triple:
      return 3;
  }
  return 1;
}

namespace {

struct BondTally {
  int aromatic = 0;
  int other = 0;
  bool exocyclic_multiple = false;
};

BondTally tally(const std::vector<Bond>& bonds, const std::vector<std::vector<Neighbor>>& adjacency, int i) {
  BondTally t;
  for (const auto& nb : adjacency[static_cast<std::size_t>(i)]) {
    const BondOrder order = bonds[static_cast<std::size_t>(nb.bond)].order;
    if (order == BondOrder::Aromatic) {
      ++t.aromatic;
    } else {
      t.other += bond_valence(order);
      if (order != BondOrder::Single) t.exocyclic_multiple = true;
    }
  }
  return t;
}

bool can_take_pi(Element e) {
  return e == Element::C || e == Element::N || e == Element::P || e == Element::B;
}

}  // namespace

int compute_valence(const std::vector<Atom>& atoms, const std::vector<Bond>& bonds,
                    const std::vector<std::vector<Neighbor>>& adjacency, int i) {
  const Atom& a = atoms[static_cast<std::size_t>(i)];
  const BondTally t = tally(bonds, adjacency, i);
  int v = t.aromatic + t.other + a.explicit_hydrogens;
  if (a.aromatic && a.element == Element::C && t.aromatic >= 2 && !t.exocyclic_multiple) ++v;
  return v;
}

std::optional<int> default_hydrogens(const std::vector<Atom>& atoms, const std::vector<Bond>& bonds,
                                     const std::vector<std::vector<Neighbor>>& adjacency, int i) {
  const Atom& a = atoms[static_cast<std::size_t>(i)];
  const auto allowed = allowed_valences(a.element, a.formal_charge);
  if (allowed.empty()) return std::nullopt;
  const BondTally t = tally(bonds, adjacency, i);
  const int base = t.aromatic + t.other;
  if (a.aromatic) {
    const int pi = (can_take_pi(a.element) && t.aromatic >= 2 && !t.exocyclic_multiple) ? 1 : 0;
    if (base + pi <= allowed.front()) return allowed.front() - base - pi;
  }
  for (int v : allowed) {
    if (v >= base) return v - base;
  }
  return std::nullopt;
}

MolecularGraph::MolecularGraph(std::vector<Atom> atoms, std::vector<Bond> bonds, GraphOptions options)
    : atoms_(std::move(atoms)), bonds_(std::move(bonds)) {
  const int n = num_atoms();
  adjacency_.assign(static_cast<std::size_t>(n), {});
  for (int b = 0; b < num_bonds(); ++b) {
    const Bond& bond = bonds_[static_cast<std::size_t>(b)];
    if (bond.begin < 0 || bond.end < 0 || bond.begin >= n || bond.end >= n) {
      throw MoleculeError("bond endpoint out of range");
    }
    if (bond.begin == bond.end) throw MoleculeError("bond joins an atom to itself");
    for (const auto& nb : adjacency_[static_cast<std::size_t>(bond.begin)]) {
      if (nb.atom == bond.end) throw MoleculeError("duplicate bond between atoms");
    }
    adjacency_[static_cast<std::size_t>(bond.begin)].push_back({bond.end, b});
    adjacency_[static_cast<std::size_t>(bond.end)].push_back({bond.begin, b});
  }
  for (int i = 0; i < n; ++i) {
    auto& atom = atoms_[static_cast<std::size_t>(i)];
    atom.valence = compute_valence(atoms_, bonds_, adjacency_, i);
    if (options.check_valence) {
      const auto allowed = allowed_valences(atom.element, atom.formal_charge);
      if (allowed.empty() || atom.valence > allowed.back()) {
        throw ValenceError("atom " + std::to_string(i) + " (" + std::string(element_symbol(atom.element)) +
                           ") exceeds its allowed valence");
      }
    }
  }
  if (options.require_connected && !connected()) throw MoleculeError("graph is not connected");

  rings_ = perceive_rings(n, bonds_);

  // A bond lies on a cycle iff it is not a bridge.
  bond_in_ring_.assign(static_cast<std::size_t>(num_bonds()), false);
  atom_in_ring_.assign(static_cast<std::size_t>(n), false);
  std::vector<int> disc(static_cast<std::size_t>(n), -1), low(static_cast<std::size_t>(n), 0);
  int timer = 0;
  std::function<void(int, int)> dfs = [&](int u, int parent_bond) {
    disc[static_cast<std::size_t>(u)] = low[static_cast<std::size_t>(u)] = timer++;
    for (const auto& nb : adjacency_[static_cast<std::size_t>(u)]) {
      if (nb.bond == parent_bond) continue;
      const auto v = static_cast<std::size_t>(nb.atom);
      if (disc[v] >= 0) {
        low[static_cast<std::size_t>(u)] = std::min(low[static_cast<std::size_t>(u)], disc[v]);
        bond_in_ring_[static_cast<std::size_t>(nb.bond)] = true;
      } else {
        dfs(nb.atom, nb.bond);
        low[static_cast<std::size_t>(u)] = std::min(low[static_cast<std::size_t>(u)], low[v]);
        if (low[v] <= disc[static_cast<std::size_t>(u)]) bond_in_ring_[static_cast<std::size_t>(nb.bond)] = true;
      }
    }
  };
  for (int i = 0; i < n; ++i) {
    if (disc[static_cast<std::size_t>(i)] < 0) dfs(i, -1);
  }
  for (int b = 0; b < num_bonds(); ++b) {
    if (bond_in_ring_[static_cast<std::size_t>(b)]) {
      atom_in_ring_[static_cast<std::size_t>(bonds_[static_cast<std::size_t>(b)].begin)] = true;
      atom_in_ring_[static_cast<std::size_t>(bonds_[static_cast<std::size_t>(b)].end)] = true;
    }
  }
}

MolecularGraph build_molecule(std::vector<Atom> atoms, std::vector<Bond> bonds, GraphOptions options) {
  std::vector<std::vector<Neighbor>> adjacency(atoms.size());
  for (int b = 0; b < static_cast<int>(bonds.size()); ++b) {
    const Bond& bond = bonds[static_cast<std::size_t>(b)];
    if (bond.begin < 0 || bond.end < 0 || bond.begin >= static_cast<int>(atoms.size()) ||
        bond.end >= static_cast<int>(atoms.size())) {
      throw MoleculeError("bond endpoint out of range");
    }
    adjacency[static_cast<std::size_t>(bond.begin)].push_back({bond.end, b});
    adjacency[static_cast<std::size_t>(bond.end)].push_back({bond.begin, b});
  }
  for (int i = 0; i < static_cast<int>(atoms.size()); ++i) {
    auto& atom = atoms[static_cast<std::size_t>(i)];
    if (atom.fixed_hydrogens) continue;
    const auto h = default_hydrogens(atoms, bonds, adjacency, i);
    if (!h) throw ValenceError("atom " + std::to_string(i) + " exceeds its allowed valence");
    atom.explicit_hydrogens = *h;
  }
  return MolecularGraph(std::move(atoms), std::move(bonds), options);
}

std::span<const Neighbor> MolecularGraph::neighbors(int atom) const {
  return adjacency_[static_cast<std::size_t>(atom)];
}

int MolecularGraph::bond_between(int a, int b) const {
  for (const auto& nb : neighbors(a)) {
    if (nb.atom == b) return nb.bond;
  }
  return -1;
}

bool MolecularGraph::connected() const {
  if (atoms_.empty()) return true;
  std::vector<bool> seen(atoms_.size(), false);
  std::vector<int> stack{0};
  seen[0] = true;
  std::size_t count = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (const auto& nb : neighbors(u)) {
      if (!seen[static_cast<std::size_t>(nb.atom)]) {
        seen[static_cast<std::size_t>(nb.atom)] = true;
        ++count;
        stack.push_back(nb.atom);
      }
    }
  }
  return count == atoms_.size();
}

// Ring perception: Horton candidate cycles (shortest path w->u, edge u-v, shortest
// path v->w for every vertex w and edge u-v), sorted by size, then greedily kept
// when independent over GF(2). The candidate set contains a minimum cycle basis.
namespace {

// Horton candidates plus GF(2) elimination; rings come out in (size, atoms) order.
std::vector<std::vector<int>> horton_sssr(int num_atoms, const std::vector<Bond>& bonds) {
  const auto n = static_cast<std::size_t>(num_atoms);
  const std::size_t m = bonds.size();
  std::vector<std::vector<std::pair<int, int>>> adj(n);
  for (std::size_t b = 0; b < m; ++b) {
    adj[static_cast<std::size_t>(bonds[b].begin)].push_back({bonds[b].end, static_cast<int>(b)});
    adj[static_cast<std::size_t>(bonds[b].end)].push_back({bonds[b].begin, static_cast<int>(b)});
  }
  for (auto& list : adj) std::sort(list.begin(), list.end());

  // Connected components for the cycle rank.
  std::vector<int> comp(n, -1);
  int components = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    std::vector<std::size_t> stack{s};
    comp[s] = components;
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      for (const auto& [v, b] : adj[u]) {
        if (comp[static_cast<std::size_t>(v)] < 0) {
          comp[static_cast<std::size_t>(v)] = components;
          stack.push_back(static_cast<std::size_t>(v));
        }
      }
    }
    ++components;
  }
  const long rank = static_cast<long>(m) - static_cast<long>(n) + components;
  if (rank <= 0) return {};

  // BFS trees from every vertex.
  std::vector<std::vector<int>> dist(n, std::vector<int>(n, -1));
  std::vector<std::vector<int>> parent(n, std::vector<int>(n, -1));
  for (std::size_t w = 0; w < n; ++w) {
    std::queue<int> q;
    q.push(static_cast<int>(w));
    dist[w][w] = 0;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (const auto& [v, b] : adj[static_cast<std::size_t>(u)]) {
        if (dist[w][static_cast<std::size_t>(v)] < 0) {
          dist[w][static_cast<std::size_t>(v)] = dist[w][static_cast<std::size_t>(u)] + 1;
          parent[w][static_cast<std::size_t>(v)] = u;
          q.push(v);
        }
      }
    }
  }

  const std::size_t words = (m + 63) / 64;
  struct Candidate {
    std::vector<int> atoms;
    std::vector<std::uint64_t> edges;
  };
  auto bond_index = [&](int a, int b) {
    for (const auto& [v, idx] : adj[static_cast<std::size_t>(a)]) {
      if (v == b) return idx;
    }
    return -1;
  };
  // Only the cycle length is needed to order candidates, so paths are built one length at a time.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> by_length(2 * n + 2);
  for (std::size_t w = 0; w < n; ++w) {
    for (std::size_t b = 0; b < m; ++b) {
      const auto u = static_cast<std::size_t>(bonds[b].begin);
      const auto v = static_cast<std::size_t>(bonds[b].end);
      if (comp[u] != comp[w]) continue;
      const int du = dist[w][u];
      const int dv = dist[w][v];
      if (std::abs(du - dv) > 1 || du + dv + 1 < 3) continue;
      by_length[static_cast<std::size_t>(du + dv + 1)].emplace_back(w, b);
    }
  }
  auto materialize = [&](std::size_t w, std::size_t b) -> std::optional<Candidate> {
    std::vector<int> pu;  // u ... w
    for (int x = bonds[b].begin; x != -1; x = parent[w][static_cast<std::size_t>(x)]) pu.push_back(x);
    std::vector<int> pv;  // v ... w
    for (int x = bonds[b].end; x != -1; x = parent[w][static_cast<std::size_t>(x)]) pv.push_back(x);
    std::vector<int> seen_u(pu.begin(), pu.end() - 1);
    std::sort(seen_u.begin(), seen_u.end());
    for (std::size_t k = 0; k + 1 < pv.size(); ++k) {
      if (std::binary_search(seen_u.begin(), seen_u.end(), pv[k])) return std::nullopt;
    }
    Candidate c;
    c.atoms.assign(pu.rbegin(), pu.rend());  // w ... u
    for (std::size_t k = 0; k + 1 < pv.size(); ++k) c.atoms.push_back(pv[k]);  // v ... (before w)
    c.edges.assign(words, 0);
    for (std::size_t k = 0; k < c.atoms.size(); ++k) {
      const int e = bond_index(c.atoms[k], c.atoms[(k + 1) % c.atoms.size()]);
      c.edges[static_cast<std::size_t>(e) / 64] |= std::uint64_t{1} << (static_cast<std::size_t>(e) % 64);
    }
    // Canonical rotation: start at the smallest atom, walk toward the smaller neighbour.
    auto& a = c.atoms;
    const auto mn = std::min_element(a.begin(), a.end());
    std::rotate(a.begin(), mn, a.end());
    if (a.size() > 2 && a.back() < a[1]) std::reverse(a.begin() + 1, a.end());
    return c;
  };

  // Gaussian elimination over GF(2); basis rows keyed by their pivot bit.
  std::vector<std::vector<std::uint64_t>> basis;
  std::vector<std::size_t> pivots;
  std::vector<std::vector<int>> rings;
  for (const auto& bucket : by_length) {
    if (static_cast<long>(rings.size()) == rank) break;
    std::vector<Candidate> candidates;
    for (const auto& [w, b] : bucket) {
      if (auto c = materialize(w, b)) candidates.push_back(std::move(*c));
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& x, const Candidate& y) { return x.atoms < y.atoms; });
    candidates.erase(std::unique(candidates.begin(), candidates.end(),
                                 [](const Candidate& x, const Candidate& y) { return x.edges == y.edges; }),
                     candidates.end());
    for (const auto& c : candidates) {
      auto row = c.edges;
      for (std::size_t k = 0; k < basis.size(); ++k) {
        if ((row[pivots[k] / 64] >> (pivots[k] % 64)) & 1U) {
          for (std::size_t wd = 0; wd < words; ++wd) row[wd] ^= basis[k][wd];
        }
      }
      std::size_t pivot = m;
      for (std::size_t bit = 0; bit < m; ++bit) {
        if ((row[bit / 64] >> (bit % 64)) & 1U) {
          pivot = bit;
          break;
        }
      }
      if (pivot == m) continue;
      // Keep the basis reduced so later reductions only need one pass.
      for (auto& other : basis) {
        if ((other[pivot / 64] >> (pivot % 64)) & 1U) {
          for (std::size_t wd = 0; wd < words; ++wd) other[wd] ^= row[wd];
        }
      }
      basis.push_back(std::move(row));
      pivots.push_back(pivot);
      rings.push_back(c.atoms);
      if (static_cast<long>(rings.size()) == rank) break;
    }
  }
  return rings;
}

}  // namespace

std::vector<std::vector<int>> perceive_rings(int num_atoms, const std::vector<Bond>& bonds) {
  const auto n = static_cast<std::size_t>(num_atoms);
  std::vector<std::vector<std::pair<int, int>>> adj(n);
  for (std::size_t b = 0; b < bonds.size(); ++b) {
    adj[static_cast<std::size_t>(bonds[b].begin)].push_back({bonds[b].end, static_cast<int>(b)});
    adj[static_cast<std::size_t>(bonds[b].end)].push_back({bonds[b].begin, static_cast<int>(b)});
  }

  // Bridges by iterative low-link search.
  std::vector<int> order(n, -1), low(n, 0);
  std::vector<bool> bridge(bonds.size(), false);
  int clock = 0;
  for (std::size_t root = 0; root < n; ++root) {
    if (order[root] >= 0) continue;
    struct Frame {
      int atom;
      int via;
      std::size_t next;
    };
    std::vector<Frame> stack{{static_cast<int>(root), -1, 0}};
    order[root] = low[root] = clock++;
    while (!stack.empty()) {
      Frame& f = stack.back();
      const auto u = static_cast<std::size_t>(f.atom);
      if (f.next < adj[u].size()) {
        const auto [v, b] = adj[u][f.next++];
        if (b == f.via) continue;
        const auto vs = static_cast<std::size_t>(v);
        if (order[vs] < 0) {
          order[vs] = low[vs] = clock++;
          stack.push_back({v, b, 0});
        } else {
          low[u] = std::min(low[u], order[vs]);
        }
        continue;
      }
      const int via = f.via;
      stack.pop_back();
      if (stack.empty()) break;
      const auto p = static_cast<std::size_t>(stack.back().atom);
      low[p] = std::min(low[p], low[u]);
      if (low[u] > order[p]) bridge[static_cast<std::size_t>(via)] = true;
    }
  }

  // Components left after removing bridges; atoms keep their relative order.
  std::vector<int> comp(n, -1);
  int components = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    std::vector<std::size_t> stack{s};
    comp[s] = components;
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      for (const auto& [v, b] : adj[u]) {
        if (bridge[static_cast<std::size_t>(b)] || comp[static_cast<std::size_t>(v)] >= 0) continue;
        comp[static_cast<std::size_t>(v)] = components;
        stack.push_back(static_cast<std::size_t>(v));
      }
    }
    ++components;
  }
  std::vector<std::vector<int>> members(static_cast<std::size_t>(components));
  for (std::size_t a = 0; a < n; ++a) members[static_cast<std::size_t>(comp[a])].push_back(static_cast<int>(a));
  std::vector<std::vector<Bond>> local_bonds(static_cast<std::size_t>(components));
  std::vector<int> local(n, -1);
  for (const auto& atoms : members) {
    for (std::size_t k = 0; k < atoms.size(); ++k) local[static_cast<std::size_t>(atoms[k])] = static_cast<int>(k);
  }
  for (std::size_t b = 0; b < bonds.size(); ++b) {
    if (bridge[b]) continue;
    Bond lb = bonds[b];
    lb.begin = local[static_cast<std::size_t>(bonds[b].begin)];
    lb.end = local[static_cast<std::size_t>(bonds[b].end)];
    local_bonds[static_cast<std::size_t>(comp[static_cast<std::size_t>(bonds[b].begin)])].push_back(lb);
  }

  std::vector<std::vector<int>> rings;
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (local_bonds[c].empty()) continue;
    for (auto ring : horton_sssr(static_cast<int>(members[c].size()), local_bonds[c])) {
      for (int& a : ring) a = members[c][static_cast<std::size_t>(a)];
      rings.push_back(std::move(ring));
    }
  }
  std::sort(rings.begin(), rings.end(), [](const std::vector<int>& x, const std::vector<int>& y) {
    if (x.size() != y.size()) return x.size() < y.size();
    return x < y;
  });
  return rings;
}

std::vector<std::vector<int>> perceive_rings(const MolecularGraph& graph) {
  return perceive_rings(graph.num_atoms(), graph.bonds());
}

std::vector<SmilesRecord> read_smiles_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<SmilesRecord> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token) || token.front() == '#') continue;
    out.push_back({number, token});
  }
  return out;
}

}  // namespace copyrefine
