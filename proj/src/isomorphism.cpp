#include <algorithm>
#include <map>
#include <queue>

#include "copyrefine/molgraph.hpp"

namespace copyrefine {

namespace {

// Colour refinement run over both graphs with a shared colour table, so equal
// colours mean equal invariants across graphs.
void joint_colours(const MolecularGraph& a, const MolecularGraph& b, std::vector<int>& ca, std::vector<int>& cb) {
  std::map<std::vector<long>, int> table;
  auto initial = [&](const MolecularGraph& g, std::vector<int>& out) {
    out.resize(static_cast<std::size_t>(g.num_atoms()));
    for (int i = 0; i < g.num_atoms(); ++i) {
      const Atom& at = g.atom(i);
      std::vector<long> key{atomic_number(at.element), at.formal_charge, at.aromatic ? 1 : 0,
                            at.explicit_hydrogens, g.degree(i)};
      auto [it, inserted] = table.try_emplace(key, static_cast<int>(table.size()));
      out[static_cast<std::size_t>(i)] = it->second;
    }
  };
  initial(a, ca);
  initial(b, cb);
  const int rounds = std::max(a.num_atoms(), 1);
  for (int r = 0; r < rounds; ++r) {
    std::map<std::vector<long>, int> next_table;
    auto step = [&](const MolecularGraph& g, const std::vector<int>& in) {
      std::vector<int> out(in.size());
      for (int i = 0; i < g.num_atoms(); ++i) {
        std::vector<long> key{in[static_cast<std::size_t>(i)]};
        std::vector<long> nbrs;
        for (const auto& nb : g.neighbors(i)) {
          nbrs.push_back(static_cast<long>(in[static_cast<std::size_t>(nb.atom)]) * 8 +
                         static_cast<long>(g.bond(nb.bond).order));
        }
        std::sort(nbrs.begin(), nbrs.end());
        key.insert(key.end(), nbrs.begin(), nbrs.end());
        auto [it, inserted] = next_table.try_emplace(key, static_cast<int>(next_table.size()));
        out[static_cast<std::size_t>(i)] = it->second;
      }
      return out;
    };
    auto na = step(a, ca);
    auto nb = step(b, cb);
    const bool stable = next_table.size() == table.size();
    ca = std::move(na);
    cb = std::move(nb);
    table = std::move(next_table);
    if (stable) break;
  }
}

class Matcher {
 public:
  Matcher(const MolecularGraph& a, const MolecularGraph& b, std::vector<int> ca, std::vector<int> cb)
      : a_(a), b_(b), ca_(std::move(ca)), cb_(std::move(cb)) {
    const auto n = static_cast<std::size_t>(a.num_atoms());
    map_ab_.assign(n, -1);
    map_ba_.assign(n, -1);
    // Match in BFS order so each new atom has mapped neighbours to check against.
    std::vector<bool> queued(n, false);
    for (std::size_t s = 0; s < n; ++s) {
      if (queued[s]) continue;
      std::queue<int> q;
      q.push(static_cast<int>(s));
      queued[s] = true;
      while (!q.empty()) {
        const int u = q.front();
        q.pop();
        order_.push_back(u);
        for (const auto& nb : a.neighbors(u)) {
          if (!queued[static_cast<std::size_t>(nb.atom)]) {
            queued[static_cast<std::size_t>(nb.atom)] = true;
            q.push(nb.atom);
          }
        }
      }
    }
  }

  bool run(std::size_t depth = 0) {
    if (depth == order_.size()) return true;
    const int u = order_[depth];
    for (int v = 0; v < b_.num_atoms(); ++v) {
      if (map_ba_[static_cast<std::size_t>(v)] >= 0) continue;
      if (cb_[static_cast<std::size_t>(v)] != ca_[static_cast<std::size_t>(u)]) continue;
      if (!consistent(u, v)) continue;
      map_ab_[static_cast<std::size_t>(u)] = v;
      map_ba_[static_cast<std::size_t>(v)] = u;
      if (run(depth + 1)) return true;
      map_ab_[static_cast<std::size_t>(u)] = -1;
      map_ba_[static_cast<std::size_t>(v)] = -1;
    }
    return false;
  }

 private:
  bool consistent(int u, int v) const {
    int mapped_a = 0;
    for (const auto& nb : a_.neighbors(u)) {
      const int image = map_ab_[static_cast<std::size_t>(nb.atom)];
      if (image < 0) continue;
      ++mapped_a;
      const int bond = b_.bond_between(v, image);
      if (bond < 0 || b_.bond(bond).order != a_.bond(nb.bond).order) return false;
    }
    int mapped_b = 0;
    for (const auto& nb : b_.neighbors(v)) {
      if (map_ba_[static_cast<std::size_t>(nb.atom)] >= 0) ++mapped_b;
    }
    return mapped_a == mapped_b;
  }

  const MolecularGraph& a_;
  const MolecularGraph& b_;
  std::vector<int> ca_, cb_;
  std::vector<int> order_;
  std::vector<int> map_ab_, map_ba_;
};

}  // namespace

bool graph_isomorphic(const MolecularGraph& a, const MolecularGraph& b) {
  if (a.num_atoms() > kIsomorphismAtomCap || b.num_atoms() > kIsomorphismAtomCap) {
    throw SizeLimitError("graph_isomorphic supports at most " + std::to_string(kIsomorphismAtomCap) + " atoms");
  }
  if (a.num_atoms() != b.num_atoms() || a.num_bonds() != b.num_bonds()) return false;
  std::vector<int> ca, cb;
  joint_colours(a, b, ca, cb);
  auto ha = ca, hb = cb;
  std::sort(ha.begin(), ha.end());
  std::sort(hb.begin(), hb.end());
  if (ha != hb) return false;
  return Matcher(a, b, std::move(ca), std::move(cb)).run();
}

}  // namespace copyrefine
