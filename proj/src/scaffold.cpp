#include "copyrefine/scaffold.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

namespace copyrefine {

std::string_view kind_name(SubstructureKind kind) {
  switch (kind) {
    case SubstructureKind::Ring:
      return "ring";
    case SubstructureKind::Bond:
      return "bond";
    case SubstructureKind::Atom:
      return "atom";
  }
  return "?";
}

std::vector<std::vector<int>> ScaffoldTree::adjacency() const {
  std::vector<std::vector<int>> adj(nodes.size());
  for (const auto& [a, b] : edges) {
    adj[static_cast<std::size_t>(a)].push_back(b);
    adj[static_cast<std::size_t>(b)].push_back(a);
  }
  return adj;
}

MolecularGraph fragment_graph(const MolecularGraph& graph, const std::vector<int>& atoms) {
  std::vector<int> local(static_cast<std::size_t>(graph.num_atoms()), -1);
  std::vector<Atom> frag_atoms;
  frag_atoms.reserve(atoms.size());
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    local[static_cast<std::size_t>(atoms[i])] = static_cast<int>(i);
    Atom a = graph.atom(atoms[i]);
    a.valence = 0;
    if (a.aromatic && a.element != Element::C && a.explicit_hydrogens > 0) {
      a.fixed_hydrogens = true;
    } else {
      a.fixed_hydrogens = false;
      a.explicit_hydrogens = 0;
    }
    frag_atoms.push_back(a);
  }
  std::vector<Bond> frag_bonds;
  for (const auto& b : graph.bonds()) {
    const int u = local[static_cast<std::size_t>(b.begin)];
    const int v = local[static_cast<std::size_t>(b.end)];
    if (u >= 0 && v >= 0) frag_bonds.push_back({u, v, b.order});
  }
  return build_molecule(std::move(frag_atoms), std::move(frag_bonds));
}

SubstructureKind fragment_kind(const MolecularGraph& fragment) {
  if (!fragment.rings().empty()) return SubstructureKind::Ring;
  if (fragment.num_atoms() == 1) return SubstructureKind::Atom;
  return SubstructureKind::Bond;
}

namespace {

std::size_t overlap(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  return common.size();
}

struct Cluster {
  std::vector<int> atoms;
  SubstructureKind kind;
};

std::vector<Cluster> initial_clusters(const MolecularGraph& g) {
  std::vector<Cluster> clusters;
  for (int b = 0; b < g.num_bonds(); ++b) {
    if (g.bond_in_ring(b)) continue;
    auto atoms = std::vector<int>{g.bond(b).begin, g.bond(b).end};
    std::sort(atoms.begin(), atoms.end());
    clusters.push_back({atoms, SubstructureKind::Bond});
  }
  std::vector<std::vector<int>> rings;
  for (auto r : g.rings()) {
    std::sort(r.begin(), r.end());
    rings.push_back(std::move(r));
  }
  // Bridged systems (rings sharing more than a bond) become one cluster.
  std::vector<bool> alive(rings.size(), true);
  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t i = 0; i < rings.size() && !merged; ++i) {
      if (!alive[i]) continue;
      for (std::size_t j = i + 1; j < rings.size() && !merged; ++j) {
        if (!alive[j] || overlap(rings[i], rings[j]) <= 2) continue;
        std::vector<int> u;
        std::set_union(rings[i].begin(), rings[i].end(), rings[j].begin(), rings[j].end(), std::back_inserter(u));
        rings[i] = std::move(u);
        alive[j] = false;
        merged = true;
      }
    }
  }
  for (std::size_t i = 0; i < rings.size(); ++i) {
    if (alive[i]) clusters.push_back({rings[i], SubstructureKind::Ring});
  }
  return clusters;
}

}  // namespace

ScaffoldTree decompose(const MolecularGraph& g) {
  ScaffoldTree tree;
  if (g.num_atoms() == 0) throw DecompositionError("empty graph");
  std::vector<Cluster> clusters;
  if (g.num_atoms() == 1) {
    clusters.push_back({{0}, SubstructureKind::Atom});
  } else {
    clusters = initial_clusters(g);
  }

  std::vector<std::vector<int>> atom_clusters(static_cast<std::size_t>(g.num_atoms()));
  for (int c = 0; c < static_cast<int>(clusters.size()); ++c) {
    for (int a : clusters[static_cast<std::size_t>(c)].atoms) atom_clusters[static_cast<std::size_t>(a)].push_back(c);
  }

  std::map<std::pair<int, int>, int> weights;
  auto connect = [&](int c1, int c2, int w) {
    auto key = std::minmax(c1, c2);
    auto [it, inserted] = weights.try_emplace(key, w);
    if (!inserted) it->second = std::max(it->second, w);
  };
  for (int a = 0; a < g.num_atoms(); ++a) {
    const auto& cnei = atom_clusters[static_cast<std::size_t>(a)];
    int bonds = 0, rings = 0;
    for (int c : cnei) {
      bonds += clusters[static_cast<std::size_t>(c)].kind == SubstructureKind::Bond;
      rings += clusters[static_cast<std::size_t>(c)].kind == SubstructureKind::Ring;
    }
    const int n = static_cast<int>(cnei.size());
    if (bonds > 2 || (bonds == 2 && n > 2)) {
      const int c = static_cast<int>(clusters.size());
      clusters.push_back({{a}, SubstructureKind::Atom});
      for (int c1 : cnei) connect(c1, c, 1);
    } else if (rings > 2) {
      const int c = static_cast<int>(clusters.size());
      clusters.push_back({{a}, SubstructureKind::Atom});
      for (int c1 : cnei) connect(c1, c, 99);
    } else {
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          const auto& x = clusters[static_cast<std::size_t>(cnei[static_cast<std::size_t>(i)])].atoms;
          const auto& y = clusters[static_cast<std::size_t>(cnei[static_cast<std::size_t>(j)])].atoms;
          connect(cnei[static_cast<std::size_t>(i)], cnei[static_cast<std::size_t>(j)], static_cast<int>(overlap(x, y)));
        }
      }
    }
  }

  // Maximum spanning tree (Kruskal), ties broken by node pair.
  std::vector<std::tuple<int, int, int>> candidates;
  for (const auto& [pair, w] : weights) candidates.emplace_back(-w, pair.first, pair.second);
  std::sort(candidates.begin(), candidates.end());
  std::vector<int> parent(clusters.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  for (const auto& [negw, a, b] : candidates) {
    const int ra = find(a), rb = find(b);
    if (ra == rb) continue;
    parent[static_cast<std::size_t>(ra)] = rb;
    tree.edges.emplace_back(a, b);
  }
  if (tree.edges.size() + 1 != clusters.size()) throw DecompositionError("cluster graph is disconnected");

  for (auto& c : clusters) {
    TreeNode node;
    const auto frag = fragment_graph(g, c.atoms);
    node.key = canonical_smiles(frag);
    node.kind = c.kind;
    node.atoms = std::move(c.atoms);
    tree.nodes.push_back(std::move(node));
  }
  return tree;
}

MolecularGraph glue_fragments(const MolecularGraph& graph, const ScaffoldTree& tree) {
  std::vector<std::optional<Atom>> atoms(static_cast<std::size_t>(graph.num_atoms()));
  std::map<std::pair<int, int>, BondOrder> bonds;
  for (const auto& node : tree.nodes) {
    const auto frag = fragment_graph(graph, node.atoms);
    for (int i = 0; i < frag.num_atoms(); ++i) {
      auto& slot = atoms[static_cast<std::size_t>(node.atoms[static_cast<std::size_t>(i)])];
      const Atom& a = frag.atom(i);
      if (!slot || a.fixed_hydrogens) slot = a;
    }
    for (const auto& b : frag.bonds()) {
      const int u = node.atoms[static_cast<std::size_t>(b.begin)];
      const int v = node.atoms[static_cast<std::size_t>(b.end)];
      bonds[std::minmax(u, v)] = b.order;
    }
  }
  std::vector<Atom> out_atoms;
  for (auto& a : atoms) {
    if (!a) throw DecompositionError("tree does not cover every atom");
    if (!a->fixed_hydrogens) a->explicit_hydrogens = 0;
    out_atoms.push_back(*a);
  }
  std::vector<Bond> out_bonds;
  for (const auto& [pair, order] : bonds) out_bonds.push_back({pair.first, pair.second, order});
  return build_molecule(std::move(out_atoms), std::move(out_bonds));
}

int root_node(const ScaffoldTree& tree) {
  for (int i = 0; i < tree.size(); ++i) {
    const auto& atoms = tree.nodes[static_cast<std::size_t>(i)].atoms;
    if (std::binary_search(atoms.begin(), atoms.end(), 0)) return i;
  }
  return 0;
}

std::vector<DfsStep> dfs_order(const ScaffoldTree& tree, int root) {
  if (root < 0 || root >= tree.size()) throw std::out_of_range("dfs root out of range");
  const auto adj = tree.adjacency();
  std::vector<DfsStep> steps;
  std::vector<bool> seen(tree.nodes.size(), false);
  auto order_key = [&](int n) {
    const auto& node = tree.nodes[static_cast<std::size_t>(n)];
    const int min_atom = node.atoms.empty() ? -1 : node.atoms.front();
    return std::make_tuple(node.id, min_atom, n);
  };
  std::function<void(int)> visit = [&](int u) {
    seen[static_cast<std::size_t>(u)] = true;
    auto children = adj[static_cast<std::size_t>(u)];
    std::sort(children.begin(), children.end(), [&](int a, int b) { return order_key(a) < order_key(b); });
    for (int v : children) {
      if (seen[static_cast<std::size_t>(v)]) continue;
      steps.push_back({u, v, true});
      visit(v);
      steps.push_back({v, u, false});
    }
  };
  visit(root);
  return steps;
}

Vocabulary::Vocabulary(std::vector<std::pair<std::string, long>> entries) {
  for (auto& [key, freq] : entries) {
    if (index_.count(key)) throw std::invalid_argument("duplicate vocabulary key " + key);
    if (freq < 0) throw std::invalid_argument("negative vocabulary frequency");
    index_[key] = size();
    auto parsed = parse_smiles(key);
    std::vector<int> all(static_cast<std::size_t>(parsed.num_atoms()));
    std::iota(all.begin(), all.end(), 0);
    auto frag = fragment_graph(parsed, all);
    kinds_.push_back(fragment_kind(frag));
    fragments_.push_back(std::move(frag));
    keys_.push_back(std::move(key));
    frequency_.push_back(freq);
  }
}

const std::string& Vocabulary::key(int id) const { return keys_.at(static_cast<std::size_t>(id)); }
long Vocabulary::frequency(int id) const {
  if (id == unk_id()) return 0;
  return frequency_.at(static_cast<std::size_t>(id));
}
SubstructureKind Vocabulary::kind(int id) const { return kinds_.at(static_cast<std::size_t>(id)); }
const MolecularGraph& Vocabulary::fragment(int id) const { return fragments_.at(static_cast<std::size_t>(id)); }

int Vocabulary::id_of(const std::string& key) const {
  const auto it = index_.find(key);
  return it == index_.end() ? unk_id() : it->second;
}

void Vocabulary::save(std::ostream& out) const {
  for (int i = 0; i < size(); ++i) out << i << '\t' << keys_[static_cast<std::size_t>(i)] << '\t' << frequency_[static_cast<std::size_t>(i)] << '\n';
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  save(out);
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::vector<std::pair<std::string, long>> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, key, freq;
    if (!std::getline(fields, id, '\t') || !std::getline(fields, key, '\t') || !std::getline(fields, freq)) {
      throw std::runtime_error("vocabulary line " + std::to_string(lineno) + ": expected id, key and frequency");
    }
    try {
      if (std::stoul(id) != entries.size()) throw std::runtime_error("ids are not dense");
      entries.emplace_back(key, std::stol(freq));
    } catch (const std::logic_error&) {
      throw std::runtime_error("vocabulary line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return Vocabulary(std::move(entries));
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return load(in);
}

Vocabulary build_vocabulary_from_trees(const std::vector<ScaffoldTree>& trees) {
  std::map<std::string, long> counts;
  for (const auto& t : trees) {
    for (const auto& n : t.nodes) ++counts[n.key];
  }
  return Vocabulary(std::vector<std::pair<std::string, long>>(counts.begin(), counts.end()));
}

Vocabulary build_vocabulary(const std::vector<MolecularGraph>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("empty corpus");
  std::vector<ScaffoldTree> trees;
  trees.reserve(corpus.size());
  for (const auto& g : corpus) trees.push_back(decompose(g));
  return build_vocabulary_from_trees(trees);
}

void assign_ids(ScaffoldTree& tree, const Vocabulary& vocab) {
  for (auto& n : tree.nodes) n.id = vocab.id_of(n.key);
}

bool has_unknown(const ScaffoldTree& tree, const Vocabulary& vocab) {
  return std::any_of(tree.nodes.begin(), tree.nodes.end(), [&](const TreeNode& n) { return !vocab.contains(n.key); });
}

FrequencyClass classify_frequency(const Vocabulary& vocab, int id, long threshold) {
  if (id < 0 || id > vocab.unk_id()) throw std::out_of_range("substructure id " + std::to_string(id) + " out of range");
  return vocab.frequency(id) < threshold ? FrequencyClass::Infrequent : FrequencyClass::Frequent;
}

StableNoveltyStats stable_novelty_stats(const std::vector<std::pair<ScaffoldTree, ScaffoldTree>>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("no pairs");
  double original = 0.0;
  int with_novel = 0;
  for (const auto& [input, target] : pairs) {
    std::set<std::string> have;
    for (const auto& n : input.nodes) have.insert(n.key);
    int copied = 0;
    for (const auto& n : target.nodes) copied += have.count(n.key) > 0;
    original += target.nodes.empty() ? 1.0 : static_cast<double>(copied) / static_cast<double>(target.nodes.size());
    with_novel += copied < static_cast<int>(target.nodes.size());
  }
  const double n = static_cast<double>(pairs.size());
  return {original / n, with_novel / n};
}

}  // namespace copyrefine
