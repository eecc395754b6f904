#include <algorithm>
#include <set>
#include <sstream>

#include "copyrefine/scaffold.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace copyrefine;

namespace {

std::multiset<std::string> keys_of(const ScaffoldTree& t) {
  std::multiset<std::string> keys;
  for (const auto& n : t.nodes) keys.insert(n.key);
  return keys;
}

bool shares_atom(const TreeNode& a, const TreeNode& b) {
  std::vector<int> common;
  std::set_intersection(a.atoms.begin(), a.atoms.end(), b.atoms.begin(), b.atoms.end(), std::back_inserter(common));
  return !common.empty();
}

ScaffoldTree manual_tree(const std::vector<int>& ids, const std::vector<std::pair<int, int>>& edges) {
  ScaffoldTree t;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    TreeNode n;
    n.id = ids[i];
    n.atoms = {static_cast<int>(i)};
    t.nodes.push_back(n);
  }
  t.edges = edges;
  return t;
}

}  // namespace

TEST_CASE("decompose small molecules by hand") {
  const auto hexane_ring = decompose(parse_smiles("C1CCCCC1"));
  CHECK(hexane_ring.size() == 1);
  CHECK(hexane_ring.edges.empty());
  CHECK(hexane_ring.nodes[0].kind == SubstructureKind::Ring);

  const auto ethanol = decompose(parse_smiles("CCO"));
  REQUIRE(ethanol.size() == 2);
  REQUIRE(ethanol.edges.size() == 1);
  CHECK(ethanol.nodes[0].kind == SubstructureKind::Bond);
  CHECK(ethanol.nodes[1].kind == SubstructureKind::Bond);
  CHECK(ethanol.nodes[0].atoms == std::vector<int>{0, 1});
  CHECK(ethanol.nodes[1].atoms == std::vector<int>{1, 2});
  CHECK(ethanol.nodes[0].key == canonical_smiles(parse_smiles("CC")));
  CHECK(ethanol.nodes[1].key == canonical_smiles(parse_smiles("CO")));

  // Three bonds meet at the central carbon: it becomes its own atom node.
  const auto isobutane = decompose(parse_smiles("CC(C)C"));
  REQUIRE(isobutane.size() == 4);
  CHECK(isobutane.nodes[3].kind == SubstructureKind::Atom);
  CHECK(isobutane.nodes[3].atoms == std::vector<int>{1});
  for (const auto& [a, b] : isobutane.edges) CHECK((a == 3 || b == 3));

  const auto toluene = decompose(parse_smiles("Cc1ccccc1"));
  REQUIRE(toluene.size() == 2);
  CHECK(keys_of(toluene) == std::multiset<std::string>{canonical_smiles(parse_smiles("C-c")), "c1ccccc1"});

  const auto naph = decompose(parse_smiles("c1ccc2ccccc2c1"));
  CHECK(naph.size() == 2);
  CHECK(naph.edges.size() == 1);

  // Bridged rings share more than two atoms and merge into one node.
  const auto norbornane = decompose(parse_smiles("C1CC2CCC1C2"));
  CHECK(norbornane.size() == 1);

  const auto methane = decompose(parse_smiles("C"));
  REQUIRE(methane.size() == 1);
  CHECK(methane.nodes[0].kind == SubstructureKind::Atom);
}

TEST_CASE("pyrrole ring keeps its NH in the fragment key") {
  const auto t = decompose(parse_smiles("Cc1cc[nH]c1"));
  REQUIRE(t.size() == 2);
  bool found = false;
  for (const auto& n : t.nodes) found |= n.key.find("[nH]") != std::string::npos;
  CHECK(found);
}

TEST_CASE("vocabulary construction") {
  CHECK(build_vocabulary({parse_smiles("C1CCCCC1")}).size() == 1);

  const auto vocab = build_vocabulary({parse_smiles("CCO"), parse_smiles("CCCO")});
  REQUIRE(vocab.size() == 2);
  const int cc = vocab.id_of(canonical_smiles(parse_smiles("CC")));
  const int co = vocab.id_of(canonical_smiles(parse_smiles("CO")));
  CHECK(cc != co);
  CHECK(vocab.frequency(cc) == 3);
  CHECK(vocab.frequency(co) == 2);
  CHECK(vocab.id_of("c1ccccc1") == vocab.unk_id());
  CHECK(vocab.kind(cc) == SubstructureKind::Bond);

  std::stringstream buffer;
  vocab.save(buffer);
  CHECK(buffer.str() == "0\tCC\t3\n1\tCO\t2\n");
  const auto loaded = Vocabulary::load(buffer);
  CHECK(loaded.size() == 2);
  CHECK(loaded.key(1) == "CO");
  CHECK(loaded.frequency(0) == 3);

  std::stringstream bad("0\tCC\n");
  CHECK_THROWS(Vocabulary::load(bad));
}

TEST_CASE("frequency classification") {
  const Vocabulary vocab({{"CC", 1999}, {"CO", 2000}, {"CN", 0}});
  CHECK(classify_frequency(vocab, 0) == FrequencyClass::Infrequent);
  CHECK(classify_frequency(vocab, 1) == FrequencyClass::Frequent);
  CHECK(classify_frequency(vocab, 2) == FrequencyClass::Infrequent);
  CHECK(classify_frequency(vocab, vocab.unk_id()) == FrequencyClass::Infrequent);
  CHECK_THROWS_AS(classify_frequency(vocab, 4), std::out_of_range);
  CHECK_THROWS_AS(classify_frequency(vocab, -1), std::out_of_range);
}

TEST_CASE("dfs order") {
  CHECK(dfs_order(manual_tree({0}, {}), 0).empty());

  const auto path = manual_tree({0, 1, 2}, {{0, 1}, {1, 2}});
  const std::vector<DfsStep> expected{{0, 1, true}, {1, 2, true}, {2, 1, false}, {1, 0, false}};
  CHECK(dfs_order(path, 0) == expected);

  const auto star = manual_tree({5, 3, 4, 3}, {{0, 1}, {0, 2}, {0, 3}});
  const auto steps = dfs_order(star, 0);
  REQUIRE(steps.size() == 6);
  // Children by ascending id, equal ids by smallest atom.
  CHECK(steps[0].to == 1);
  CHECK(steps[2].to == 3);
  CHECK(steps[4].to == 2);
}

TEST_CASE("stable and novel substructure statistics") {
  const auto a = decompose(parse_smiles("Cc1ccccc1"));
  const auto b = decompose(parse_smiles("C1CCCCC1"));
  const auto same = stable_novelty_stats({{a, a}});
  CHECK(same.pct_original == doctest::Approx(1.0));
  CHECK(same.pct_with_novel == doctest::Approx(0.0));
  const auto disjoint = stable_novelty_stats({{a, b}});
  CHECK(disjoint.pct_original == doctest::Approx(0.0));
  CHECK(disjoint.pct_with_novel == doctest::Approx(1.0));
  const auto mixed = stable_novelty_stats({{a, a}, {b, a}});
  CHECK(mixed.pct_original == doctest::Approx(0.5));
  CHECK(mixed.pct_with_novel == doctest::Approx(0.5));
}

TEST_CASE("decomposition invariants over the corpus") {
  double total_nodes = 0.0;
  for (const auto& rec : testing::corpus()) {
    CAPTURE(rec.smiles);
    const auto g = parse_smiles(rec.smiles);
    const auto t = decompose(g);
    total_nodes += t.size();
    CHECK(t.size() == static_cast<int>(t.edges.size()) + 1);

    // Connected: a full traversal reaches every node, and each edge shows up once per direction.
    const auto steps = dfs_order(t, root_node(t));
    CHECK(steps.size() == 2 * t.edges.size());
    std::set<std::pair<int, int>> directed;
    for (const auto& s : steps) directed.insert({s.from, s.to});
    CHECK(directed.size() == steps.size());
    for (const auto& [a, b] : t.edges) {
      CHECK(directed.count({a, b}) + directed.count({b, a}) == 2);
      CHECK(shares_atom(t.nodes[static_cast<std::size_t>(a)], t.nodes[static_cast<std::size_t>(b)]));
    }

    std::vector<int> atom_cover(static_cast<std::size_t>(g.num_atoms()), 0);
    std::vector<int> bond_cover(static_cast<std::size_t>(g.num_bonds()), 0);
    for (const auto& n : t.nodes) {
      for (int a : n.atoms) ++atom_cover[static_cast<std::size_t>(a)];
      for (int b = 0; b < g.num_bonds(); ++b) {
        const auto& bond = g.bond(b);
        bond_cover[static_cast<std::size_t>(b)] += std::binary_search(n.atoms.begin(), n.atoms.end(), bond.begin) &&
                                                   std::binary_search(n.atoms.begin(), n.atoms.end(), bond.end);
      }
    }
    for (int c : atom_cover) CHECK(c >= 1);
    for (int b = 0; b < g.num_bonds(); ++b) {
      if (g.bond_in_ring(b)) {
        CHECK(bond_cover[static_cast<std::size_t>(b)] >= 1);
      } else {
        CHECK(bond_cover[static_cast<std::size_t>(b)] == 1);
      }
    }

    for (const auto& n : t.nodes) {
      const auto frag = fragment_graph(g, n.atoms);
      CHECK(graph_isomorphic(parse_smiles(n.key), frag));
      CHECK(canonical_smiles(parse_smiles(n.key)) == n.key);
    }
    CHECK(graph_isomorphic(glue_fragments(g, t), g));

    const auto again = decompose(g);
    CHECK(keys_of(again) == keys_of(t));
    CHECK(again.edges == t.edges);
  }
  MESSAGE("mean substructures per corpus molecule: " << total_nodes / static_cast<double>(testing::corpus().size()));
}
