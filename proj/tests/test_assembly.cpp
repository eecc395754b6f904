#include <algorithm>
#include <set>

#include "copyrefine/assembly.hpp"
#include "copyrefine/scaffold.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace copyrefine;

namespace {

MolecularGraph frag(const char* smiles) {
  const auto g = parse_smiles(smiles);
  std::vector<int> all(static_cast<std::size_t>(g.num_atoms()));
  for (int i = 0; i < g.num_atoms(); ++i) all[static_cast<std::size_t>(i)] = i;
  return fragment_graph(g, all);
}

struct Replay {
  int decisions = 0;
  int found = 0;
  int multi = 0;
};

// Places the tree nodes in DFS order, checking the true placement is offered each time.
Replay replay(const MolecularGraph& mol, const ScaffoldTree& tree) {
  Replay r;
  const int root = root_node(tree);
  std::vector<int> placed{root};
  for (const auto& step : dfs_order(tree, root)) {
    if (!step.expand) continue;
    const PartialMolecule state = gold_state(mol, tree, placed);
    placed.push_back(step.to);
    const std::string gold = assembly_key(gold_state(mol, tree, placed));
    const auto cands = enumerate_attachments(state, step.from, step.to, fragment_graph(mol, tree.nodes[static_cast<std::size_t>(step.to)].atoms));
    ++r.decisions;
    if (cands.size() > 1) ++r.multi;
    std::set<std::string> keys;
    for (const auto& c : cands) keys.insert(c.key);
    CHECK(keys.size() == cands.size());
    if (keys.count(gold)) ++r.found;
  }
  return r;
}

}  // namespace

TEST_CASE("hand-checked attachments") {
  const auto benzene = frag("c1ccccc1");
  PartialMolecule ring = start_assembly(2, 0, benzene);
  CHECK(count_raw_attachments(ring, 0, frag("Cc")) == 6);
  const auto tolyl = enumerate_attachments(ring, 0, 1, frag("Cc"));
  REQUIRE(tolyl.size() == 1);
  CHECK(canonical_smiles(finalize(tolyl[0].state)) == canonical_smiles(parse_smiles("Cc1ccccc1")));

  PartialMolecule ethane = start_assembly(2, 0, frag("CC"));
  const auto ether = enumerate_attachments(ethane, 0, 1, frag("CO"));
  CHECK(ether.size() <= 2);
  CHECK(canonical_smiles(finalize(ether[0].state)) == canonical_smiles(parse_smiles("CCO")));

  const auto fused = enumerate_attachments(ring, 0, 1, benzene);
  REQUIRE(fused.size() == 1);
  CHECK(canonical_smiles(finalize(fused[0].state)) == canonical_smiles(parse_smiles("c1ccc2ccccc2c1")));

  PartialMolecule full = start_assembly(2, 0, frag("CC(C)(C)C"));
  full.node_atoms[0] = {1};
  CHECK_THROWS_AS(enumerate_attachments(full, 0, 1, frag("CC")), NoValidAttachmentError);
  CHECK(can_attach(frag("CC"), frag("CO")));
  CHECK_FALSE(can_attach(frag("CC"), frag("NO")));

  const auto capped = enumerate_attachments(start_assembly(2, 0, frag("CCC")), 0, 1, frag("CN"), 1);
  CHECK(capped.size() == 1);
  CHECK_THROWS_AS(enumerate_attachments(ring, 0, 0, frag("CC")), std::invalid_argument);
}

TEST_CASE("finalize rejects unrealizable molecules") {
  PartialMolecule lone;
  Atom c;
  c.element = Element::C;
  c.aromatic = true;
  lone.atoms.push_back(c);
  lone.node_atoms.push_back({0});
  CHECK_THROWS_AS(finalize(lone), AssemblyError);
}

TEST_CASE("true placements are offered across the corpus") {
  Replay total;
  int rebuilt = 0;
  std::mt19937 rng(13);
  for (const auto& rec : testing::corpus()) {
    const auto parsed = parse_smiles(rec.smiles);
    for (const auto& mol : {parsed, testing::relabel(parsed, rng)}) {
      const auto tree = decompose(mol);
      const Replay r = replay(mol, tree);
      total.decisions += r.decisions;
      total.found += r.found;
      total.multi += r.multi;
      std::vector<int> all(tree.nodes.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
      if (graph_isomorphic(finalize(gold_state(mol, tree, all)), mol)) ++rebuilt;
    }
  }
  const double coverage = static_cast<double>(total.found) / total.decisions;
  MESSAGE("attachment decisions " << total.decisions << ", gold offered " << total.found << ", ambiguous " << total.multi);
  CHECK(rebuilt == 2 * static_cast<int>(testing::corpus().size()));
  CHECK(coverage >= 0.98);
}
