#include <cmath>
#include <map>

#include "copyrefine/encoder.hpp"
#include "doctest.h"
#include "gradcheck.hpp"
#include "naive_mpn.hpp"
#include "test_support.hpp"

using namespace copyrefine;


TEST_CASE("feature widths") {
  const auto g = parse_smiles("c1ccccc1C(=O)[O-]");
  const Tensor af = atom_features(g);
  CHECK(af.cols == kAtomFeatureWidth);
  for (int i = 0; i < af.rows; ++i) {
    double ones = 0;
    for (int j = 0; j < af.cols; ++j) ones += af.at(i, j);
    CHECK(ones == doctest::Approx(4.0 + (g.atom(i).aromatic ? 1.0 : 0.0)));
  }
  CHECK(bond_features(g).rows == 2 * g.num_bonds());
}

TEST_CASE("graph encoder matches a naive message table") {
  std::mt19937_64 prng(4);
  std::mt19937 rng(8);
  for (int depth : {1, 3}) {
    ParameterSet ps;
    const int dim = 6;
    const GraphEncoder enc(ps, "enc", dim, depth, prng);
    for (int trial = 0; trial < 10; ++trial) {
      const auto g = testing::random_molecule(rng, 9);
      Tape t;
      const Tensor got = t.value(enc(t, g));
      const auto want = testing::naive_graph_encoding(ps, "enc", g, dim, depth);
      REQUIRE(got.rows == g.num_atoms());
      double worst = 0.0;
      for (int u = 0; u < got.rows; ++u) {
        for (int k = 0; k < dim; ++k) worst = std::max(worst, std::abs(got.at(u, k) - want[static_cast<std::size_t>(u)][static_cast<std::size_t>(k)]));
      }
      CHECK(worst <= 1e-10);
    }
  }
}

TEST_CASE("two-node and single-atom graphs") {
  std::mt19937_64 prng(10);
  ParameterSet ps;
  const GraphEncoder enc(ps, "enc", 4, 1, prng);
  {
    Tape t;
    const auto g = parse_smiles("CO");
    const auto want = testing::naive_graph_encoding(ps, "enc", g, 4, 1);
    const Tensor got = t.value(enc(t, g));
    for (int u = 0; u < 2; ++u) {
      for (int k = 0; k < 4; ++k) CHECK(got.at(u, k) == doctest::Approx(want[static_cast<std::size_t>(u)][static_cast<std::size_t>(k)]).epsilon(1e-12));
    }
  }
  {
    Tape t;
    const Tensor got = t.value(enc(t, parse_smiles("C")));
    CHECK(got.rows == 1);
    CHECK(got.cols == 4);
  }
}

TEST_CASE("embeddings follow atom relabelling") {
  std::mt19937_64 prng(2);
  std::mt19937 rng(3);
  ParameterSet ps;
  const GraphEncoder enc(ps, "enc", 5, 3, prng);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = testing::random_molecule(rng, 10);
    std::vector<int> perm(static_cast<std::size_t>(g.num_atoms()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Atom> atoms(perm.size());
    for (int i = 0; i < g.num_atoms(); ++i) atoms[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = g.atom(i);
    std::vector<Bond> bonds;
    for (const auto& b : g.bonds()) bonds.push_back({perm[static_cast<std::size_t>(b.begin)], perm[static_cast<std::size_t>(b.end)], b.order});
    std::shuffle(bonds.begin(), bonds.end(), rng);
    const MolecularGraph h(std::move(atoms), std::move(bonds));
    Tape t;
    const Tensor a = t.value(enc(t, g)), b = t.value(enc(t, h));
    for (int i = 0; i < g.num_atoms(); ++i) {
      for (int k = 0; k < 5; ++k) CHECK(std::abs(a.at(i, k) - b.at(perm[static_cast<std::size_t>(i)], k)) <= 1e-12);
    }
  }
}

TEST_CASE("an atom only sees atoms within the message depth") {
  std::mt19937_64 prng(6);
  ParameterSet ps;
  const int depth = 3;
  const GraphEncoder enc(ps, "enc", 5, depth, prng);
  Tape t;
  const Tensor base = t.value(enc(t, parse_smiles("CCCCCCCC")));
  const Tensor far = t.value(enc(t, parse_smiles("CCCCCCCO")));
  const Tensor near = t.value(enc(t, parse_smiles("CCCOCCCC")));
  for (int k = 0; k < 5; ++k) CHECK(base.at(0, k) == far.at(0, k));
  double diff = 0.0;
  for (int k = 0; k < 5; ++k) diff += std::abs(base.at(0, k) - near.at(0, k));
  CHECK(diff > 0.0);
}

TEST_CASE("tree encoder and global embedding") {
  std::mt19937_64 prng(12);
  ParameterSet ps;
  const TreeEncoder tenc(ps, "tree", 5, 4, 2, prng);
  const GraphEncoder genc(ps, "graph", 4, 2, prng);
  ScaffoldTree tree;
  for (int id : {0, 3, 5}) {
    TreeNode n;
    n.id = id;
    tree.nodes.push_back(n);
  }
  tree.edges = {{0, 1}, {1, 2}};
  Tape t;
  const Var tx = tenc(t, tree);
  const Var gx = genc(t, parse_smiles("CCO"));
  const Tensor z = t.value(global_embedding(t, tx, gx));
  REQUIRE(z.cols == 8);
  const Tensor tv = t.value(tx), gv = t.value(gx);
  for (int k = 0; k < 4; ++k) {
    CHECK(z.at(0, k) == doctest::Approx((tv.at(0, k) + tv.at(1, k) + tv.at(2, k)) / 3.0).epsilon(1e-14));
    CHECK(z.at(0, 4 + k) == doctest::Approx((gv.at(0, k) + gv.at(1, k) + gv.at(2, k)) / 3.0).epsilon(1e-14));
  }
  CHECK_THROWS_AS(global_embedding(t, t.constant(Tensor(0, 4)), gx), EmptySetError);

  tree.nodes[1].id = -1;
  CHECK_THROWS_AS(tenc(t, tree), std::invalid_argument);

  const auto check = testing::check_gradients(ps, [&](Tape& tape) {
    tree.nodes[1].id = 3;
    return sum(tape, global_embedding(tape, tenc(tape, tree), genc(tape, parse_smiles("CC=O"))));
  }, 6);
  CHECK(check.max_rel_error < 1e-4);
}
