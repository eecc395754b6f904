#include <cmath>
#include <fstream>
#include <set>
#include <tuple>

#include "copyrefine/chemprop.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace copyrefine;

namespace {

Fingerprint fp_of(std::vector<int> bits, int nbits = 16) {
  Fingerprint f;
  f.nbits = nbits;
  f.bits = std::move(bits);
  return f;
}

double brute_tanimoto(const Fingerprint& a, const Fingerprint& b) {
  std::set<int> sa(a.bits.begin(), a.bits.end()), sb(b.bits.begin(), b.bits.end()), u = sa;
  u.insert(sb.begin(), sb.end());
  int inter = 0;
  for (int x : sa) inter += sb.count(x) > 0;
  return u.empty() ? 1.0 : static_cast<double>(inter) / static_cast<double>(u.size());
}

}  // namespace

TEST_CASE("fnv1a over little-endian words") {
  CHECK(fnv1a({}) == kFnvOffset);
  std::uint64_t h = kFnvOffset;
  const unsigned char bytes[] = {0x2a, 0, 0, 0, 0, 0, 0, 0};
  for (unsigned char b : bytes) {
    h ^= b;
    h *= kFnvPrime;
  }
  const std::int64_t word[] = {42};
  CHECK(fnv1a(word) == h);
}

TEST_CASE("morgan fingerprint environments") {
  const auto ethanol = parse_smiles("CCO");
  const auto r0 = morgan_identifiers(ethanol, 0);
  CHECK(std::set<std::uint64_t>(r0.begin(), r0.end()).size() == 3);
  CHECK(morgan_fingerprint(ethanol, 0).bits.size() == 3);

  const auto methane = morgan_fingerprint(parse_smiles("C"), 1);
  const auto ethane = morgan_fingerprint(parse_smiles("CC"), 1);
  std::vector<int> common;
  std::set_intersection(methane.bits.begin(), methane.bits.end(), ethane.bits.begin(), ethane.bits.end(),
                        std::back_inserter(common));
  CHECK(common.empty());
  CHECK(methane.bits.size() == 2);
  CHECK(ethane.bits.size() == 2);

  // Radius-0 classes equal the distinct (element, degree, charge, H, ring) tuples.
  std::mt19937 rng(3);
  for (const auto& g : testing::corpus_molecules()) {
    std::set<std::tuple<int, int, int, int, bool>> classes;
    for (int i = 0; i < g.num_atoms(); ++i) {
      const Atom& a = g.atom(i);
      classes.insert({atomic_number(a.element), g.degree(i), a.formal_charge, a.explicit_hydrogens, g.atom_in_ring(i)});
    }
    const auto ids = morgan_identifiers(g, 0);
    CHECK(std::set<std::uint64_t>(ids.begin(), ids.end()).size() == classes.size());

    const Fingerprint fp = morgan_fingerprint(g);
    CHECK(std::is_sorted(fp.bits.begin(), fp.bits.end()));
    for (int b : fp.bits) {
      CHECK(b >= 0);
      CHECK(b < 2048);
    }
    CHECK(morgan_fingerprint(testing::relabel(g, rng)).bits == fp.bits);
  }
}

TEST_CASE("tanimoto examples and brute-force set oracle") {
  CHECK(tanimoto(fp_of({1, 2, 3}), fp_of({1, 2, 3})) == 1.0);
  CHECK(tanimoto(fp_of({1, 2}), fp_of({5, 6})) == 0.0);
  CHECK(tanimoto(fp_of({1, 2, 3}), fp_of({2, 3, 4})) == 0.5);
  CHECK(tanimoto(fp_of({}), fp_of({})) == 1.0);
  CHECK_THROWS_AS(tanimoto(fp_of({1}, 16), fp_of({1}, 32)), LengthMismatchError);

  const auto& mols = testing::corpus_molecules();
  std::mt19937 rng(9);
  for (int k = 0; k < 50; ++k) {
    const Fingerprint a = morgan_fingerprint(mols[rng() % mols.size()]);
    const Fingerprint b = morgan_fingerprint(mols[rng() % mols.size()]);
    const double t = tanimoto(a, b);
    CHECK(t == brute_tanimoto(a, b));
    CHECK(t == tanimoto(b, a));
    CHECK(t >= 0.0);
    CHECK(t <= 1.0);
    CHECK(tanimoto(a, a) == 1.0);
  }
}

TEST_CASE("crippen logP") {
  CHECK(crippen_logp(MolecularGraph()) == 0.0);

  // CH3 (C1) + CH2-O (C3) + OH (O2) + 5 H on C (H1) + alcohol H (H2)
  const double ethanol = 0.1441 - 0.2035 - 0.2893 + 5 * 0.123 - 0.2677;
  CHECK(crippen_logp(parse_smiles("CCO")) == doctest::Approx(ethanol).epsilon(1e-12));
  CHECK(crippen_types(parse_smiles("CCO")) == std::vector<std::string>{"C1", "C3", "O2"});
  CHECK(crippen_logp(parse_smiles("CCCCCCCC")) > crippen_logp(parse_smiles("C")));
  CHECK_THROWS_AS(crippen_contribution("C99"), UnclassifiedAtomError);

  std::ifstream in(testing::data_path("crippen_reference.tsv"));
  REQUIRE(in);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    const std::string smiles = line.substr(0, tab);
    const double expected = std::stod(line.substr(tab + 1));
    CAPTURE(smiles);
    CHECK(crippen_logp(parse_smiles(smiles)) == doctest::Approx(expected).epsilon(1e-9));
    ++rows;
  }
  CHECK(rows == 164);
}

TEST_CASE("penalized logP terms") {
  CHECK(ring_penalty(parse_smiles("CCCCO")) == 0);
  CHECK(ring_penalty(parse_smiles("C1CCCCCCC1")) == 2);
  CHECK(ring_penalty(parse_smiles("c1ccccc1")) == 0);
  CHECK(sa_proxy(parse_smiles("c1ccc2ccccc2c1")) == doctest::Approx(0.2));
  CHECK(sa_proxy(parse_smiles("CC(C)(C)C")) == doctest::Approx(0.05));
  CHECK(sa_proxy(parse_smiles("c1ccccc1")) == 0.0);
  for (const auto& g : testing::corpus_molecules()) {
    const PenalizedLogP p = penalized_logp_terms(g);
    CHECK(p.value == p.logp - p.ring_penalty - p.sa_proxy);
    CHECK(penalized_logp(g) == p.value);
  }
}

TEST_CASE("qed_like") {
  const double ones[] = {1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  CHECK(geometric_mean(ones) == 1.0);
  const double with_zero[] = {1.0, 0.0};
  CHECK(geometric_mean(with_zero) == 0.0);
  CHECK_THROWS_AS(desirability("PSA", 1.0), std::invalid_argument);

  const auto aspirin = parse_smiles("CC(=O)Oc1ccccc1C(=O)O");
  const QedDescriptors d = qed_descriptors(aspirin);
  CHECK(d.mw == doctest::Approx(180.159).epsilon(1e-4));
  CHECK(d.hba == 4);
  CHECK(d.hbd == 1);
  CHECK(d.arom == 1);
  CHECK(d.rotb == 3);

  const auto greasy = parse_smiles(std::string(60, 'C'));
  CHECK(qed_like(aspirin) > qed_like(greasy));
  for (const auto& g : testing::corpus_molecules()) {
    const double q = qed_like(g);
    CHECK(q >= 0.0);
    CHECK(q <= 1.0);
    CHECK(q == qed_like(g));
  }
}

TEST_CASE("property oracles") {
  for (const auto& name : oracle_names()) {
    const auto oracle = make_oracle(name);
    CHECK(oracle->name() == name);
    for (const auto& g : testing::corpus_molecules()) {
      const double v = oracle->evaluate(g);
      CHECK(std::isfinite(v));
      CHECK(v >= oracle->min_value());
      CHECK(v <= oracle->max_value());
    }
  }
  CHECK_THROWS_AS(make_oracle("bioactivity"), std::invalid_argument);
  CHECK(make_oracle("logp")->evaluate(parse_smiles("CCO")) == penalized_logp(parse_smiles("CCO")));
  CHECK(drd2_standin(parse_smiles("CCCC")) == 0.0);
  CHECK(drd2_standin(parse_smiles("c1ccccc1CCN(C)C")) == doctest::Approx(1.0 - std::exp(-2.0 / 3.0)));
}
