#include <cmath>
#include <numeric>
#include <set>

#include "copyrefine/decoder.hpp"
#include "doctest.h"
#include "gradcheck.hpp"
#include "test_support.hpp"

using namespace copyrefine;

namespace {

const Vocabulary& corpus_vocab() {
  static const Vocabulary vocab = [] {
    return build_vocabulary(testing::corpus_molecules());
  }();
  return vocab;
}

ModelConfig small_config(int dim, std::uint64_t seed = 3) {
  ModelConfig c;
  c.dim = dim;
  c.tree_depth = 2;
  c.graph_depth = 2;
  c.disc_hidden = 8;
  c.seed = seed;
  return c;
}

double total(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

void zero_params(ParameterSet& ps) {
  for (std::size_t i = 0; i < ps.size(); ++i) std::fill(ps[i].value.data.begin(), ps[i].value.data.end(), 0.0);
}

}  // namespace

TEST_CASE("attention_context: singleton, symmetric and hand-computed cases") {
  Tape t;
  const Var q = t.constant(Tensor(1, 2, {0.5, -1.0}));
  const Var one = t.constant(Tensor(1, 2, {3.0, 4.0}));
  const Var graph = t.constant(Tensor(3, 2, {1.0, 0.0, 0.0, 1.0, 2.0, 2.0}));
  const Attention a = attention_context(t, q, one, graph);
  CHECK(t.value(a.tree_weights).data == std::vector<double>{1.0});
  CHECK(t.value(a.context).at(0, 0) == 3.0);
  CHECK(t.value(a.context).at(0, 1) == 4.0);

  // scores 0.5, -1, -1
  const double e0 = std::exp(0.5), e1 = std::exp(-1.0);
  const double z = e0 + 2 * e1;
  const Tensor& gw = t.value(a.graph_weights);
  CHECK(gw.at(0, 0) == doctest::Approx(e0 / z).epsilon(1e-14));
  CHECK(gw.at(0, 1) == doctest::Approx(e1 / z).epsilon(1e-14));
  CHECK(gw.at(0, 2) == doctest::Approx(e1 / z).epsilon(1e-14));
  CHECK(t.value(a.context).at(0, 2) == doctest::Approx((e0 + 2 * e1) / z));
  CHECK(t.value(a.context).at(0, 3) == doctest::Approx((e1 + 2 * e1) / z));

  const Var same = t.constant(Tensor(4, 2, {1, 2, 1, 2, 1, 2, 1, 2}));
  const Attention u = attention_context(t, q, same, graph);
  for (double w : t.value(u.tree_weights).data) CHECK(w == doctest::Approx(0.25));

  CHECK_THROWS_AS(attention_context(t, q, t.constant(Tensor(0, 2)), graph), EmptySetError);
  CHECK_THROWS_AS(attention_context(t, q, one, t.constant(Tensor(0, 2))), EmptySetError);
}

TEST_CASE("copy_vector examples and scatter-add oracle") {
  CHECK(copy_vector({7}, {1.0}, 10) == std::vector<double>{0, 0, 0, 0, 0, 0, 0, 1, 0, 0});
  const auto two = copy_vector({4, 4}, {0.3, 0.7}, 6);
  CHECK(two[4] == doctest::Approx(1.0));
  CHECK(total(two) == doctest::Approx(1.0));

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> ids(5);
    for (auto& id : ids) id = static_cast<int>(rng() % 8);
    std::vector<double> w(5);
    for (auto& x : w) x = uniform01(rng) + 0.01;
    const double s = total(w);
    for (auto& x : w) x /= s;
    const auto a = copy_vector(ids, w, 8);
    std::vector<double> oracle(8, 0.0);
    for (int j = 0; j < 5; ++j) oracle[static_cast<std::size_t>(ids[static_cast<std::size_t>(j)])] += w[static_cast<std::size_t>(j)];
    const std::set<int> distinct(ids.begin(), ids.end());
    int support = 0;
    for (int i = 0; i < 8; ++i) {
      CHECK(a[static_cast<std::size_t>(i)] == doctest::Approx(oracle[static_cast<std::size_t>(i)]).epsilon(1e-15));
      if (!distinct.count(i)) CHECK(a[static_cast<std::size_t>(i)] == 0.0);
      support += a[static_cast<std::size_t>(i)] > 0.0;
    }
    CHECK(support <= static_cast<int>(distinct.size()));

    Tape t;
    const Var av = copy_vector(t, t.constant(Tensor(1, 5, w)), ids, 8, t.constant(Tensor(1, 8)));
    CHECK(t.value(av).data == a);
  }

  // UNK (id == size) is dropped and the rest renormalised.
  const auto unk = copy_vector({2, 5, 1}, {0.5, 0.25, 0.25}, 5);
  CHECK(unk[2] == doctest::Approx(2.0 / 3.0));
  CHECK(unk[1] == doctest::Approx(1.0 / 3.0));
  Tape t;
  const Var fallback = t.constant(Tensor(1, 3, {0.2, 0.3, 0.5}));
  CHECK(t.value(copy_vector(t, t.constant(Tensor(1, 1, {1.0})), {3}, 3, fallback)).data ==
        std::vector<double>{0.2, 0.3, 0.5});
  CHECK_THROWS_AS(copy_vector({1, 2}, {1.0}, 3), ShapeMismatchError);
}

TEST_CASE("hybrid_distribution arithmetic, endpoints and bounds") {
  const auto mix = hybrid_distribution(0.4, {0.5, 0.5}, {1.0, 0.0});
  CHECK(mix[0] == doctest::Approx(0.8));
  CHECK(mix[1] == doctest::Approx(0.2));
  CHECK_THROWS_AS(hybrid_distribution(0.5, {1.0}, {0.5, 0.5}), ShapeMismatchError);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 9);
    std::vector<double> q(static_cast<std::size_t>(n)), a(static_cast<std::size_t>(n), 0.0);
    for (auto& x : q) x = uniform01(rng);
    const double s = total(q);
    for (auto& x : q) x /= s;
    a[rng() % static_cast<unsigned>(n)] = 1.0;
    CHECK(hybrid_distribution(1.0, q, a) == q);
    CHECK(hybrid_distribution(0.0, q, a) == a);
    const double w = uniform01(rng);
    const auto m = hybrid_distribution(w, q, a);
    CHECK(total(m) == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 0; i < n; ++i) {
      CHECK(m[static_cast<std::size_t>(i)] >= w * q[static_cast<std::size_t>(i)]);
      CHECK(m[static_cast<std::size_t>(i)] >= (1.0 - w) * a[static_cast<std::size_t>(i)] - 1e-15);
    }
    if (w < 0.5) {
      const auto best = std::max_element(m.begin(), m.end()) - m.begin();
      CHECK(a[static_cast<std::size_t>(best)] == 1.0);
    }

    Tape t;
    const Var qv = t.constant(Tensor(1, n, q)), av = t.constant(Tensor(1, n, a));
    CHECK(t.value(hybrid_distribution(t, t.constant(Tensor(1, 1, 1.0)), qv, av)).data == q);
    CHECK(t.value(hybrid_distribution(t, t.constant(Tensor(1, 1, 0.0)), qv, av)).data == a);
  }
}

TEST_CASE("zeroed heads give one half; |S| = 1 gives q = [1]") {
  CoreModel model(corpus_vocab(), small_config(8));
  zero_params(model.params());
  const auto x = parse_smiles("CCOc1ccccc1");
  Tape t;
  const Encoding enc = encode(t, model, x, model.tree_of(x));
  const Var f = t.constant(Tensor(1, 8));
  CHECK(t.scalar(topo_probability(t, model, enc, f, f)) == 0.5);
  CHECK(t.scalar(ooi_weight(t, model, t.constant(Tensor(1, 16)), enc.z)) == 0.5);

  CoreModel single(Vocabulary({{"CC", 1}}), small_config(8));
  const auto y = parse_smiles("CC");
  Tape u;
  const Encoding e1 = encode(u, single, y, single.tree_of(y));
  const SubstructureStep s = substructure_step(u, single, e1, u.constant(Tensor(1, 8, 0.3)));
  CHECK(u.value(s.q).data == std::vector<double>{1.0});
}

TEST_CASE("heads stay strictly inside (0,1) and w responds to both inputs") {
  CoreModel model(corpus_vocab(), small_config(8));
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto& x = testing::corpus_molecules()[rng() % testing::corpus_molecules().size()];
    Tape t;
    const Encoding enc = encode(t, model, x, model.tree_of(x));
    const Var h = t.constant(testing::random_tensor(1, 8, rng));
    const double p = t.scalar(topo_probability(t, model, enc, h, t.constant(testing::random_tensor(1, 8, rng))));
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    const SubstructureStep s = substructure_step(t, model, enc, h);
    CHECK(t.scalar(s.w) > 0.0);
    CHECK(t.scalar(s.w) < 1.0);
    CHECK(total(t.value(s.q).data) == doctest::Approx(1.0).epsilon(1e-9));
  }

  // Central differences with respect to each input block.
  Tape t;
  const Tensor c0 = testing::random_tensor(1, 16, rng);
  const Tensor z0 = testing::random_tensor(1, 16, rng);
  auto w_at = [&](const Tensor& c, const Tensor& z) { return t.scalar(ooi_weight(t, model, t.constant(c), t.constant(z))); };
  double dc = 0.0, dz = 0.0;
  for (int i = 0; i < 16; ++i) {
    Tensor cp = c0, cm = c0, zp = z0, zm = z0;
    cp.data[static_cast<std::size_t>(i)] += 1e-5;
    cm.data[static_cast<std::size_t>(i)] -= 1e-5;
    zp.data[static_cast<std::size_t>(i)] += 1e-5;
    zm.data[static_cast<std::size_t>(i)] -= 1e-5;
    dc = std::max(dc, std::abs(w_at(cp, z0) - w_at(cm, z0)) / 2e-5);
    dz = std::max(dz, std::abs(w_at(c0, zp) - w_at(c0, zm)) / 2e-5);
  }
  CHECK(dc > 1e-6);
  CHECK(dz > 1e-6);
}

TEST_CASE("assembly loss on two scored candidates") {
  Tape t;
  const Var lp = log_softmax(t, t.constant(Tensor(1, 2, {2.0, 1.0})));
  const double loss = -t.value(lp).at(0, 0);
  CHECK(loss == doctest::Approx(-std::log(std::exp(2.0) / (std::exp(2.0) + std::exp(1.0)))).epsilon(1e-14));
  CHECK(loss == doctest::Approx(0.3133).epsilon(1e-4));
}

TEST_CASE("decoder normalisation and copy sparsity over 1000 steps") {
  CoreModel model(corpus_vocab(), small_config(16));
  const int v = model.vocab_size();
  std::mt19937 mol_rng(23);
  int steps = 0;
  int decode = 0;
  while (steps < 1000) {
    const auto x = decode % 3 == 2 ? testing::random_molecule(mol_rng, 10)
                                   : testing::corpus_molecules()[static_cast<std::size_t>(decode) % testing::corpus_molecules().size()];
    const ScaffoldTree tree = model.tree_of(x);
    std::set<int> ids;
    bool any_known = false;
    for (const auto& n : tree.nodes) {
      ids.insert(n.id);
      any_known = any_known || n.id < v;
    }
    DecodeOptions opt;
    opt.sample = true;
    opt.seed = static_cast<std::uint64_t>(decode);
    opt.budget = 12;
    const DecodeTrace trace = decode_tree(model, x, tree, opt);
    for (const auto& s : trace.steps) {
      if (s.kind != DecoderStep::Kind::Substructure) continue;
      ++steps;
      CHECK(total(s.alpha_tree) == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(total(s.alpha_graph) == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(total(s.q) == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(total(s.a) == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(total(s.q_tilde) == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(s.w > 0.0);
      CHECK(s.w < 1.0);
      if (any_known) {
        for (int i = 0; i < v; ++i) {
          if (!ids.count(i)) CHECK(s.a[static_cast<std::size_t>(i)] == 0.0);
        }
      }
    }
    ++decode;
  }
}

TEST_CASE("forced copy keeps every generated substructure inside the input tree") {
  CoreModel model(corpus_vocab(), small_config(16));
  for (int k = 0; k < 100; ++k) {
    const auto& x = testing::corpus_molecules()[static_cast<std::size_t>(k)];
    const ScaffoldTree tree = model.tree_of(x);
    std::set<int> ids;
    for (const auto& n : tree.nodes) ids.insert(n.id);
    DecodeOptions opt;
    opt.sample = true;
    opt.seed = static_cast<std::uint64_t>(k);
    opt.force_w = 0.0;
    const DecodeTrace trace = decode_tree(model, x, tree, opt);
    for (const auto& n : trace.tree.nodes) CHECK(ids.count(n.id) == 1);
    for (const auto& s : trace.steps) {
      if (s.kind == DecoderStep::Kind::Substructure) CHECK(s.q_tilde == s.a);
    }
  }
}

TEST_CASE("decode_tree: budget, replay and trace shape") {
  CoreModel model(corpus_vocab(), small_config(16));
  CHECK_THROWS_AS(decode_tree(model, parse_smiles("CC"), model.tree_of(parse_smiles("CC")), {false, 0, 1.0, 0, std::nullopt}),
                  std::invalid_argument);
  for (int k = 0; k < 30; ++k) {
    const auto& x = testing::corpus_molecules()[static_cast<std::size_t>(k)];
    const ScaffoldTree tree = model.tree_of(x);

    DecodeOptions one;
    one.budget = 1;
    one.sample = k % 2 == 1;
    one.seed = static_cast<std::uint64_t>(k);
    CHECK(decode_tree(model, x, tree, one).tree.nodes.size() == 1);

    DecodeOptions opt;
    opt.sample = true;
    opt.seed = 100 + static_cast<std::uint64_t>(k);
    opt.budget = 15;
    const DecodeTrace a = decode_tree(model, x, tree, opt);
    const DecodeTrace b = decode_tree(model, x, tree, opt);
    REQUIRE(a.steps.size() == b.steps.size());
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
      CHECK(a.steps[i].choice == b.steps[i].choice);
      CHECK(a.steps[i].expand == b.steps[i].expand);
      CHECK(a.steps[i].q_tilde == b.steps[i].q_tilde);
    }

    const int n = static_cast<int>(a.tree.nodes.size());
    CHECK(static_cast<int>(a.tree.edges.size()) == n - 1);
    for (int i = 1; i < n; ++i) CHECK(a.parent[static_cast<std::size_t>(i)] < i);
    if (!a.budget_exceeded) {
      int expands = 0, topo = 0;
      for (const auto& s : a.steps) {
        if (s.kind != DecoderStep::Kind::Topo) continue;
        ++topo;
        expands += s.expand;
      }
      CHECK(expands == n - 1);
      CHECK(topo - 1 == 2 * (n - 1));
      CHECK(a.terminated_by() == "root_backtrack");
    } else {
      CHECK(a.terminated_by() == "budget");
      CHECK(n == 15);
    }
  }
}

TEST_CASE("assemble_graph on a single-node tree returns the fragment") {
  CoreModel model(corpus_vocab(), small_config(8));
  DecodeOptions opt;
  opt.budget = 1;
  const auto x = parse_smiles("c1ccccc1");
  const DecodeTrace trace = decode_tree(model, x, model.tree_of(x), opt);
  const AssemblyResult r = assemble_graph(model, trace);
  CHECK(canonical_smiles(r.molecule) == canonical_smiles(model.vocab().fragment(trace.tree.nodes[0].id)));
}

TEST_CASE("gradient checks through attention, g3, g5, g6 and candidate scoring") {
  Vocabulary vocab = [] {
    std::vector<MolecularGraph> mols;
    for (const char* s : {"CCO", "c1ccccc1C", "C1CCNCC1", "CC(=O)N"}) mols.push_back(parse_smiles(s));
    return build_vocabulary(mols);
  }();
  CoreModel model(std::move(vocab), small_config(4, 9));
  const auto x = parse_smiles("Cc1ccccc1CO");
  const ScaffoldTree tree = model.tree_of(x);
  std::mt19937_64 rng(2);
  const Tensor h0 = testing::random_tensor(1, 4, rng);
  const Tensor s0 = testing::random_tensor(1, 4, rng);
  const int target = 1;

  SUBCASE("attention") {
    const auto r = testing::check_gradients(model.params(), [&](Tape& t) {
      const Encoding enc = encode(t, model, x, tree);
      const Attention a = attention_context(t, t.constant(h0), enc.tree, enc.graph);
      return sum(t, mul(t, a.context, a.context));
    }, 6);
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("g3") {
    const auto r = testing::check_gradients(model.params(), [&](Tape& t) {
      const Encoding enc = encode(t, model, x, tree);
      return log_sigmoid(t, topo_logit(t, model, enc, t.constant(h0), t.constant(s0)));
    }, 6);
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("g5 and g6 through the hybrid") {
    const auto r = testing::check_gradients(model.params(), [&](Tape& t) {
      const Encoding enc = encode(t, model, x, tree);
      const SubstructureStep s = substructure_step(t, model, enc, t.constant(h0));
      return log(t, pick(t, s.q_tilde, 0, target));
    }, 6);
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("candidate scores") {
    const PartialMolecule start = start_assembly(2, 0, parse_smiles("C1CCCCC1"));
    const auto cands = enumerate_attachments(start, 0, 1, parse_smiles("CC"));
    std::vector<CandidateGraph> graphs;
    for (const auto& c : cands) graphs.push_back(candidate_graph(c));
    graphs.push_back(candidate_graph(enumerate_attachments(start, 0, 1, parse_smiles("CO"))[0]));
    const Tensor ctx = testing::random_tensor(1, 8, rng);
    const auto r = testing::check_gradients(model.params(), [&](Tape& t) {
      return pick(t, log_softmax(t, candidate_scores(t, model, graphs, t.constant(ctx))), 0, 0);
    }, 6);
    CHECK(r.max_rel_error < 1e-4);
  }
}
