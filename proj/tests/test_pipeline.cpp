#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "copyrefine/pipeline.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace copyrefine;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<SimProp> sr_fixture() {
  std::ifstream in(testing::data_path("sr_fixture.tsv"));
  std::vector<SimProp> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    SimProp r;
    std::istringstream(line) >> r.sim >> r.property;
    out.push_back(r);
  }
  return out;
}

double set_tanimoto(const Fingerprint& a, const Fingerprint& b) {
  std::set<int> sa(a.bits.begin(), a.bits.end()), sb(b.bits.begin(), b.bits.end());
  std::set<int> u = sa;
  u.insert(sb.begin(), sb.end());
  int inter = 0;
  for (int x : sa) inter += sb.count(x) > 0;
  return u.empty() ? 1.0 : static_cast<double>(inter) / static_cast<double>(u.size());
}

std::vector<MoleculePair> brute_pairs(const std::vector<MolecularGraph>& mols, const PropertyOracle& oracle, double eta1,
                                      double eta2) {
  std::vector<MoleculePair> out;
  for (std::size_t i = 0; i < mols.size(); ++i) {
    for (std::size_t j = 0; j < mols.size(); ++j) {
      if (canonical_smiles(mols[i]) == canonical_smiles(mols[j])) continue;
      const double sim = set_tanimoto(morgan_fingerprint(mols[i]), morgan_fingerprint(mols[j]));
      const double delta = oracle.evaluate(mols[j]) - oracle.evaluate(mols[i]);
      if (sim >= eta1 && delta >= eta2) out.push_back({i, j, sim, delta});
    }
  }
  return out;
}

Sample ok(double sim, double prop) { return {"C", sim, prop, ""}; }
Sample failed() { return {"", 0.0, 0.0, "decode failed"}; }

}  // namespace

TEST_CASE("pair generation") {
  const auto qed = make_oracle("qed");
  const std::vector<MolecularGraph> one{parse_smiles("CCO")};
  CHECK(generate_pairs(one, *qed, 0.0, -kInf).empty());

  const std::vector<MolecularGraph> dup{parse_smiles("CCO"), parse_smiles("OCC"), parse_smiles("CCN")};
  const auto loose = generate_pairs(dup, *qed, 0.0, -kInf);
  CHECK(loose.size() == 4);
  for (const auto& p : loose) CHECK(!(p.x_index <= 1 && p.y_index <= 1));

  const std::vector<MolecularGraph> mols(testing::corpus_molecules().begin(), testing::corpus_molecules().begin() + 20);
  CHECK(generate_pairs(mols, *qed, 0.0, -kInf).size() == brute_pairs(mols, *qed, 0.0, -kInf).size());
  for (double eta1 : {0.1, 0.2, 0.4}) {
    for (double eta2 : {-0.1, 0.0, kDefaultEta2}) {
      CAPTURE(eta1);
      CAPTURE(eta2);
      const auto got = generate_pairs(mols, *qed, eta1, eta2);
      const auto want = brute_pairs(mols, *qed, eta1, eta2);
      REQUIRE(got.size() == want.size());
      for (std::size_t k = 0; k < got.size(); ++k) {
        CHECK(got[k].x_index == want[k].x_index);
        CHECK(got[k].y_index == want[k].y_index);
        CHECK(got[k].sim == want[k].sim);
        CHECK(got[k].delta == want[k].delta);
        CHECK(got[k].sim >= eta1);
        CHECK(got[k].delta >= eta2);
      }
    }
  }
  CHECK(generate_pairs(mols, *qed, 0.0, -kInf, 7).size() == 7);
}

TEST_CASE("infrequent subset") {
  const std::vector<MolecularGraph> common{parse_smiles("c1ccccc1C"), parse_smiles("c1ccccc1O"),
                                           parse_smiles("c1ccccc1N")};
  std::vector<MolecularGraph> corpus;
  for (int i = 0; i < 3; ++i) corpus.insert(corpus.end(), common.begin(), common.end());
  corpus.push_back(parse_smiles("C1CCCCCCC1"));
  const Vocabulary vocab = build_vocabulary(corpus);

  const std::vector<MolecularGraph> inputs{parse_smiles("c1ccccc1C"), parse_smiles("C1CCCCCCC1"),
                                           parse_smiles("c1ccccc1O"), parse_smiles("C1CCC1")};
  CHECK(infrequent_subset(inputs, vocab, 2) == std::vector<std::size_t>{1, 3});
  CHECK(infrequent_subset(inputs, vocab, 1) == std::vector<std::size_t>{3});
  CHECK(infrequent_subset(inputs, vocab, 1000).size() == 4);
}

TEST_CASE("pair files") {
  const auto path = std::filesystem::temp_directory_path() / "copyrefine_pairs.tsv";
  const std::vector<std::pair<std::string, std::string>> pairs{{"CCO", "CCN"}, {"c1ccccc1", "c1ccccc1O"}};
  write_pairs(path.string(), pairs);
  CHECK(read_pairs(path.string()) == pairs);
  try {
    read_pairs(testing::data_path("bad_pairs.tsv"));
    FAIL("expected PairFormatError");
  } catch (const PairFormatError& e) {
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  CHECK_THROWS_AS(read_pairs("/nonexistent/pairs.tsv"), std::runtime_error);
}

TEST_CASE("success rate arithmetic") {
  CHECK(success_rate({{0.5, 0.2}, {0.9, 0.9}}, {0.3, 0.6}) == 0.5);
  CHECK(success_rate({}, {0.3, 0.6}) == 0.0);

  const auto records = sr_fixture();
  REQUIRE(records.size() == 10);
  CHECK(success_rate(records, sr1_defaults("qed")) == 0.7);
  CHECK(success_rate(records, sr2_defaults("qed")) == 0.4);
  CHECK(success_rate(records, sr1_defaults("logp")) == 0.4);
  CHECK(success_rate(records, sr2_defaults("logp")) == 0.1);
  CHECK(success_rate(records, {0.0, -kInf}) == 1.0);

  // Tightening either threshold never raises the rate.
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Thresholds a{u(rng), u(rng)};
    const Thresholds b{a.similarity + 0.3 * u(rng), a.property + 0.3 * u(rng)};
    CHECK(success_rate(records, b) <= success_rate(records, a));
  }
}

TEST_CASE("threshold defaults and config validation") {
  CHECK(sr1_defaults("qed").similarity == 0.3);
  CHECK(sr1_defaults("drd2").property == 0.6);
  CHECK(sr2_defaults("qed").similarity == 0.4);
  CHECK(sr2_defaults("qed").property == 0.8);
  CHECK(sr1_defaults("logp").property == 0.8);
  CHECK(sr2_defaults("logp").property == 1.2);

  EvalConfig c;
  CHECK_NOTHROW(c.validate());
  c.k = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.sr2.property = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.property = "bioactivity";
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.sr1 = {0.0, -kInf};
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("aggregation over samples") {
  const auto oracle = make_oracle("qed");
  const std::vector<MolecularGraph> inputs{parse_smiles("CCO"), parse_smiles("CCN"), parse_smiles("CCC")};
  const std::vector<std::vector<Sample>> samples{
      {ok(0.5, 0.7), ok(0.2, 0.95), failed(), ok(0.45, 0.85)},
      {failed(), failed(), failed(), failed()},
      {ok(0.1, 0.1), ok(0.2, 0.3), ok(0.25, 0.2), failed()},
  };
  EvalConfig c;
  const EvalReport r = evaluate_samples(inputs, samples, {false, true, true}, *oracle, c);

  // Best of K: input 0 picks (0.45, 0.85); input 2 has no sample above 0.3 and falls back to sim 0.25.
  const MetricSet& best = r.best_of_k.full;
  CHECK(best.inputs == 3);
  CHECK(best.failed_inputs == 1);
  CHECK(best.similarity == doctest::Approx((0.45 + 0.0 + 0.25) / 3));
  CHECK(best.property == doctest::Approx((0.85 + 0.2) / 2));
  CHECK(best.sr1 == doctest::Approx(1.0 / 3));
  CHECK(best.sr2 == doctest::Approx(1.0 / 3));
  CHECK(r.best_of_k.infrequent.inputs == 2);
  CHECK(r.best_of_k.infrequent.sr1 == 0.0);
  CHECK(r.best_of_k.infrequent.similarity == doctest::Approx(0.125));

  // Mean of K: fraction of samples that succeed; failures count as sim 0.
  const MetricSet& mean = r.mean_of_k.full;
  CHECK(mean.similarity == doctest::Approx(((0.5 + 0.2 + 0.45) / 4 + 0.0 + (0.1 + 0.2 + 0.25) / 4) / 3));
  CHECK(mean.property == doctest::Approx(((0.7 + 0.95 + 0.85) / 3 + (0.1 + 0.3 + 0.2) / 3) / 2));
  CHECK(mean.sr1 == doctest::Approx((2.0 / 4) / 3));
  CHECK(mean.sr2 == doctest::Approx((1.0 / 4) / 3));

  CHECK(r.records[0].property == oracle->evaluate(inputs[0]));
  CHECK(report_json(r) == report_json(evaluate_samples(inputs, samples, {false, true, true}, *oracle, c)));
  CHECK(report_table(r).find("infrequent") != std::string::npos);
  CHECK_THROWS_AS(evaluate_samples(inputs, samples, {false}, *oracle, c), std::invalid_argument);
}

TEST_CASE("identity decode scores similarity one") {
  const auto oracle = make_oracle("qed");
  std::vector<MolecularGraph> inputs;
  std::vector<std::vector<Sample>> samples;
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& x = testing::corpus_molecules()[i];
    inputs.push_back(x);
    const Sample s = score_output(x, x, "", *oracle);
    CHECK(s.ok());
    CHECK(s.sim == 1.0);
    CHECK(s.smiles == canonical_smiles(x));
    samples.push_back({s});
  }
  EvalConfig c;
  c.k = 1;
  c.sr1 = {0.0, -kInf};
  const EvalReport r = evaluate_samples(inputs, samples, std::vector<bool>(10, false), *oracle, c);
  CHECK(r.best_of_k.full.similarity == 1.0);
  CHECK(r.best_of_k.full.sr1 == 1.0);
  CHECK(r.mean_of_k.full.sr1 == 1.0);

  const Sample miss = score_output(inputs[0], std::nullopt, "budget exhausted", *oracle);
  CHECK(!miss.ok());
  CHECK(miss.error == "budget exhausted");
}

TEST_CASE("parallel_for") {
  for (int workers : {1, 2, 5}) {
    std::vector<int> hit(37, 0);
    parallel_for(hit.size(), workers, [&](std::size_t i) { hit[i] += static_cast<int>(i); });
    for (std::size_t i = 0; i < hit.size(); ++i) CHECK(hit[i] == static_cast<int>(i));
  }
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                    if (i == 6) throw std::runtime_error("boom");
                  }),
                  std::runtime_error);
}

TEST_CASE("evaluate is independent of worker count") {
  std::vector<MolecularGraph> mols(testing::corpus_molecules().begin(), testing::corpus_molecules().begin() + 6);
  ModelConfig mc;
  mc.dim = 8;
  mc.tree_depth = 2;
  mc.graph_depth = 2;
  mc.disc_hidden = 8;
  mc.seed = 11;
  const CoreModel model(build_vocabulary(mols), mc);
  EvalConfig c;
  c.k = 3;
  c.budget = 12;
  const EvalReport serial = evaluate(model, mols, c);
  c.workers = 3;
  const EvalReport threaded = evaluate(model, mols, c);
  CHECK(report_json(serial) == report_json(threaded));
  CHECK(serial.records.size() == 6);
  for (const auto& rec : serial.records) CHECK(rec.samples.size() == 3);
}
