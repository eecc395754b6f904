#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "copyrefine/pipeline.hpp"
#include "copyrefine/training.hpp"

using namespace copyrefine;
namespace fs = std::filesystem;

namespace {

// Bad flags, unreadable inputs or malformed files: exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string format(double v) {
  char buf[64];
  const auto end = std::to_chars(buf, buf + sizeof buf, v).ptr;
  return std::string(buf, end);
}
std::string format(bool v) { return v ? "true" : "false"; }
std::string format(int v) { return std::to_string(v); }
std::string format(long v) { return std::to_string(v); }
std::string format(std::uint64_t v) { return std::to_string(v); }
std::string format(const std::string& v) { return v; }

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  std::vector<std::pair<std::string, std::function<std::string()>>> fields;
  std::string config_path;

  template <class T>
  CLI::Option* field(const std::string& key, T& ref, const std::string& help) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    fields.emplace_back(key, [&ref] { return format(ref); });
    return app->add_option(flag, ref, help)->capture_default_str();
  }

  std::string resolved() const {
    std::string out = "# copyrefine " + name + "\n";
    for (const auto& [key, get] : fields) out += key + "=" + get() + "\n";
    return out;
  }

  void emit(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream(path) << resolved();
  }
};

// Flat key=value file turned into leading flags; later command-line flags win.
std::vector<std::string> config_flags(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config " + path);
  std::vector<std::string> out;
  std::string line;
  std::size_t number = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++number;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path + ": expected key=value on line " + std::to_string(number));
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    out.push_back("--" + key);
    out.push_back(trim(line.substr(eq + 1)));
  }
  return out;
}

template <class F>
auto input(const std::string& what, F&& read) {
  try {
    return read();
  } catch (const std::exception& e) {
    throw UsageError(what + ": " + e.what());
  }
}

std::vector<MolecularGraph> read_molecules(const std::string& path) {
  const auto records = input(path, [&] { return read_smiles_file(path); });
  std::vector<MolecularGraph> out;
  for (const auto& r : records) {
    try {
      out.push_back(parse_smiles(r.smiles));
    } catch (const MoleculeError& e) {
      throw UsageError(path + ": line " + std::to_string(r.line) + ": " + e.what());
    }
  }
  if (out.empty()) throw UsageError(path + ": no molecules");
  return out;
}

std::unique_ptr<CoreModel> read_model(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("model not found: " + path);
  return input(path, [&] { return load_model(path); });
}

Thresholds parse_thresholds(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw UsageError("thresholds must look like 0.3,0.6: " + text);
  try {
    return {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
  } catch (const std::exception&) {
    throw UsageError("thresholds must look like 0.3,0.6: " + text);
  }
}

std::string format_thresholds(Thresholds t) { return format(t.similarity) + "," + format(t.property); }

// ---- vocab

struct VocabArgs {
  std::string input, out;
  long threshold = kInfrequentThreshold;
};

int run_vocab(const VocabArgs& a, const Command& cmd) {
  const auto mols = read_molecules(a.input);
  std::vector<ScaffoldTree> trees;
  std::size_t nodes = 0;
  for (const auto& m : mols) {
    trees.push_back(decompose(m));
    nodes += trees.back().nodes.size();
  }
  const Vocabulary vocab = build_vocabulary_from_trees(trees);
  fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  vocab.save(a.out);
  cmd.emit(a.out + ".cfg");
  int infrequent = 0;
  for (int id = 0; id < vocab.size(); ++id) {
    infrequent += classify_frequency(vocab, id, a.threshold) == FrequencyClass::Infrequent;
  }
  std::printf("molecules\t%zu\nvocabulary\t%d\navg_nodes\t%.4f\nfrequent\t%d\ninfrequent\t%d\n", mols.size(),
              vocab.size(), static_cast<double>(nodes) / static_cast<double>(mols.size()), vocab.size() - infrequent,
              infrequent);
  return 0;
}

// ---- pairs

struct PairsArgs {
  std::string input, out, property = "logp";
  double eta1 = 0.4;
  double eta2 = kDefaultEta2;
  long cap = 0;
};

int run_pairs(const PairsArgs& a, const Command& cmd) {
  const auto oracle = input("property", [&] { return make_oracle(a.property); });
  const auto mols = read_molecules(a.input);
  const std::size_t cap = a.cap > 0 ? static_cast<std::size_t>(a.cap) : std::numeric_limits<std::size_t>::max();
  const auto pairs = generate_pairs(mols, *oracle, a.eta1, a.eta2, cap);
  std::vector<std::string> smiles;
  for (const auto& m : mols) smiles.push_back(canonical_smiles(m));
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& p : pairs) rows.emplace_back(smiles[p.x_index], smiles[p.y_index]);
  fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_pairs(a.out, rows);
  cmd.emit(a.out + ".cfg");
  std::printf("pairs\t%zu\n", rows.size());
  return 0;
}

// ---- train

struct TrainArgs {
  std::string pairs, vocab, out, valid, property = "qed";
  TrainConfig config;
  int valid_k = 20;
  int budget = 50;
  int workers = 1;
};

int run_train(const TrainArgs& a, const Command& cmd) {
  input("train config", [&] {
    a.config.validate();
    return 0;
  });
  if (!fs::exists(a.vocab)) throw UsageError("vocabulary not found: " + a.vocab);
  Vocabulary vocab = input(a.vocab, [&] { return Vocabulary::load(a.vocab); });
  std::vector<std::pair<MolecularGraph, MolecularGraph>> pairs;
  for (const auto& [x, y] : input(a.pairs, [&] { return read_pairs(a.pairs); })) {
    pairs.emplace_back(input(a.pairs, [&] { return parse_smiles(x); }), input(a.pairs, [&] { return parse_smiles(y); }));
  }
  if (pairs.empty()) throw UsageError(a.pairs + ": no pairs");
  std::vector<MolecularGraph> valid;
  if (!a.valid.empty()) valid = read_molecules(a.valid);

  fs::create_directories(a.out);
  cmd.emit(fs::path(a.out) / "train.cfg");
  CoreModel model(std::move(vocab), a.config.model());
  const TrainResult result = train(model, a.config, pairs, a.out, [](const EpochLog& e) {
    const LossReport& r = e.report;
    std::printf("epoch %d lr %.6g loss %.6f topo %.4f sub %.4f assm %.4f\n", e.epoch, e.lr, r.total,
                r.topo_accuracy(), r.substructure_accuracy(), r.assembly_accuracy());
    std::fflush(stdout);
    if (!std::isfinite(r.total)) throw std::runtime_error("non-finite loss at epoch " + std::to_string(e.epoch));
  });
  if (result.skipped_pairs) std::printf("skipped_pairs %d\n", result.skipped_pairs);

  if (!valid.empty()) {
    EvalConfig ec;
    ec.k = a.valid_k;
    ec.property = a.property;
    ec.sr1 = sr1_defaults(a.property);
    ec.sr2 = sr2_defaults(a.property);
    ec.budget = a.budget;
    ec.workers = a.workers;
    std::vector<double> sr1;
    std::ofstream sel(fs::path(a.out) / "selection.tsv");
    sel << "checkpoint\tsr1\n";
    for (const auto& ckpt : result.checkpoints) {
      const auto m = load_model(ckpt);
      sr1.push_back(evaluate(*m, valid, ec).best_of_k.full.sr1);
      sel << fs::path(ckpt).filename().string() << '\t' << format(sr1.back()) << '\n';
    }
    const std::string best = result.checkpoints[select_best_checkpoint(sr1)];
    fs::copy_file(best, fs::path(a.out) / "best.ckpt", fs::copy_options::overwrite_existing);
    std::printf("best %s\n", fs::path(best).filename().string().c_str());
  }
  return 0;
}

// ---- generate

struct GenerateArgs {
  std::string model, input, out, mode = "sample";
  int k = 20;
  double temperature = 1.0;
  int budget = 50;
  int workers = 1;
};

int run_generate(const GenerateArgs& a, const Command& cmd) {
  const auto model = read_model(a.model);
  const auto mols = read_molecules(a.input);
  std::vector<std::string> rows(mols.size());
  parallel_for(mols.size(), a.workers, [&](std::size_t i) {
    const std::string x = canonical_smiles(mols[i]);
    for (int s = 0; s < a.k; ++s) {
      DecodeOptions opt;
      opt.sample = a.mode == "sample";
      opt.seed = static_cast<std::uint64_t>(s);
      opt.temperature = a.temperature;
      opt.budget = a.budget;
      const Translation t = translate(*model, mols[i], opt);
      std::string err = t.error;
      std::replace(err.begin(), err.end(), '\t', ' ');
      rows[i] += x + '\t' + (t.molecule ? canonical_smiles(*t.molecule) : "") + '\t' + std::to_string(s) + '\t' +
                 std::to_string(t.trace.tree.nodes.size()) + '\t' + t.trace.terminated_by() + '\t' + err + '\n';
    }
  });
  fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream f(a.out);
  f << "input_smiles\toutput_smiles\tseed\tn_nodes\tterminated_by\terror\n";
  for (const auto& r : rows) f << r;
  cmd.emit(a.out + ".cfg");
  return 0;
}

// ---- evaluate

struct EvaluateArgs {
  std::string model, test, out, property = "qed", sr1, sr2, mode = "best", decode = "sample";
  int k = 20;
  double temperature = 1.0;
  int budget = 50;
  int workers = 1;
};

int run_evaluate(EvaluateArgs& a, const Command& cmd) {
  EvalConfig c;
  c.property = a.property;
  if (a.sr1.empty()) a.sr1 = format_thresholds(input("property", [&] {
    make_oracle(a.property);
    return sr1_defaults(a.property);
  }));
  if (a.sr2.empty()) a.sr2 = format_thresholds(sr2_defaults(a.property));
  c.sr1 = parse_thresholds(a.sr1);
  c.sr2 = parse_thresholds(a.sr2);
  c.k = a.k;
  c.mode = a.mode == "best" ? Aggregation::BestOfK : Aggregation::MeanOfK;
  c.sample = a.decode == "sample";
  c.temperature = a.temperature;
  c.budget = a.budget;
  c.workers = a.workers;
  input("evaluation config", [&] {
    c.validate();
    return 0;
  });
  const auto model = read_model(a.model);
  const auto mols = read_molecules(a.test);
  const EvalReport report = evaluate(*model, mols, c);
  fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream(a.out) << report_json(report);
  cmd.emit(a.out + ".cfg");
  std::cout << report_table(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Copy&Refine graph-to-graph molecular optimization"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  auto add = [&](const std::string& name, const std::string& help) {
    Command c;
    c.name = name;
    c.app = app.add_subcommand(name, help);
    c.app->add_option("--config", c.config_path, "Flat key=value file; flags given here override it");
    return c;
  };

  VocabArgs va;
  Command vocab = add("vocab", "Decompose a corpus and write the substructure vocabulary");
  vocab.field("input", va.input, "SMILES file, one molecule per line")->required();
  vocab.field("out", va.out, "Vocabulary TSV to write")->required();
  vocab.field("threshold", va.threshold, "Frequency below which a substructure counts as infrequent");

  PairsArgs pa;
  Command pairs = add("pairs", "Generate (X, Y) training pairs from a corpus");
  pairs.field("input", pa.input, "SMILES file")->required();
  pairs.field("out", pa.out, "Pair TSV to write")->required();
  pairs.field("property", pa.property, "Oracle: logp, crippen, qed or drd2");
  pairs.field("eta1", pa.eta1, "Minimum Tanimoto similarity");
  pairs.field("eta2", pa.eta2, "Minimum property improvement");
  pairs.field("cap", pa.cap, "Maximum number of pairs (0 = unlimited)");

  TrainArgs ta;
  Command trn = add("train", "Train a model on a pair file");
  trn.field("pairs", ta.pairs, "Pair TSV")->required();
  trn.field("vocab", ta.vocab, "Vocabulary TSV")->required();
  trn.field("out", ta.out, "Run directory for checkpoints and logs")->required();
  trn.field("epochs", ta.config.epochs, "Training epochs");
  trn.field("batch_size", ta.config.batch_size, "Pairs per mini-batch");
  trn.field("dim", ta.config.dim, "Hidden size d");
  trn.field("tree_depth", ta.config.tree_depth, "Tree encoder message passing depth");
  trn.field("graph_depth", ta.config.graph_depth, "Graph encoder message passing depth");
  trn.field("lr", ta.config.lr, "Initial Adam learning rate");
  trn.field("lr_anneal", ta.config.lr_anneal, "Per-epoch learning rate factor");
  trn.field("adversarial", ta.config.adversarial, "Use the adversarial term (true/false)");
  trn.field("seed", ta.config.seed, "Random seed");
  trn.field("disc_hidden", ta.config.disc_hidden, "Discriminator hidden size");
  trn.field("valid", ta.valid, "Optional SMILES file for checkpoint selection by SR1");
  trn.field("valid_k", ta.valid_k, "Samples per validation input");
  trn.field("property", ta.property, "Oracle used for validation");
  trn.field("budget", ta.budget, "Decoding step budget during validation");
  trn.field("workers", ta.workers, "Threads for validation decoding");

  GenerateArgs ga;
  Command gen = add("generate", "Decode K outputs per input molecule");
  gen.field("model", ga.model, "Checkpoint")->required();
  gen.field("input", ga.input, "SMILES file")->required();
  gen.field("out", ga.out, "TSV to write")->required();
  gen.field("k", ga.k, "Outputs per input (seeds 0..K-1)")->check(CLI::PositiveNumber);
  gen.field("mode", ga.mode, "sample or greedy")->check(CLI::IsMember({"sample", "greedy"}));
  gen.field("temperature", ga.temperature, "Sampling temperature")->check(CLI::PositiveNumber);
  gen.field("budget", ga.budget, "Maximum decoding steps")->check(CLI::PositiveNumber);
  gen.field("workers", ga.workers, "Threads")->check(CLI::PositiveNumber);

  EvaluateArgs ea;
  Command ev = add("evaluate", "Decode a test set and report Similarity, Property, SR1 and SR2");
  ev.field("model", ea.model, "Checkpoint")->required();
  ev.field("test", ea.test, "SMILES file")->required();
  ev.field("out", ea.out, "JSON report to write")->required();
  ev.field("property", ea.property, "Oracle: logp, crippen, qed or drd2");
  ev.field("sr1", ea.sr1, "lambda1,lambda2 for SR1 (default depends on property)");
  ev.field("sr2", ea.sr2, "lambda1,lambda2 for SR2 (default depends on property)");
  ev.field("k", ea.k, "Samples per input");
  ev.field("mode", ea.mode, "best or mean over the K samples")->check(CLI::IsMember({"best", "mean"}));
  ev.field("decode", ea.decode, "sample or greedy")->check(CLI::IsMember({"sample", "greedy"}));
  ev.field("temperature", ea.temperature, "Sampling temperature");
  ev.field("budget", ea.budget, "Maximum decoding steps");
  ev.field("workers", ea.workers, "Threads");

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    for (std::size_t i = 1; i + 1 < args.size(); ++i) {
      if (args[i] != "--config") continue;
      auto flags = config_flags(args[i + 1]);
      args.insert(args.begin() + 1, flags.begin(), flags.end());
      break;
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (vocab.app->parsed()) return run_vocab(va, vocab);
    if (pairs.app->parsed()) return run_pairs(pa, pairs);
    if (trn.app->parsed()) return run_train(ta, trn);
    if (gen.app->parsed()) return run_generate(ga, gen);
    if (ev.app->parsed()) return run_evaluate(ea, ev);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
