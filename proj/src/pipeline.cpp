#include "copyrefine/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace copyrefine {

std::vector<MoleculePair> generate_pairs(const std::vector<MolecularGraph>& corpus, const PropertyOracle& oracle,
                                         double eta1, double eta2, std::size_t cap) {
  std::vector<Fingerprint> fps;
  std::vector<double> props;
  std::vector<std::string> keys;
  for (const auto& g : corpus) {
    fps.push_back(morgan_fingerprint(g));
    props.push_back(oracle.evaluate(g));
    keys.push_back(canonical_smiles(g));
  }
  std::vector<MoleculePair> out;
  for (std::size_t i = 0; i < corpus.size() && out.size() < cap; ++i) {
    for (std::size_t j = 0; j < corpus.size() && out.size() < cap; ++j) {
      if (i == j || keys[i] == keys[j]) continue;
      const double sim = tanimoto(fps[i], fps[j]);
      const double delta = props[j] - props[i];
      if (sim >= eta1 && delta >= eta2) out.push_back({i, j, sim, delta});
    }
  }
  return out;
}

std::vector<std::size_t> infrequent_subset(const std::vector<MolecularGraph>& inputs, const Vocabulary& vocab,
                                           long threshold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    ScaffoldTree tree = decompose(inputs[i]);
    assign_ids(tree, vocab);
    for (const auto& n : tree.nodes) {
      if (classify_frequency(vocab, n.id, threshold) == FrequencyClass::Infrequent) {
        out.push_back(i);
        break;
      }
    }
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pair file " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::vector<std::string> cols;
    for (std::string tok; row >> tok;) cols.push_back(tok);
    if (cols.empty()) continue;
    if (cols.size() != 2) throw PairFormatError("expected two columns, found " + std::to_string(cols.size()), number);
    out.emplace_back(cols[0], cols[1]);
  }
  return out;
}

void write_pairs(const std::string& path, const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& [x, y] : pairs) out << x << '\t' << y << '\n';
}

Thresholds sr1_defaults(const std::string& property) {
  return property == "logp" ? Thresholds{0.4, 0.8} : Thresholds{0.3, 0.6};
}

Thresholds sr2_defaults(const std::string& property) {
  return property == "logp" ? Thresholds{0.4, 1.2} : Thresholds{0.4, 0.8};
}

std::string aggregation_name(Aggregation a) { return a == Aggregation::BestOfK ? "best_of_k" : "mean_of_k"; }

void EvalConfig::validate() const {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (budget < 1) throw std::invalid_argument("budget must be at least 1");
  if (workers < 1) throw std::invalid_argument("workers must be at least 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  const auto oracle = make_oracle(property);
  for (const Thresholds& t : {sr1, sr2}) {
    if (std::isnan(t.similarity) || t.similarity > 1.0) throw std::invalid_argument("similarity threshold above 1");
    if (std::isnan(t.property) || t.property > oracle->max_value()) {
      throw std::invalid_argument("property threshold outside the range of " + property);
    }
  }
}

double success_rate(const std::vector<SimProp>& records, Thresholds t) {
  if (records.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : records) hits += r.sim >= t.similarity && r.property >= t.property;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

Sample score_output(const MolecularGraph& x, const std::optional<MolecularGraph>& y, const std::string& error,
                    const PropertyOracle& oracle) {
  Sample s;
  if (!y) {
    s.error = error.empty() ? "decode failed" : error;
    return s;
  }
  try {
    s.smiles = canonical_smiles(*y);
    s.sim = tanimoto(morgan_fingerprint(x), morgan_fingerprint(*y));
    s.property = oracle.evaluate(*y);
  } catch (const std::exception& e) {
    s = Sample{};
    s.error = e.what();
  }
  return s;
}

namespace {

bool hit(const Sample& s, Thresholds t) { return s.ok() && s.sim >= t.similarity && s.property >= t.property; }

struct PerInput {
  bool failed = true;
  double sim = 0.0;
  double property = 0.0;
  double sr1 = 0.0;
  double sr2 = 0.0;
};

PerInput best_of_k(const std::vector<Sample>& samples, const EvalConfig& c) {
  PerInput r;
  const Sample* chosen = nullptr;
  for (const auto& s : samples) {
    if (!s.ok() || s.sim < c.sr1.similarity) continue;
    if (!chosen || s.property > chosen->property) chosen = &s;
  }
  if (!chosen) {
    for (const auto& s : samples) {
      if (s.ok() && (!chosen || s.sim > chosen->sim)) chosen = &s;
    }
  }
  if (!chosen) return r;
  r.failed = false;
  r.sim = chosen->sim;
  r.property = chosen->property;
  for (const auto& s : samples) {
    if (hit(s, c.sr1)) r.sr1 = 1.0;
    if (hit(s, c.sr2)) r.sr2 = 1.0;
  }
  return r;
}

PerInput mean_of_k(const std::vector<Sample>& samples, const EvalConfig& c) {
  PerInput r;
  if (samples.empty()) return r;
  const double n = static_cast<double>(samples.size());
  int ok = 0;
  for (const auto& s : samples) {
    if (!s.ok()) continue;
    ++ok;
    r.sim += s.sim;
    r.property += s.property;
    r.sr1 += hit(s, c.sr1);
    r.sr2 += hit(s, c.sr2);
  }
  r.failed = ok == 0;
  r.sim /= n;
  r.property = ok ? r.property / ok : 0.0;
  r.sr1 /= n;
  r.sr2 /= n;
  return r;
}

MetricSet reduce(const std::vector<PerInput>& rows, const std::vector<std::size_t>& subset) {
  MetricSet m;
  m.inputs = subset.size();
  if (subset.empty()) return m;
  std::size_t with_property = 0;
  for (std::size_t i : subset) {
    const PerInput& r = rows[i];
    m.similarity += r.sim;
    m.sr1 += r.sr1;
    m.sr2 += r.sr2;
    if (r.failed) {
      ++m.failed_inputs;
    } else {
      m.property += r.property;
      ++with_property;
    }
  }
  const double n = static_cast<double>(subset.size());
  m.similarity /= n;
  m.sr1 /= n;
  m.sr2 /= n;
  m.property = with_property ? m.property / static_cast<double>(with_property) : 0.0;
  return m;
}

ModeReport summarize(const std::vector<PerInput>& rows, const std::vector<InputRecord>& records) {
  std::vector<std::size_t> all, rare;
  for (std::size_t i = 0; i < records.size(); ++i) {
    all.push_back(i);
    if (records[i].infrequent) rare.push_back(i);
  }
  return {reduce(rows, all), reduce(rows, rare)};
}

}  // namespace

EvalReport evaluate_samples(const std::vector<MolecularGraph>& inputs, const std::vector<std::vector<Sample>>& samples,
                            const std::vector<bool>& infrequent, const PropertyOracle& oracle, const EvalConfig& config) {
  if (samples.size() != inputs.size() || infrequent.size() != inputs.size()) {
    throw std::invalid_argument("inputs, samples and subset flags differ in length");
  }
  EvalReport report;
  report.config = config;
  std::vector<PerInput> best, mean;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    InputRecord rec;
    rec.smiles = canonical_smiles(inputs[i]);
    rec.infrequent = infrequent[i];
    try {
      rec.property = oracle.evaluate(inputs[i]);
    } catch (const MoleculeError&) {
      rec.property = std::nan("");
    }
    rec.samples = samples[i];
    best.push_back(best_of_k(rec.samples, config));
    mean.push_back(mean_of_k(rec.samples, config));
    report.records.push_back(std::move(rec));
  }
  report.best_of_k = summarize(best, report.records);
  report.mean_of_k = summarize(mean, report.records);
  return report;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  for (std::size_t w = 0; w < count; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

EvalReport evaluate(const CoreModel& model, const std::vector<MolecularGraph>& inputs, const EvalConfig& config) {
  config.validate();
  const auto oracle = make_oracle(config.property);
  std::vector<bool> rare(inputs.size(), false);
  for (std::size_t i : infrequent_subset(inputs, model.vocab())) rare[i] = true;
  std::vector<std::vector<Sample>> samples(inputs.size());
  parallel_for(inputs.size(), config.workers, [&](std::size_t i) {
    for (int s = 0; s < config.k; ++s) {
      DecodeOptions opt;
      opt.sample = config.sample;
      opt.seed = static_cast<std::uint64_t>(s);
      opt.temperature = config.temperature;
      opt.budget = config.budget;
      const Translation t = translate(model, inputs[i], opt);
      samples[i].push_back(score_output(inputs[i], t.molecule, t.error, *oracle));
    }
  });
  return evaluate_samples(inputs, samples, rare, *oracle, config);
}

namespace {

nlohmann::json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

nlohmann::json metrics_json(const MetricSet& m) {
  return {{"inputs", m.inputs},         {"failed_inputs", m.failed_inputs}, {"similarity", number(m.similarity)},
          {"property", number(m.property)}, {"sr1", number(m.sr1)},          {"sr2", number(m.sr2)}};
}

nlohmann::json mode_json(const ModeReport& r) {
  return {{"complete", metrics_json(r.full)}, {"infrequent", metrics_json(r.infrequent)}};
}

}  // namespace

std::string report_json(const EvalReport& report) {
  const EvalConfig& c = report.config;
  nlohmann::json j;
  j["config"] = {{"k", c.k},
                 {"sr1", {number(c.sr1.similarity), number(c.sr1.property)}},
                 {"sr2", {number(c.sr2.similarity), number(c.sr2.property)}},
                 {"property", c.property},
                 {"mode", aggregation_name(c.mode)},
                 {"sample", c.sample},
                 {"temperature", c.temperature},
                 {"budget", c.budget}};
  j["best_of_k"] = mode_json(report.best_of_k);
  j["mean_of_k"] = mode_json(report.mean_of_k);
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : report.records) {
    nlohmann::json samples = nlohmann::json::array();
    for (std::size_t s = 0; s < r.samples.size(); ++s) {
      const Sample& x = r.samples[s];
      samples.push_back({{"seed", s}, {"smiles", x.smiles}, {"sim", number(x.sim)}, {"property", number(x.property)},
                         {"error", x.error}});
    }
    records.push_back({{"input", r.smiles}, {"infrequent", r.infrequent}, {"property", number(r.property)},
                       {"samples", std::move(samples)}});
  }
  j["records"] = std::move(records);
  return j.dump(2) + "\n";
}

std::string report_table(const EvalReport& report) {
  const ModeReport& m = report.selected();
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %8s %10s %10s %8s %8s %8s\n", aggregation_name(report.config.mode).c_str(),
                "inputs", "similarity", "property", "SR1", "SR2", "failed");
  out += line;
  auto row = [&](const char* name, const MetricSet& s) {
    std::snprintf(line, sizeof line, "%-12s %8zu %10.4f %10.4f %7.2f%% %7.2f%% %8zu\n", name, s.inputs, s.similarity,
                  s.property, 100.0 * s.sr1, 100.0 * s.sr2, s.failed_inputs);
    out += line;
  };
  row("complete", m.full);
  row("infrequent", m.infrequent);
  return out;
}

}  // namespace copyrefine
