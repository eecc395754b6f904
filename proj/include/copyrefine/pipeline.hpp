#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "copyrefine/chemprop.hpp"
#include "copyrefine/decoder.hpp"
#include "copyrefine/model.hpp"

namespace copyrefine {

class PairFormatError : public std::runtime_error {
 public:
  PairFormatError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " on line " + std::to_string(line)), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct MoleculePair {
  std::size_t x_index = 0;
  std::size_t y_index = 0;
  double sim = 0.0;
  double delta = 0.0;
};

inline constexpr double kDefaultEta2 = 0.1;

/// Ordered pairs (X, Y) with Tanimoto(X, Y) >= eta1 and property(Y) - property(X) >= eta2,
/// in (x, y) index order, at most `cap`. Pairs of identical molecules are skipped.
std::vector<MoleculePair> generate_pairs(const std::vector<MolecularGraph>& corpus, const PropertyOracle& oracle,
                                         double eta1, double eta2,
                                         std::size_t cap = std::numeric_limits<std::size_t>::max());

/// Indices of inputs whose decomposition holds at least one infrequent substructure.
std::vector<std::size_t> infrequent_subset(const std::vector<MolecularGraph>& inputs, const Vocabulary& vocab,
                                           long threshold = kInfrequentThreshold);

/// Two whitespace-separated SMILES per line; '#' lines and blank lines are skipped.
std::vector<std::pair<std::string, std::string>> read_pairs(const std::string& path);
void write_pairs(const std::string& path, const std::vector<std::pair<std::string, std::string>>& pairs);

struct Thresholds {
  double similarity = 0.0;
  double property = 0.0;
};

/// Default thresholds: QED/DRD2 and LogP variants.
Thresholds sr1_defaults(const std::string& property);
Thresholds sr2_defaults(const std::string& property);

enum class Aggregation { BestOfK, MeanOfK };
std::string aggregation_name(Aggregation a);

struct EvalConfig {
  int k = 20;
  Thresholds sr1{0.3, 0.6};
  Thresholds sr2{0.4, 0.8};
  std::string property = "qed";
  Aggregation mode = Aggregation::BestOfK;
  bool sample = true;
  double temperature = 1.0;
  int budget = 50;
  int workers = 1;

  void validate() const;
};

/// One decoded output; `smiles` is empty when decoding or assembly failed.
struct Sample {
  std::string smiles;
  double sim = 0.0;
  double property = 0.0;
  std::string error;
  bool ok() const { return error.empty(); }
};

struct SimProp {
  double sim = 0.0;
  double property = 0.0;
};

/// Fraction of records with sim >= lambda1 and property >= lambda2.
double success_rate(const std::vector<SimProp>& records, Thresholds t);

struct MetricSet {
  std::size_t inputs = 0;
  std::size_t failed_inputs = 0;
  double similarity = 0.0;
  double property = 0.0;
  double sr1 = 0.0;
  double sr2 = 0.0;
};

struct ModeReport {
  MetricSet full;
  MetricSet infrequent;
};

struct InputRecord {
  std::string smiles;
  bool infrequent = false;
  double property = 0.0;
  std::vector<Sample> samples;
};

struct EvalReport {
  EvalConfig config;
  ModeReport best_of_k;
  ModeReport mean_of_k;
  std::vector<InputRecord> records;

  const ModeReport& selected() const { return config.mode == Aggregation::BestOfK ? best_of_k : mean_of_k; }
};

/// Metrics from already decoded samples. `samples[i]` belongs to `inputs[i]`.
EvalReport evaluate_samples(const std::vector<MolecularGraph>& inputs, const std::vector<std::vector<Sample>>& samples,
                            const std::vector<bool>& infrequent, const PropertyOracle& oracle, const EvalConfig& config);

/// Sample for input x under seed s: similarity and property filled in, or the failure reason.
Sample score_output(const MolecularGraph& x, const std::optional<MolecularGraph>& y, const std::string& error,
                    const PropertyOracle& oracle);

/// Decodes K samples per input (seeds 0..K-1) and reduces them.
EvalReport evaluate(const CoreModel& model, const std::vector<MolecularGraph>& inputs, const EvalConfig& config);

std::string report_json(const EvalReport& report);
/// Plain-text table of the selected aggregation.
std::string report_table(const EvalReport& report);

/// Runs fn(i) for i in [0, n) on `workers` threads; results land by index.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace copyrefine
