#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "copyrefine/decoder.hpp"
#include "copyrefine/model.hpp"

namespace copyrefine {

class UnkSubstructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  int dim = 300;
  int tree_depth = 6;
  int graph_depth = 3;
  double lr = 1e-3;
  double lr_anneal = 0.8;
  bool adversarial = true;
  std::uint64_t seed = 0;
  int disc_hidden = 300;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
  ModelConfig model() const;
};

inline constexpr double kTopoWeight = 1.0;
inline constexpr double kSubstructureWeight = 1.0;
inline constexpr double kAssemblyWeight = 1.0;
inline constexpr double kAdversarialWeight = 0.1;

struct LossReport {
  double topo_loss = 0.0;
  double substructure_loss = 0.0;
  double assembly_loss = 0.0;
  double adversarial_loss = 0.0;
  double total = 0.0;
  int topo_decisions = 0;
  int topo_correct = 0;
  int substructure_decisions = 0;
  int substructure_correct = 0;
  int assembly_decisions = 0;
  int assembly_correct = 0;

  double topo_accuracy() const;
  double substructure_accuracy() const;
  double assembly_accuracy() const;
};

/// Averages losses over `count` per-example reports and pools decision counts.
LossReport merge_reports(const std::vector<LossReport>& reports);

struct AssemblyTarget {
  int parent = -1;
  int child = -1;
  std::vector<CandidateGraph> candidates;
  int gold = -1;
};

/// A pair with everything that does not depend on parameters precomputed.
struct TrainingExample {
  MolecularGraph x;
  MolecularGraph y;
  ScaffoldTree x_tree;
  ScaffoldTree y_tree;
  int root = 0;
  std::vector<DfsStep> order;
  /// Only placements with at least two candidates and a located gold state.
  std::vector<AssemblyTarget> assembly;
  int assembly_unmatched = 0;
};

/// Throws UnkSubstructureError when y has a fragment outside the vocabulary.
TrainingExample prepare_example(const CoreModel& model, const MolecularGraph& x, const MolecularGraph& y);

struct TeacherForced {
  Var total;
  LossReport report;
};

/// Supervised loss along y's DFS trace; components are means over their decisions.
TeacherForced teacher_forced_loss(Tape& t, const CoreModel& model, const TrainingExample& example);

LossReport evaluate_teacher_forced(const CoreModel& model, const std::vector<TrainingExample>& examples);

/// Mean of the graph-encoder atom embeddings (1 x d).
Var pooled_embedding(Tape& t, const CoreModel& model, const MolecularGraph& molecule);

struct DiscriminatorReport {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// One discriminator update on real and fake pooled embeddings (constants).
DiscriminatorReport discriminator_step(CoreModel& model, Adam& optimizer, const std::vector<Tensor>& real,
                                       const std::vector<Tensor>& fake);

/// Non-saturating generator term -log D(pooled(fake)); gradient reaches the graph encoder.
Var generator_adversarial_term(Tape& t, const CoreModel& model, const MolecularGraph& fake);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  LossReport report;
  double disc_loss = 0.0;
  double disc_accuracy = 0.0;
  std::string checkpoint;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<std::string> checkpoints;
  std::vector<EpochLog> epochs;
  int skipped_pairs = 0;
};

/// Mini-batch Adam with per-epoch annealing and checkpoints in out_dir (none when empty).
/// train_log.jsonl holds everything deterministic; wall times go to timing.jsonl.
TrainResult train(CoreModel& model, const TrainConfig& config,
                  const std::vector<std::pair<MolecularGraph, MolecularGraph>>& pairs, const std::string& out_dir,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// Index of the highest value, later entries winning ties.
std::size_t select_best_checkpoint(const std::vector<double>& sr1);

}  // namespace copyrefine
