#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "copyrefine/encoder.hpp"
#include "copyrefine/nn.hpp"
#include "copyrefine/scaffold.hpp"
#include "copyrefine/tensor.hpp"

namespace copyrefine {

struct ModelConfig {
  int dim = 300;
  int tree_depth = 6;
  int graph_depth = 3;
  int disc_hidden = 300;
  std::uint64_t seed = 0;
};

/// All learned components: encoders, tree decoder, assembly scorer and the
/// discriminator (kept in its own parameter set).
class CoreModel {
 public:
  CoreModel(Vocabulary vocab, ModelConfig config);
  CoreModel(const CoreModel&) = delete;
  CoreModel& operator=(const CoreModel&) = delete;

  const Vocabulary& vocab() const { return vocab_; }
  const ModelConfig& config() const { return config_; }
  int vocab_size() const { return vocab_.size(); }
  int dim() const { return config_.dim; }

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  ParameterSet& disc_params() { return disc_params_; }

  const TreeEncoder& tree_encoder() const { return tree_encoder_; }
  const GraphEncoder& graph_encoder() const { return graph_encoder_; }
  const GraphEncoder& assembly_encoder() const { return assembly_encoder_; }
  const GruCell& gru() const { return gru_; }
  const FeedForward& topo_head() const { return g3_; }
  const FeedForward& substructure_head() const { return g5_; }
  const FeedForward& ooi_head() const { return g6_; }
  Parameter& decoder_embedding() const { return *embedding_; }
  Parameter& topo_query_tree() const { return *topo_query_tree_; }
  Parameter& topo_query_graph() const { return *topo_query_graph_; }
  Parameter& assembly_projection() const { return *assembly_projection_; }
  /// Message used for the root prediction; starts at zero.
  Parameter& root_state() const { return *root_state_; }

  /// Discriminator logit for a 1 x d pooled graph embedding.
  Var discriminate(Tape& t, Var pooled) const;

  /// Decomposes and assigns vocabulary ids (UNK where unknown).
  ScaffoldTree tree_of(const MolecularGraph& molecule) const;

  /// Whether substructure `child` can attach to substructure `parent`; cached.
  bool attachable(int parent, int child) const;

  /// JSON describing config and vocabulary; enough to rebuild the model.
  std::string metadata() const;
  static std::unique_ptr<CoreModel> from_metadata(const std::string& json);

 private:
  Vocabulary vocab_;
  ModelConfig config_;
  ParameterSet params_;
  ParameterSet disc_params_;
  TreeEncoder tree_encoder_;
  GraphEncoder graph_encoder_;
  GraphEncoder assembly_encoder_;
  GruCell gru_;
  FeedForward g3_;
  FeedForward g5_;
  FeedForward g6_;
  Parameter* embedding_ = nullptr;
  Parameter* topo_query_tree_ = nullptr;
  Parameter* topo_query_graph_ = nullptr;
  Parameter* assembly_projection_ = nullptr;
  Parameter* root_state_ = nullptr;
  Linear disc1_;
  Linear disc2_;
  Linear disc3_;

  mutable std::mutex cache_mutex_;
  mutable std::vector<signed char> attach_cache_;
};

struct Encoding {
  Var tree;
  Var graph;
  Var z;
  /// Vocabulary id per input-tree node.
  std::vector<int> ids;
};

Encoding encode(Tape& t, const CoreModel& model, const MolecularGraph& x, const ScaffoldTree& x_tree);

void save_model(const std::string& path, const CoreModel& model, Adam* optimizer = nullptr);
std::unique_ptr<CoreModel> load_model(const std::string& path);

}  // namespace copyrefine
