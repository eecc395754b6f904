#include "copyrefine/model.hpp"

#include <cmath>
#include <fstream>

#include "copyrefine/assembly.hpp"
#include "copyrefine/checkpoint.hpp"
#include "json.hpp"

namespace copyrefine {

CoreModel::CoreModel(Vocabulary vocab, ModelConfig config) : vocab_(std::move(vocab)), config_(config) {
  if (vocab_.size() < 1) throw std::invalid_argument("vocabulary is empty");
  if (config_.dim < 1 || config_.tree_depth < 1 || config_.graph_depth < 1 || config_.disc_hidden < 1) {
    throw std::invalid_argument("model sizes must be positive");
  }
  const int d = config_.dim;
  const int v = vocab_.size();
  std::mt19937_64 rng(config_.seed);
  tree_encoder_ = TreeEncoder(params_, "tree_encoder", v, d, config_.tree_depth, rng);
  graph_encoder_ = GraphEncoder(params_, "graph_encoder", d, config_.graph_depth, rng);
  assembly_encoder_ = GraphEncoder(params_, "assembly_encoder", d, config_.graph_depth, rng, true);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  embedding_ = &params_.add_uniform("decoder.embedding", v, d, bound, rng);
  gru_ = GruCell(params_, "decoder.gru", d, d, rng);
  topo_query_tree_ = &params_.add_uniform("decoder.topo_query_tree", 2 * d, d, bound, rng);
  topo_query_graph_ = &params_.add_uniform("decoder.topo_query_graph", 2 * d, d, bound, rng);
  g3_ = FeedForward(params_, "decoder.g3", 4 * d, d, 1, Activation::Sigmoid, rng);
  g5_ = FeedForward(params_, "decoder.g5", 3 * d, d, v, Activation::Softmax, rng);
  g6_ = FeedForward(params_, "decoder.g6", 4 * d, d, 1, Activation::Sigmoid, rng);
  assembly_projection_ = &params_.add_uniform("decoder.assembly_projection", 2 * d, d, bound, rng);
  root_state_ = &params_.add("decoder.root_state", 1, d);

  const int h = config_.disc_hidden;
  disc1_ = Linear(disc_params_, "disc.l1", d, h, rng);
  disc2_ = Linear(disc_params_, "disc.l2", h, h, rng);
  disc3_ = Linear(disc_params_, "disc.l3", h, 1, rng);

  attach_cache_.assign(static_cast<std::size_t>(v) * static_cast<std::size_t>(v), -1);
}

Var CoreModel::discriminate(Tape& t, Var pooled) const {
  const Var a = leaky_relu(t, disc1_(t, pooled));
  const Var b = leaky_relu(t, disc2_(t, a));
  return disc3_(t, b);
}

ScaffoldTree CoreModel::tree_of(const MolecularGraph& molecule) const {
  ScaffoldTree tree = decompose(molecule);
  assign_ids(tree, vocab_);
  return tree;
}

bool CoreModel::attachable(int parent, int child) const {
  const int v = vocab_.size();
  if (parent < 0 || parent >= v || child < 0 || child >= v) return false;
  const std::size_t slot = static_cast<std::size_t>(parent) * static_cast<std::size_t>(v) + static_cast<std::size_t>(child);
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    if (attach_cache_[slot] >= 0) return attach_cache_[slot] == 1;
  }
  const bool ok = can_attach(vocab_.fragment(parent), vocab_.fragment(child));
  std::lock_guard<std::mutex> lock(cache_mutex_);
  attach_cache_[slot] = ok ? 1 : 0;
  return ok;
}

std::string CoreModel::metadata() const {
  nlohmann::json j;
  j["format"] = "copyrefine-model";
  j["dim"] = config_.dim;
  j["tree_depth"] = config_.tree_depth;
  j["graph_depth"] = config_.graph_depth;
  j["disc_hidden"] = config_.disc_hidden;
  j["seed"] = config_.seed;
  nlohmann::json entries = nlohmann::json::array();
  for (int i = 0; i < vocab_.size(); ++i) entries.push_back({vocab_.key(i), vocab_.frequency(i)});
  j["vocab"] = std::move(entries);
  return j.dump();
}

std::unique_ptr<CoreModel> CoreModel::from_metadata(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint metadata: ") + e.what());
  }
  if (j.value("format", "") != "copyrefine-model") throw CheckpointError("checkpoint does not hold a model");
  ModelConfig config;
  config.dim = j.at("dim").get<int>();
  config.tree_depth = j.at("tree_depth").get<int>();
  config.graph_depth = j.at("graph_depth").get<int>();
  config.disc_hidden = j.at("disc_hidden").get<int>();
  config.seed = j.at("seed").get<std::uint64_t>();
  std::vector<std::pair<std::string, long>> entries;
  for (const auto& e : j.at("vocab")) entries.emplace_back(e.at(0).get<std::string>(), e.at(1).get<long>());
  return std::make_unique<CoreModel>(Vocabulary(std::move(entries)), config);
}

Encoding encode(Tape& t, const CoreModel& model, const MolecularGraph& x, const ScaffoldTree& x_tree) {
  Encoding e;
  e.tree = model.tree_encoder()(t, x_tree);
  e.graph = model.graph_encoder()(t, x);
  e.z = global_embedding(t, e.tree, e.graph);
  for (const auto& n : x_tree.nodes) e.ids.push_back(n.id);
  return e;
}

void save_model(const std::string& path, const CoreModel& model, Adam* optimizer) {
  write_checkpoint(path, model.metadata(), model.params(), optimizer);
}

std::unique_ptr<CoreModel> load_model(const std::string& path) {
  const CheckpointData data = read_checkpoint(path);
  auto model = CoreModel::from_metadata(data.metadata);
  restore_parameters(data, model->params());
  return model;
}

}  // namespace copyrefine
