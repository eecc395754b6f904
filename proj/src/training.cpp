#include "copyrefine/training.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include "copyrefine/assembly.hpp"
#include "json.hpp"

namespace copyrefine {

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || dim < 1 || tree_depth < 1 || graph_depth < 1 || disc_hidden < 1) {
    throw std::invalid_argument("training sizes must be positive");
  }
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(lr_anneal > 0.0 && lr_anneal <= 1.0)) throw std::invalid_argument("lr_anneal must be in (0, 1]");
}

ModelConfig TrainConfig::model() const {
  return ModelConfig{.dim = dim, .tree_depth = tree_depth, .graph_depth = graph_depth, .disc_hidden = disc_hidden, .seed = seed};
}

namespace {

double ratio(int correct, int total) { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }

Var mean_of(Tape& t, const std::vector<Var>& terms) {
  Var s = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) s = add(t, s, terms[i]);
  return affine(t, s, 1.0 / static_cast<double>(terms.size()), 0.0);
}

int argmax(const Tensor& row) {
  int best = 0;
  for (int j = 1; j < row.cols; ++j) {
    if (row.at(0, j) > row.at(0, best)) best = j;
  }
  return best;
}

}  // namespace

double LossReport::topo_accuracy() const { return ratio(topo_correct, topo_decisions); }
double LossReport::substructure_accuracy() const { return ratio(substructure_correct, substructure_decisions); }
double LossReport::assembly_accuracy() const { return ratio(assembly_correct, assembly_decisions); }

LossReport merge_reports(const std::vector<LossReport>& reports) {
  LossReport out;
  if (reports.empty()) return out;
  for (const auto& r : reports) {
    out.topo_loss += r.topo_loss;
    out.substructure_loss += r.substructure_loss;
    out.assembly_loss += r.assembly_loss;
    out.adversarial_loss += r.adversarial_loss;
    out.total += r.total;
    out.topo_decisions += r.topo_decisions;
    out.topo_correct += r.topo_correct;
    out.substructure_decisions += r.substructure_decisions;
    out.substructure_correct += r.substructure_correct;
    out.assembly_decisions += r.assembly_decisions;
    out.assembly_correct += r.assembly_correct;
  }
  const double n = static_cast<double>(reports.size());
  out.topo_loss /= n;
  out.substructure_loss /= n;
  out.assembly_loss /= n;
  out.adversarial_loss /= n;
  out.total /= n;
  return out;
}

TrainingExample prepare_example(const CoreModel& model, const MolecularGraph& x, const MolecularGraph& y) {
  TrainingExample ex;
  ex.x = x;
  ex.y = y;
  ex.x_tree = model.tree_of(x);
  ex.y_tree = model.tree_of(y);
  if (has_unknown(ex.y_tree, model.vocab())) throw UnkSubstructureError("target has a fragment outside the vocabulary");
  ex.root = root_node(ex.y_tree);
  ex.order = dfs_order(ex.y_tree, ex.root);
  std::vector<int> placed{ex.root};
  for (const auto& step : ex.order) {
    if (!step.expand) continue;
    const PartialMolecule state = gold_state(y, ex.y_tree, placed);
    placed.push_back(step.to);
    std::vector<AssemblyCandidate> cands;
    try {
      cands = enumerate_attachments(state, step.from, step.to,
                                    model.vocab().fragment(ex.y_tree.nodes[static_cast<std::size_t>(step.to)].id));
    } catch (const NoValidAttachmentError&) {
      ++ex.assembly_unmatched;
      continue;
    }
    const std::string gold = assembly_key(gold_state(y, ex.y_tree, placed));
    int found = -1;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (cands[i].key == gold) found = static_cast<int>(i);
    }
    if (found < 0) {
      ++ex.assembly_unmatched;
      continue;
    }
    if (cands.size() < 2) continue;
    AssemblyTarget target;
    target.parent = step.from;
    target.child = step.to;
    target.gold = found;
    for (const auto& c : cands) target.candidates.push_back(candidate_graph(c));
    ex.assembly.push_back(std::move(target));
  }
  return ex;
}

TeacherForced teacher_forced_loss(Tape& t, const CoreModel& model, const TrainingExample& ex) {
  const Encoding enc = encode(t, model, ex.x, ex.x_tree);
  const Var embedding = t.param(model.decoder_embedding());
  const int d = model.dim();
  const auto& nodes = ex.y_tree.nodes;
  auto f = [&](int node) { return gather_rows(t, embedding, {nodes[static_cast<std::size_t>(node)].id}); };

  std::map<std::pair<int, int>, Var> messages;
  auto into = [&](int node, int except) {
    std::vector<Var> out;
    for (const auto& [edge, h] : messages) {
      if (edge.second == node && edge.first != except) out.push_back(h);
    }
    return out;
  };

  LossReport r;
  std::vector<Var> topo_terms, sub_terms, assembly_terms;
  std::vector<Var> context(nodes.size());

  auto substructure = [&](Var h, int node) {
    const SubstructureStep s = substructure_step(t, model, enc, h);
    const int gold = nodes[static_cast<std::size_t>(node)].id;
    sub_terms.push_back(affine(t, log(t, pick(t, s.q_tilde, 0, gold)), -1.0, 0.0));
    ++r.substructure_decisions;
    if (argmax(t.value(s.q_tilde)) == gold) ++r.substructure_correct;
    context[static_cast<std::size_t>(node)] = s.attention.context;
  };
  auto topo = [&](int node, bool expand) {
    const std::vector<Var> incoming = into(node, -1);
    Var h_sum = incoming.empty() ? t.constant(Tensor(1, d)) : incoming[0];
    for (std::size_t i = 1; i < incoming.size(); ++i) h_sum = add(t, h_sum, incoming[i]);
    const Var logit = topo_logit(t, model, enc, f(node), h_sum);
    topo_terms.push_back(affine(t, log_sigmoid(t, expand ? logit : affine(t, logit, -1.0, 0.0)), -1.0, 0.0));
    ++r.topo_decisions;
    if ((t.scalar(logit) >= 0.0) == expand) ++r.topo_correct;
  };

  substructure(t.param(model.root_state()), ex.root);
  for (const auto& step : ex.order) {
    topo(step.from, step.expand);
    const Var h = model.gru()(t, f(step.from), into(step.from, step.to));
    messages[{step.from, step.to}] = h;
    if (step.expand) substructure(h, step.to);
  }
  topo(ex.root, false);

  for (const auto& target : ex.assembly) {
    const Var scores = candidate_scores(t, model, target.candidates, context[static_cast<std::size_t>(target.child)]);
    assembly_terms.push_back(affine(t, pick(t, log_softmax(t, scores), 0, target.gold), -1.0, 0.0));
    ++r.assembly_decisions;
    if (argmax(t.value(scores)) == target.gold) ++r.assembly_correct;
  }

  const Var topo_loss = mean_of(t, topo_terms);
  const Var sub_loss = mean_of(t, sub_terms);
  Var total = add(t, scale(t, topo_loss, kTopoWeight), scale(t, sub_loss, kSubstructureWeight));
  r.topo_loss = t.scalar(topo_loss);
  r.substructure_loss = t.scalar(sub_loss);
  if (!assembly_terms.empty()) {
    const Var assembly_loss = mean_of(t, assembly_terms);
    r.assembly_loss = t.scalar(assembly_loss);
    total = add(t, total, scale(t, assembly_loss, kAssemblyWeight));
  }
  r.total = t.scalar(total);
  return {total, r};
}

LossReport evaluate_teacher_forced(const CoreModel& model, const std::vector<TrainingExample>& examples) {
  std::vector<LossReport> reports;
  for (const auto& ex : examples) {
    Tape t;
    reports.push_back(teacher_forced_loss(t, model, ex).report);
  }
  return merge_reports(reports);
}

Var pooled_embedding(Tape& t, const CoreModel& model, const MolecularGraph& molecule) {
  return mean_rows(t, model.graph_encoder()(t, molecule));
}

Var generator_adversarial_term(Tape& t, const CoreModel& model, const MolecularGraph& fake) {
  return affine(t, log_sigmoid(t, model.discriminate(t, pooled_embedding(t, model, fake))), -1.0, 0.0);
}

DiscriminatorReport discriminator_step(CoreModel& model, Adam& optimizer, const std::vector<Tensor>& real,
                                       const std::vector<Tensor>& fake) {
  DiscriminatorReport out;
  const std::size_t n = real.size() + fake.size();
  if (n == 0) return out;
  model.disc_params().zero_grad();
  int correct = 0;
  for (int label = 1; label >= 0; --label) {
    for (const auto& emb : label == 1 ? real : fake) {
      Tape t;
      const Var logit = model.discriminate(t, t.constant(emb));
      const Var signed_logit = label == 1 ? logit : affine(t, logit, -1.0, 0.0);
      const Var loss = affine(t, log_sigmoid(t, signed_logit), -1.0 / static_cast<double>(n), 0.0);
      out.loss += t.scalar(loss);
      if (t.scalar(signed_logit) > 0.0) ++correct;
      t.backward(loss);
    }
  }
  optimizer.step();
  out.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return out;
}

namespace {

nlohmann::json epoch_json(const EpochLog& e, int skipped) {
  const LossReport& r = e.report;
  return {{"epoch", e.epoch},
          {"lr", e.lr},
          {"topo_loss", r.topo_loss},
          {"substructure_loss", r.substructure_loss},
          {"assembly_loss", r.assembly_loss},
          {"adversarial_loss", r.adversarial_loss},
          {"total", r.total},
          {"topo_accuracy", r.topo_accuracy()},
          {"substructure_accuracy", r.substructure_accuracy()},
          {"assembly_accuracy", r.assembly_accuracy()},
          {"disc_loss", e.disc_loss},
          {"disc_accuracy", e.disc_accuracy},
          {"skipped_pairs", skipped},
          {"checkpoint", std::filesystem::path(e.checkpoint).filename().string()}};
}

void shuffle(std::vector<std::size_t>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(v[i - 1], v[std::min(j, i - 1)]);
  }
}

}  // namespace

TrainResult train(CoreModel& model, const TrainConfig& config,
                  const std::vector<std::pair<MolecularGraph, MolecularGraph>>& pairs, const std::string& out_dir,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  if (pairs.empty()) throw std::invalid_argument("no training pairs");
  TrainResult result;
  std::vector<TrainingExample> examples;
  for (const auto& [x, y] : pairs) {
    try {
      examples.push_back(prepare_example(model, x, y));
    } catch (const UnkSubstructureError&) {
      ++result.skipped_pairs;
    }
  }
  if (examples.empty()) throw std::invalid_argument("every training pair has out-of-vocabulary targets");

  Adam adam(model.params(), AdamConfig{.lr = config.lr});
  Adam disc_adam(model.disc_params(), AdamConfig{.lr = config.lr});

  std::ofstream log_file, timing_file;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log_file.open(std::filesystem::path(out_dir) / "train_log.jsonl");
    timing_file.open(std::filesystem::path(out_dir) / "timing.jsonl");
    if (!log_file || !timing_file) throw std::runtime_error("cannot write training logs in " + out_dir);
  }

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    shuffle(order, config.seed + static_cast<std::uint64_t>(epoch));
    EpochLog log;
    log.epoch = epoch + 1;
    log.lr = adam.lr();
    std::vector<LossReport> reports;
    std::vector<DiscriminatorReport> disc_reports;
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      const double weight = 1.0 / static_cast<double>(end - begin);
      model.params().zero_grad();
      std::vector<Tensor> real, fake;
      for (std::size_t k = begin; k < end; ++k) {
        const TrainingExample& ex = examples[order[k]];
        Tape t;
        TeacherForced tf = teacher_forced_loss(t, model, ex);
        Var loss = tf.total;
        if (config.adversarial) {
          const Translation out = translate(model, ex.x);
          if (out.molecule) {
            const Var adv = generator_adversarial_term(t, model, *out.molecule);
            tf.report.adversarial_loss = t.scalar(adv);
            tf.report.total += kAdversarialWeight * tf.report.adversarial_loss;
            loss = add(t, loss, scale(t, adv, kAdversarialWeight));
            Tape scratch;
            fake.push_back(scratch.value(pooled_embedding(scratch, model, *out.molecule)));
          }
          Tape scratch;
          real.push_back(scratch.value(pooled_embedding(scratch, model, ex.y)));
        }
        t.backward(scale(t, loss, weight));
        reports.push_back(tf.report);
      }
      adam.step();
      if (config.adversarial) disc_reports.push_back(discriminator_step(model, disc_adam, real, fake));
    }
    log.report = merge_reports(reports);
    for (const auto& d : disc_reports) {
      log.disc_loss += d.loss / static_cast<double>(disc_reports.size());
      log.disc_accuracy += d.accuracy / static_cast<double>(disc_reports.size());
    }
    adam.anneal(config.lr_anneal);
    disc_adam.anneal(config.lr_anneal);
    if (!out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03d.ckpt", epoch + 1);
      log.checkpoint = (std::filesystem::path(out_dir) / name).string();
      save_model(log.checkpoint, model, &adam);
      result.checkpoints.push_back(log.checkpoint);
    }
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (log_file.is_open()) {
      log_file << epoch_json(log, result.skipped_pairs).dump() << '\n';
      log_file.flush();
      timing_file << nlohmann::json{{"epoch", log.epoch}, {"seconds", log.seconds}}.dump() << '\n';
      timing_file.flush();
    }
    if (on_epoch) on_epoch(log);
    result.epochs.push_back(std::move(log));
  }
  return result;
}

std::size_t select_best_checkpoint(const std::vector<double>& sr1) {
  if (sr1.empty()) throw std::invalid_argument("no checkpoints to choose from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < sr1.size(); ++i) {
    if (sr1[i] >= sr1[best]) best = i;
  }
  return best;
}

}  // namespace copyrefine
