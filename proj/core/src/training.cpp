#include "granenc/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "granenc/checkpoint.hpp"

namespace granenc {

double joint_loss(double loss_mrc, double loss_intent, double loss_slot, double alpha) {
  for (double v : {loss_mrc, loss_intent, loss_slot, alpha}) {
    if (!std::isfinite(v)) throw NumericError("joint_loss: non-finite input");
    if (v < 0.0) throw NumericError("joint_loss: negative input " + std::to_string(v));
  }
  return loss_mrc + alpha * (loss_intent + loss_slot);
}

std::string_view to_string(Task task) { return task == Task::mrc ? "mrc" : "slu"; }

double clip_global_norm(const std::vector<Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params)
    for (double g : p->grad.values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("gradient norm is not finite");
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Parameter* p : params)
      for (double& g : p->grad.values()) g *= s;
  }
  return norm;
}

void Sgd::step(const std::vector<Parameter*>& params) {
  clip_global_norm(params, clip_norm_);
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    auto v = p->value.values();
    auto g = p->grad.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr_ * g[i];
    p->clear_frozen_row();
  }
}

void Adam::step(const std::vector<Parameter*>& params) {
  clip_global_norm(params, clip_norm_);
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    Moments& st = state_[p];
    if (st.m.shape() != p->value.shape()) {
      st.m = Tensor(p->value.shape());
      st.v = Tensor(p->value.shape());
      st.t = 0;
    }
    ++st.t;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(st.t));
    auto v = p->value.values();
    auto g = p->grad.values();
    auto m1 = st.m.values();
    auto m2 = st.v.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      m1[i] = beta1_ * m1[i] + (1.0 - beta1_) * g[i];
      m2[i] = beta2_ * m2[i] + (1.0 - beta2_) * g[i] * g[i];
      v[i] -= lr_ * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps_);
    }
    p->clear_frozen_row();
  }
}

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& config) {
  if (config.optimizer == "adam") return std::make_unique<Adam>(config.lr, config.clip_norm);
  if (config.optimizer == "sgd") return std::make_unique<Sgd>(config.lr, config.clip_norm);
  throw ConfigError("unknown optimizer \"" + config.optimizer + "\"");
}

std::vector<ParamGroup> active_groups(Task task) {
  if (task == Task::mrc) return {ParamGroup::shared_encoder, ParamGroup::embeddings, ParamGroup::mrc_head};
  return {ParamGroup::shared_encoder, ParamGroup::embeddings, ParamGroup::slu_decoders};
}

Trainer::Trainer(JointModel& model, std::unique_ptr<Optimizer> optimizer)
    : model_(model), registry_(model.registry()), optimizer_(std::move(optimizer)) {}

StepResult Trainer::finish(Task task, StepResult result) {
  if (after_backward) after_backward(registry_);
  std::vector<Parameter*> params;
  for (ParamGroup g : active_groups(task)) {
    const auto& group = registry_.group(g);
    params.insert(params.end(), group.begin(), group.end());
  }
  double sq = 0.0;
  for (const Parameter* p : params)
    for (double v : p->grad.values()) sq += v * v;
  result.grad_norm = std::sqrt(sq);
  optimizer_->step(params);
  return result;
}

StepResult Trainer::train_step(Task task, const MRCBatch& batch) {
  if (task != Task::mrc) throw ContractError("train_step: SLU task given an MRC batch");
  for (Parameter* p : registry_.all()) p->zero_grad();
  ag::Graph g;
  ag::Var loss = mrc_loss(model_.forward_mrc(g, batch), batch);
  g.backward(loss);
  StepResult r{Task::mrc};
  r.loss_mrc = loss.value()[0];
  r.loss = joint_loss(r.loss_mrc, 0.0, 0.0, model_.config().alpha);
  return finish(task, r);
}

StepResult Trainer::train_step(Task task, const SLUBatch& batch) {
  if (task != Task::slu) throw ContractError("train_step: MRC task given an SLU batch");
  for (Parameter* p : registry_.all()) p->zero_grad();
  const double alpha = model_.config().alpha;
  ag::Graph g;
  SluLossVars lv = slu_loss(model_.forward_slu(g, batch), batch);
  ag::Var total = ag::scale(ag::add(lv.intent, lv.slot), alpha);
  g.backward(total);
  StepResult r{Task::slu};
  r.loss_intent = lv.intent.value()[0];
  r.loss_slot = lv.slot.value()[0];
  r.loss = joint_loss(0.0, r.loss_intent, r.loss_slot, alpha);
  return finish(task, r);
}

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t k) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream * 0x10001ULL + k + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string epoch_name(std::size_t epoch) {
  std::ostringstream name;
  name << "epoch_" << std::setw(2) << std::setfill('0') << epoch << ".ckpt";
  return name.str();
}

}  // namespace

ModelVocab build_model_vocab(const TrainConfig& config, const std::vector<MRCExample>& mrc,
                             const std::vector<SLUExample>& slu) {
  std::vector<std::vector<std::string>> corpora;
  for (const MRCExample& ex : mrc) {
    corpora.push_back(ex.passage_tokens);
    corpora.push_back(ex.question_tokens);
  }
  for (const SLUExample& ex : slu) corpora.push_back(ex.tokens);
  ModelVocab v;
  v.words = build_vocab(corpora, config.min_count);
  v.chars = build_char_vocab(corpora, 1);
  v.intents = intent_labels(slu);
  v.slots = slot_labels(slu);
  return v;
}

EvalReport score_mrc(JointModel& model, const std::vector<MRCExample>& examples) {
  return evaluate_squad(model.predict_answers(examples), squad_golds(examples));
}

SluScores score_slu(JointModel& model, const std::vector<SLUExample>& examples) {
  std::vector<std::string> pred_intents, gold_intents;
  std::vector<std::vector<std::string>> pred_tags, gold_tags;
  for (const SLUExample& ex : examples) {
    SluPrediction p = model.predict_slu(ex.tokens);
    pred_intents.push_back(std::move(p.intent));
    pred_tags.push_back(std::move(p.slots));
    gold_intents.push_back(ex.intent);
    gold_tags.push_back(ex.slots);
  }
  return {intent_accuracy(pred_intents, gold_intents), slot_f1(pred_tags, gold_tags)};
}

std::string metrics_json_line(const StepRecord& record) {
  nlohmann::ordered_json j;
  j["step"] = record.step;
  j["task"] = std::string(to_string(record.task));
  j["loss"] = record.loss;
  j["epoch"] = record.epoch;
  return j.dump();
}

std::string metrics_json_line(const DevMetrics& metrics) {
  nlohmann::ordered_json j;
  j["task"] = "dev";
  j["epoch"] = metrics.epoch;
  nlohmann::ordered_json dev = nlohmann::ordered_json::object();
  if (metrics.mrc) {
    dev["exact"] = metrics.mrc->em;
    dev["f1"] = metrics.mrc->f1;
  }
  if (metrics.intent_acc) dev["intent_acc"] = *metrics.intent_acc;
  if (metrics.slot_f1) dev["slot_f1"] = *metrics.slot_f1;
  j["dev"] = dev;
  return j.dump();
}

TrainingResult run_training(JointModel& model, const TrainingData& data, const TrainingOptions& options) {
  const TrainConfig& cfg = model.config();
  if (data.mrc_train.empty()) throw ContractError("run_training: MRC training set is empty");
  const bool use_slu = cfg.alpha > 0.0;
  if (use_slu && data.slu_train.empty()) throw ContractError("run_training: SLU training set is empty");

  Trainer trainer(model, make_optimizer(cfg));
  const TextEncoder enc = model.text_encoder();
  TrainingResult result;

  std::ofstream metrics;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir / "checkpoints");
    const auto path = options.out_dir / "metrics.jsonl";
    metrics.open(path, std::ios::trunc);
    if (!metrics) throw IoError("cannot write metrics log " + path.string());
  }

  std::vector<SLUBatch> slu_batches;
  std::size_t slu_round = 0, slu_pos = 0;
  auto next_slu = [&]() -> const SLUBatch& {
    if (slu_pos == slu_batches.size()) {
      slu_batches = make_batches(data.slu_train, enc, model.vocab().intents, model.vocab().slots,
                                 cfg.batch_size_slu, derive_seed(cfg.seed, 2, slu_round++), cfg.shuffle);
      slu_pos = 0;
    }
    return slu_batches[slu_pos++];
  };

  std::size_t step = 0;
  auto record = [&](std::size_t epoch, const StepResult& r) {
    StepRecord rec{++step, epoch, r.task, r.loss};
    result.history.push_back(rec);
    if (metrics.is_open()) metrics << metrics_json_line(rec) << '\n';
    if (options.on_step) options.on_step(rec);
  };

  if (use_slu)
    for (std::size_t i = 0; i < cfg.warm_start_slu; ++i) record(0, trainer.train_step(Task::slu, next_slu()));

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto mrc_batches =
        make_batches(data.mrc_train, enc, cfg.batch_size_mrc, derive_seed(cfg.seed, 1, epoch), cfg.shuffle);
    for (const MRCBatch& batch : mrc_batches) {
      record(epoch, trainer.train_step(Task::mrc, batch));
      if (use_slu) record(epoch, trainer.train_step(Task::slu, next_slu()));
    }

    if (options.dev_eval && (!data.mrc_dev.empty() || !data.slu_dev.empty())) {
      DevMetrics dev;
      dev.epoch = epoch;
      if (!data.mrc_dev.empty()) dev.mrc = score_mrc(model, data.mrc_dev);
      if (!data.slu_dev.empty()) {
        SluScores s = score_slu(model, data.slu_dev);
        dev.intent_acc = s.intent_acc;
        dev.slot_f1 = s.slot_f1;
      }
      result.dev.push_back(dev);
      if (metrics.is_open()) metrics << metrics_json_line(dev) << '\n';
    }
    if (metrics.is_open()) metrics.flush();

    if (!options.out_dir.empty()) {
      const auto path = options.out_dir / "checkpoints" / epoch_name(epoch);
      save_checkpoint(model, path);
      result.checkpoints.push_back(path);
    }
  }
  if (metrics.is_open() && !metrics) throw IoError("failed writing metrics log under " + options.out_dir.string());
  return result;
}

}  // namespace granenc
