#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "granenc/evaluation.hpp"
#include "granenc/model.hpp"

namespace granenc {

double joint_loss(double loss_mrc, double loss_intent, double loss_slot, double alpha);

enum class Task { mrc, slu };
std::string_view to_string(Task task);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  // Applies one update to the given parameters from their current grads.
  virtual void step(const std::vector<Parameter*>& params) = 0;
};

// Plain SGD. Gradients are rescaled so their global L2 norm is at most clip_norm.
class Sgd final : public Optimizer {
 public:
  Sgd(double lr, double clip_norm) : lr_(lr), clip_norm_(clip_norm) {}
  void step(const std::vector<Parameter*>& params) override;

 private:
  double lr_;
  double clip_norm_;
};

class Adam final : public Optimizer {
 public:
  Adam(double lr, double clip_norm, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), clip_norm_(clip_norm), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(const std::vector<Parameter*>& params) override;

 private:
  struct Moments {
    Tensor m;
    Tensor v;
    std::size_t t = 0;
  };
  double lr_;
  double clip_norm_;
  double beta1_;
  double beta2_;
  double eps_;
  std::map<const Parameter*, Moments> state_;
};

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& config);

// Scales grads in place; returns the norm before clipping.
double clip_global_norm(const std::vector<Parameter*>& params, double max_norm);

// Groups each task's step is allowed to update.
std::vector<ParamGroup> active_groups(Task task);

struct StepResult {
  Task task;
  double loss = 0.0;       // objective that was optimized
  double loss_mrc = 0.0;
  double loss_intent = 0.0;
  double loss_slot = 0.0;
  double grad_norm = 0.0;
};

class Trainer {
 public:
  Trainer(JointModel& model, std::unique_ptr<Optimizer> optimizer);

  StepResult train_step(Task task, const MRCBatch& batch);
  StepResult train_step(Task task, const SLUBatch& batch);

  JointModel& model() { return model_; }
  ParameterRegistry& registry() { return registry_; }

  // Test hook: runs after backward, before the update.
  std::function<void(ParameterRegistry&)> after_backward;

 private:
  StepResult finish(Task task, StepResult result);

  JointModel& model_;
  ParameterRegistry registry_;
  std::unique_ptr<Optimizer> optimizer_;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  Task task = Task::mrc;
  double loss = 0.0;
};

struct DevMetrics {
  std::size_t epoch = 0;
  std::optional<EvalReport> mrc;
  std::optional<double> intent_acc;
  std::optional<double> slot_f1;
};

struct TrainingData {
  std::vector<MRCExample> mrc_train;
  std::vector<SLUExample> slu_train;
  std::vector<MRCExample> mrc_dev;
  std::vector<SLUExample> slu_dev;
};

struct TrainingOptions {
  std::filesystem::path out_dir;  // empty: no checkpoints or metrics file
  bool dev_eval = true;
  std::function<void(const StepRecord&)> on_step;
};

struct TrainingResult {
  std::vector<std::filesystem::path> checkpoints;
  std::vector<StepRecord> history;
  std::vector<DevMetrics> dev;
};

// Alternates one MRC batch with one SLU batch for config.epochs passes over
// the MRC stream. The SLU stream recycles with a fresh shuffle when exhausted.
TrainingResult run_training(JointModel& model, const TrainingData& data, const TrainingOptions& options = {});

// Vocabularies collected over both training corpora.
ModelVocab build_model_vocab(const TrainConfig& config, const std::vector<MRCExample>& mrc,
                             const std::vector<SLUExample>& slu);

// Training-set style scoring helpers shared by the CLI and tests.
EvalReport score_mrc(JointModel& model, const std::vector<MRCExample>& examples);
struct SluScores {
  double intent_acc = 0.0;  // percent
  double slot_f1 = 0.0;     // fraction
};
SluScores score_slu(JointModel& model, const std::vector<SLUExample>& examples);

std::string metrics_json_line(const StepRecord& record);
std::string metrics_json_line(const DevMetrics& metrics);

}  // namespace granenc
