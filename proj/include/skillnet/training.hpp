#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "skillnet/checkpoint.hpp"
#include "skillnet/data.hpp"
#include "skillnet/metrics.hpp"
#include "skillnet/skills.hpp"
#include "skillnet/transformer.hpp"

namespace skillnet {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Linear warmup to peak_lr, then linear decay to zero at total_steps.
/// Optimizer step k (1-based) uses lr(k).
struct LinearSchedule {
  double peak_lr = 1e-3;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1000;

  void validate() const;
  double lr(std::size_t step) const;
};

/// Adam without weight decay. Each parameter keeps its own moments and step
/// count, created on its first update; parameters without a gradient are skipped.
class Adam {
 public:
  struct Slot {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;
  };

  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Returns the number of parameters updated.
  std::size_t step(std::vector<std::pair<std::string, Tensor>>& parameters, double lr);

  const AdamConfig& config() const { return config_; }
  const Slot* slot(const std::string& name) const;
  const std::map<std::string, Slot>& slots() const { return slots_; }

  void save(const std::filesystem::path& stem) const;
  void load(const std::filesystem::path& stem);

 private:
  AdamConfig config_;
  std::map<std::string, Slot> slots_;
};

// Scales all gradients so their global L2 norm is at most max_norm; returns the norm before scaling.
double clip_grad_norm(std::vector<std::pair<std::string, Tensor>>& parameters, double max_norm);

struct TrainTask {
  TaskSpec spec;
  SkillSet skills;
  std::vector<EncodedExample> train;
  std::vector<Example> dev;
};

// Encodes the task's examples and routes it through `map` unless it lists skills itself.
TrainTask make_train_task(const TaskSpec& spec, const std::vector<Example>& train, const std::vector<Example>& dev,
                          const TaskSkillMap& map, const SkillRegistry& registry);

struct TrainOptions {
  std::size_t batch_size = 16;
  LinearSchedule schedule;
  AdamConfig adam;
  // 0 disables clipping.
  double clip_norm = 0.0;
  std::size_t cap = std::size_t{1} << 21;
  double temperature = 4.0;
  std::uint64_t seed = 0;
  LengthLimits limits;
  // Dev evaluation cadence in steps; 0 evaluates only when train() finishes.
  std::size_t eval_every = 0;
  // 0 uses every dev example.
  std::size_t eval_examples = 0;
  std::size_t max_decode_length = 64;
  MetricTokenizer tokenizer = MetricTokenizer::kCharacters;
};

struct StepReport {
  std::size_t step = 0;
  std::size_t task = 0;
  std::string task_name;
  double loss = 0.0;
  double lr = 0.0;
};

struct EvalReport {
  std::size_t step = 0;
  std::vector<double> scores;  // per task, in the task's metric
  double average = 0.0;
};

class TrainRun {
 public:
  TrainRun(const ModelConfig& config, std::vector<TrainTask> tasks, TrainOptions options);
  // Starts from a copy of `initial`'s parameters.
  TrainRun(const Model& initial, std::vector<TrainTask> tasks, TrainOptions options);

  StepReport train_step();
  // Runs `steps` more steps with periodic dev evaluation; tracks the best average dev score.
  // `on_step` runs after each step and any evaluation due at it.
  void train(std::size_t steps, const std::function<void(const StepReport&)>& on_step = {});
  EvalReport evaluate() const;

  Model& model() { return *model_; }
  const Model& model() const { return *model_; }
  const Adam& optimizer() const { return optimizer_; }
  const std::vector<TrainTask>& tasks() const { return tasks_; }
  const MultiTaskSampler& sampler() const { return sampler_; }
  const TrainOptions& options() const { return options_; }
  std::size_t step() const { return step_; }
  const std::vector<StepReport>& log() const { return log_; }
  const std::vector<EvalReport>& evaluations() const { return evaluations_; }
  const std::optional<EvalReport>& best() const { return best_; }
  const std::vector<NamedArray>& best_parameters() const { return best_params_; }

  // step,task,loss,lr
  void write_loss_csv(const std::filesystem::path& path) const;

  // Model, optimizer sidecar, sampler state, loss log and best snapshot.
  void save(const std::filesystem::path& dir) const;
  void restore(const std::filesystem::path& dir);

 private:
  TrainRun(std::unique_ptr<Model> model, std::vector<TrainTask> tasks, TrainOptions options);
  void record_evaluation();

  std::unique_ptr<Model> model_;
  std::vector<TrainTask> tasks_;
  TrainOptions options_;
  Adam optimizer_;
  MultiTaskSampler sampler_;
  std::size_t step_ = 0;
  std::vector<StepReport> log_;
  std::vector<EvalReport> evaluations_;
  std::optional<EvalReport> best_;
  std::vector<NamedArray> best_params_;
};

// Fine-tunes a saved model on one new task with a fresh optimizer. Only the
// task's skills (plus general) and the shared parameters receive updates.
TrainRun adapt(const std::filesystem::path& checkpoint, TrainTask task, TrainOptions options);

}  // namespace skillnet
