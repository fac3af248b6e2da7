#include "skillnet/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "skillnet/decoding.hpp"

namespace skillnet {

namespace {

MultiTaskSampler make_sampler(const std::vector<TrainTask>& tasks, const TrainOptions& options) {
  std::vector<std::string> names;
  std::vector<std::size_t> sizes;
  std::vector<std::vector<EncodedExample>> examples;
  for (const auto& t : tasks) {
    names.push_back(t.spec.name);
    sizes.push_back(t.train.size());
    examples.push_back(t.train);
  }
  return MultiTaskSampler(build_plan(names, sizes, options.cap, options.temperature, options.seed),
                          std::move(examples), options.limits);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

nlohmann::json eval_to_json(const EvalReport& r) {
  return {{"step", r.step}, {"scores", r.scores}, {"average", r.average}};
}

EvalReport eval_from_json(const nlohmann::json& j) {
  EvalReport r{j.at("step").get<std::size_t>(), {}, j.at("average").get<double>()};
  // Tasks without dev data are stored as null.
  for (const auto& s : j.at("scores")) r.scores.push_back(s.is_null() ? std::nan("") : s.get<double>());
  return r;
}

}  // namespace

void LinearSchedule::validate() const {
  if (!(peak_lr > 0.0) || !std::isfinite(peak_lr)) throw std::invalid_argument("schedule: peak_lr must be positive");
  if (total_steps == 0) throw std::invalid_argument("schedule: total_steps must be positive");
  if (warmup_steps > total_steps) throw std::invalid_argument("schedule: warmup_steps exceeds total_steps");
}

double LinearSchedule::lr(std::size_t step) const {
  if (step >= total_steps) return 0.0;
  if (step <= warmup_steps) {
    return warmup_steps == 0 ? peak_lr : peak_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  return peak_lr * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup_steps);
}

std::size_t Adam::step(std::vector<std::pair<std::string, Tensor>>& parameters, double lr) {
  std::size_t updated = 0;
  for (auto& [name, param] : parameters) {
    if (!param.has_grad()) continue;
    auto& slot = slots_[name];
    if (slot.m.empty()) {
      slot.m.assign(param.numel(), 0.0);
      slot.v.assign(param.numel(), 0.0);
    }
    ++slot.step;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(slot.step));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(slot.step));
    const auto g = param.grad();
    auto p = param.mutable_data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      slot.m[i] = config_.beta1 * slot.m[i] + (1.0 - config_.beta1) * g[i];
      slot.v[i] = config_.beta2 * slot.v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      p[i] -= lr * (slot.m[i] / c1) / (std::sqrt(slot.v[i] / c2) + config_.epsilon);
    }
    ++updated;
  }
  return updated;
}

const Adam::Slot* Adam::slot(const std::string& name) const {
  const auto it = slots_.find(name);
  return it == slots_.end() ? nullptr : &it->second;
}

void Adam::save(const std::filesystem::path& stem) const {
  std::vector<NamedArray> arrays;
  nlohmann::json steps = nlohmann::json::object();
  for (const auto& [name, s] : slots_) {
    arrays.push_back({"m:" + name, {s.m.size()}, s.m});
    arrays.push_back({"v:" + name, {s.v.size()}, s.v});
    steps[name] = s.step;
  }
  write_archive(stem, arrays);
  nlohmann::json meta{{"beta1", config_.beta1}, {"beta2", config_.beta2}, {"epsilon", config_.epsilon}, {"steps", steps}};
  write_text(stem.string() + ".json", meta.dump(2) + "\n");
}

void Adam::load(const std::filesystem::path& stem) {
  const auto meta = nlohmann::json::parse(read_text(stem.string() + ".json"));
  std::map<std::string, Slot> slots;
  for (auto& a : read_archive(stem)) {
    if (a.name.size() < 3 || a.name[1] != ':') throw std::runtime_error("optimizer state has a bad entry '" + a.name + "'");
    auto& s = slots[a.name.substr(2)];
    (a.name[0] == 'm' ? s.m : s.v) = std::move(a.data);
  }
  for (auto& [name, s] : slots) s.step = meta.at("steps").at(name).get<std::size_t>();
  config_ = {meta.at("beta1").get<double>(), meta.at("beta2").get<double>(), meta.at("epsilon").get<double>()};
  slots_ = std::move(slots);
}

double clip_grad_norm(std::vector<std::pair<std::string, Tensor>>& parameters, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : parameters) {
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [name, p] : parameters) {
      for (double& g : p.node()->grad) g *= factor;
    }
  }
  return norm;
}

TrainTask make_train_task(const TaskSpec& spec, const std::vector<Example>& train, const std::vector<Example>& dev,
                          const TaskSkillMap& map, const SkillRegistry& registry) {
  TrainTask task{spec, route(spec, map, registry), {}, dev};
  for (const auto& e : train) task.train.push_back(encode_example(spec, e.source, e.target));
  task.spec.n_examples = task.train.size();
  return task;
}

TrainRun::TrainRun(std::unique_ptr<Model> model, std::vector<TrainTask> tasks, TrainOptions options)
    : model_(std::move(model)),
      tasks_(std::move(tasks)),
      options_(options),
      optimizer_(options.adam),
      sampler_(make_sampler(tasks_, options_)) {
  options_.schedule.validate();
  if (options_.batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
  for (const auto& t : tasks_) {
    if (t.skills.empty()) throw std::invalid_argument("train: task '" + t.spec.name + "' has no skills");
  }
}

TrainRun::TrainRun(const ModelConfig& config, std::vector<TrainTask> tasks, TrainOptions options)
    : TrainRun(std::make_unique<Model>(config), std::move(tasks), options) {}

TrainRun::TrainRun(const Model& initial, std::vector<TrainTask> tasks, TrainOptions options)
    : TrainRun(std::make_unique<Model>(initial.config()), std::move(tasks), options) {
  model_->copy_parameters_from(initial);
}

StepReport TrainRun::train_step() {
  const auto batch = sampler_.next_batch(options_.batch_size);
  const auto& task = tasks_[batch.task];
  auto& params = model_->parameters();
  for (auto& [name, p] : params) p.zero_grad();

  GradientTape tape;
  double loss_value = 0.0;
  {
    TapeScope scope(tape);
    const Tensor loss = model_->loss(batch.sources, batch.targets, task.skills);
    loss_value = loss.item();
    if (!std::isfinite(loss_value)) {
      std::ostringstream msg;
      msg << "non-finite loss " << loss_value << " at step " << step_ + 1 << " on task '" << task.spec.name
          << "' (batch of " << batch.sources.size() << ", lr " << options_.schedule.lr(step_ + 1) << ")";
      throw NonFiniteError(msg.str());
    }
    tape.backward(loss);
  }
  tape.reset();
  if (options_.clip_norm > 0.0) clip_grad_norm(params, options_.clip_norm);

  ++step_;
  const double lr = options_.schedule.lr(step_);
  optimizer_.step(params, lr);
  StepReport report{step_, batch.task, task.spec.name, loss_value, lr};
  log_.push_back(report);
  return report;
}

EvalReport TrainRun::evaluate() const {
  EvalReport report{step_, {}, 0.0};
  std::size_t counted = 0;
  BeamConfig beam{.beam_size = 1, .max_target_length = options_.max_decode_length};
  for (const auto& task : tasks_) {
    if (task.dev.empty()) {
      report.scores.push_back(std::nan(""));
      continue;
    }
    const std::size_t n = options_.eval_examples == 0 ? task.dev.size() : std::min(options_.eval_examples, task.dev.size());
    std::vector<std::string> hyps, refs;
    for (std::size_t i = 0; i < n; ++i) {
      const auto encoded = truncate(encode_example(task.spec, task.dev[i].source, ""), options_.limits);
      const auto h = greedy_decode(*model_, encoded.source, task.skills, beam);
      hyps.push_back(Vocabulary::decode(h.tokens));
      refs.push_back(task.dev[i].target);
    }
    report.scores.push_back(score_corpus(task.spec.metric, hyps, refs, options_.tokenizer));
    report.average += report.scores.back();
    ++counted;
  }
  if (counted > 0) report.average /= static_cast<double>(counted);
  return report;
}

void TrainRun::record_evaluation() {
  auto report = evaluate();
  if (!best_ || report.average > best_->average) {
    best_ = report;
    best_params_ = snapshot_parameters(*model_);
  }
  evaluations_.push_back(std::move(report));
}

void TrainRun::train(std::size_t steps, const std::function<void(const StepReport&)>& on_step) {
  for (std::size_t i = 0; i < steps; ++i) {
    const auto report = train_step();
    if (options_.eval_every > 0 && step_ % options_.eval_every == 0) record_evaluation();
    if (on_step) on_step(report);
  }
  if (evaluations_.empty() || evaluations_.back().step != step_) record_evaluation();
}

void TrainRun::write_loss_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,task,loss,lr\n" << std::setprecision(17);
  for (const auto& r : log_) out << r.step << ',' << r.task_name << ',' << r.loss << ',' << r.lr << '\n';
}

void TrainRun::save(const std::filesystem::path& dir) const {
  save_model(dir, *model_);
  optimizer_.save(dir / "optimizer");
  write_text(dir / "sampler.json", sampler_.save_state() + "\n");
  write_loss_csv(dir / "loss.csv");
  nlohmann::json run{{"step", step_}, {"evaluations", nlohmann::json::array()}};
  for (const auto& e : evaluations_) run["evaluations"].push_back(eval_to_json(e));
  if (best_) {
    run["best"] = eval_to_json(*best_);
    write_archive(dir / "best", best_params_);
  }
  write_text(dir / "run.json", run.dump(2) + "\n");
}

void TrainRun::restore(const std::filesystem::path& dir) {
  assign_parameters(*model_, read_archive(dir / "params"));
  Adam optimizer(options_.adam);
  optimizer.load(dir / "optimizer");
  sampler_.restore_state(read_text(dir / "sampler.json"));
  const auto run = nlohmann::json::parse(read_text(dir / "run.json"));

  std::vector<StepReport> log;
  std::ifstream csv(dir / "loss.csv");
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    std::istringstream fields(line);
    std::string step, task, loss, lr;
    std::getline(fields, step, ',');
    std::getline(fields, task, ',');
    std::getline(fields, loss, ',');
    std::getline(fields, lr, ',');
    std::size_t index = 0;
    while (index < tasks_.size() && tasks_[index].spec.name != task) ++index;
    log.push_back({std::stoull(step), index, task, std::stod(loss), std::stod(lr)});
  }

  optimizer_ = std::move(optimizer);
  step_ = run.at("step").get<std::size_t>();
  log_ = std::move(log);
  evaluations_.clear();
  for (const auto& e : run.at("evaluations")) evaluations_.push_back(eval_from_json(e));
  best_.reset();
  best_params_.clear();
  if (run.contains("best")) {
    best_ = eval_from_json(run.at("best"));
    best_params_ = read_archive(dir / "best");
  }
}

TrainRun adapt(const std::filesystem::path& checkpoint, TrainTask task, TrainOptions options) {
  if (task.skills.empty()) throw std::invalid_argument("adapt: task '" + task.spec.name + "' has no skills");
  std::vector<TrainTask> tasks;
  tasks.push_back(std::move(task));
  const auto model = load_model(checkpoint);
  return TrainRun(*model, std::move(tasks), options);
}

}  // namespace skillnet
