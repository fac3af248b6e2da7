#include "skillnet/data.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace skillnet {

TokenSeq Vocabulary::encode(std::string_view text) {
  TokenSeq ids;
  ids.reserve(text.size());
  for (unsigned char byte : text) ids.push_back(kFirstByte + byte);
  return ids;
}

std::string Vocabulary::decode(const TokenSeq& ids) {
  std::string out;
  for (int id : ids) {
    if (id >= kFirstByte && id < static_cast<int>(size())) out.push_back(static_cast<char>(id - kFirstByte));
  }
  return out;
}

std::vector<Example> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path);
  std::vector<Example> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back(Example{j.at("source").get<std::string>(), j.at("target").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_jsonl(const std::string& path, const std::vector<Example>& examples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& e : examples) {
    out << nlohmann::json{{"source", e.source}, {"target", e.target}}.dump() << '\n';
  }
}

EncodedExample encode_example(const TaskSpec& task, std::string_view source, std::string_view target) {
  EncodedExample out;
  out.source = Vocabulary::encode(task.prefix);
  out.source.push_back(Vocabulary::kSep);
  const auto body = Vocabulary::encode(source);
  out.source.insert(out.source.end(), body.begin(), body.end());
  out.target.push_back(Vocabulary::kBos);
  const auto tgt = Vocabulary::encode(target);
  out.target.insert(out.target.end(), tgt.begin(), tgt.end());
  out.target.push_back(Vocabulary::kEos);
  return out;
}

EncodedExample truncate(EncodedExample example, const LengthLimits& limits) {
  if (limits.max_source == 0 || limits.max_target < 2) {
    throw std::invalid_argument("length limits need max_source >= 1 and max_target >= 2");
  }
  if (example.source.size() > limits.max_source) example.source.resize(limits.max_source);
  if (example.target.size() > limits.max_target) {
    example.target.resize(limits.max_target);
    example.target.back() = Vocabulary::kEos;
  }
  return example;
}

std::string SamplerPlan::to_table() const {
  std::ostringstream out;
  std::size_t width = 4;
  for (const auto& t : tasks) width = std::max(width, t.size());
  out << std::left << std::setw(static_cast<int>(width)) << "task" << std::right << std::setw(12) << "n_i"
      << std::setw(12) << "D_i" << std::setw(12) << "p_i" << '\n';
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    out << std::left << std::setw(static_cast<int>(width)) << tasks[i] << std::right << std::setw(12) << sizes[i]
        << std::setw(12) << static_cast<std::size_t>(capped[i]) << std::setw(12) << std::fixed << std::setprecision(6)
        << probabilities[i] << '\n';
  }
  return out.str();
}

SamplerPlan build_plan(const std::vector<std::string>& tasks, const std::vector<std::size_t>& sizes, std::size_t cap,
                       double temperature, std::uint64_t seed) {
  if (tasks.empty()) throw std::invalid_argument("build_plan: no tasks");
  if (tasks.size() != sizes.size()) throw std::invalid_argument("build_plan: tasks and sizes differ in length");
  if (cap < 1) throw std::invalid_argument("build_plan: cap K must be >= 1");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("build_plan: temperature T must be positive");
  }
  SamplerPlan plan{tasks, sizes, {}, {}, temperature, cap, seed};
  std::vector<double> weights;
  for (std::size_t n : sizes) {
    const double d = static_cast<double>(std::min(n, cap));
    plan.capped.push_back(d);
    weights.push_back(d > 0.0 ? std::pow(d, 1.0 / temperature) : 0.0);
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (total <= 0.0) throw std::invalid_argument("build_plan: every task has zero training examples");
  for (double w : weights) plan.probabilities.push_back(w / total);
  return plan;
}

SamplerPlan build_plan(const std::vector<TaskSpec>& tasks, std::size_t cap, double temperature, std::uint64_t seed) {
  std::vector<std::string> names;
  std::vector<std::size_t> sizes;
  for (const auto& t : tasks) {
    names.push_back(t.name);
    sizes.push_back(t.n_examples);
  }
  return build_plan(names, sizes, cap, temperature, seed);
}

MultiTaskSampler::MultiTaskSampler(SamplerPlan plan, std::vector<std::vector<EncodedExample>> examples,
                                   LengthLimits limits)
    : plan_(std::move(plan)), examples_(std::move(examples)), limits_(limits), rng_(plan_.seed) {
  if (examples_.size() != plan_.tasks.size()) {
    throw std::invalid_argument("MultiTaskSampler: " + std::to_string(examples_.size()) + " datasets for " +
                                std::to_string(plan_.tasks.size()) + " planned tasks");
  }
  order_.resize(examples_.size());
  cursor_.assign(examples_.size(), 0);
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    order_[i].resize(examples_[i].size());
    std::iota(order_[i].begin(), order_[i].end(), std::size_t{0});
    // The first draw from a task triggers its first shuffle.
    cursor_[i] = order_[i].size();
  }
}

std::size_t MultiTaskSampler::draw_task() {
  const double u = rng_.uniform();
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < plan_.probabilities.size(); ++i) {
    if (plan_.probabilities[i] <= 0.0) continue;
    last_positive = i;
    acc += plan_.probabilities[i];
    if (u < acc) return i;
  }
  return last_positive;
}

void MultiTaskSampler::reshuffle(std::size_t task) {
  rng_.shuffle(order_[task]);
  cursor_[task] = 0;
}

TaskBatch MultiTaskSampler::next_batch(std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("next_batch: batch_size must be positive");
  const std::size_t task = draw_task();
  if (examples_[task].empty()) {
    throw std::runtime_error("next_batch: task '" + plan_.tasks[task] + "' was drawn but has no examples");
  }
  TaskBatch batch{task, plan_.tasks[task], {}, {}};
  for (std::size_t b = 0; b < batch_size; ++b) {
    if (cursor_[task] >= order_[task].size()) reshuffle(task);
    const auto ex = truncate(examples_[task][order_[task][cursor_[task]++]], limits_);
    batch.sources.push_back(ex.source);
    batch.targets.push_back(ex.target);
  }
  return batch;
}

std::string MultiTaskSampler::save_state() const {
  nlohmann::json j;
  j["rng"] = rng_.state();
  j["order"] = order_;
  j["cursor"] = cursor_;
  return j.dump();
}

void MultiTaskSampler::restore_state(const std::string& state) {
  const auto j = nlohmann::json::parse(state);
  auto order = j.at("order").get<std::vector<std::vector<std::size_t>>>();
  auto cursor = j.at("cursor").get<std::vector<std::size_t>>();
  if (order.size() != order_.size() || cursor.size() != cursor_.size()) {
    throw std::runtime_error("sampler state does not match the configured tasks");
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i].size() != examples_[i].size()) {
      throw std::runtime_error("sampler state for task '" + plan_.tasks[i] + "' does not match its dataset size");
    }
  }
  rng_.restore(j.at("rng").get<std::string>());
  order_ = std::move(order);
  cursor_ = std::move(cursor);
}

}  // namespace skillnet
