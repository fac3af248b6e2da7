#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "skillnet/random.hpp"
#include "skillnet/task.hpp"
#include "skillnet/transformer.hpp"

namespace skillnet {

/// Byte-level vocabulary: five reserved ids followed by the 256 byte values.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kSep = 4;
  static constexpr int kFirstByte = 5;

  static constexpr std::size_t size() { return kFirstByte + 256; }

  static TokenSeq encode(std::string_view text);
  // Reserved ids are dropped.
  static std::string decode(const TokenSeq& ids);
  static bool is_reserved(int id) { return id >= 0 && id < kFirstByte; }
};

struct Example {
  std::string source;
  std::string target;
};

// One JSON object per line with string fields "source" and "target"; blank lines are skipped.
std::vector<Example> load_jsonl(const std::string& path);
void save_jsonl(const std::string& path, const std::vector<Example>& examples);

struct EncodedExample {
  TokenSeq source;
  TokenSeq target;
};

// source = prefix bytes, SEP, source bytes; target = BOS, target bytes, EOS.
EncodedExample encode_example(const TaskSpec& task, std::string_view source, std::string_view target);

struct LengthLimits {
  std::size_t max_source = 128;
  std::size_t max_target = 128;
};

// Keeps the head of the source and the BOS-led head of the target, which still ends in EOS.
EncodedExample truncate(EncodedExample example, const LengthLimits& limits);

/// Per-task sampling probabilities p_i = D_i^(1/T) / sum_j D_j^(1/T), D_i = min(n_i, K).
struct SamplerPlan {
  std::vector<std::string> tasks;
  std::vector<std::size_t> sizes;   // n_i
  std::vector<double> capped;       // D_i
  std::vector<double> probabilities;
  double temperature = 1.0;
  std::size_t cap = 0;
  std::uint64_t seed = 0;

  // task, n_i, D_i, p_i as a whitespace-aligned table.
  std::string to_table() const;
};

SamplerPlan build_plan(const std::vector<std::string>& tasks, const std::vector<std::size_t>& sizes, std::size_t cap,
                       double temperature, std::uint64_t seed);
SamplerPlan build_plan(const std::vector<TaskSpec>& tasks, std::size_t cap, double temperature, std::uint64_t seed);

struct TaskBatch {
  std::size_t task = 0;
  std::string task_name;
  std::vector<TokenSeq> sources;
  std::vector<TokenSeq> targets;
};

/// Draws one task per batch from the plan, then takes the next examples of that
/// task's shuffled epoch order. One RNG drives both, so the whole stream is a
/// function of the seed.
class MultiTaskSampler {
 public:
  // examples[i] belongs to plan.tasks[i].
  MultiTaskSampler(SamplerPlan plan, std::vector<std::vector<EncodedExample>> examples, LengthLimits limits);

  TaskBatch next_batch(std::size_t batch_size);
  std::size_t draw_task();

  const SamplerPlan& plan() const { return plan_; }

  std::string save_state() const;
  void restore_state(const std::string& state);

 private:
  void reshuffle(std::size_t task);

  SamplerPlan plan_;
  std::vector<std::vector<EncodedExample>> examples_;
  LengthLimits limits_;
  Rng rng_;
  std::vector<std::vector<std::size_t>> order_;
  std::vector<std::size_t> cursor_;
};

}  // namespace skillnet
