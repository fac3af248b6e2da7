#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "skillnet/config.hpp"
#include "skillnet/decoding.hpp"
#include "skillnet/skills.hpp"
#include "skillnet/task.hpp"
#include "skillnet/training.hpp"

namespace skillnet {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything one experiment needs, read from a single JSON file (comments allowed).
/// Relative data paths resolve against the file's directory.
struct RunConfig {
  ModelConfig model;
  std::vector<std::string> skills;
  std::string general_skill = "general";
  // Task name -> non-general skills. Empty: the built-in eight-task table.
  std::vector<std::pair<std::string, std::vector<std::string>>> routing;
  std::vector<TaskSpec> tasks;
  TrainOptions train;
  std::size_t steps = 0;
  BeamConfig beam;
  std::string output_dir = "runs/default";

  SkillRegistry registry() const;
  TaskSkillMap routing_map() const;
  void validate() const;
};

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = ".");
RunConfig load_run_config(const std::filesystem::path& path);

// Loads train and dev splits for every configured task and routes each one.
std::vector<TrainTask> load_train_tasks(const RunConfig& config);

MetricTokenizer parse_tokenizer(const std::string& name);

}  // namespace skillnet
