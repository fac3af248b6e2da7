#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace skillnet {

enum class Metric { kBleu2, kBleu4, kRougeL, kExactMatch };

Metric parse_metric(const std::string& name);
std::string metric_name(Metric metric);

// One generation task: how its inputs are marked, where its data lives, which
// skills it turns on and how its outputs are scored.
struct TaskSpec {
  std::string name;
  std::string prefix;
  std::string train_path;
  std::string dev_path;
  std::string test_path;
  // Empty: look the task up in the routing table.
  std::vector<std::string> skills;
  Metric metric = Metric::kBleu4;
  // Training-set size; filled from the loaded dataset when zero.
  std::size_t n_examples = 0;

  void validate() const;
};

}  // namespace skillnet
