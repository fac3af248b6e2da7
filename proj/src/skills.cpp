#include "skillnet/skills.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace skillnet {

Metric parse_metric(const std::string& name) {
  if (name == "bleu2") return Metric::kBleu2;
  if (name == "bleu4") return Metric::kBleu4;
  if (name == "rougeL" || name == "rouge_l" || name == "rougel") return Metric::kRougeL;
  if (name == "exact_match" || name == "exact-match") return Metric::kExactMatch;
  throw std::invalid_argument("unknown metric '" + name + "' (expected bleu2, bleu4, rougeL or exact_match)");
}

std::string metric_name(Metric metric) {
  switch (metric) {
    case Metric::kBleu2: return "bleu2";
    case Metric::kBleu4: return "bleu4";
    case Metric::kRougeL: return "rougeL";
    case Metric::kExactMatch: return "exact_match";
  }
  return "unknown";
}

void TaskSpec::validate() const {
  if (name.empty()) throw std::invalid_argument("task has no name");
  if (prefix.empty()) throw std::invalid_argument("task '" + name + "' has an empty prefix");
}

SkillRegistry::SkillRegistry(std::vector<std::string> names, const std::string& general_name)
    : names_(std::move(names)) {
  std::size_t general_hits = 0;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty()) throw std::invalid_argument("skill names must be non-empty");
    for (std::size_t j = 0; j < i; ++j) {
      if (names_[j] == names_[i]) throw std::invalid_argument("duplicate skill name '" + names_[i] + "'");
    }
    if (names_[i] == general_name) {
      general_ = i;
      ++general_hits;
    }
  }
  if (general_hits != 1) throw std::invalid_argument("registry must contain the general skill '" + general_name + "'");
}

SkillRegistry SkillRegistry::defaults() {
  return SkillRegistry({"open-end", "non-open-end", "conversation", "data-to-text", "question", "general"});
}

SkillRegistry SkillRegistry::dense() { return SkillRegistry({"general"}); }

std::size_t SkillRegistry::index_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) {
    std::string known;
    for (const auto& n : names_) known += (known.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown skill '" + name + "' (known: " + known + ")");
  }
  return static_cast<std::size_t>(it - names_.begin());
}

SkillSet::SkillSet(const SkillRegistry& registry, std::vector<std::size_t> indices) : indices_(std::move(indices)) {
  for (std::size_t k : indices_) {
    if (k >= registry.size()) {
      throw std::out_of_range("skill index " + std::to_string(k) + " outside registry of " +
                              std::to_string(registry.size()));
    }
  }
  indices_.push_back(registry.general());
  std::sort(indices_.begin(), indices_.end());
  indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
}

SkillSet SkillSet::from_names(const SkillRegistry& registry, const std::vector<std::string>& names) {
  std::vector<std::size_t> indices;
  indices.reserve(names.size());
  for (const auto& n : names) indices.push_back(registry.index_of(n));
  return SkillSet(registry, std::move(indices));
}

SkillSet SkillSet::all(const SkillRegistry& registry) {
  std::vector<std::size_t> indices(registry.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  return SkillSet(registry, std::move(indices));
}

bool SkillSet::contains(std::size_t skill) const {
  return std::binary_search(indices_.begin(), indices_.end(), skill);
}

std::vector<std::string> SkillSet::names(const SkillRegistry& registry) const {
  std::vector<std::string> out;
  for (std::size_t k : indices_) out.push_back(registry.name(k));
  return out;
}

std::string SkillSet::to_string(const SkillRegistry& registry) const {
  std::string out = "{";
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (i) out += ", ";
    out += registry.name(indices_[i]);
  }
  return out + "}";
}

TaskSkillMap TaskSkillMap::defaults(const SkillRegistry& registry) {
  TaskSkillMap map;
  auto row = [&](const char* task, std::vector<std::string> skills) {
    map.set(task, SkillSet::from_names(registry, skills));
  };
  row("text-summarization", {"non-open-end", "general"});
  row("advertisement-generation", {"open-end", "data-to-text", "general"});
  row("question-answering", {"open-end", "question", "general"});
  row("dialogue", {"open-end", "conversation", "question", "general"});
  row("grammatical-error-correction", {"non-open-end", "general"});
  row("topic-to-essay", {"open-end", "data-to-text", "general"});
  row("paraphrase-generation", {"non-open-end", "general"});
  row("story-generation", {"open-end", "general"});
  return map;
}

void TaskSkillMap::set(const std::string& task, SkillSet skills) {
  for (auto& [name, set] : entries_) {
    if (name == task) {
      set = std::move(skills);
      return;
    }
  }
  entries_.emplace_back(task, std::move(skills));
}

bool TaskSkillMap::contains(const std::string& task) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == task; });
}

const SkillSet& TaskSkillMap::at(const std::string& task) const {
  for (const auto& [name, set] : entries_) {
    if (name == task) return set;
  }
  std::string known;
  for (const auto& [name, set] : entries_) known += (known.empty() ? "" : ", ") + name;
  throw std::invalid_argument("no routing for task '" + task + "' (known tasks: " + known + ")");
}

std::vector<std::string> TaskSkillMap::tasks() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.first);
  return out;
}

std::string TaskSkillMap::to_json(const SkillRegistry& registry) const {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& [name, set] : entries_) doc[name] = set.names(registry);
  return doc.dump(2) + "\n";
}

TaskSkillMap TaskSkillMap::from_json(const std::string& text, const SkillRegistry& registry) {
  const auto doc = nlohmann::ordered_json::parse(text, nullptr, true, true);
  if (!doc.is_object()) throw std::invalid_argument("routing table must be a JSON object of task -> skill list");
  TaskSkillMap map;
  for (const auto& [task, skills] : doc.items()) {
    if (!skills.is_array()) throw std::invalid_argument("routing entry for '" + task + "' must be a list");
    map.set(task, SkillSet::from_names(registry, skills.get<std::vector<std::string>>()));
  }
  return map;
}

TaskSkillMap TaskSkillMap::load(const std::string& path, const SkillRegistry& registry) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open routing table " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str(), registry);
}

SkillSet route(const TaskSpec& task, const TaskSkillMap& map, const SkillRegistry& registry) {
  if (!task.skills.empty()) return SkillSet::from_names(registry, task.skills);
  return map.at(task.name);
}

SkillSet route(const std::string& task, const TaskSkillMap& map) { return map.at(task); }

}  // namespace skillnet
