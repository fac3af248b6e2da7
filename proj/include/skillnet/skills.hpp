#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "skillnet/task.hpp"

namespace skillnet {

/// Ordered skill names; one of them is the general skill that every task activates.
class SkillRegistry {
 public:
  SkillRegistry(std::vector<std::string> names, const std::string& general_name = "general");

  // open-end, non-open-end, conversation, data-to-text, question, general.
  static SkillRegistry defaults();
  // A single general skill; a model built on it is a plain dense transformer.
  static SkillRegistry dense();

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t index) const { return names_.at(index); }
  std::size_t general() const { return general_; }
  std::size_t index_of(const std::string& name) const;

 private:
  std::vector<std::string> names_;
  std::size_t general_ = 0;
};

/// Sorted, duplicate-free set of activated skill indices.
///
/// Sets built through a registry always contain its general skill. A
/// default-constructed set is empty and is rejected by the skill layers.
class SkillSet {
 public:
  SkillSet() = default;
  SkillSet(const SkillRegistry& registry, std::vector<std::size_t> indices);

  static SkillSet from_names(const SkillRegistry& registry, const std::vector<std::string>& names);
  static SkillSet all(const SkillRegistry& registry);

  const std::vector<std::size_t>& indices() const { return indices_; }
  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  bool contains(std::size_t skill) const;

  std::vector<std::string> names(const SkillRegistry& registry) const;
  std::string to_string(const SkillRegistry& registry) const;

  friend bool operator==(const SkillSet&, const SkillSet&) = default;

 private:
  std::vector<std::size_t> indices_;
};

/// Task name -> activated skills, kept in insertion order.
class TaskSkillMap {
 public:
  TaskSkillMap() = default;

  // The eight routing rows: five multi-task tasks and three adaptation tasks.
  static TaskSkillMap defaults(const SkillRegistry& registry);

  void set(const std::string& task, SkillSet skills);
  bool contains(const std::string& task) const;
  const SkillSet& at(const std::string& task) const;
  const std::vector<std::pair<std::string, SkillSet>>& entries() const { return entries_; }
  std::vector<std::string> tasks() const;

  // JSON object {"task": ["skill", ...], ...}.
  std::string to_json(const SkillRegistry& registry) const;
  static TaskSkillMap from_json(const std::string& text, const SkillRegistry& registry);
  static TaskSkillMap load(const std::string& path, const SkillRegistry& registry);

 private:
  std::vector<std::pair<std::string, SkillSet>> entries_;
};

// Explicit skills on the task win; otherwise the task must be in the map.
SkillSet route(const TaskSpec& task, const TaskSkillMap& map, const SkillRegistry& registry);
SkillSet route(const std::string& task, const TaskSkillMap& map);

}  // namespace skillnet
