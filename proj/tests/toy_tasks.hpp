#pragma once

#include <string>
#include <vector>

#include "skillnet/synthetic.hpp"
#include "skillnet/training.hpp"

namespace skillnet::testing {

inline SkillRegistry toy_registry() { return SkillRegistry({"copy", "reverse", "general"}); }

inline TaskSkillMap toy_routing(const SkillRegistry& reg) {
  TaskSkillMap map;
  map.set("copy", SkillSet::from_names(reg, {"copy"}));
  map.set("reverse", SkillSet::from_names(reg, {"reverse"}));
  map.set("rotate", SkillSet::from_names(reg, {"copy"}));
  return map;
}

inline ModelConfig toy_model(std::uint64_t seed, std::size_t d_model = 32) {
  ModelConfig c = ModelConfig::toy();
  c.d_model = d_model;
  c.d_ff = 2 * d_model;
  c.skill_count = 3;
  c.max_positions = 32;
  c.init_seed = seed;
  return c;
}

inline TrainTask toy_task(const std::string& kind, std::size_t n_train, std::size_t n_dev, std::uint64_t seed) {
  const auto reg = toy_registry();
  TaskSpec spec{.name = kind, .prefix = kind, .metric = Metric::kExactMatch};
  return make_train_task(spec, synthetic_examples(kind, n_train, seed), synthetic_examples(kind, n_dev, seed + 1000),
                         toy_routing(reg), reg);
}

inline TrainOptions toy_options(std::uint64_t seed, std::size_t total_steps, double peak_lr = 3e-3) {
  TrainOptions o;
  o.batch_size = 16;
  o.schedule = {peak_lr, total_steps / 10, total_steps};
  o.seed = seed;
  o.temperature = 1.0;
  o.max_decode_length = 12;
  return o;
}

inline bool same_parameters(const Model& a, const Model& b) {
  const auto& pa = a.parameters();
  const auto& pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const auto x = pa[i].second.data();
    const auto y = pb[i].second.data();
    if (pa[i].first != pb[i].first || !std::equal(x.begin(), x.end(), y.begin(), y.end())) return false;
  }
  return true;
}

// Parameters that belong to skill `skill`'s FFN in any bank.
inline std::vector<std::string> skill_parameter_names(const Model& model, int skill) {
  std::vector<std::string> out;
  for (const auto& spec : model.parameter_specs()) {
    if (spec.skill == skill) out.push_back(spec.name);
  }
  return out;
}

}  // namespace skillnet::testing
