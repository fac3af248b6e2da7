#include "skillnet/skill_bank.hpp"

#include <stdexcept>
#include <string>

#include "skillnet/ops.hpp"

namespace skillnet {

Tensor FeedForward::forward(const Tensor& x, Activation activation) const {
  Tensor hidden = add_bias(matmul(x, w1), b1);
  hidden = activation == Activation::kGelu ? gelu(hidden) : relu(hidden);
  return add_bias(matmul(hidden, w2), b2);
}

Tensor skill_layer_forward(const SkillLayerBank& bank, const Tensor& x, const SkillSet& active,
                           Activation activation) {
  if (active.empty()) throw std::invalid_argument("skill_layer_forward: no active skills");
  for (std::size_t k : active.indices()) {
    if (k >= bank.size()) {
      throw std::out_of_range("skill_layer_forward: skill " + std::to_string(k) + " not in a bank of " +
                              std::to_string(bank.size()));
    }
  }
  const auto& indices = active.indices();
  Tensor pooled = bank.skills[indices.front()].forward(x, activation);
  if (indices.size() == 1) return pooled;
  for (std::size_t i = 1; i < indices.size(); ++i) {
    pooled = add(pooled, bank.skills[indices[i]].forward(x, activation));
  }
  return scale(pooled, 1.0 / static_cast<double>(indices.size()));
}

}  // namespace skillnet
