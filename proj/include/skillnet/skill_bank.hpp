#pragma once

#include <vector>

#include "skillnet/config.hpp"
#include "skillnet/skills.hpp"
#include "skillnet/tensor.hpp"

namespace skillnet {

// Position-wise two-layer network: act(x W1 + b1) W2 + b2.
struct FeedForward {
  Tensor w1;  // [d_model, d_ff]
  Tensor b1;  // [d_ff]
  Tensor w2;  // [d_ff, d_model]
  Tensor b2;  // [d_model]

  Tensor forward(const Tensor& x, Activation activation) const;
};

// One FFN per registered skill, sharing shapes. Replaces the single FFN of a modified layer.
struct SkillLayerBank {
  std::vector<FeedForward> skills;

  std::size_t size() const { return skills.size(); }
};

// Mean of FFN_k(x) over k in `active`. Inactive skills are never evaluated, so
// their parameters stay off the tape and receive no gradient.
Tensor skill_layer_forward(const SkillLayerBank& bank, const Tensor& x, const SkillSet& active,
                           Activation activation = Activation::kGelu);

}  // namespace skillnet
