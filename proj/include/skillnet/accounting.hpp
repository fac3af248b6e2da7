#pragma once

#include <cstddef>
#include <vector>

#include "skillnet/config.hpp"
#include "skillnet/skills.hpp"
#include "skillnet/transformer.hpp"

namespace skillnet {

struct ParamCount {
  std::size_t total = 0;
  std::size_t activated = 0;
};

// 2 * d_model * d_ff + d_ff + d_model.
std::size_t ffn_block_params(const ModelConfig& config);
std::size_t modified_layer_count(const ModelConfig& config);

// Closed-form count. `activated` keeps shared parameters plus the FFN blocks of active skills.
ParamCount count_params(const ModelConfig& config, const SkillSet& active);

// Sums the shapes from describe_parameters(); the independent check on count_params.
ParamCount enumerate_params(const ModelConfig& config, const SkillSet& active);

// Max |grad| per skill across every skill bank, read from the gradients currently held.
std::vector<double> skill_gradient_report(const Model& model);

// Clears gradients, runs one forward/backward on the batch with `active`, then reports.
std::vector<double> grad_sparsity_report(Model& model, const std::vector<TokenSeq>& sources,
                                         const std::vector<TokenSeq>& targets, const SkillSet& active);

}  // namespace skillnet
