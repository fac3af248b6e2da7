#include "skillnet/accounting.hpp"

#include <algorithm>
#include <cmath>

namespace skillnet {

std::size_t ffn_block_params(const ModelConfig& c) { return 2 * c.d_model * c.d_ff + c.d_ff + c.d_model; }

std::size_t modified_layer_count(const ModelConfig& c) {
  return c.modified_layers_per_stack(c.n_enc_layers) + c.modified_layers_per_stack(c.n_dec_layers);
}

ParamCount count_params(const ModelConfig& c, const SkillSet& active) {
  c.validate();
  const std::size_t d = c.d_model;
  const std::size_t attention = 4 * (d * d + d);
  const std::size_t norm = 2 * d;
  const std::size_t ffn = ffn_block_params(c);

  const std::size_t embeddings = c.vocab_size * d * (c.tie_embeddings ? 1 : 2) + 2 * c.max_positions * d;
  const std::size_t final_norms = c.norm_position == NormPosition::kPre ? 2 * norm : 0;
  const std::size_t encoder_body = c.n_enc_layers * (attention + 2 * norm);
  const std::size_t decoder_body = c.n_dec_layers * (2 * attention + 3 * norm);
  const std::size_t modified = modified_layer_count(c);
  const std::size_t plain = c.n_enc_layers + c.n_dec_layers - modified;

  const std::size_t shared = embeddings + final_norms + encoder_body + decoder_body + plain * ffn;
  std::size_t active_skills = 0;
  for (std::size_t k : active.indices()) active_skills += k < c.skill_count ? 1 : 0;
  return ParamCount{shared + modified * c.skill_count * ffn, shared + modified * active_skills * ffn};
}

ParamCount enumerate_params(const ModelConfig& config, const SkillSet& active) {
  ParamCount out;
  for (const auto& spec : describe_parameters(config)) {
    const std::size_t n = shape_numel(spec.shape);
    out.total += n;
    if (spec.skill < 0 || active.contains(static_cast<std::size_t>(spec.skill))) out.activated += n;
  }
  return out;
}

std::vector<double> skill_gradient_report(const Model& model) {
  std::vector<double> report(model.config().skill_count, 0.0);
  const auto& specs = model.parameter_specs();
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].skill < 0) continue;
    double& slot = report[static_cast<std::size_t>(specs[i].skill)];
    for (double g : params[i].second.grad()) slot = std::max(slot, std::abs(g));
  }
  return report;
}

std::vector<double> grad_sparsity_report(Model& model, const std::vector<TokenSeq>& sources,
                                         const std::vector<TokenSeq>& targets, const SkillSet& active) {
  for (auto& [name, t] : model.parameters()) t.zero_grad();
  GradientTape tape;
  {
    TapeScope scope(tape);
    Tensor loss = model.loss(sources, targets, active);
    tape.backward(loss);
  }
  tape.reset();
  return skill_gradient_report(model);
}

}  // namespace skillnet
