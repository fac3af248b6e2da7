#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "skillnet/config.hpp"
#include "skillnet/skill_bank.hpp"
#include "skillnet/skills.hpp"
#include "skillnet/tensor.hpp"

namespace skillnet {

using TokenSeq = std::vector<int>;

struct ParameterSpec {
  std::string name;
  Shape shape;
  // Skill index for FFN blocks inside a skill bank, -1 for shared parameters.
  int skill = -1;
};

// Every parameter the config implies, in construction order, without allocating storage.
std::vector<ParameterSpec> describe_parameters(const ModelConfig& config);

struct AttentionBlock {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct LayerNormParams {
  Tensor gain, bias;
};

using FfnSlot = std::variant<FeedForward, SkillLayerBank>;

struct EncoderLayer {
  AttentionBlock self_attn;
  LayerNormParams self_attn_norm;
  FfnSlot ffn;
  LayerNormParams ffn_norm;
};

struct DecoderLayer {
  AttentionBlock self_attn;
  LayerNormParams self_attn_norm;
  AttentionBlock cross_attn;
  LayerNormParams cross_attn_norm;
  FfnSlot ffn;
  LayerNormParams ffn_norm;
};

// Right-padded token batch with a validity mask.
struct PaddedBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<int> ids;             // batch * length
  std::vector<std::uint8_t> valid;  // batch * length
};

PaddedBatch pad_batch(const std::vector<TokenSeq>& seqs, int pad_id);

struct EncoderOutput {
  Tensor states;  // [batch * length, d_model]
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::uint8_t> valid;
};

/// Encoder-decoder transformer whose modified layers route through skill banks.
///
/// Forward methods are const and safe to call concurrently when no tape is
/// active. Training code mutates parameters through parameters().
class Model {
 public:
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // Source tokens -> contextual states. Pad positions are masked out of attention.
  EncoderOutput encode(const std::vector<TokenSeq>& sources, const SkillSet& active) const;
  EncoderOutput encode(const TokenSeq& source, const SkillSet& active) const;

  // Decoder inputs (BOS-led) -> logits [batch * length, vocab].
  Tensor decode(const EncoderOutput& encoded, const std::vector<TokenSeq>& decoder_inputs,
                const SkillSet& active) const;

  // Logits [vocab] for the token after `prefix`, for a batch-of-one encoding.
  Tensor decode_step(const EncoderOutput& encoded, const TokenSeq& prefix, const SkillSet& active) const;

  // Logits [len(target) - 1, vocab] predicting target[1:] from target[:-1].
  Tensor forward_teacher_forced(const TokenSeq& source, const TokenSeq& target, const SkillSet& active) const;

  // Mean token cross-entropy of a batch; targets are BOS ... EOS.
  Tensor loss(const std::vector<TokenSeq>& sources, const std::vector<TokenSeq>& targets,
              const SkillSet& active) const;

  std::vector<std::pair<std::string, Tensor>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
  const std::vector<ParameterSpec>& parameter_specs() const { return specs_; }
  Tensor& parameter(const std::string& name);
  const Tensor& parameter(const std::string& name) const;

  // Copies every parameter value from `other`, which must have the same layout.
  void copy_parameters_from(const Model& other);
  std::size_t parameter_count() const;

 private:
  void build();
  Tensor self_attention_sublayer(const Tensor& x, const AttentionBlock& block, const LayerNormParams& norm,
                                 std::size_t batch, std::size_t length, const std::vector<std::uint8_t>& valid,
                                 bool causal) const;
  Tensor ffn_sublayer(const Tensor& x, const FfnSlot& ffn, const LayerNormParams& norm, const SkillSet& active) const;
  Tensor embed(const PaddedBatch& batch, const Tensor& positions) const;
  void check_lengths(const std::vector<TokenSeq>& seqs, const char* what) const;

  ModelConfig config_;
  std::vector<ParameterSpec> specs_;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::map<std::string, std::size_t> index_;

  Tensor token_embedding_;
  Tensor encoder_positions_;
  Tensor decoder_positions_;
  Tensor output_projection_;  // [vocab, d_model]; aliases token_embedding_ when tied
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  LayerNormParams encoder_final_norm_;
  LayerNormParams decoder_final_norm_;
};

}  // namespace skillnet
