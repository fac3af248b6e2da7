#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace skillnet {

enum class Activation { kGelu, kRelu };
enum class NormPosition { kPost, kPre };

struct ModelConfig {
  std::size_t n_enc_layers = 4;
  std::size_t n_dec_layers = 4;
  std::size_t d_model = 128;
  std::size_t d_ff = 512;
  std::size_t n_heads = 4;
  std::size_t vocab_size = 261;
  std::size_t max_positions = 256;
  // Layers first_modified_layer, +stride, +2*stride, ... carry a skill bank.
  std::size_t modified_layer_stride = 2;
  std::size_t first_modified_layer = 0;
  // 0 builds a plain dense transformer with no skill banks.
  std::size_t skill_count = 6;
  Activation activation = Activation::kGelu;
  NormPosition norm_position = NormPosition::kPost;
  bool tie_embeddings = true;
  double layer_norm_eps = 1e-5;
  int pad_id = 0;
  std::uint64_t init_seed = 1234;

  void validate() const;
  bool is_modified_layer(std::size_t layer_index) const;
  std::size_t modified_layers_per_stack(std::size_t n_layers) const;

  // 12+12 layers, 1024 wide, 4096 FFN, 16 heads, 6 skills.
  static ModelConfig bart_large();
  // 2+2 layers, d_model 32; small enough for finite-difference checks.
  static ModelConfig toy();
};

std::string to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace skillnet
