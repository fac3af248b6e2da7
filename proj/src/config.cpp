#include "skillnet/config.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace skillnet {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (d_model == 0 || d_ff == 0 || n_heads == 0 || vocab_size == 0 || max_positions == 0) {
    fail("d_model, d_ff, n_heads, vocab_size and max_positions must be positive");
  }
  if (d_model % n_heads != 0) {
    fail("d_model " + std::to_string(d_model) + " is not divisible by n_heads " + std::to_string(n_heads));
  }
  if (modified_layer_stride < 1) fail("modified_layer_stride must be >= 1");
  if (pad_id < 0 || static_cast<std::size_t>(pad_id) >= vocab_size) fail("pad_id outside vocabulary");
  if (layer_norm_eps < 0.0) fail("layer_norm_eps must be non-negative");
}

bool ModelConfig::is_modified_layer(std::size_t layer_index) const {
  if (skill_count == 0 || layer_index < first_modified_layer) return false;
  return (layer_index - first_modified_layer) % modified_layer_stride == 0;
}

std::size_t ModelConfig::modified_layers_per_stack(std::size_t n_layers) const {
  std::size_t count = 0;
  for (std::size_t i = 0; i < n_layers; ++i) count += is_modified_layer(i) ? 1 : 0;
  return count;
}

ModelConfig ModelConfig::bart_large() {
  ModelConfig c;
  c.n_enc_layers = 12;
  c.n_dec_layers = 12;
  c.d_model = 1024;
  c.d_ff = 4096;
  c.n_heads = 16;
  c.vocab_size = 21128;
  c.max_positions = 1024;
  c.skill_count = 6;
  return c;
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.n_enc_layers = 2;
  c.n_dec_layers = 2;
  c.d_model = 32;
  c.d_ff = 64;
  c.n_heads = 4;
  c.max_positions = 64;
  return c;
}

std::string to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["n_enc_layers"] = c.n_enc_layers;
  j["n_dec_layers"] = c.n_dec_layers;
  j["d_model"] = c.d_model;
  j["d_ff"] = c.d_ff;
  j["n_heads"] = c.n_heads;
  j["vocab_size"] = c.vocab_size;
  j["max_positions"] = c.max_positions;
  j["modified_layer_stride"] = c.modified_layer_stride;
  j["first_modified_layer"] = c.first_modified_layer;
  j["skill_count"] = c.skill_count;
  j["activation"] = c.activation == Activation::kGelu ? "gelu" : "relu";
  j["norm_position"] = c.norm_position == NormPosition::kPost ? "post" : "pre";
  j["tie_embeddings"] = c.tie_embeddings;
  j["layer_norm_eps"] = c.layer_norm_eps;
  j["pad_id"] = c.pad_id;
  j["init_seed"] = c.init_seed;
  return j.dump(2);
}

ModelConfig model_config_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text, nullptr, true, true);
  static const std::vector<std::string> known{
      "preset", "n_enc_layers", "n_dec_layers", "d_model", "d_ff", "n_heads", "vocab_size", "max_positions",
      "modified_layer_stride", "first_modified_layer", "skill_count", "activation", "norm_position",
      "tie_embeddings", "layer_norm_eps", "pad_id", "init_seed"};
  if (!j.is_object()) throw std::invalid_argument("model config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("model config: unknown key '" + key + "'");
    }
  }
  ModelConfig c;
  if (j.contains("preset")) {
    const auto preset = j.at("preset").get<std::string>();
    if (preset == "toy") c = ModelConfig::toy();
    else if (preset == "bart-large") c = ModelConfig::bart_large();
    else if (preset != "default") {
      throw std::invalid_argument("model config: unknown preset '" + preset + "' (expected default, toy or bart-large)");
    }
  }
  auto take = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  take("n_enc_layers", c.n_enc_layers);
  take("n_dec_layers", c.n_dec_layers);
  take("d_model", c.d_model);
  take("d_ff", c.d_ff);
  take("n_heads", c.n_heads);
  take("vocab_size", c.vocab_size);
  take("max_positions", c.max_positions);
  take("modified_layer_stride", c.modified_layer_stride);
  take("first_modified_layer", c.first_modified_layer);
  take("skill_count", c.skill_count);
  take("tie_embeddings", c.tie_embeddings);
  take("layer_norm_eps", c.layer_norm_eps);
  take("pad_id", c.pad_id);
  take("init_seed", c.init_seed);
  if (j.contains("activation")) {
    const auto act = j.at("activation").get<std::string>();
    if (act == "gelu") c.activation = Activation::kGelu;
    else if (act == "relu") c.activation = Activation::kRelu;
    else throw std::invalid_argument("model config: unknown activation '" + act + "'");
  }
  if (j.contains("norm_position")) {
    const auto pos = j.at("norm_position").get<std::string>();
    if (pos == "post") c.norm_position = NormPosition::kPost;
    else if (pos == "pre") c.norm_position = NormPosition::kPre;
    else throw std::invalid_argument("model config: unknown norm_position '" + pos + "'");
  }
  c.validate();
  return c;
}

}  // namespace skillnet
