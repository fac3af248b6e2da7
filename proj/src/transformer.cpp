#include "skillnet/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "skillnet/ops.hpp"
#include "skillnet/random.hpp"

namespace skillnet {

namespace {

void describe_attention(std::vector<ParameterSpec>& out, const std::string& prefix, std::size_t d) {
  for (const char* proj : {"q", "k", "v", "out"}) {
    out.push_back({prefix + "." + proj + ".weight", {d, d}});
    out.push_back({prefix + "." + proj + ".bias", {d}});
  }
}

void describe_norm(std::vector<ParameterSpec>& out, const std::string& prefix, std::size_t d) {
  out.push_back({prefix + ".gain", {d}});
  out.push_back({prefix + ".bias", {d}});
}

void describe_ffn(std::vector<ParameterSpec>& out, const std::string& prefix, std::size_t d, std::size_t f,
                  int skill) {
  out.push_back({prefix + ".w1", {d, f}, skill});
  out.push_back({prefix + ".b1", {f}, skill});
  out.push_back({prefix + ".w2", {f, d}, skill});
  out.push_back({prefix + ".b2", {d}, skill});
}

void describe_ffn_slot(std::vector<ParameterSpec>& out, const ModelConfig& c, const std::string& layer,
                       std::size_t index) {
  if (c.is_modified_layer(index)) {
    for (std::size_t k = 0; k < c.skill_count; ++k) {
      describe_ffn(out, layer + ".ffn.skill" + std::to_string(k), c.d_model, c.d_ff, static_cast<int>(k));
    }
  } else {
    describe_ffn(out, layer + ".ffn", c.d_model, c.d_ff, -1);
  }
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::vector<ParameterSpec> describe_parameters(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.d_model;
  std::vector<ParameterSpec> out;
  out.push_back({"embed_tokens", {c.vocab_size, d}});
  out.push_back({"encoder.embed_positions", {c.max_positions, d}});
  out.push_back({"decoder.embed_positions", {c.max_positions, d}});
  if (!c.tie_embeddings) out.push_back({"lm_head", {c.vocab_size, d}});
  for (std::size_t i = 0; i < c.n_enc_layers; ++i) {
    const std::string layer = "encoder.layers." + std::to_string(i);
    describe_attention(out, layer + ".self_attn", d);
    describe_norm(out, layer + ".self_attn_norm", d);
    describe_ffn_slot(out, c, layer, i);
    describe_norm(out, layer + ".ffn_norm", d);
  }
  for (std::size_t i = 0; i < c.n_dec_layers; ++i) {
    const std::string layer = "decoder.layers." + std::to_string(i);
    describe_attention(out, layer + ".self_attn", d);
    describe_norm(out, layer + ".self_attn_norm", d);
    describe_attention(out, layer + ".cross_attn", d);
    describe_norm(out, layer + ".cross_attn_norm", d);
    describe_ffn_slot(out, c, layer, i);
    describe_norm(out, layer + ".ffn_norm", d);
  }
  if (c.norm_position == NormPosition::kPre) {
    describe_norm(out, "encoder.final_norm", d);
    describe_norm(out, "decoder.final_norm", d);
  }
  return out;
}

PaddedBatch pad_batch(const std::vector<TokenSeq>& seqs, int pad_id) {
  PaddedBatch out;
  out.batch = seqs.size();
  for (const auto& s : seqs) out.length = std::max(out.length, s.size());
  out.ids.assign(out.batch * out.length, pad_id);
  out.valid.assign(out.batch * out.length, 0);
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    for (std::size_t t = 0; t < seqs[b].size(); ++t) {
      out.ids[b * out.length + t] = seqs[b][t];
      out.valid[b * out.length + t] = seqs[b][t] != pad_id ? 1 : 0;
    }
  }
  return out;
}

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  specs_ = describe_parameters(config_);
  build();
}

void Model::build() {
  Rng rng(config_.init_seed);
  for (const auto& spec : specs_) {
    Tensor t = Tensor::zeros(spec.shape, true);
    auto data = t.mutable_data();
    if (spec.shape.size() == 2) {
      // Xavier/Glorot uniform.
      const double bound = std::sqrt(6.0 / static_cast<double>(spec.shape[0] + spec.shape[1]));
      for (double& v : data) v = rng.uniform(-bound, bound);
    } else if (ends_with(spec.name, ".gain")) {
      std::fill(data.begin(), data.end(), 1.0);
    }
    index_[spec.name] = params_.size();
    params_.emplace_back(spec.name, t);
  }

  auto attention_block = [this](const std::string& p) {
    return AttentionBlock{parameter(p + ".q.weight"),   parameter(p + ".q.bias"),   parameter(p + ".k.weight"),
                          parameter(p + ".k.bias"),     parameter(p + ".v.weight"), parameter(p + ".v.bias"),
                          parameter(p + ".out.weight"), parameter(p + ".out.bias")};
  };
  auto norm = [this](const std::string& p) { return LayerNormParams{parameter(p + ".gain"), parameter(p + ".bias")}; };
  auto ffn = [this](const std::string& p) {
    return FeedForward{parameter(p + ".w1"), parameter(p + ".b1"), parameter(p + ".w2"), parameter(p + ".b2")};
  };
  auto ffn_slot = [&](const std::string& layer, std::size_t index) -> FfnSlot {
    if (!config_.is_modified_layer(index)) return ffn(layer + ".ffn");
    SkillLayerBank bank;
    for (std::size_t k = 0; k < config_.skill_count; ++k) bank.skills.push_back(ffn(layer + ".ffn.skill" + std::to_string(k)));
    return bank;
  };

  token_embedding_ = parameter("embed_tokens");
  encoder_positions_ = parameter("encoder.embed_positions");
  decoder_positions_ = parameter("decoder.embed_positions");
  output_projection_ = config_.tie_embeddings ? token_embedding_ : parameter("lm_head");
  for (std::size_t i = 0; i < config_.n_enc_layers; ++i) {
    const std::string layer = "encoder.layers." + std::to_string(i);
    encoder_.push_back(EncoderLayer{attention_block(layer + ".self_attn"), norm(layer + ".self_attn_norm"),
                                    ffn_slot(layer, i), norm(layer + ".ffn_norm")});
  }
  for (std::size_t i = 0; i < config_.n_dec_layers; ++i) {
    const std::string layer = "decoder.layers." + std::to_string(i);
    decoder_.push_back(DecoderLayer{attention_block(layer + ".self_attn"), norm(layer + ".self_attn_norm"),
                                    attention_block(layer + ".cross_attn"), norm(layer + ".cross_attn_norm"),
                                    ffn_slot(layer, i), norm(layer + ".ffn_norm")});
  }
  if (config_.norm_position == NormPosition::kPre) {
    encoder_final_norm_ = norm("encoder.final_norm");
    decoder_final_norm_ = norm("decoder.final_norm");
  }
}

Tensor& Model::parameter(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return params_[it->second].second;
}

const Tensor& Model::parameter(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return params_[it->second].second;
}

void Model::copy_parameters_from(const Model& other) {
  if (other.params_.size() != params_.size()) throw std::invalid_argument("copy_parameters_from: layouts differ");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& [name, src] = other.params_[i];
    auto& [dst_name, dst] = params_[i];
    if (name != dst_name || src.shape() != dst.shape()) {
      throw std::invalid_argument("copy_parameters_from: parameter '" + name + "' does not match '" + dst_name + "'");
    }
    std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
  }
}

std::size_t Model::parameter_count() const {
  std::size_t total = 0;
  for (const auto& [name, t] : params_) total += t.numel();
  return total;
}

void Model::check_lengths(const std::vector<TokenSeq>& seqs, const char* what) const {
  for (const auto& s : seqs) {
    if (s.size() > config_.max_positions) {
      throw std::length_error(std::string(what) + " of length " + std::to_string(s.size()) +
                              " exceeds max_positions = " + std::to_string(config_.max_positions));
    }
    for (int id : s) {
      if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
        throw std::out_of_range(std::string(what) + " token id " + std::to_string(id) + " outside vocab_size " +
                                std::to_string(config_.vocab_size));
      }
    }
  }
}

Tensor Model::embed(const PaddedBatch& batch, const Tensor& positions) const {
  Tensor tokens = embedding(token_embedding_, batch.ids);
  std::vector<int> pos(batch.ids.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i % batch.length);
  return add(tokens, embedding(positions, pos));
}

Tensor Model::self_attention_sublayer(const Tensor& x, const AttentionBlock& block, const LayerNormParams& norm,
                                      std::size_t batch, std::size_t length, const std::vector<std::uint8_t>& valid,
                                      bool causal) const {
  const bool pre = config_.norm_position == NormPosition::kPre;
  const Tensor in = pre ? layer_norm(x, norm.gain, norm.bias, config_.layer_norm_eps) : x;
  AttentionLayout layout{batch, length, length, config_.n_heads, causal, valid};
  Tensor q = add_bias(matmul(in, block.wq), block.bq);
  Tensor k = add_bias(matmul(in, block.wk), block.bk);
  Tensor v = add_bias(matmul(in, block.wv), block.bv);
  Tensor attended = add_bias(matmul(attention(q, k, v, layout), block.wo), block.bo);
  Tensor residual = add(x, attended);
  return pre ? residual : layer_norm(residual, norm.gain, norm.bias, config_.layer_norm_eps);
}

Tensor Model::ffn_sublayer(const Tensor& x, const FfnSlot& slot, const LayerNormParams& norm,
                           const SkillSet& active) const {
  const bool pre = config_.norm_position == NormPosition::kPre;
  const Tensor in = pre ? layer_norm(x, norm.gain, norm.bias, config_.layer_norm_eps) : x;
  Tensor out = std::holds_alternative<FeedForward>(slot)
                   ? std::get<FeedForward>(slot).forward(in, config_.activation)
                   : skill_layer_forward(std::get<SkillLayerBank>(slot), in, active, config_.activation);
  Tensor residual = add(x, out);
  return pre ? residual : layer_norm(residual, norm.gain, norm.bias, config_.layer_norm_eps);
}

EncoderOutput Model::encode(const std::vector<TokenSeq>& sources, const SkillSet& active) const {
  if (sources.empty()) throw std::invalid_argument("encode: empty batch");
  check_lengths(sources, "source");
  PaddedBatch batch = pad_batch(sources, config_.pad_id);
  if (batch.length == 0) throw std::invalid_argument("encode: all sources are empty");
  Tensor x = embed(batch, encoder_positions_);
  for (const auto& layer : encoder_) {
    x = self_attention_sublayer(x, layer.self_attn, layer.self_attn_norm, batch.batch, batch.length, batch.valid,
                                false);
    x = ffn_sublayer(x, layer.ffn, layer.ffn_norm, active);
  }
  if (config_.norm_position == NormPosition::kPre) {
    x = layer_norm(x, encoder_final_norm_.gain, encoder_final_norm_.bias, config_.layer_norm_eps);
  }
  return EncoderOutput{x, batch.batch, batch.length, std::move(batch.valid)};
}

EncoderOutput Model::encode(const TokenSeq& source, const SkillSet& active) const {
  return encode(std::vector<TokenSeq>{source}, active);
}

Tensor Model::decode(const EncoderOutput& encoded, const std::vector<TokenSeq>& decoder_inputs,
                     const SkillSet& active) const {
  if (decoder_inputs.size() != encoded.batch) {
    throw std::invalid_argument("decode: " + std::to_string(decoder_inputs.size()) + " decoder inputs for a batch of " +
                                std::to_string(encoded.batch));
  }
  check_lengths(decoder_inputs, "decoder input");
  PaddedBatch batch = pad_batch(decoder_inputs, config_.pad_id);
  if (batch.length == 0) throw std::invalid_argument("decode: empty decoder inputs");
  const bool pre = config_.norm_position == NormPosition::kPre;

  Tensor x = embed(batch, decoder_positions_);
  for (const auto& layer : decoder_) {
    x = self_attention_sublayer(x, layer.self_attn, layer.self_attn_norm, batch.batch, batch.length, batch.valid,
                                true);

    const Tensor in = pre ? layer_norm(x, layer.cross_attn_norm.gain, layer.cross_attn_norm.bias, config_.layer_norm_eps)
                          : x;
    const auto& block = layer.cross_attn;
    AttentionLayout layout{batch.batch, batch.length, encoded.length, config_.n_heads, false, encoded.valid};
    Tensor q = add_bias(matmul(in, block.wq), block.bq);
    Tensor k = add_bias(matmul(encoded.states, block.wk), block.bk);
    Tensor v = add_bias(matmul(encoded.states, block.wv), block.bv);
    Tensor residual = add(x, add_bias(matmul(attention(q, k, v, layout), block.wo), block.bo));
    x = pre ? residual
            : layer_norm(residual, layer.cross_attn_norm.gain, layer.cross_attn_norm.bias, config_.layer_norm_eps);

    x = ffn_sublayer(x, layer.ffn, layer.ffn_norm, active);
  }
  if (pre) x = layer_norm(x, decoder_final_norm_.gain, decoder_final_norm_.bias, config_.layer_norm_eps);
  return matmul(x, transpose(output_projection_));
}

Tensor Model::decode_step(const EncoderOutput& encoded, const TokenSeq& prefix, const SkillSet& active) const {
  if (encoded.batch != 1) throw std::invalid_argument("decode_step: expects a batch-of-one encoding");
  if (prefix.empty()) throw std::invalid_argument("decode_step: prefix must start with BOS");
  Tensor logits = decode(encoded, {prefix}, active);
  const std::size_t vocab = config_.vocab_size;
  const auto all = logits.data();
  std::vector<double> last(all.end() - static_cast<std::ptrdiff_t>(vocab), all.end());
  return Tensor::from({vocab}, std::move(last));
}

Tensor Model::forward_teacher_forced(const TokenSeq& source, const TokenSeq& target, const SkillSet& active) const {
  if (target.size() < 2) throw std::invalid_argument("forward_teacher_forced: target needs BOS and EOS");
  TokenSeq input(target.begin(), target.end() - 1);
  return decode(encode(source, active), {input}, active);
}

Tensor Model::loss(const std::vector<TokenSeq>& sources, const std::vector<TokenSeq>& targets,
                   const SkillSet& active) const {
  if (sources.size() != targets.size()) throw std::invalid_argument("loss: sources and targets differ in count");
  std::vector<TokenSeq> inputs;
  std::vector<TokenSeq> labels;
  for (const auto& t : targets) {
    if (t.size() < 2) throw std::invalid_argument("loss: every target needs BOS and EOS");
    inputs.emplace_back(t.begin(), t.end() - 1);
    labels.emplace_back(t.begin() + 1, t.end());
  }
  Tensor logits = decode(encode(sources, active), inputs, active);
  PaddedBatch padded_labels = pad_batch(labels, config_.pad_id);
  return cross_entropy(logits, padded_labels.ids, config_.pad_id);
}

}  // namespace skillnet
