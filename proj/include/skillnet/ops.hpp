#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "skillnet/tensor.hpp"

// Differentiable ops. Each records itself on the active tape when an input requires grad.
namespace skillnet {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// x[..., n] + bias[n], broadcast over leading dimensions.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor relu(const Tensor& x);
// Exact (erf) GELU.
Tensor gelu(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);

// Normalizes over the last dimension.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

// Gathers rows of table[V, d]; backward scatters into the gathered rows.
Tensor embedding(const Tensor& table, std::span<const int> ids);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Mean NLL over targets != pad_id. logits is [..., vocab] with one row per target.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int pad_id);

struct AttentionLayout {
  std::size_t batch = 1;
  std::size_t query_len = 1;
  std::size_t key_len = 1;
  std::size_t heads = 1;
  bool causal = false;
  // batch * key_len flags; empty means every key is valid.
  std::vector<std::uint8_t> key_valid;
};

// Scaled dot-product multi-head attention over packed rows:
// q is [batch*query_len, d], k and v are [batch*key_len, d]. Query rows with no
// valid key produce zeros.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionLayout& layout);

}  // namespace skillnet
