#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "skillnet/ops.hpp"
#include "skillnet/transformer.hpp"

using namespace skillnet;

namespace {

ModelConfig small_config() {
  ModelConfig c = ModelConfig::toy();
  c.vocab_size = 12;
  c.max_positions = 16;
  return c;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

std::vector<double> row(const Tensor& t, std::size_t r) {
  const std::size_t cols = t.shape().back();
  return {t.data().begin() + static_cast<std::ptrdiff_t>(r * cols),
          t.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * cols)};
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c = small_config();
  c.n_heads = 5;
  CHECK_THROWS_AS(Model{c}, std::invalid_argument);
  c = small_config();
  c.modified_layer_stride = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("modified layers follow the even-index convention") {
  ModelConfig c = ModelConfig::bart_large();
  CHECK(c.is_modified_layer(0));
  CHECK_FALSE(c.is_modified_layer(1));
  CHECK(c.is_modified_layer(10));
  CHECK(c.modified_layers_per_stack(12) == 6);
  c.first_modified_layer = 1;
  CHECK(c.is_modified_layer(1));
  CHECK_FALSE(c.is_modified_layer(0));
  c.skill_count = 0;
  CHECK(c.modified_layers_per_stack(12) == 0);
}

TEST_CASE("encode shape and errors") {
  Model model(small_config());
  const auto registry = SkillRegistry::defaults();
  const auto active = SkillSet::all(registry);
  auto enc = model.encode(TokenSeq{5}, active);
  CHECK(enc.states.shape() == Shape{1, 32});

  TokenSeq too_long(17, 5);
  try {
    model.encode(too_long, active);
    FAIL("expected length_error");
  } catch (const std::length_error& e) {
    CHECK(std::string(e.what()).find("max_positions") != std::string::npos);
  }
  CHECK_THROWS_AS(model.encode(TokenSeq{99}, active), std::out_of_range);
}

TEST_CASE("encode is deterministic and pad tails are inert") {
  Model model(small_config());
  const auto active = SkillSet::all(SkillRegistry::defaults());
  const TokenSeq a{3, 4, 5, 6};
  const TokenSeq b{7, 8};
  auto first = model.encode({a, b}, active);
  auto second = model.encode({a, b}, active);
  CHECK(max_abs_diff(first.states.data(), second.states.data()) == 0.0);

  // b padded to length 4 inside a batch vs b padded to length 9 with extra pads.
  const TokenSeq long_a{3, 4, 5, 6, 0, 0, 0, 0, 0};
  auto padded = model.encode({long_a, b}, active);
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK(max_abs_diff(row(first.states, 4 + t), row(padded.states, 9 + t)) < 1e-10);
  }
  for (std::size_t t = 0; t < 4; ++t) CHECK(max_abs_diff(row(first.states, t), row(padded.states, t)) < 1e-10);

  // Same batch member alone.
  auto alone = model.encode(b, active);
  for (std::size_t t = 0; t < 2; ++t) CHECK(max_abs_diff(row(alone.states, t), row(first.states, 4 + t)) < 1e-10);
}

TEST_CASE("decoder is causal") {
  Model model(small_config());
  const auto active = SkillSet::all(SkillRegistry::defaults());
  const TokenSeq src{3, 4, 5};
  auto enc = model.encode(src, active);
  const TokenSeq tgt{1, 6, 7, 8, 9};
  auto base = model.decode(enc, {tgt}, active);
  for (std::size_t j = 1; j < tgt.size(); ++j) {
    TokenSeq changed = tgt;
    changed[j] = changed[j] == 10 ? 11 : 10;
    auto moved = model.decode(enc, {changed}, active);
    for (std::size_t t = 0; t < tgt.size(); ++t) {
      const double diff = max_abs_diff(row(base, t), row(moved, t));
      if (t < j) CHECK(diff == 0.0);
      else CHECK(diff > 0.0);
    }
  }
}

TEST_CASE("decode_step matches the teacher-forced forward") {
  Model model(small_config());
  const auto active = SkillSet::all(SkillRegistry::defaults());
  const TokenSeq src{3, 4, 5, 6};
  const TokenSeq tgt{1, 7, 8, 9, 2};
  auto full = model.forward_teacher_forced(src, tgt, active);
  CHECK(full.shape() == Shape{4, 12});
  auto enc = model.encode(src, active);
  for (std::size_t t = 1; t < tgt.size(); ++t) {
    TokenSeq prefix(tgt.begin(), tgt.begin() + static_cast<std::ptrdiff_t>(t));
    auto step = model.decode_step(enc, prefix, active);
    CHECK(step.shape() == Shape{12});
    CHECK(max_abs_diff(step.data(), row(full, t - 1)) < 1e-10);
  }

  auto single = model.forward_teacher_forced(src, TokenSeq{1, 2}, active);
  CHECK(single.shape() == Shape{1, 12});
  CHECK_THROWS_AS(model.decode_step(enc, TokenSeq{}, active), std::invalid_argument);
}

TEST_CASE("whole-model gradient check, post-norm and pre-norm") {
  for (auto norm : {NormPosition::kPost, NormPosition::kPre}) {
    ModelConfig c = small_config();
    c.norm_position = norm;
    c.tie_embeddings = norm == NormPosition::kPost;
    Model model(c);
    const auto active = SkillSet::all(SkillRegistry::defaults());
    const std::vector<TokenSeq> src{{3, 4, 5}, {6, 7}};
    const std::vector<TokenSeq> tgt{{1, 8, 9, 2}, {1, 10, 2}};
    std::vector<Tensor> params;
    for (auto& [name, t] : model.parameters()) params.push_back(t);
    auto r = skillnet::testing::check_gradients([&] { return model.loss(src, tgt, active); }, params, 16);
    INFO("worst parameter: " << model.parameters()[r.worst_tensor].first);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("dense config has no skill banks") {
  ModelConfig c = small_config();
  c.skill_count = 0;
  Model model(c);
  for (const auto& spec : model.parameter_specs()) CHECK(spec.skill == -1);
  CHECK_NOTHROW(model.encode(TokenSeq{3, 4}, SkillSet{}));
}
