#include <doctest.h>

#include <cmath>
#include <limits>

#include "skillnet/decoding.hpp"
#include "skillnet/metrics.hpp"
#include "tiny_model.hpp"

using namespace skillnet;

namespace {

Tokens words(const std::string& s) { return tokenize_for_metric(s, MetricTokenizer::kWhitespace); }

}  // namespace

TEST_CASE("beam size one equals greedy") {
  const auto registry = SkillRegistry::defaults();
  const auto active = SkillSet::from_names(registry, {"open-end"});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Model model(skillnet::testing::tiny_decoder_config(12, seed));
    BeamConfig cfg{.beam_size = 1, .max_target_length = 6};
    const TokenSeq src{5, 7, 9, 11};
    const auto g = greedy_decode(model, src, active, cfg);
    const auto b = beam_search(model, src, active, cfg);
    CHECK(g.tokens == b.tokens);
    CHECK(g.logprob == b.logprob);
    CHECK(g.finished);
  }
}

TEST_CASE("wide beam matches exhaustive search") {
  const auto registry = SkillRegistry::defaults();
  const auto active = SkillSet::all(registry);
  int agree = 0;
  for (std::uint64_t trial = 0; trial < 25; ++trial) {
    Model model(skillnet::testing::tiny_decoder_config(5, 100 + trial));
    const TokenSeq src{3, static_cast<int>(trial % 5), 4};
    BeamConfig cfg{.beam_size = 125, .max_target_length = 3, .banned_tokens = {}};
    const auto beam = beam_search(model, src, active, cfg);
    const auto best = skillnet::testing::exhaustive_best(model, src, active, 5, 3, Vocabulary::kEos);
    agree += beam.tokens == best.tokens ? 1 : 0;
    CHECK(std::abs(beam.logprob - best.logprob) < 1e-12);
  }
  CHECK(agree == 25);
}

TEST_CASE("decoding errors and invariants") {
  const auto registry = SkillRegistry::defaults();
  const auto active = SkillSet::all(registry);
  Model model(skillnet::testing::tiny_decoder_config(8, 3));
  BeamConfig cfg{.beam_size = 3, .max_target_length = 0};
  CHECK_THROWS_AS(beam_search(model, {5}, active, cfg), std::invalid_argument);
  CHECK_THROWS_AS(greedy_decode(model, {5}, active, cfg), std::invalid_argument);
  cfg.max_target_length = 5;
  const auto h = beam_search(model, {5, 6}, active, cfg);
  CHECK(h.logprob <= 0.0);
  CHECK(h.finished);
  CHECK((h.tokens.back() == Vocabulary::kEos || h.tokens.size() == 5));
  for (int t : h.tokens) {
    CHECK(t != Vocabulary::kPad);
    CHECK(t != Vocabulary::kBos);
  }
}

TEST_CASE("bleu identities") {
  const std::vector<Tokens> c{words("a b c d e")};
  CHECK(bleu(c, {{words("a b c d e")}}, 4) == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(bleu(c, {{words("v w x y z")}}, 4) == 0.0);
  CHECK(bleu(c, {{words("v w x y z")}}, 2) == 0.0);
  CHECK_THROWS_AS(bleu(c, {{}}, 4), std::invalid_argument);
  CHECK_THROWS_AS(bleu(c, {}, 4), std::invalid_argument);
}

TEST_CASE("corpus bleu matches an independent reference implementation") {
  const std::vector<Tokens> hyps{words("the cat sat on the mat today"), words("a quick brown fox jumps over it"),
                                 words("hello world again and again")};
  const std::vector<std::vector<Tokens>> refs{
      {words("the cat is sitting on the mat today"), words("a cat sat on the mat")},
      {words("the quick brown fox jumps over the lazy dog")},
      {words("hello world and again"), words("hello again world")}};
  CHECK(std::abs(bleu(hyps, refs, 2) - 79.47194142390262) < 1e-6);
  CHECK(std::abs(bleu(hyps, refs, 4) - 64.2152361919967) < 1e-6);
  CHECK(std::abs(sentence_bleu(hyps[2], refs[2], 4) - 16.068568378893033) < 1e-6);

  // Counts are aggregated before the ratio, so corpus order does not matter.
  const std::vector<Tokens> hyps_rev{hyps[2], hyps[0], hyps[1]};
  const std::vector<std::vector<Tokens>> refs_rev{refs[2], refs[0], refs[1]};
  CHECK(std::abs(bleu(hyps_rev, refs_rev, 4) - bleu(hyps, refs, 4)) < 1e-12);
}

TEST_CASE("rouge-l") {
  CHECK(rouge_l(words("a b c"), words("a b c")) == doctest::Approx(100.0));
  CHECK(rouge_l(words("a b"), words("c d")) == 0.0);
  CHECK(rouge_l({}, {}) == 0.0);
  // LCS 3, P = 3/4, R = 1.
  const double p = 0.75, r = 1.0;
  CHECK(std::abs(rouge_l(words("a b c d"), words("a c d")) - 100.0 * 2 * p * r / (p + r)) < 1e-12);
}

TEST_CASE("exact match and tokenization") {
  CHECK(exact_match({"ab", "cd", "x"}, {"ab", "cx", "x"}) == doctest::Approx(200.0 / 3.0));
  CHECK_THROWS_AS(exact_match({"a"}, {}), std::invalid_argument);
  CHECK(tokenize_for_metric("\xe4\xbd\xa0 \xe5\xa5\xbd!", MetricTokenizer::kCharacters) ==
        Tokens{"\xe4\xbd\xa0", "\xe5\xa5\xbd", "!"});
  CHECK(score_corpus(Metric::kExactMatch, {"a"}, {"a"}, MetricTokenizer::kWhitespace) == 100.0);
  CHECK(score_corpus(Metric::kRougeL, {"a b c d"}, {"a c d"}, MetricTokenizer::kWhitespace) ==
        doctest::Approx(600.0 / 7.0));
}

TEST_CASE("wider beams do not score below narrower ones on sampled models") {
  const auto registry = SkillRegistry::defaults();
  const auto active = SkillSet::all(registry);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Model model(skillnet::testing::tiny_decoder_config(9, seed));
    const TokenSeq src{5, 6, static_cast<int>(seed % 9), 7};
    BeamConfig cfg{.beam_size = 1, .max_target_length = 6};
    const double greedy = greedy_decode(model, src, active, cfg).score();
    double previous = greedy;
    for (std::size_t width : {2, 4, 8}) {
      cfg.beam_size = width;
      const double score = beam_search(model, src, active, cfg).score();
      CHECK(score >= greedy - 1e-12);
      CHECK(score >= previous - 1e-12);
      previous = score;
    }
  }
}
