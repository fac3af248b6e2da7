#pragma once

#include <cstddef>
#include <vector>

#include "skillnet/data.hpp"
#include "skillnet/transformer.hpp"

namespace skillnet {

struct BeamConfig {
  std::size_t beam_size = 4;
  // Maximum number of generated tokens, EOS included.
  std::size_t max_target_length = 64;
  int bos_id = Vocabulary::kBos;
  int eos_id = Vocabulary::kEos;
  // Never generated.
  std::vector<int> banned_tokens{Vocabulary::kPad, Vocabulary::kBos};
};

struct Hypothesis {
  TokenSeq tokens;  // generated tokens, without BOS
  double logprob = 0.0;
  bool finished = false;

  // Cumulative log-probability divided by the number of generated tokens.
  double score() const;
};

// Lower score loses; equal scores fall back to lexicographically smaller tokens winning.
bool better_hypothesis(const Hypothesis& a, const Hypothesis& b);

// Log-probabilities of the next token for each BOS-led prefix, sharing one encoding.
std::vector<std::vector<double>> next_token_logprobs(const Model& model, const EncoderOutput& encoded,
                                                     const std::vector<TokenSeq>& prefixes, const SkillSet& active);

Hypothesis greedy_decode(const Model& model, const TokenSeq& source, const SkillSet& active, const BeamConfig& config);

// Keeps the beam_size best extensions per step (finished ones included), retires
// hypotheses at EOS or the length limit and returns the best retired one.
Hypothesis beam_search(const Model& model, const TokenSeq& source, const SkillSet& active, const BeamConfig& config);

}  // namespace skillnet
