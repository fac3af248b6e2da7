#include "skillnet/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace skillnet {

namespace {

void validate(const BeamConfig& config) {
  if (config.max_target_length == 0) throw std::invalid_argument("decoding: max_target_length must be positive");
  if (config.beam_size == 0) throw std::invalid_argument("decoding: beam_size must be >= 1");
}

EncoderOutput replicate(const EncoderOutput& encoded, std::size_t copies) {
  if (copies == 1) return encoded;
  const auto rows = encoded.states.data();
  std::vector<double> data;
  data.reserve(rows.size() * copies);
  std::vector<std::uint8_t> valid;
  for (std::size_t c = 0; c < copies; ++c) {
    data.insert(data.end(), rows.begin(), rows.end());
    valid.insert(valid.end(), encoded.valid.begin(), encoded.valid.end());
  }
  Shape shape{encoded.states.dim(0) * copies, encoded.states.dim(1)};
  return EncoderOutput{Tensor::from(std::move(shape), std::move(data)), copies, encoded.length, std::move(valid)};
}

std::vector<double> log_softmax_row(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - peak);
  const double log_z = peak + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits[i] - log_z;
  return out;
}

TokenSeq with_bos(const Hypothesis& h, int bos) {
  TokenSeq prefix{bos};
  prefix.insert(prefix.end(), h.tokens.begin(), h.tokens.end());
  return prefix;
}

}  // namespace

double Hypothesis::score() const {
  return tokens.empty() ? logprob : logprob / static_cast<double>(tokens.size());
}

bool better_hypothesis(const Hypothesis& a, const Hypothesis& b) {
  const double sa = a.score(), sb = b.score();
  if (sa != sb) return sa > sb;
  return a.tokens < b.tokens;
}

std::vector<std::vector<double>> next_token_logprobs(const Model& model, const EncoderOutput& encoded,
                                                     const std::vector<TokenSeq>& prefixes, const SkillSet& active) {
  // Equal-length prefixes keep every row's last position at the same index.
  const std::size_t length = prefixes.front().size();
  for (const auto& p : prefixes) {
    if (p.size() != length) throw std::invalid_argument("next_token_logprobs: prefixes must share a length");
  }
  const Tensor logits = model.decode(replicate(encoded, prefixes.size()), prefixes, active);
  const std::size_t vocab = model.config().vocab_size;
  std::vector<std::vector<double>> out;
  for (std::size_t b = 0; b < prefixes.size(); ++b) {
    const std::size_t row = b * length + length - 1;
    out.push_back(log_softmax_row(logits.data().subspan(row * vocab, vocab)));
  }
  return out;
}

Hypothesis greedy_decode(const Model& model, const TokenSeq& source, const SkillSet& active, const BeamConfig& config) {
  validate(config);
  const auto encoded = model.encode(source, active);
  const auto vocab = static_cast<int>(model.config().vocab_size);
  Hypothesis h;
  while (!h.finished) {
    const auto lp = next_token_logprobs(model, encoded, {with_bos(h, config.bos_id)}, active).front();
    int best = -1;
    for (int v = 0; v < vocab; ++v) {
      if (std::find(config.banned_tokens.begin(), config.banned_tokens.end(), v) != config.banned_tokens.end()) continue;
      if (best < 0 || lp[static_cast<std::size_t>(v)] > lp[static_cast<std::size_t>(best)]) best = v;
    }
    h.tokens.push_back(best);
    h.logprob += lp[static_cast<std::size_t>(best)];
    h.finished = best == config.eos_id || h.tokens.size() >= config.max_target_length;
  }
  return h;
}

Hypothesis beam_search(const Model& model, const TokenSeq& source, const SkillSet& active, const BeamConfig& config) {
  validate(config);
  const auto encoded = model.encode(source, active);
  const auto vocab = static_cast<int>(model.config().vocab_size);
  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<Hypothesis> finished;

  for (std::size_t step = 1; step <= config.max_target_length && !live.empty(); ++step) {
    std::vector<TokenSeq> prefixes;
    for (const auto& h : live) prefixes.push_back(with_bos(h, config.bos_id));
    const auto lp = next_token_logprobs(model, encoded, prefixes, active);

    std::vector<Hypothesis> candidates;
    candidates.reserve(live.size() * static_cast<std::size_t>(vocab));
    for (std::size_t i = 0; i < live.size(); ++i) {
      for (int v = 0; v < vocab; ++v) {
        if (std::find(config.banned_tokens.begin(), config.banned_tokens.end(), v) != config.banned_tokens.end()) {
          continue;
        }
        Hypothesis c = live[i];
        c.tokens.push_back(v);
        c.logprob += lp[i][static_cast<std::size_t>(v)];
        c.finished = v == config.eos_id || step == config.max_target_length;
        candidates.push_back(std::move(c));
      }
    }
    // Same length within a step, so raw log-prob order equals normalized order.
    const std::size_t keep = std::min(config.beam_size, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [](const Hypothesis& a, const Hypothesis& b) {
                        if (a.logprob != b.logprob) return a.logprob > b.logprob;
                        return a.tokens < b.tokens;
                      });
    live.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      if (candidates[i].finished) finished.push_back(std::move(candidates[i]));
      else live.push_back(std::move(candidates[i]));
    }
  }
  if (finished.empty()) throw std::logic_error("beam_search: no hypothesis finished");
  return *std::min_element(finished.begin(), finished.end(),
                           [](const Hypothesis& a, const Hypothesis& b) { return better_hypothesis(a, b); });
}

}  // namespace skillnet
