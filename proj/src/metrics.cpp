#include "skillnet/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>
#include <stdexcept>

namespace skillnet {

namespace {

using NgramCounts = std::map<Tokens, std::size_t>;

NgramCounts ngrams(const Tokens& tokens, std::size_t n) {
  NgramCounts counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

struct NgramStats {
  std::vector<double> matched;
  std::vector<double> total;
  double candidate_length = 0.0;
  double reference_length = 0.0;
};

void accumulate(NgramStats& stats, const Tokens& candidate, const std::vector<Tokens>& references, int max_n) {
  if (references.empty()) throw std::invalid_argument("bleu: a candidate has no references");
  for (int n = 1; n <= max_n; ++n) {
    const auto cand = ngrams(candidate, static_cast<std::size_t>(n));
    NgramCounts best;
    for (const auto& ref : references) {
      for (const auto& [gram, count] : ngrams(ref, static_cast<std::size_t>(n))) {
        best[gram] = std::max(best[gram], count);
      }
    }
    for (const auto& [gram, count] : cand) {
      const auto it = best.find(gram);
      stats.matched[n - 1] += static_cast<double>(std::min(count, it == best.end() ? 0 : it->second));
      stats.total[n - 1] += static_cast<double>(count);
    }
  }
  const auto c = static_cast<long>(candidate.size());
  long closest = static_cast<long>(references.front().size());
  for (const auto& ref : references) {
    const auto r = static_cast<long>(ref.size());
    if (std::labs(r - c) < std::labs(closest - c) || (std::labs(r - c) == std::labs(closest - c) && r < closest)) {
      closest = r;
    }
  }
  stats.candidate_length += static_cast<double>(c);
  stats.reference_length += static_cast<double>(closest);
}

double brevity_penalty(double c, double r) {
  if (c > r) return 1.0;
  if (c == 0.0) return 0.0;
  return std::exp(1.0 - r / c);
}

void check_order(int max_n) {
  if (max_n < 1) throw std::invalid_argument("bleu: n must be >= 1");
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

Tokens tokenize_for_metric(std::string_view text, MetricTokenizer tokenizer) {
  Tokens out;
  if (tokenizer == MetricTokenizer::kWhitespace) {
    std::istringstream in{std::string(text)};
    std::string word;
    while (in >> word) out.push_back(word);
    return out;
  }
  for (std::size_t i = 0; i < text.size();) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    len = std::min(len, text.size() - i);
    if (!(len == 1 && std::isspace(lead))) out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

double bleu(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references, int max_n) {
  check_order(max_n);
  if (candidates.size() != references.size()) throw std::invalid_argument("bleu: candidate and reference counts differ");
  if (candidates.empty()) throw std::invalid_argument("bleu: empty corpus");
  NgramStats stats{std::vector<double>(max_n, 0.0), std::vector<double>(max_n, 0.0)};
  for (std::size_t i = 0; i < candidates.size(); ++i) accumulate(stats, candidates[i], references[i], max_n);
  double log_sum = 0.0;
  for (int n = 0; n < max_n; ++n) {
    if (stats.matched[n] == 0.0) return 0.0;
    log_sum += std::log(stats.matched[n] / stats.total[n]);
  }
  return 100.0 * brevity_penalty(stats.candidate_length, stats.reference_length) * std::exp(log_sum / max_n);
}

double sentence_bleu(const Tokens& candidate, const std::vector<Tokens>& references, int max_n, double epsilon) {
  check_order(max_n);
  NgramStats stats{std::vector<double>(max_n, 0.0), std::vector<double>(max_n, 0.0)};
  accumulate(stats, candidate, references, max_n);
  double log_sum = 0.0;
  for (int n = 0; n < max_n; ++n) {
    if (stats.total[n] == 0.0) return 0.0;
    const double matched = stats.matched[n] == 0.0 ? epsilon : stats.matched[n];
    log_sum += std::log(matched / stats.total[n]);
  }
  return 100.0 * brevity_penalty(stats.candidate_length, stats.reference_length) * std::exp(log_sum / max_n);
}

double rouge_l(const Tokens& candidate, const Tokens& reference, double beta) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(candidate, reference));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  const double b2 = beta * beta;
  return 100.0 * (1.0 + b2) * p * r / (r + b2 * p);
}

double corpus_rouge_l(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references, double beta) {
  if (candidates.size() != references.size()) {
    throw std::invalid_argument("rouge_l: candidate and reference counts differ");
  }
  if (candidates.empty()) throw std::invalid_argument("rouge_l: empty corpus");
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) total += rouge_l(candidates[i], references[i], beta);
  return total / static_cast<double>(candidates.size());
}

double exact_match(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
  if (candidates.size() != references.size()) {
    throw std::invalid_argument("exact_match: candidate and reference counts differ");
  }
  if (candidates.empty()) throw std::invalid_argument("exact_match: empty corpus");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) hits += candidates[i] == references[i] ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(candidates.size());
}

double score_corpus(Metric metric, const std::vector<std::string>& candidates,
                    const std::vector<std::string>& references, MetricTokenizer tokenizer) {
  if (metric == Metric::kExactMatch) return exact_match(candidates, references);
  std::vector<Tokens> cand, refs;
  for (const auto& c : candidates) cand.push_back(tokenize_for_metric(c, tokenizer));
  for (const auto& r : references) refs.push_back(tokenize_for_metric(r, tokenizer));
  if (metric == Metric::kRougeL) return corpus_rouge_l(cand, refs);
  std::vector<std::vector<Tokens>> ref_lists;
  for (auto& r : refs) ref_lists.push_back({std::move(r)});
  return bleu(cand, ref_lists, metric == Metric::kBleu2 ? 2 : 4);
}

}  // namespace skillnet
