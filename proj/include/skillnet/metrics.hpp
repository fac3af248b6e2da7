#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "skillnet/task.hpp"

namespace skillnet {

using Tokens = std::vector<std::string>;

enum class MetricTokenizer { kWhitespace, kCharacters };

// kCharacters splits into UTF-8 code points and drops whitespace.
Tokens tokenize_for_metric(std::string_view text, MetricTokenizer tokenizer);

// Corpus BLEU in [0, 100] with uniform n-gram weights, clipped counts over all
// references and the closest reference length for the brevity penalty.
double bleu(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references, int max_n);

// Sentence BLEU; zero n-gram matches are floored at epsilon.
double sentence_bleu(const Tokens& candidate, const std::vector<Tokens>& references, int max_n,
                     double epsilon = 0.1);

// LCS F-measure in [0, 100].
double rouge_l(const Tokens& candidate, const Tokens& reference, double beta = 1.0);
double corpus_rouge_l(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references,
                      double beta = 1.0);

double exact_match(const std::vector<std::string>& candidates, const std::vector<std::string>& references);

double score_corpus(Metric metric, const std::vector<std::string>& candidates,
                    const std::vector<std::string>& references, MetricTokenizer tokenizer);

}  // namespace skillnet
