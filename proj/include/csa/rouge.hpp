#pragma once

#include <functional>
#include <string>
#include <vector>

namespace csa {

using Tokens = std::vector<std::string>;

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when the pair could not be scored (input shorter than the n-gram
  // order, or empty); the score fields are all zero in that case.
  bool degenerate = false;
};

// F1 = 2PR/(P+R), defined as 0 when P+R = 0.
double f1_of(double precision, double recall);

// Clipped n-gram overlap: precision over candidate n-grams, recall over
// reference n-grams.
RougeScore rouge_n(const Tokens& candidate, const Tokens& reference, int n);

// Longest common subsequence: P = LCS/|candidate|, R = LCS/|reference|.
RougeScore rouge_l(const Tokens& candidate, const Tokens& reference);

int lcs_length(const Tokens& a, const Tokens& b);
int lcs_length(const std::vector<int>& a, const std::vector<int>& b);

struct RougePair {
  Tokens candidate;
  Tokens reference;
};

// Unweighted mean of per-instance precision, recall, and F1.
RougeScore corpus_rouge(const std::vector<RougePair>& pairs,
                        const std::function<RougeScore(const Tokens&, const Tokens&)>& metric);
RougeScore corpus_rouge_n(const std::vector<RougePair>& pairs, int n);
RougeScore corpus_rouge_l(const std::vector<RougePair>& pairs);

// Scoring normalization: whitespace split, lowercase, punctuation stripped
// from each token; tokens that become empty are dropped. No stemming.
Tokens score_tokenize(const std::string& text);

// "name P=. R=. F1=." with four decimals.
std::string rouge_report_line(const std::string& name, const RougeScore& score);

}  // namespace csa
