#include "csa/rouge.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <sstream>

#include "csa/error.hpp"

namespace csa {
namespace {

RougeScore degenerate_score() {
  RougeScore s;
  s.degenerate = true;
  return s;
}

RougeScore from_counts(double overlap, double candidate_units, double reference_units) {
  RougeScore s;
  s.precision = overlap / candidate_units;
  s.recall = overlap / reference_units;
  s.f1 = f1_of(s.precision, s.recall);
  return s;
}

template <typename T>
int lcs_length_impl(const std::vector<T>& a, const std::vector<T>& b) {
  const std::size_t m = a.size(), n = b.size();
  if (m == 0 || n == 0) return 0;
  std::vector<int> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

}  // namespace

double f1_of(double precision, double recall) {
  const double denom = precision + recall;
  if (denom == 0.0) return 0.0;
  return 2.0 * precision * recall / denom;
}

RougeScore rouge_n(const Tokens& candidate, const Tokens& reference, int n) {
  if (n < 1) throw ContractError("rouge_n: order must be >= 1, got " + std::to_string(n));
  const std::size_t order = static_cast<std::size_t>(n);
  if (candidate.size() < order || reference.size() < order) return degenerate_score();

  std::map<std::vector<std::string>, int> ref_counts;
  for (std::size_t i = 0; i + order <= reference.size(); ++i)
    ++ref_counts[Tokens(reference.begin() + static_cast<long>(i),
                        reference.begin() + static_cast<long>(i + order))];

  int overlap = 0;
  for (std::size_t i = 0; i + order <= candidate.size(); ++i) {
    Tokens gram(candidate.begin() + static_cast<long>(i),
                candidate.begin() + static_cast<long>(i + order));
    auto it = ref_counts.find(gram);
    if (it != ref_counts.end() && it->second > 0) {
      ++overlap;
      --it->second;
    }
  }
  const double cand_units = static_cast<double>(candidate.size() - order + 1);
  const double ref_units = static_cast<double>(reference.size() - order + 1);
  return from_counts(overlap, cand_units, ref_units);
}

RougeScore rouge_l(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() || reference.empty()) return degenerate_score();
  const int lcs = lcs_length(candidate, reference);
  return from_counts(lcs, static_cast<double>(candidate.size()),
                     static_cast<double>(reference.size()));
}

int lcs_length(const Tokens& a, const Tokens& b) { return lcs_length_impl(a, b); }
int lcs_length(const std::vector<int>& a, const std::vector<int>& b) {
  return lcs_length_impl(a, b);
}

RougeScore corpus_rouge(const std::vector<RougePair>& pairs,
                        const std::function<RougeScore(const Tokens&, const Tokens&)>& metric) {
  if (pairs.empty()) throw ContractError("corpus_rouge: empty corpus");
  RougeScore mean;
  for (const RougePair& pair : pairs) {
    RougeScore s = metric(pair.candidate, pair.reference);
    mean.precision += s.precision;
    mean.recall += s.recall;
    mean.f1 += s.f1;
  }
  const double n = static_cast<double>(pairs.size());
  mean.precision /= n;
  mean.recall /= n;
  mean.f1 /= n;
  return mean;
}

RougeScore corpus_rouge_n(const std::vector<RougePair>& pairs, int n) {
  return corpus_rouge(pairs, [n](const Tokens& c, const Tokens& r) { return rouge_n(c, r, n); });
}

RougeScore corpus_rouge_l(const std::vector<RougePair>& pairs) {
  return corpus_rouge(pairs, [](const Tokens& c, const Tokens& r) { return rouge_l(c, r); });
}

Tokens score_tokenize(const std::string& text) {
  Tokens out;
  std::istringstream iss(text);
  std::string raw;
  while (iss >> raw) {
    std::string cleaned;
    for (char ch : raw) {
      unsigned char u = static_cast<unsigned char>(ch);
      if (std::ispunct(u)) continue;
      cleaned.push_back(static_cast<char>(std::tolower(u)));
    }
    if (!cleaned.empty()) out.push_back(std::move(cleaned));
  }
  return out;
}

std::string rouge_report_line(const std::string& name, const RougeScore& score) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%s P=%.4f R=%.4f F1=%.4f", name.c_str(), score.precision,
                score.recall, score.f1);
  return std::string(buf);
}

}  // namespace csa
