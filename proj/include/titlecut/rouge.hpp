#pragma once

#include <algorithm>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "titlecut/error.hpp"
#include "titlecut/utf8.hpp"

namespace titlecut {

struct RougeScore {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

inline double f_measure(double p, double r) {
  return (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
}

using TokenSeq = std::vector<std::string>;

// Character tokenization matching the corpus convention: every non-Latin
// character is one token, a maximal run of Latin letters/digits is one token
// (an English word counts as a single character), whitespace only separates.
inline TokenSeq rouge_tokenize(const std::u32string& text) {
  TokenSeq out;
  std::string run;
  auto flush = [&] {
    if (!run.empty()) {
      out.push_back(run);
      run.clear();
    }
  };
  for (char32_t c : text) {
    bool latin = (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') ||
                 (c >= U'0' && c <= U'9');
    if (latin) {
      run += static_cast<char>(c);
      continue;
    }
    flush();
    if (c == U' ' || c == U'\t') continue;
    out.push_back(utf8_encode(c));
  }
  flush();
  return out;
}

inline TokenSeq rouge_tokenize(const std::string& utf8_text) {
  return rouge_tokenize(utf8_decode(utf8_text));
}

namespace detail {
inline std::unordered_map<std::string, std::size_t> ngram_counts(
    const TokenSeq& tokens, std::size_t n) {
  std::unordered_map<std::string, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t j = 0; j < n; ++j) {
      if (j) key += '\x1f';
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}
}  // namespace detail

// Clipped n-gram overlap. recall = overlap / reference n-grams,
// precision = overlap / candidate n-grams; empty denominators give 0.
inline RougeScore rouge_n(const TokenSeq& candidate, const TokenSeq& reference,
                          std::size_t n) {
  if (n < 1) throw ContractError("rouge_n: n must be >= 1");
  auto cand = detail::ngram_counts(candidate, n);
  auto ref = detail::ngram_counts(reference, n);
  std::size_t cand_total = candidate.size() >= n ? candidate.size() - n + 1 : 0;
  std::size_t ref_total = reference.size() >= n ? reference.size() - n + 1 : 0;
  std::size_t overlap = 0;
  for (const auto& [key, c] : cand) {
    auto it = ref.find(key);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  RougeScore s;
  s.precision = cand_total ? static_cast<double>(overlap) / cand_total : 0.0;
  s.recall = ref_total ? static_cast<double>(overlap) / ref_total : 0.0;
  s.f1 = f_measure(s.precision, s.recall);
  return s;
}

// Longest common subsequence length by dynamic programming.
inline std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  const std::size_t m = a.size(), n = b.size();
  std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      if (a[i - 1] == b[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

inline RougeScore rouge_l(const TokenSeq& candidate, const TokenSeq& reference) {
  if (candidate.empty() || reference.empty()) return {};
  const double l = static_cast<double>(lcs_length(candidate, reference));
  RougeScore s;
  s.precision = l / static_cast<double>(candidate.size());
  s.recall = l / static_cast<double>(reference.size());
  s.f1 = f_measure(s.precision, s.recall);
  return s;
}

struct RougeReport {
  RougeScore r1, r2, rl;
};

// Macro average: unweighted per-pair mean of each field.
inline RougeReport corpus_rouge(
    const std::vector<std::pair<TokenSeq, TokenSeq>>& pairs) {
  if (pairs.empty()) throw ContractError("corpus_rouge: empty pair list");
  RougeReport rep;
  auto acc = [](RougeScore& into, const RougeScore& s) {
    into.precision += s.precision;
    into.recall += s.recall;
    into.f1 += s.f1;
  };
  for (const auto& [cand, ref] : pairs) {
    acc(rep.r1, rouge_n(cand, ref, 1));
    acc(rep.r2, rouge_n(cand, ref, 2));
    acc(rep.rl, rouge_l(cand, ref));
  }
  const double n = static_cast<double>(pairs.size());
  for (RougeScore* s : {&rep.r1, &rep.r2, &rep.rl}) {
    s->precision /= n;
    s->recall /= n;
    s->f1 /= n;
  }
  return rep;
}

}  // namespace titlecut
