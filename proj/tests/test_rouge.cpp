#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <string>

#include "titlecut/rng.hpp"
#include "titlecut/rouge.hpp"

using namespace titlecut;

namespace {

TokenSeq toks(std::initializer_list<const char*> list) {
  TokenSeq out;
  for (const char* s : list) out.emplace_back(s);
  return out;
}

void require_score(const RougeScore& s, double p, double r, double f) {
  REQUIRE(s.precision == Catch::Approx(p).margin(1e-12));
  REQUIRE(s.recall == Catch::Approx(r).margin(1e-12));
  REQUIRE(s.f1 == Catch::Approx(f).margin(1e-12));
}

// Plain memoized recursion, independent of the DP table in lcs_length.
std::size_t lcs_rec(const TokenSeq& a, const TokenSeq& b, std::size_t i,
                    std::size_t j, std::map<std::pair<std::size_t, std::size_t>,
                                            std::size_t>& memo) {
  if (i == a.size() || j == b.size()) return 0;
  auto key = std::make_pair(i, j);
  auto it = memo.find(key);
  if (it != memo.end()) return it->second;
  std::size_t best;
  if (a[i] == b[j])
    best = 1 + lcs_rec(a, b, i + 1, j + 1, memo);
  else
    best = std::max(lcs_rec(a, b, i + 1, j, memo), lcs_rec(a, b, i, j + 1, memo));
  memo[key] = best;
  return best;
}

std::size_t lcs_oracle(const TokenSeq& a, const TokenSeq& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  return lcs_rec(a, b, 0, 0, memo);
}

}  // namespace

TEST_CASE("hand-computed rouge fixtures", "[rouge][fixtures]") {
  SECTION("1: identical sequences score 1 everywhere") {
    TokenSeq x = toks({"a", "b", "c"});
    require_score(rouge_n(x, x, 1), 1, 1, 1);
    require_score(rouge_n(x, x, 2), 1, 1, 1);
    require_score(rouge_l(x, x), 1, 1, 1);
  }
  SECTION("2: disjoint token sets score 0 everywhere") {
    TokenSeq c = toks({"a", "b"}), r = toks({"c", "d"});
    require_score(rouge_n(c, r, 1), 0, 0, 0);
    require_score(rouge_n(c, r, 2), 0, 0, 0);
    require_score(rouge_l(c, r), 0, 0, 0);
  }
  SECTION("3: two of three unigrams and one of two bigrams shared") {
    TokenSeq c = toks({"a", "b", "c"}), r = toks({"a", "b", "d"});
    require_score(rouge_n(c, r, 1), 2.0 / 3, 2.0 / 3, 2.0 / 3);
    require_score(rouge_n(c, r, 2), 0.5, 0.5, 0.5);
    require_score(rouge_l(c, r), 2.0 / 3, 2.0 / 3, 2.0 / 3);
  }
  SECTION("4: subsequence candidate (hand DP table)") {
    TokenSeq c = toks({"a", "c"}), r = toks({"a", "b", "c"});
    require_score(rouge_l(c, r), 1.0, 2.0 / 3, 0.8);
  }
  SECTION("5: empty candidate scores 0 without crashing") {
    TokenSeq c, r = toks({"a", "b"});
    require_score(rouge_n(c, r, 1), 0, 0, 0);
    require_score(rouge_l(c, r), 0, 0, 0);
  }
  SECTION("6: both empty") {
    TokenSeq e;
    require_score(rouge_n(e, e, 1), 0, 0, 0);
    require_score(rouge_l(e, e), 0, 0, 0);
  }
  SECTION("7: repeated tokens are clipped") {
    TokenSeq c = toks({"a", "a", "a"}), r = toks({"a", "a"});
    require_score(rouge_n(c, r, 1), 2.0 / 3, 1.0, 0.8);
    require_score(rouge_n(c, r, 2), 0.5, 1.0, 2.0 / 3);
  }
  SECTION("8: single identical token has no bigrams") {
    TokenSeq x = toks({"x"});
    require_score(rouge_n(x, x, 1), 1, 1, 1);
    require_score(rouge_n(x, x, 2), 0, 0, 0);
    require_score(rouge_l(x, x), 1, 1, 1);
  }
  SECTION("9: candidate strictly covers the reference") {
    TokenSeq c = toks({"a", "b", "c", "d"}), r = toks({"b", "c"});
    require_score(rouge_n(c, r, 1), 0.5, 1.0, 2.0 / 3);
    require_score(rouge_n(c, r, 2), 1.0 / 3, 1.0, 0.5);
    require_score(rouge_l(c, r), 0.5, 1.0, 2.0 / 3);
  }
  SECTION("10: reordering keeps unigrams, loses bigrams and order") {
    TokenSeq c = toks({"b", "a"}), r = toks({"a", "b"});
    require_score(rouge_n(c, r, 1), 1, 1, 1);
    require_score(rouge_n(c, r, 2), 0, 0, 0);
    require_score(rouge_l(c, r), 0.5, 0.5, 0.5);
  }
  SECTION("11: a Latin word counts as one token") {
    TokenSeq c = rouge_tokenize(std::string("DZZIT\xE9\xA3\x8E"));          // DZZIT + one CJK char
    TokenSeq r = rouge_tokenize(std::string("DZZIT\xE9\xA3\x8E\xE8\xA1\xA3"));  // DZZIT + two CJK chars
    REQUIRE(c.size() == 2);
    REQUIRE(r.size() == 3);
    require_score(rouge_n(c, r, 1), 1.0, 2.0 / 3, 0.8);
  }
  SECTION("12: interleaved noise keeps the full subsequence") {
    TokenSeq c = toks({"a", "x", "b", "y", "c"}), r = toks({"a", "b", "c"});
    require_score(rouge_l(c, r), 0.6, 1.0, 0.75);
    require_score(rouge_n(c, r, 1), 0.6, 1.0, 0.75);
  }
  SECTION("13: corpus macro average") {
    std::vector<std::pair<TokenSeq, TokenSeq>> one{{toks({"a"}), toks({"a"})}};
    RougeReport single = corpus_rouge(one);
    require_score(single.r1, 1, 1, 1);

    std::vector<std::pair<TokenSeq, TokenSeq>> pairs{
        {toks({"a"}), toks({"a"})}, {toks({"a"}), toks({"b"})}};
    RougeReport rep = corpus_rouge(pairs);
    require_score(rep.r1, 0.5, 0.5, 0.5);
    require_score(rep.rl, 0.5, 0.5, 0.5);
  }
  SECTION("14: empty pair list is rejected") {
    std::vector<std::pair<TokenSeq, TokenSeq>> none;
    REQUIRE_THROWS_AS(corpus_rouge(none), ContractError);
  }
}

TEST_CASE("rouge properties", "[rouge]") {
  Rng rng(77);
  auto random_seq = [&](std::size_t max_len) {
    TokenSeq s;
    std::size_t len = rng.index(max_len + 1);
    for (std::size_t i = 0; i < len; ++i)
      s.push_back(std::string(1, static_cast<char>('a' + rng.index(4))));
    return s;
  };

  SECTION("self-similarity f1 is exactly 1 for non-empty sequences") {
    for (int rep = 0; rep < 50; ++rep) {
      TokenSeq x = random_seq(8);
      if (x.empty()) x.push_back("a");
      REQUIRE(rouge_n(x, x, 1).f1 == 1.0);
      REQUIRE(rouge_l(x, x).f1 == 1.0);
    }
  }

  SECTION("lcs DP equals a memoized recursive oracle") {
    for (int rep = 0; rep < 200; ++rep) {
      TokenSeq a = random_seq(9), b = random_seq(9);
      std::size_t dp = lcs_length(a, b);
      REQUIRE(dp == lcs_oracle(a, b));
      REQUIRE(dp <= std::min(a.size(), b.size()));
    }
  }

  SECTION("appending a reference token never lowers rouge-1 recall") {
    for (int rep = 0; rep < 100; ++rep) {
      TokenSeq c = random_seq(7), r = random_seq(7);
      if (r.empty()) r.push_back("b");
      double before = rouge_n(c, r, 1).recall;
      TokenSeq c2 = c;
      c2.push_back(r[rng.index(r.size())]);
      REQUIRE(rouge_n(c2, r, 1).recall >= before - 1e-15);
    }
  }
}

TEST_CASE("tokenizer", "[rouge]") {
  SECTION("whitespace separates, CJK splits per character") {
    TokenSeq t = rouge_tokenize(std::string("ab 12\xE4\xB8\x80\xE4\xB8\x81 c"));
    REQUIRE(t == TokenSeq{"ab", "12", "\xE4\xB8\x80", "\xE4\xB8\x81", "c"});
  }
  SECTION("empty input gives no tokens") {
    REQUIRE(rouge_tokenize(std::string("")).empty());
    REQUIRE(rouge_tokenize(std::string("  ")).empty());
  }
}
