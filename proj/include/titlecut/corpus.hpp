#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "titlecut/error.hpp"
#include "titlecut/rng.hpp"
#include "titlecut/utf8.hpp"

namespace titlecut {

enum class TermKind { Product, Brand, Modifier, Other };

inline const char* kind_name(TermKind k) {
  switch (k) {
    case TermKind::Product: return "Product";
    case TermKind::Brand: return "Brand";
    case TermKind::Modifier: return "Modifier";
    case TermKind::Other: return "Other";
  }
  return "Other";
}

inline TermKind kind_from_name(const std::string& s) {
  if (s == "Product") return TermKind::Product;
  if (s == "Brand") return TermKind::Brand;
  if (s == "Modifier") return TermKind::Modifier;
  if (s == "Other") return TermKind::Other;
  throw ParseError("unknown term kind '" + s + "'");
}

// Run-length term annotation over the source characters.
struct TermTag {
  TermKind kind;
  std::size_t len;
};

// One training record: original title S, handcrafted short title T, and a
// transaction-leading search query Q, all as character sequences.
struct Triplet {
  std::u32string source;
  std::u32string short_title;
  std::u32string query;
  std::vector<TermTag> tags;  // empty when the record is untagged

  bool has_tags() const { return !tags.empty(); }

  // Source split into (text, kind) terms according to the tags.
  std::vector<std::pair<std::u32string, TermKind>> terms() const {
    std::vector<std::pair<std::u32string, TermKind>> out;
    std::size_t pos = 0;
    for (const TermTag& t : tags) {
      out.emplace_back(source.substr(pos, t.len), t.kind);
      pos += t.len;
    }
    return out;
  }
};

constexpr std::size_t kMinSourceChars = 10;

inline bool satisfies_extractive_premise(const Triplet& t) {
  std::unordered_set<char32_t> src(t.source.begin(), t.source.end());
  for (char32_t c : t.short_title)
    if (!src.count(c)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// vocabulary
// ---------------------------------------------------------------------------

// Character vocabulary with dense ids. Ids 0..3 are reserved.
class Vocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kBos = 2;
  static constexpr std::size_t kEos = 3;
  static constexpr std::size_t kReserved = 4;

  Vocab() : id_to_char_(kReserved, 0) {}

  std::size_t size() const { return id_to_char_.size(); }

  std::size_t add(char32_t c) {
    auto it = char_to_id_.find(c);
    if (it != char_to_id_.end()) return it->second;
    std::size_t id = id_to_char_.size();
    id_to_char_.push_back(c);
    char_to_id_.emplace(c, id);
    return id;
  }

  bool has(char32_t c) const { return char_to_id_.count(c) != 0; }

  std::size_t id_of(char32_t c) const {
    auto it = char_to_id_.find(c);
    if (it == char_to_id_.end())
      throw VocabError("character '" + utf8_encode(c) + "' not in vocabulary");
    return it->second;
  }

  char32_t char_of(std::size_t id) const {
    if (id < kReserved || id >= id_to_char_.size())
      throw VocabError("id " + std::to_string(id) + " is reserved or out of range");
    return id_to_char_[id];
  }

  // Strict encoding: every character must be known.
  std::vector<std::size_t> encode(const std::u32string& s) const {
    std::vector<std::size_t> out;
    out.reserve(s.size());
    for (char32_t c : s) out.push_back(id_of(c));
    return out;
  }

  // Query-side encoding: unknown characters map to UNK.
  std::vector<std::size_t> encode_lenient(const std::u32string& s) const {
    std::vector<std::size_t> out;
    out.reserve(s.size());
    for (char32_t c : s) {
      auto it = char_to_id_.find(c);
      out.push_back(it == char_to_id_.end() ? kUnk : it->second);
    }
    return out;
  }

  std::u32string decode(const std::vector<std::size_t>& ids) const {
    std::u32string out;
    for (std::size_t id : ids) out.push_back(char_of(id));
    return out;
  }

  const std::vector<char32_t>& table() const { return id_to_char_; }

 private:
  std::vector<char32_t> id_to_char_;
  std::unordered_map<char32_t, std::size_t> char_to_id_;
};

// Every character of S and T enters the vocabulary; characters seen only in
// queries need corpus frequency >= min_count, otherwise they fall to UNK.
// Assignment order: frequency descending, then codepoint, so ids are stable.
inline Vocab build_vocab(const std::vector<Triplet>& triplets,
                         std::size_t min_count = 1) {
  if (triplets.empty()) throw ContractError("build_vocab: empty corpus");
  std::map<char32_t, std::size_t> counts;
  std::unordered_set<char32_t> in_st;
  for (const Triplet& t : triplets) {
    for (char32_t c : t.source) {
      ++counts[c];
      in_st.insert(c);
    }
    for (char32_t c : t.short_title) {
      ++counts[c];
      in_st.insert(c);
    }
    for (char32_t c : t.query) ++counts[c];
  }
  std::vector<std::pair<char32_t, std::size_t>> kept;
  for (const auto& [c, n] : counts)
    if (in_st.count(c) || n >= min_count) kept.emplace_back(c, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  for (const auto& [c, n] : kept) v.add(c);
  return v;
}

// ---------------------------------------------------------------------------
// triplet file I/O:  source<TAB>short<TAB>query[<TAB>tags], UTF-8, LF
// tags: space-separated Kind:len runs covering the source exactly
// ---------------------------------------------------------------------------

inline std::string format_tags(const std::vector<TermTag>& tags) {
  std::string out;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (i) out += ' ';
    out += kind_name(tags[i].kind);
    out += ':';
    out += std::to_string(tags[i].len);
  }
  return out;
}

inline std::vector<TermTag> parse_tags(const std::string& field,
                                       std::size_t source_len) {
  std::vector<TermTag> tags;
  std::istringstream in(field);
  std::string tok;
  std::size_t total = 0;
  while (in >> tok) {
    auto colon = tok.find(':');
    if (colon == std::string::npos)
      throw ParseError("tag '" + tok + "' is not Kind:len");
    TermTag t;
    t.kind = kind_from_name(tok.substr(0, colon));
    try {
      t.len = std::stoul(tok.substr(colon + 1));
    } catch (const std::exception&) {
      throw ParseError("tag '" + tok + "' has a bad length");
    }
    if (t.len == 0) throw ParseError("tag '" + tok + "' has zero length");
    total += t.len;
    tags.push_back(t);
  }
  if (total != source_len)
    throw ParseError("tags cover " + std::to_string(total) +
                     " characters but source has " + std::to_string(source_len));
  return tags;
}

inline std::string format_triplet_line(const Triplet& t) {
  std::string line = utf8_encode(t.source) + "\t" + utf8_encode(t.short_title) +
                     "\t" + utf8_encode(t.query);
  if (t.has_tags()) line += "\t" + format_tags(t.tags);
  return line;
}

inline void write_triplets(const std::string& path,
                           const std::vector<Triplet>& triplets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  for (const Triplet& t : triplets) out << format_triplet_line(t) << "\n";
}

inline Triplet parse_triplet_line(const std::string& line, std::size_t lineno) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  if (fields.size() < 3 || fields.size() > 4)
    throw ParseError("line " + std::to_string(lineno) + ": expected 3 or 4 " +
                     "tab-separated fields, got " + std::to_string(fields.size()));
  Triplet t;
  t.source = utf8_decode(fields[0]);
  t.short_title = utf8_decode(fields[1]);
  t.query = utf8_decode(fields[2]);
  if (t.source.size() < kMinSourceChars)
    throw DataError("line " + std::to_string(lineno) + ": source has " +
                    std::to_string(t.source.size()) + " characters, minimum is " +
                    std::to_string(kMinSourceChars));
  if (t.short_title.empty())
    throw DataError("line " + std::to_string(lineno) + ": empty short title");
  if (!satisfies_extractive_premise(t)) {
    for (char32_t c : t.short_title)
      if (t.source.find(c) == std::u32string::npos)
        throw DataError("line " + std::to_string(lineno) + ": short-title character '" +
                        utf8_encode(c) + "' does not occur in the source");
  }
  if (fields.size() == 4 && !fields[3].empty()) {
    try {
      t.tags = parse_tags(fields[3], t.source.size());
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return t;
}

inline std::vector<Triplet> parse_triplets(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::vector<Triplet> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.push_back(parse_triplet_line(line, lineno));
  }
  return out;
}

// ---------------------------------------------------------------------------
// synthetic corpus generator
// ---------------------------------------------------------------------------

// Knobs for the template grammar. Defaults aim the mean lengths at the
// 25.1 / 7.5 / 8.3 character targets.
//
// Salience is a vocabulary property, not a positional one: the first
// n_salient_modifiers entries of the modifier inventory are the ones buyers
// actually search for. Each title carries exactly one of them, at a random
// slot among the front modifiers, and the short title and query both keep
// it. Recognizing salient terms therefore has to be learned from term
// identity, which is where the query channel carries real signal.
struct GeneratorProfile {
  std::size_t n_brands = 12;
  std::size_t n_products = 20;
  std::size_t n_modifiers = 28;
  std::size_t n_salient_modifiers = 12;  // leading slice of the modifier pool
  std::size_t n_fillers = 24;
  std::size_t n_noise_chars = 48;
  double noise_rate = 0.1;              // chance a query carries one noise char
  double decoy_product_prob = 0.35;     // a second, non-core product term
  double salient_mod_in_short_prob = 1.0;
  double brand_in_query_prob = 0.9;
  double salient_mod_in_query_prob = 1.0;
  double target_source_len = 25.1;
  double target_short_len = 7.5;
  double target_query_len = 8.3;
};

namespace detail {

// Disjoint codepoint pools, one per inventory class, so a character's class
// is recoverable from its codepoint alone.
constexpr char32_t kBrandBase = 0x4E00;
constexpr char32_t kProductBase = 0x4F00;
constexpr char32_t kModifierBase = 0x5100;
constexpr char32_t kFillerBase = 0x5300;
constexpr char32_t kNoiseBase = 0x5500;
constexpr std::size_t kPoolSpan = 128;

inline std::u32string draw_term(Rng& rng, char32_t base, std::size_t min_len,
                                std::size_t max_len) {
  std::size_t len = min_len + rng.index(max_len - min_len + 1);
  std::u32string s;
  for (std::size_t i = 0; i < len; ++i)
    s.push_back(base + static_cast<char32_t>(rng.index(kPoolSpan)));
  return s;
}

inline std::vector<std::u32string> draw_inventory(Rng& rng, char32_t base,
                                                  std::size_t count,
                                                  std::size_t min_len,
                                                  std::size_t max_len) {
  std::vector<std::u32string> inv;
  std::unordered_set<std::string> seen;
  while (inv.size() < count) {
    std::u32string t = draw_term(rng, base, min_len, max_len);
    if (seen.insert(utf8_encode(t)).second) inv.push_back(t);
  }
  return inv;
}

struct Inventories {
  std::vector<std::u32string> brands, products, modifiers, fillers;
  std::vector<char32_t> noise;
};

inline Inventories build_inventories(Rng& rng, const GeneratorProfile& p) {
  Inventories inv;
  inv.brands = draw_inventory(rng, kBrandBase, p.n_brands, 2, 3);
  inv.products = draw_inventory(rng, kProductBase, p.n_products, 2, 4);
  inv.modifiers = draw_inventory(rng, kModifierBase, p.n_modifiers, 2, 3);
  inv.fillers = draw_inventory(rng, kFillerBase, p.n_fillers, 2, 3);
  std::unordered_set<char32_t> seen;
  while (inv.noise.size() < p.n_noise_chars) {
    char32_t c = kNoiseBase + static_cast<char32_t>(rng.index(kPoolSpan * 2));
    if (seen.insert(c).second) inv.noise.push_back(c);
  }
  return inv;
}

}  // namespace detail

// Seeded template-grammar generator. Titles open with a brand, bury the core
// product near the end behind modifier/filler noise, and optionally carry a
// decoy product term; exactly one salient modifier sits at a random slot in
// the front block. The short title keeps brand + salient modifier + core
// product in source order; the query shuffles the salient terms and
// sometimes adds one out-of-inventory noise character.
inline std::vector<Triplet> generate_synthetic(std::size_t n, std::uint64_t seed,
                                               const GeneratorProfile& profile = {}) {
  if (n == 0) throw ContractError("generate_synthetic: n must be >= 1");
  if (profile.n_salient_modifiers == 0 ||
      profile.n_salient_modifiers >= profile.n_modifiers)
    throw ContractError("generate_synthetic: need 0 < n_salient_modifiers < n_modifiers");
  Rng rng(seed);
  detail::Inventories inv = detail::build_inventories(rng, profile);
  const std::size_t n_salient = profile.n_salient_modifiers;
  const std::size_t n_plain = inv.modifiers.size() - n_salient;

  std::vector<Triplet> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::u32string& brand = inv.brands[rng.index(inv.brands.size())];
    std::size_t core_idx = rng.index(inv.products.size());
    const std::u32string& core = inv.products[core_idx];
    const std::u32string& salient = inv.modifiers[rng.index(n_salient)];

    // (term, kind) list in source order
    std::vector<std::pair<std::u32string, TermKind>> terms;
    terms.emplace_back(brand, TermKind::Brand);

    std::size_t front_mods = 1 + rng.index(2);    // 1..2 non-salient modifiers
    std::size_t front_fill = 3 + rng.index(2);    // 3..4
    std::vector<std::pair<std::u32string, TermKind>> front;
    front.emplace_back(salient, TermKind::Modifier);
    for (std::size_t k = 0; k < front_mods; ++k)
      front.emplace_back(inv.modifiers[n_salient + rng.index(n_plain)],
                         TermKind::Modifier);
    for (std::size_t k = 0; k < front_fill; ++k)
      front.emplace_back(inv.fillers[rng.index(inv.fillers.size())], TermKind::Other);
    if (rng.bernoulli(profile.decoy_product_prob)) {
      std::size_t d = rng.index(inv.products.size());
      if (d != core_idx) front.emplace_back(inv.products[d], TermKind::Product);
    }
    rng.shuffle(front);
    for (auto& t : front) terms.push_back(std::move(t));

    terms.emplace_back(inv.fillers[rng.index(inv.fillers.size())], TermKind::Other);
    terms.emplace_back(core, TermKind::Product);
    if (rng.bernoulli(0.4))
      terms.emplace_back(inv.fillers[rng.index(inv.fillers.size())], TermKind::Other);

    Triplet t;
    for (const auto& [text, kind] : terms) {
      t.source += text;
      t.tags.push_back({kind, text.size()});
    }

    t.short_title = brand;
    if (rng.bernoulli(profile.salient_mod_in_short_prob)) t.short_title += salient;
    t.short_title += core;

    std::vector<std::u32string> query_terms{core};
    if (rng.bernoulli(profile.brand_in_query_prob)) query_terms.push_back(brand);
    if (rng.bernoulli(profile.salient_mod_in_query_prob)) query_terms.push_back(salient);
    rng.shuffle(query_terms);
    for (const auto& q : query_terms) t.query += q;
    if (rng.bernoulli(profile.noise_rate)) {
      char32_t nc = inv.noise[rng.index(inv.noise.size())];
      std::size_t pos = rng.index(t.query.size() + 1);
      t.query.insert(t.query.begin() + pos, nc);
    }

    out.push_back(std::move(t));
  }
  return out;
}

struct CorpusStats {
  double mean_source_len = 0;
  double mean_short_len = 0;
  double mean_query_len = 0;
  std::size_t count = 0;
};

inline CorpusStats corpus_stats(const std::vector<Triplet>& triplets) {
  CorpusStats s;
  s.count = triplets.size();
  if (triplets.empty()) return s;
  for (const Triplet& t : triplets) {
    s.mean_source_len += static_cast<double>(t.source.size());
    s.mean_short_len += static_cast<double>(t.short_title.size());
    s.mean_query_len += static_cast<double>(t.query.size());
  }
  s.mean_source_len /= static_cast<double>(s.count);
  s.mean_short_len /= static_cast<double>(s.count);
  s.mean_query_len /= static_cast<double>(s.count);
  return s;
}

}  // namespace titlecut
