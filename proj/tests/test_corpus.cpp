#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "titlecut/corpus.hpp"

using namespace titlecut;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

std::string tmp_path(const char* name) {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "titlecut_test_corpus";
  fs::create_directories(dir);
  return (dir / name).string();
}

bool in_range(char32_t c, char32_t base) {
  return c >= base && c < base + detail::kPoolSpan;
}

}  // namespace

TEST_CASE("triplet parsing", "[parse]") {
  SECTION("a well-formed three-field line parses") {
    Triplet t = parse_triplet_line("abcdefghij\tabc\tquery", 1);
    REQUIRE(t.source == U"abcdefghij");
    REQUIRE(t.short_title == U"abc");
    REQUIRE(t.query == U"query");
    REQUIRE(!t.has_tags());
  }
  SECTION("the tag field round-trips") {
    Triplet t = parse_triplet_line("abcdefghij\tabc\tq\tBrand:3 Other:4 Product:3", 1);
    REQUIRE(t.tags.size() == 3);
    REQUIRE(t.tags[0].kind == TermKind::Brand);
    REQUIRE(t.tags[2].len == 3);
    auto terms = t.terms();
    REQUIRE(terms[0].first == U"abc");
    REQUIRE(terms[2].first == U"hij");
    REQUIRE(format_triplet_line(t) == "abcdefghij\tabc\tq\tBrand:3 Other:4 Product:3");
  }
  SECTION("a short-title character missing from the source is rejected") {
    try {
      parse_triplet_line("abcdefghij\tabz\tq", 7);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      std::string msg = e.what();
      REQUIRE(msg.find("line 7") != std::string::npos);
      REQUIRE(msg.find("z") != std::string::npos);
    }
  }
  SECTION("wrong field count reports the line number") {
    try {
      parse_triplet_line("only\ttwo", 3);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      REQUIRE(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SECTION("sources below ten characters are rejected") {
    REQUIRE_THROWS_AS(parse_triplet_line("abcdefghi\ta\tq", 1), DataError);
  }
  SECTION("tags that do not cover the source are rejected") {
    REQUIRE_THROWS_AS(parse_triplet_line("abcdefghij\ta\tq\tBrand:3", 1), ParseError);
  }
}

TEST_CASE("vocabulary", "[vocab]") {
  SECTION("one triplet over two characters yields 2 + reserved ids") {
    Triplet t;
    t.source = U"abababababab";
    t.short_title = U"a";
    t.query = U"ab";
    Vocab v = build_vocab({t});
    REQUIRE(v.size() == Vocab::kReserved + 2);
    REQUIRE(v.has(U'a'));
    REQUIRE(v.has(U'b'));
  }
  SECTION("identical corpora produce identical id assignments") {
    std::vector<Triplet> corpus = generate_synthetic(50, 9);
    Vocab a = build_vocab(corpus);
    Vocab b = build_vocab(corpus);
    REQUIRE(a.table() == b.table());
  }
  SECTION("encode/decode round-trips every corpus line") {
    std::vector<Triplet> corpus = generate_synthetic(100, 10);
    Vocab v = build_vocab(corpus);
    for (const Triplet& t : corpus) {
      REQUIRE(v.decode(v.encode(t.source)) == t.source);
      REQUIRE(v.decode(v.encode(t.short_title)) == t.short_title);
      REQUIRE(v.decode(v.encode(t.query)) == t.query);
    }
  }
  SECTION("rare query-only characters fall to UNK under min_count") {
    Triplet t;
    t.source = U"abababababab";
    t.short_title = U"ab";
    t.query = U"abz";  // z occurs once, and only in the query
    Vocab v = build_vocab({t}, 2);
    REQUIRE(!v.has(U'z'));
    auto ids = v.encode_lenient(t.query);
    REQUIRE(ids[2] == Vocab::kUnk);
    REQUIRE_THROWS_AS(v.encode(t.query), VocabError);
  }
  SECTION("reserved ids stay reserved") {
    std::vector<Triplet> corpus = generate_synthetic(5, 2);
    Vocab v = build_vocab(corpus);
    REQUIRE_THROWS_AS(v.char_of(Vocab::kPad), VocabError);
    REQUIRE_THROWS_AS(v.char_of(Vocab::kEos), VocabError);
  }
}

TEST_CASE("synthetic generator", "[generator]") {
  SECTION("a fixed seed gives a deterministic triplet") {
    auto a = generate_synthetic(1, 42);
    auto b = generate_synthetic(1, 42);
    REQUIRE(a[0].source == b[0].source);
    REQUIRE(a[0].short_title == b[0].short_title);
    REQUIRE(a[0].query == b[0].query);
  }
  SECTION("the corpus file is byte-identical across runs") {
    std::string p1 = tmp_path("gen_a.tsv"), p2 = tmp_path("gen_b.tsv");
    write_triplets(p1, generate_synthetic(200, 7));
    write_triplets(p2, generate_synthetic(200, 7));
    REQUIRE(read_file(p1) == read_file(p2));
  }
  SECTION("different seeds differ") {
    auto a = generate_synthetic(3, 1);
    auto b = generate_synthetic(3, 2);
    REQUIRE(a[0].source != b[0].source);
  }
  SECTION("mean lengths stay near the corpus-statistics targets") {
    GeneratorProfile profile;
    auto corpus = generate_synthetic(2000, 11, profile);
    CorpusStats s = corpus_stats(corpus);
    REQUIRE(s.mean_source_len > 0.85 * profile.target_source_len);
    REQUIRE(s.mean_source_len < 1.15 * profile.target_source_len);
    REQUIRE(s.mean_short_len > 0.85 * profile.target_short_len);
    REQUIRE(s.mean_short_len < 1.15 * profile.target_short_len);
    REQUIRE(s.mean_query_len > 0.85 * profile.target_query_len);
    REQUIRE(s.mean_query_len < 1.15 * profile.target_query_len);
  }
  SECTION("statistics computed over the parsed file match the targets") {
    GeneratorProfile profile;
    std::string path = tmp_path("stats.tsv");
    write_triplets(path, generate_synthetic(1500, 13, profile));
    CorpusStats s = corpus_stats(parse_triplets(path));
    REQUIRE(s.count == 1500);
    REQUIRE(std::abs(s.mean_source_len - profile.target_source_len) <
            0.10 * profile.target_source_len);
    REQUIRE(std::abs(s.mean_short_len - profile.target_short_len) <
            0.10 * profile.target_short_len);
    REQUIRE(std::abs(s.mean_query_len - profile.target_query_len) <
            0.10 * profile.target_query_len);
  }
  SECTION("every generated triplet passes parser validation") {
    std::string path = tmp_path("valid.tsv");
    write_triplets(path, generate_synthetic(500, 17));
    std::vector<Triplet> parsed = parse_triplets(path);
    REQUIRE(parsed.size() == 500);
    for (const Triplet& t : parsed) {
      REQUIRE(satisfies_extractive_premise(t));
      REQUIRE(t.source.size() >= kMinSourceChars);
      REQUIRE(t.has_tags());
    }
  }
  SECTION("short titles contain exactly one product term") {
    auto corpus = generate_synthetic(300, 19);
    for (const Triplet& t : corpus) {
      // product-class characters form one contiguous run in the short title
      std::size_t runs = 0;
      bool in_run = false;
      std::u32string run_text;
      for (char32_t c : t.short_title) {
        if (in_range(c, detail::kProductBase)) {
          if (!in_run) {
            ++runs;
            in_run = true;
          }
          run_text.push_back(c);
        } else {
          in_run = false;
        }
      }
      REQUIRE(runs == 1);
      // and that run is a Product-tagged term of the source
      bool found = false;
      for (const auto& [text, kind] : t.terms())
        if (kind == TermKind::Product && text == run_text) found = true;
      REQUIRE(found);
    }
  }
  SECTION("query noise characters map to UNK downstream") {
    GeneratorProfile profile;
    profile.noise_rate = 1.0;
    auto corpus = generate_synthetic(50, 23, profile);
    std::size_t noisy = 0;
    for (const Triplet& t : corpus)
      for (char32_t c : t.query)
        if (in_range(c, detail::kNoiseBase) ||
            in_range(c, detail::kNoiseBase + detail::kPoolSpan))
          ++noisy;
    REQUIRE(noisy == 50);  // exactly one per query at rate 1.0
  }
  SECTION("n = 0 is rejected") {
    REQUIRE_THROWS_AS(generate_synthetic(0, 1), ContractError);
  }
}
