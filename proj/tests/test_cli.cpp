#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "titlecut/commands.hpp"
#include "titlecut/decode.hpp"

using namespace titlecut;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  fs::path dir = fs::temp_directory_path() / "titlecut_test_cli";
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

TrainCmdOptions small_train_options(const std::string& corpus,
                                    const std::string& out_dir, Mode mode,
                                    std::size_t epochs = 2) {
  TrainCmdOptions opt;
  opt.corpus_path = corpus;
  opt.out_dir = out_dir;
  opt.dims = {8, 8, 16, 16, 80};
  opt.train.mode = mode;
  opt.train.batch_size = 16;
  opt.train.epochs = epochs;
  opt.train.seed = 5;
  return opt;
}

}  // namespace

TEST_CASE("gen-data command", "[cli][gen]") {
  fs::path dir = work_dir();

  SECTION("n = 10 writes a 10-line file that parses back") {
    std::string path = (dir / "ten.tsv").string();
    GenDataResult res = cmd_gen_data(10, 3, path);
    REQUIRE(count_lines(read_file(path)) == 10);
    REQUIRE(parse_triplets(path).size() == 10);
    REQUIRE(fs::exists(res.manifest_path));
  }
  SECTION("identical arguments give identical checksums") {
    GenDataResult a = cmd_gen_data(25, 4, (dir / "a.tsv").string());
    GenDataResult b = cmd_gen_data(25, 4, (dir / "b.tsv").string());
    REQUIRE(a.checksum == b.checksum);
    GenDataResult c = cmd_gen_data(25, 5, (dir / "c.tsv").string());
    REQUIRE(a.checksum != c.checksum);
  }
}

TEST_CASE("train command", "[cli][train]") {
  fs::path dir = work_dir();
  std::string corpus = (dir / "train_corpus.tsv").string();
  cmd_gen_data(50, 6, corpus);

  SECTION("a two-epoch smoke run finishes with finite losses") {
    TrainCmdResult res =
        cmd_train(small_train_options(corpus, (dir / "run_smoke").string(),
                                      Mode::AgreeMtl));
    REQUIRE(res.history.size() == 2);
    for (const EpochMetrics& m : res.history) {
      REQUIRE(std::isfinite(m.mean_combined));
      REQUIRE(std::isfinite(m.mean_title));
      REQUIRE(m.examples == 40);  // 80% split of 50
    }
    REQUIRE(fs::exists(res.checkpoint_path));
    REQUIRE(fs::exists(res.manifest_path));
    std::string metrics = read_file(res.metrics_path);
    REQUIRE(count_lines(metrics) == 3);  // header + 2 epochs
  }

  SECTION("ptr-only metric logs mark absent losses") {
    TrainCmdResult res = cmd_train(
        small_train_options(corpus, (dir / "run_ptr").string(), Mode::PtrOnly, 1));
    REQUIRE(read_file(res.metrics_path).find(",na,na,") != std::string::npos);
  }

  SECTION("invalid config is rejected before training starts") {
    TrainCmdOptions opt =
        small_train_options(corpus, (dir / "run_bad").string(), Mode::AgreeMtl);
    opt.train.learning_rate = 0;
    opt.train.epochs = 0;
    try {
      cmd_train(opt);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      std::string msg = e.what();
      REQUIRE(msg.find("learning_rate") != std::string::npos);
      REQUIRE(msg.find("epochs") != std::string::npos);
    }
  }
}

TEST_CASE("compress command", "[cli][compress]") {
  fs::path dir = work_dir();
  std::string corpus = (dir / "cmp_corpus.tsv").string();
  cmd_gen_data(40, 7, corpus);
  TrainCmdResult trained = cmd_train(
      small_train_options(corpus, (dir / "cmp_run").string(), Mode::PtrOnly, 1));

  // sources drawn from the training split so the vocabulary covers them
  std::vector<Triplet> all = parse_triplets(corpus);
  DatasetSplit split = split_dataset(all, 5);
  std::string input = (dir / "sources.txt").string();
  {
    std::ofstream out(input, std::ios::binary);
    for (std::size_t i = 0; i < 10; ++i)
      out << utf8_encode(split.train[i].source) << "\n";
  }

  SECTION("beam 1 output equals the greedy reference") {
    CompressCmdOptions opt;
    opt.checkpoint_path = trained.checkpoint_path;
    opt.input_path = input;
    opt.output_path = (dir / "beam1.txt").string();
    opt.decode.beam_width = 1;
    std::ostringstream errs;
    CompressCmdResult res = cmd_compress(opt, errs);
    REQUIRE(res.failures == 0);
    REQUIRE(res.lines == 10);

    Checkpoint ck = load_checkpoint(trained.checkpoint_path);
    std::istringstream out_lines(read_file(opt.output_path));
    std::string line;
    for (std::size_t i = 0; i < 10; ++i) {
      REQUIRE(std::getline(out_lines, line));
      const std::u32string source = split.train[i].source;
      DecodeResult greedy = greedy_decode(ck.model, ck.vocab.encode(source), 12);
      REQUIRE(utf8_decode(line) == positions_to_text(source, greedy.positions));
    }
  }

  SECTION("outputs respect the 12-character default cap and extractiveness") {
    CompressCmdOptions opt;
    opt.checkpoint_path = trained.checkpoint_path;
    opt.input_path = input;
    opt.output_path = (dir / "beam10.txt").string();
    std::ostringstream errs;
    cmd_compress(opt, errs);
    std::istringstream out_lines(read_file(opt.output_path));
    std::string line;
    std::size_t i = 0;
    while (std::getline(out_lines, line)) {
      std::u32string text = utf8_decode(line);
      REQUIRE(text.size() <= 12);
      for (char32_t c : text)
        REQUIRE(split.train[i].source.find(c) != std::u32string::npos);
      ++i;
    }
    REQUIRE(i == 10);
  }

  SECTION("rerunning produces an identical file") {
    CompressCmdOptions opt;
    opt.checkpoint_path = trained.checkpoint_path;
    opt.input_path = input;
    opt.output_path = (dir / "rerun1.txt").string();
    std::ostringstream errs;
    cmd_compress(opt, errs);
    std::string first = read_file(opt.output_path);
    opt.output_path = (dir / "rerun2.txt").string();
    cmd_compress(opt, errs);
    REQUIRE(first == read_file(opt.output_path));
  }

  SECTION("unknown source characters fail that line and continue") {
    std::string bad_input = (dir / "bad_sources.txt").string();
    {
      std::ofstream out(bad_input, std::ios::binary);
      out << utf8_encode(split.train[0].source) << "\n";
      out << "zzzz-not-in-vocab\n";
      out << utf8_encode(split.train[1].source) << "\n";
    }
    CompressCmdOptions opt;
    opt.checkpoint_path = trained.checkpoint_path;
    opt.input_path = bad_input;
    opt.output_path = (dir / "bad_out.txt").string();
    std::ostringstream errs;
    CompressCmdResult res = cmd_compress(opt, errs);
    REQUIRE(res.lines == 3);
    REQUIRE(res.failures == 1);
    REQUIRE(errs.str().find("line 2") != std::string::npos);
    REQUIRE(count_lines(read_file(opt.output_path)) == 3);  // alignment kept
  }
}

TEST_CASE("evaluate command", "[cli][evaluate]") {
  fs::path dir = work_dir();

  SECTION("identical files score 100 everywhere") {
    std::string cand = (dir / "same_c.txt").string();
    std::string ref = (dir / "same_r.txt").string();
    for (const std::string& p : {cand, ref}) {
      std::ofstream out(p, std::ios::binary);
      out << "abc def\nxyz\n";
    }
    std::ostringstream table;
    EvaluateCmdResult res = cmd_evaluate(cand, ref, table);
    REQUIRE(res.report.r1.f1 == 1.0);
    REQUIRE(res.report.rl.f1 == 1.0);
    REQUIRE(table.str().find("100.00") != std::string::npos);
  }

  SECTION("an empty candidate line contributes zero without crashing") {
    std::string cand = (dir / "empty_c.txt").string();
    std::string ref = (dir / "empty_r.txt").string();
    {
      std::ofstream out(cand, std::ios::binary);
      out << "abc\n\n";
    }
    {
      std::ofstream out(ref, std::ios::binary);
      out << "abc\nxy\n";
    }
    std::ostringstream table;
    EvaluateCmdResult res = cmd_evaluate(cand, ref, table);
    REQUIRE(res.pairs == 2);
    REQUIRE(res.report.r1.f1 == Catch::Approx(0.5));
  }

  SECTION("line-count mismatch is an error") {
    std::string cand = (dir / "mis_c.txt").string();
    std::string ref = (dir / "mis_r.txt").string();
    {
      std::ofstream out(cand, std::ios::binary);
      out << "a\n";
    }
    {
      std::ofstream out(ref, std::ios::binary);
      out << "a\nb\n";
    }
    std::ostringstream table;
    REQUIRE_THROWS_AS(cmd_evaluate(cand, ref, table), DataError);
  }

  SECTION("matches the rouge unit fixtures exactly") {
    std::string cand = (dir / "fix_c.txt").string();
    std::string ref = (dir / "fix_r.txt").string();
    {
      std::ofstream out(cand, std::ios::binary);
      out << "a b c\n";
    }
    {
      std::ofstream out(ref, std::ios::binary);
      out << "a b d\n";
    }
    std::ostringstream table;
    EvaluateCmdResult res = cmd_evaluate(cand, ref, table);
    RougeScore expect = rouge_n(rouge_tokenize(std::string("a b c")),
                                rouge_tokenize(std::string("a b d")), 1);
    REQUIRE(res.report.r1.f1 == expect.f1);
    REQUIRE(res.report.r1.precision == expect.precision);
  }
}

TEST_CASE("compare command", "[cli][compare]") {
  fs::path dir = work_dir();
  std::string corpus = (dir / "compare_corpus.tsv").string();
  cmd_gen_data(60, 8, corpus);

  SECTION("identical methods produce identical rows") {
    CompareCmdOptions opt;
    opt.corpus_path = corpus;
    opt.out_dir = (dir / "cmp_twice").string();
    opt.methods = {"trunc", "trunc"};
    std::ostringstream log;
    CompareCmdResult res = cmd_compare(opt, log);
    REQUIRE(res.rows.size() == 2);
    REQUIRE(res.rows[0].ok);
    REQUIRE(res.rows[1].ok);
    REQUIRE(res.rows[0].rouge.r1.f1 == res.rows[1].rouge.r1.f1);
    REQUIRE(res.rows[0].rouge.rl.recall == res.rows[1].rouge.rl.recall);
  }

  SECTION("the full five-method report comes out in table order") {
    CompareCmdOptions opt;
    opt.corpus_path = corpus;
    opt.out_dir = (dir / "cmp_full").string();
    opt.dims = {8, 8, 16, 16, 80};
    opt.train.batch_size = 16;
    opt.train.epochs = 1;
    opt.decode.beam_width = 3;
    std::ostringstream log;
    CompareCmdResult res = cmd_compare(opt, log);
    REQUIRE(res.rows.size() == 5);
    std::vector<std::string> names;
    for (const MethodResult& r : res.rows) {
      REQUIRE(r.ok);
      names.push_back(r.display_name);
    }
    REQUIRE(names == std::vector<std::string>{"Trunc.", "ILP", "Ptr-Net",
                                              "Vanilla-MTL", "Agree-MTL"});
    std::string table = read_file(res.report_path);
    REQUIRE(table.find("Trunc.") != std::string::npos);
    REQUIRE(table.find("Agree-MTL") != std::string::npos);
    for (const std::string& m : opt.methods)
      REQUIRE(fs::exists(opt.out_dir + "/" + m + ".manifest.json"));
  }

  SECTION("a failing method reports its error and the rest proceed") {
    // strip the tags so the ILP method cannot run
    std::vector<Triplet> plain = parse_triplets(corpus);
    for (Triplet& t : plain) t.tags.clear();
    std::string untagged = (dir / "untagged.tsv").string();
    write_triplets(untagged, plain);

    CompareCmdOptions opt;
    opt.corpus_path = untagged;
    opt.out_dir = (dir / "cmp_fail").string();
    opt.methods = {"trunc", "ilp"};
    std::ostringstream log;
    CompareCmdResult res = cmd_compare(opt, log);
    REQUIRE(res.rows[0].ok);
    REQUIRE(!res.rows[1].ok);
    REQUIRE(res.rows[1].error.find("tags") != std::string::npos);
    REQUIRE(read_file(res.report_path).find("FAILED") != std::string::npos);
  }
}

TEST_CASE("config files", "[cli][config]") {
  fs::path dir = work_dir();

  SECTION("key = value pairs load into the training config") {
    std::string path = (dir / "good.conf").string();
    {
      std::ofstream out(path);
      out << "# comment line\n"
          << "learning_rate = 0.05\n"
          << "batch_size = 8\n"
          << "mode = vanilla-mtl\n"
          << "lambda1 = 0.4\n"
          << "\n"
          << "epochs = 7\n";
    }
    TrainConfig cfg;
    apply_config_file(path, cfg);
    REQUIRE(cfg.learning_rate == 0.05);
    REQUIRE(cfg.batch_size == 8);
    REQUIRE(cfg.mode == Mode::VanillaMtl);
    REQUIRE(cfg.lambda1 == 0.4);
    REQUIRE(cfg.epochs == 7);
    REQUIRE(cfg.max_grad_norm == 2.0);  // untouched default
  }

  SECTION("every bad line is reported at once") {
    std::string path = (dir / "bad.conf").string();
    {
      std::ofstream out(path);
      out << "learning_rate = fast\n"
          << "unknown_key = 3\n"
          << "mode = warp\n";
    }
    TrainConfig cfg;
    try {
      apply_config_file(path, cfg);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      std::string msg = e.what();
      REQUIRE(msg.find("line 1") != std::string::npos);
      REQUIRE(msg.find("line 2") != std::string::npos);
      REQUIRE(msg.find("line 3") != std::string::npos);
    }
  }
}

#ifdef TITLECUT_BIN
TEST_CASE("binary smoke test", "[cli][binary]") {
  fs::path dir = work_dir();
  std::string corpus = (dir / "bin_corpus.tsv").string();
  std::string cmd = std::string(TITLECUT_BIN) + " gen-data --n 12 --seed 9 --out " +
                    corpus + " > /dev/null";
  REQUIRE(std::system(cmd.c_str()) == 0);
  REQUIRE(parse_triplets(corpus).size() == 12);

  std::string bad = std::string(TITLECUT_BIN) + " gen-data --n 0 2> /dev/null";
  REQUIRE(std::system(bad.c_str()) != 0);
}
#endif
