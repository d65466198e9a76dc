#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "titlecut/baselines.hpp"
#include "titlecut/checkpoint.hpp"
#include "titlecut/corpus.hpp"
#include "titlecut/decode.hpp"
#include "titlecut/model.hpp"
#include "titlecut/rouge.hpp"
#include "titlecut/train.hpp"

namespace titlecut {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// manifests
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a_bytes(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "' for checksum");
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a_bytes(ss.str());
}

inline std::string checksum_hex(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline void write_manifest(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
}

inline json train_config_json(const TrainConfig& cfg, const ModelDims& dims) {
  return json{{"learning_rate", cfg.learning_rate},
              {"batch_size", cfg.batch_size},
              {"max_grad_norm", cfg.max_grad_norm},
              {"epochs", cfg.epochs},
              {"seed", cfg.seed},
              {"mode", mode_name(cfg.mode)},
              {"lambda1", cfg.lambda1},
              {"lambda2", cfg.lambda2},
              {"accumulator_init", cfg.accumulator_init},
              {"emb_dim", dims.emb_dim},
              {"enc_hidden", dims.enc_hidden},
              {"dec_hidden", dims.dec_hidden},
              {"attn_dim", dims.attn_dim},
              {"max_source_len", dims.max_source_len}};
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataResult {
  std::string corpus_path;
  std::string manifest_path;
  std::uint64_t checksum = 0;
  CorpusStats stats;
};

inline GenDataResult cmd_gen_data(std::size_t n, std::uint64_t seed,
                                  const std::string& out_path,
                                  const GeneratorProfile& profile = {}) {
  std::vector<Triplet> triplets = generate_synthetic(n, seed, profile);
  write_triplets(out_path, triplets);
  GenDataResult res;
  res.corpus_path = out_path;
  res.checksum = fnv1a_file(out_path);
  res.stats = corpus_stats(triplets);
  res.manifest_path = out_path + ".manifest.json";
  write_manifest(res.manifest_path,
                 json{{"command", "gen-data"},
                      {"n", n},
                      {"seed", seed},
                      {"noise_rate", profile.noise_rate},
                      {"corpus", out_path},
                      {"corpus_checksum", checksum_hex(res.checksum)},
                      {"mean_source_len", res.stats.mean_source_len},
                      {"mean_short_len", res.stats.mean_short_len},
                      {"mean_query_len", res.stats.mean_query_len}});
  return res;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainCmdOptions {
  std::string corpus_path;
  std::string out_dir;
  TrainConfig train;
  ModelDims dims = ModelDims::desk();
};

struct TrainCmdResult {
  std::string checkpoint_path;
  std::string metrics_path;
  std::string manifest_path;
  std::vector<EpochMetrics> history;
};

inline TrainCmdResult cmd_train(const TrainCmdOptions& opt) {
  opt.train.validate();
  opt.dims.validate();
  std::filesystem::create_directories(opt.out_dir);

  std::vector<Triplet> corpus = parse_triplets(opt.corpus_path);
  DatasetSplit split = split_dataset(corpus, opt.train.seed);
  Vocab vocab = build_vocab(split.train);
  std::vector<EncodedTriplet> train_set = encode_dataset(split.train, vocab);

  Rng rng(opt.train.seed);
  MtlModel model(vocab.size(), opt.dims, opt.train.mtl_config(), rng);

  TrainCmdResult res;
  res.metrics_path = opt.out_dir + "/metrics.csv";
  {
    std::ofstream metrics(res.metrics_path, std::ios::binary);
    if (!metrics) throw ParseError("cannot open '" + res.metrics_path + "'");
    res.history = train_model(model, train_set, opt.train, rng, &metrics);
  }
  res.checkpoint_path = opt.out_dir + "/checkpoint.txt";
  save_checkpoint(res.checkpoint_path, model, vocab);

  res.manifest_path = opt.out_dir + "/manifest.json";
  write_manifest(res.manifest_path,
                 json{{"command", "train"},
                      {"config", train_config_json(opt.train, opt.dims)},
                      {"corpus", opt.corpus_path},
                      {"corpus_checksum", checksum_hex(fnv1a_file(opt.corpus_path))},
                      {"train_examples", split.train.size()},
                      {"dev_examples", split.dev.size()},
                      {"test_examples", split.test.size()},
                      {"vocab_size", vocab.size()},
                      {"checkpoint", res.checkpoint_path},
                      {"metrics", res.metrics_path},
                      {"checkpoint_checksum",
                       checksum_hex(fnv1a_file(res.checkpoint_path))}});
  return res;
}

// ---------------------------------------------------------------------------
// compress
// ---------------------------------------------------------------------------

struct CompressCmdOptions {
  std::string checkpoint_path;
  std::string input_path;
  std::string output_path;
  DecodeOptions decode;
};

struct CompressCmdResult {
  std::size_t lines = 0;
  std::size_t failures = 0;
  std::string manifest_path;
};

inline CompressCmdResult cmd_compress(const CompressCmdOptions& opt,
                                      std::ostream& err = std::cerr) {
  Checkpoint ck = load_checkpoint(opt.checkpoint_path);
  std::ifstream in(opt.input_path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + opt.input_path + "'");
  std::ofstream out(opt.output_path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + opt.output_path + "' for writing");

  CompressCmdResult res;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    ++res.lines;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    try {
      if (line.empty()) throw DataError("empty source line");
      std::u32string source = utf8_decode(line);
      std::vector<std::size_t> ids = ck.vocab.encode(source);
      DecodeResult dec = beam_search(ck.model, ids, opt.decode);
      std::u32string text = positions_to_text(source, dec.positions);
      for (char32_t c : text)
        if (source.find(c) == std::u32string::npos)
          throw ContractError("non-extractive output character");  // unreachable
      out << utf8_encode(text) << "\n";
    } catch (const std::exception& e) {
      ++res.failures;
      out << "\n";  // keep line alignment; failure is reported on stderr
      err << "line " << lineno << ": " << e.what() << "\n";
    }
  }
  res.manifest_path = opt.output_path + ".manifest.json";
  write_manifest(res.manifest_path,
                 json{{"command", "compress"},
                      {"checkpoint", opt.checkpoint_path},
                      {"input", opt.input_path},
                      {"output", opt.output_path},
                      {"beam", opt.decode.beam_width},
                      {"max_steps", opt.decode.max_steps},
                      {"lines", res.lines},
                      {"failures", res.failures},
                      {"output_checksum", checksum_hex(fnv1a_file(opt.output_path))}});
  return res;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

inline std::string rouge_table(const RougeReport& rep) {
  char buf[96];
  std::string out = "Metric     Precision    Recall        F1\n";
  auto row = [&](const char* name, const RougeScore& s) {
    std::snprintf(buf, sizeof(buf), "%-9s %10.2f %9.2f %9.2f\n", name,
                  100.0 * s.precision, 100.0 * s.recall, 100.0 * s.f1);
    out += buf;
  };
  row("ROUGE-1", rep.r1);
  row("ROUGE-2", rep.r2);
  row("ROUGE-L", rep.rl);
  return out;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

struct EvaluateCmdResult {
  RougeReport report;
  std::size_t pairs = 0;
};

inline EvaluateCmdResult cmd_evaluate(const std::string& candidates_path,
                                      const std::string& references_path,
                                      std::ostream& table_out = std::cout) {
  std::vector<std::string> cand = read_lines(candidates_path);
  std::vector<std::string> ref = read_lines(references_path);
  if (cand.size() != ref.size())
    throw DataError("line count mismatch: " + std::to_string(cand.size()) +
                    " candidates vs " + std::to_string(ref.size()) + " references");
  if (cand.empty()) throw DataError("empty evaluation files");
  std::vector<std::pair<TokenSeq, TokenSeq>> pairs;
  pairs.reserve(cand.size());
  for (std::size_t i = 0; i < cand.size(); ++i)
    pairs.emplace_back(rouge_tokenize(cand[i]), rouge_tokenize(ref[i]));
  EvaluateCmdResult res;
  res.report = corpus_rouge(pairs);
  res.pairs = pairs.size();
  table_out << rouge_table(res.report);
  return res;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& default_methods() {
  static const std::vector<std::string> m{"trunc", "ilp", "ptr-only",
                                          "vanilla-mtl", "agree-mtl"};
  return m;
}

inline std::string method_display_name(const std::string& method) {
  if (method == "trunc") return "Trunc.";
  if (method == "ilp") return "ILP";
  if (method == "ptr-only") return "Ptr-Net";
  if (method == "vanilla-mtl") return "Vanilla-MTL";
  if (method == "agree-mtl") return "Agree-MTL";
  throw ConfigError("unknown method '" + method + "'");
}

struct CompareCmdOptions {
  std::string corpus_path;
  std::string out_dir;
  std::vector<std::string> methods = default_methods();
  std::size_t budget = 12;  // character budget for trunc / ilp
  TrainConfig train;        // mode/lambdas overridden per neural method
  ModelDims dims = ModelDims::desk();
  DecodeOptions decode;
};

struct MethodResult {
  std::string method;
  std::string display_name;
  bool ok = false;
  std::string error;
  RougeReport rouge;
};

struct CompareCmdResult {
  std::vector<MethodResult> rows;
  std::string report_path;
  std::string report_json_path;
};

namespace detail {

inline std::vector<std::u32string> triplet_tokens(const Triplet& t) {
  std::vector<std::u32string> toks;
  if (t.has_tags()) {
    for (const auto& [text, kind] : t.terms()) toks.push_back(text);
  } else {
    for (char32_t c : t.source) toks.push_back(std::u32string(1, c));
  }
  return toks;
}

inline RougeReport score_candidates(const std::vector<std::u32string>& candidates,
                                    const std::vector<Triplet>& test) {
  std::vector<std::pair<TokenSeq, TokenSeq>> pairs;
  pairs.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i)
    pairs.emplace_back(rouge_tokenize(candidates[i]),
                       rouge_tokenize(test[i].short_title));
  return corpus_rouge(pairs);
}

}  // namespace detail

// Trains/evaluates every requested method on one shared split and emits a
// ROUGE comparison in the usual five-row layout. A failing method is
// reported in its row; the rest proceed.
inline CompareCmdResult cmd_compare(const CompareCmdOptions& opt,
                                    std::ostream& log = std::cerr) {
  std::filesystem::create_directories(opt.out_dir);
  std::vector<Triplet> corpus = parse_triplets(opt.corpus_path);
  DatasetSplit split = split_dataset(corpus, opt.train.seed);
  Vocab vocab = build_vocab(split.train);
  std::vector<EncodedTriplet> train_set = encode_dataset(split.train, vocab);
  const std::string corpus_checksum = checksum_hex(fnv1a_file(opt.corpus_path));

  CompareCmdResult result;
  for (const std::string& method : opt.methods) {
    MethodResult row;
    row.method = method;
    row.display_name = method_display_name(method);
    try {
      std::vector<std::u32string> candidates;
      candidates.reserve(split.test.size());
      json extra = json::object();
      if (method == "trunc") {
        for (const Triplet& t : split.test) {
          auto kept = truncate_title(detail::triplet_tokens(t), opt.budget);
          std::u32string text;
          for (const auto& tok : kept) text += tok;
          candidates.push_back(std::move(text));
        }
      } else if (method == "ilp") {
        std::size_t relaxed = 0;
        for (const Triplet& t : split.test) {
          if (!t.has_tags())
            throw DataError("ilp requires term tags on the corpus");
          IlpInstance inst{heuristic_weights(t.terms()), opt.budget};
          IlpSolution sol = ilp_compress(inst);
          if (sol.relaxed) ++relaxed;
          candidates.push_back(sol.text(inst));
        }
        extra["relaxed_instances"] = relaxed;
      } else {
        TrainConfig cfg = opt.train;
        cfg.mode = mode_from_name(method);
        cfg.validate();
        Rng rng(cfg.seed);
        MtlModel model(vocab.size(), opt.dims, cfg.mtl_config(), rng);
        const std::string method_dir = opt.out_dir + "/" + method;
        std::filesystem::create_directories(method_dir);
        {
          std::ofstream metrics(method_dir + "/metrics.csv", std::ios::binary);
          train_model(model, train_set, cfg, rng, &metrics);
        }
        save_checkpoint(method_dir + "/checkpoint.txt", model, vocab);
        for (const Triplet& t : split.test) {
          std::vector<std::size_t> ids = vocab.encode(t.source);
          DecodeResult dec = beam_search(model, ids, opt.decode);
          candidates.push_back(positions_to_text(t.source, dec.positions));
        }
        extra["checkpoint"] = method_dir + "/checkpoint.txt";
      }
      row.rouge = detail::score_candidates(candidates, split.test);
      row.ok = true;

      json manifest{{"command", "compare"},
                    {"method", method},
                    {"seed", opt.train.seed},
                    {"budget", opt.budget},
                    {"corpus", opt.corpus_path},
                    {"corpus_checksum", corpus_checksum},
                    {"config", train_config_json(opt.train, opt.dims)},
                    {"test_examples", split.test.size()},
                    {"rouge1_f1", row.rouge.r1.f1},
                    {"rouge2_f1", row.rouge.r2.f1},
                    {"rougeL_f1", row.rouge.rl.f1}};
      manifest.update(extra);
      write_manifest(opt.out_dir + "/" + method + ".manifest.json", manifest);
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
      log << "method " << method << " failed: " << e.what() << "\n";
    }
    result.rows.push_back(std::move(row));
  }

  std::string table = "Method        ROUGE-1  ROUGE-2  ROUGE-L\n";
  char buf[96];
  json jrows = json::array();
  for (const MethodResult& r : result.rows) {
    if (r.ok) {
      std::snprintf(buf, sizeof(buf), "%-12s %8.2f %8.2f %8.2f\n",
                    r.display_name.c_str(), 100.0 * r.rouge.r1.f1,
                    100.0 * r.rouge.r2.f1, 100.0 * r.rouge.rl.f1);
      table += buf;
    } else {
      std::snprintf(buf, sizeof(buf), "%-12s FAILED: %s\n",
                    r.display_name.c_str(), r.error.c_str());
      table += buf;
    }
    json jr{{"method", r.method}, {"name", r.display_name}, {"ok", r.ok}};
    if (r.ok) {
      auto js = [](const RougeScore& s) {
        return json{{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
      };
      jr["rouge1"] = js(r.rouge.r1);
      jr["rouge2"] = js(r.rouge.r2);
      jr["rougeL"] = js(r.rouge.rl);
    } else {
      jr["error"] = r.error;
    }
    jrows.push_back(jr);
  }

  result.report_path = opt.out_dir + "/report.txt";
  {
    std::ofstream out(result.report_path, std::ios::binary);
    out << table;
  }
  result.report_json_path = opt.out_dir + "/report.json";
  write_manifest(result.report_json_path,
                 json{{"command", "compare"},
                      {"corpus", opt.corpus_path},
                      {"corpus_checksum", corpus_checksum},
                      {"seed", opt.train.seed},
                      {"budget", opt.budget},
                      {"methods", jrows}});
  return result;
}

// ---------------------------------------------------------------------------
// key = value config files (every TrainConfig field)
// ---------------------------------------------------------------------------

inline void apply_config_file(const std::string& path, TrainConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> errors;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
      if (!blank)
        errors.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "learning_rate") cfg.learning_rate = std::stod(val);
      else if (key == "batch_size") cfg.batch_size = std::stoul(val);
      else if (key == "max_grad_norm") cfg.max_grad_norm = std::stod(val);
      else if (key == "epochs") cfg.epochs = std::stoul(val);
      else if (key == "seed") cfg.seed = std::stoull(val);
      else if (key == "mode") cfg.mode = mode_from_name(val);
      else if (key == "lambda1") cfg.lambda1 = std::stod(val);
      else if (key == "lambda2") cfg.lambda2 = std::stod(val);
      else if (key == "accumulator_init") cfg.accumulator_init = std::stod(val);
      else errors.push_back("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    } catch (const ConfigError& e) {
      errors.push_back("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const std::exception&) {
      errors.push_back("line " + std::to_string(lineno) + ": bad value '" + val +
                       "' for key '" + key + "'");
    }
  }
  if (!errors.empty()) {
    std::string msg = "config file '" + path + "' has errors:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
}

}  // namespace titlecut
