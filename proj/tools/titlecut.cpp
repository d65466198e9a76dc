#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "titlecut/commands.hpp"

namespace {

using namespace titlecut;

std::string default_out_dir() {
  const char* env = std::getenv("TITLECUT_OUT_DIR");
  return env && *env ? std::string(env) : std::string(".");
}

struct ProfileArgs {
  std::string name = "desk";

  ModelDims dims() const {
    return name == "paper" ? ModelDims::paper() : ModelDims::desk();
  }
  std::size_t default_batch() const { return name == "paper" ? 128 : 32; }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"titlecut: extractive product-title compression (pointer network, "
               "multi-task query agreement, trunc/ILP baselines, ROUGE)"};
  app.require_subcommand(1);
  int exit_code = 0;

  // ---- gen-data ----
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic triplet corpus");
  std::size_t gen_n = 2000;
  std::uint64_t gen_seed = 1;
  std::string gen_out = default_out_dir() + "/corpus.tsv";
  double gen_noise = 0.1;
  gen->add_option("--n", gen_n, "number of triplets")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output corpus file");
  gen->add_option("--noise-rate", gen_noise, "query noise-character rate");
  gen->callback([&] {
    GeneratorProfile profile;
    profile.noise_rate = gen_noise;
    GenDataResult res = cmd_gen_data(gen_n, gen_seed, gen_out, profile);
    std::cout << "wrote " << gen_n << " triplets to " << res.corpus_path
              << " (checksum " << checksum_hex(res.checksum) << ")\n"
              << "mean lengths: source " << res.stats.mean_source_len
              << ", short " << res.stats.mean_short_len << ", query "
              << res.stats.mean_query_len << "\n";
  });

  // ---- train ----
  auto* train = app.add_subcommand("train", "train a model on a triplet corpus");
  std::string tr_corpus, tr_config_file;
  std::string tr_out = default_out_dir() + "/run";
  std::string tr_mode = "agree-mtl";
  ProfileArgs tr_profile;
  TrainConfig tr_flags;  // receives explicit flag values
  train->add_option("--corpus", tr_corpus, "triplet corpus file")->required();
  train->add_option("--out-dir", tr_out, "output directory");
  auto* tr_mode_opt = train->add_option("--mode", tr_mode, "ptr-only|vanilla-mtl|agree-mtl");
  train->add_option("--config", tr_config_file, "key = value config file");
  train->add_option("--profile", tr_profile.name, "desk|paper defaults")
      ->check(CLI::IsMember({"desk", "paper"}));
  auto* tr_seed = train->add_option("--seed", tr_flags.seed, "training seed");
  auto* tr_epochs = train->add_option("--epochs", tr_flags.epochs, "training epochs");
  auto* tr_batch = train->add_option("--batch-size", tr_flags.batch_size, "batch size");
  auto* tr_lr = train->add_option("--learning-rate", tr_flags.learning_rate, "Adagrad learning rate");
  auto* tr_clip = train->add_option("--max-grad-norm", tr_flags.max_grad_norm, "gradient clipping norm");
  auto* tr_l1 = train->add_option("--lambda1", tr_flags.lambda1, "title loss weight");
  auto* tr_l2 = train->add_option("--lambda2", tr_flags.lambda2, "query loss weight");
  train->callback([&] {
    TrainCmdOptions opt;
    opt.corpus_path = tr_corpus;
    opt.out_dir = tr_out;
    opt.dims = tr_profile.dims();
    opt.train.batch_size = tr_profile.default_batch();
    if (!tr_config_file.empty()) apply_config_file(tr_config_file, opt.train);
    if (tr_mode_opt->count()) opt.train.mode = mode_from_name(tr_mode);
    if (tr_seed->count()) opt.train.seed = tr_flags.seed;
    if (tr_epochs->count()) opt.train.epochs = tr_flags.epochs;
    if (tr_batch->count()) opt.train.batch_size = tr_flags.batch_size;
    if (tr_lr->count()) opt.train.learning_rate = tr_flags.learning_rate;
    if (tr_clip->count()) opt.train.max_grad_norm = tr_flags.max_grad_norm;
    if (tr_l1->count()) opt.train.lambda1 = tr_flags.lambda1;
    if (tr_l2->count()) opt.train.lambda2 = tr_flags.lambda2;
    TrainCmdResult res = cmd_train(opt);
    std::cout << "checkpoint: " << res.checkpoint_path << "\n"
              << "metrics:    " << res.metrics_path << "\n";
    if (!res.history.empty()) {
      const EpochMetrics& last = res.history.back();
      std::cout << "final combined loss: " << last.mean_combined << " over "
                << last.examples << " examples\n";
    }
  });

  // ---- compress ----
  auto* comp = app.add_subcommand("compress", "compress titles, one per line");
  CompressCmdOptions co;
  co.output_path = default_out_dir() + "/compressed.txt";
  comp->add_option("--checkpoint", co.checkpoint_path, "model checkpoint")->required();
  comp->add_option("--input", co.input_path, "source titles, one per line")->required();
  comp->add_option("--output", co.output_path, "output file");
  comp->add_option("--beam", co.decode.beam_width, "beam width")->check(CLI::PositiveNumber);
  comp->add_option("--max-steps", co.decode.max_steps, "maximum decoding steps")
      ->check(CLI::PositiveNumber);
  comp->add_flag("--no-repeat", co.decode.no_repeat, "forbid re-pointing at a position");
  comp->add_flag("--length-normalize", co.decode.length_normalize,
                 "score finished hypotheses by log-prob / length");
  comp->callback([&] {
    CompressCmdResult res = cmd_compress(co);
    std::cout << "compressed " << res.lines - res.failures << "/" << res.lines
              << " lines into " << co.output_path << "\n";
    if (res.failures) {
      std::cerr << res.failures << " line(s) failed; blank lines mark them\n";
      exit_code = 1;
    }
  });

  // ---- evaluate ----
  auto* eval = app.add_subcommand("evaluate", "ROUGE of candidates vs references");
  std::string ev_cand, ev_ref;
  eval->add_option("--candidates", ev_cand, "candidate file")->required();
  eval->add_option("--references", ev_ref, "reference file")->required();
  eval->callback([&] { cmd_evaluate(ev_cand, ev_ref, std::cout); });

  // ---- compare ----
  auto* cmp = app.add_subcommand("compare", "train and score all methods on one split");
  CompareCmdOptions cpo;
  cpo.out_dir = default_out_dir() + "/compare";
  std::string cmp_methods;
  ProfileArgs cmp_profile;
  cmp->add_option("--corpus", cpo.corpus_path, "triplet corpus file")->required();
  cmp->add_option("--out-dir", cpo.out_dir, "output directory");
  cmp->add_option("--methods", cmp_methods,
                  "comma list of trunc,ilp,ptr-only,vanilla-mtl,agree-mtl");
  auto* cmp_seed = cmp->add_option("--seed", cpo.train.seed, "shared split/training seed");
  cmp->add_option("--budget", cpo.budget, "character budget for trunc/ilp");
  cmp->add_option("--beam", cpo.decode.beam_width, "beam width");
  cmp->add_option("--max-steps", cpo.decode.max_steps, "maximum decoding steps");
  auto* cmp_epochs = cmp->add_option("--epochs", cpo.train.epochs, "training epochs");
  cmp->add_option("--profile", cmp_profile.name, "desk|paper defaults")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmp->callback([&] {
    cpo.dims = cmp_profile.dims();
    std::size_t batch = cmp_profile.default_batch();
    std::size_t epochs = cpo.train.epochs;
    std::uint64_t seed = cpo.train.seed;
    cpo.train = TrainConfig{};
    cpo.train.batch_size = batch;
    if (cmp_epochs->count()) cpo.train.epochs = epochs;
    if (cmp_seed->count()) cpo.train.seed = seed;
    if (!cmp_methods.empty()) {
      cpo.methods.clear();
      std::istringstream ss(cmp_methods);
      std::string m;
      while (std::getline(ss, m, ',')) cpo.methods.push_back(m);
    }
    CompareCmdResult res = cmd_compare(cpo);
    std::ifstream rep(res.report_path);
    std::cout << rep.rdbuf();
    for (const MethodResult& r : res.rows)
      if (!r.ok) exit_code = 1;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}
