#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "titlecut/corpus.hpp"
#include "titlecut/model.hpp"

namespace titlecut {

struct TrainConfig {
  double learning_rate = 0.15;
  std::size_t batch_size = 128;
  double max_grad_norm = 2.0;
  std::size_t epochs = 12;
  std::uint64_t seed = 1;
  Mode mode = Mode::AgreeMtl;
  double lambda1 = 0.5;
  double lambda2 = 0.3;
  double accumulator_init = 0.1;

  std::vector<std::string> validation_errors() const {
    std::vector<std::string> errs;
    if (learning_rate <= 0) errs.push_back("learning_rate must be positive");
    if (batch_size == 0) errs.push_back("batch_size must be positive");
    if (max_grad_norm <= 0) errs.push_back("max_grad_norm must be positive");
    if (epochs == 0) errs.push_back("epochs must be positive");
    if (accumulator_init <= 0) errs.push_back("accumulator_init must be positive");
    MtlConfig mc{mode, lambda1, lambda2};
    for (auto& e : mc.validation_errors()) errs.push_back(e);
    return errs;
  }

  void validate() const {
    auto errs = validation_errors();
    if (!errs.empty()) {
      std::string msg = "invalid training config:";
      for (const auto& e : errs) msg += "\n  - " + e;
      throw ConfigError(msg);
    }
  }

  MtlConfig mtl_config() const { return MtlConfig{mode, lambda1, lambda2}; }
};

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// Per-parameter accumulated squared gradients, in registration order.
class AdagradState {
 public:
  AdagradState() = default;
  AdagradState(const NamedParams& params, double accumulator_init) {
    for (const auto& [name, t] : params)
      acc_.emplace_back(t.size(), accumulator_init);
  }

  std::vector<double>& accumulator(std::size_t param_index) {
    return acc_.at(param_index);
  }
  std::size_t count() const { return acc_.size(); }

 private:
  std::vector<std::vector<double>> acc_;
};

// Global-norm gradient clipping. Returns the applied factor (1.0 when no
// clipping happened). Any non-finite gradient aborts the step.
inline double clip_gradients(const NamedParams& params, double max_norm = 2.0) {
  double sq = 0;
  for (const auto& [name, t] : params)
    for (double g : t.grad()) {
      if (!std::isfinite(g))
        throw NumericError("non-finite gradient in parameter '" + name + "'");
      sq += g * g;
    }
  double norm = std::sqrt(sq);
  if (norm <= max_norm) return 1.0;
  double factor = max_norm / norm;
  for (const auto& [name, t] : params)
    for (double& g : const_cast<Tensor&>(t).grad()) g *= factor;
  return factor;
}

// accumulator += g^2; param -= lr * g / sqrt(accumulator)
inline void adagrad_step(const NamedParams& params, AdagradState& state,
                         double learning_rate = 0.15) {
  if (state.count() != params.size())
    throw ContractError("adagrad_step: state/parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = const_cast<Tensor&>(params[i].second);
    std::vector<double>& acc = state.accumulator(i);
    for (std::size_t j = 0; j < t.size(); ++j) {
      const double g = t.grad()[j];
      if (g == 0.0) continue;
      acc[j] += g * g;
      t.value()[j] -= learning_rate * g / std::sqrt(acc[j]);
    }
  }
}

// ---------------------------------------------------------------------------
// dataset plumbing
// ---------------------------------------------------------------------------

struct EncodedTriplet {
  std::vector<std::size_t> source;
  std::vector<std::size_t> title;
  std::vector<std::size_t> query;
};

inline EncodedTriplet encode_triplet(const Triplet& t, const Vocab& vocab) {
  return {vocab.encode(t.source), vocab.encode(t.short_title),
          vocab.encode_lenient(t.query)};
}

inline std::vector<EncodedTriplet> encode_dataset(const std::vector<Triplet>& ts,
                                                  const Vocab& vocab) {
  std::vector<EncodedTriplet> out;
  out.reserve(ts.size());
  for (const Triplet& t : ts) out.push_back(encode_triplet(t, vocab));
  return out;
}

struct DatasetSplit {
  std::vector<Triplet> train, dev, test;
};

// Seed-deterministic 80/10/10 split; disjoint and exhaustive.
inline DatasetSplit split_dataset(const std::vector<Triplet>& triplets,
                                  std::uint64_t seed) {
  if (triplets.size() < 10)
    throw ContractError("split_dataset: need at least 10 triplets, got " +
                        std::to_string(triplets.size()));
  std::vector<std::size_t> order(triplets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t n = triplets.size();
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_dev = n / 10;
  DatasetSplit s;
  for (std::size_t i = 0; i < n; ++i) {
    const Triplet& t = triplets[order[i]];
    if (i < n_train)
      s.train.push_back(t);
    else if (i < n_train + n_dev)
      s.dev.push_back(t);
    else
      s.test.push_back(t);
  }
  return s;
}

// ---------------------------------------------------------------------------
// epoch loop
// ---------------------------------------------------------------------------

struct EpochMetrics {
  double mean_title = 0;
  std::optional<double> mean_query;
  std::optional<double> mean_agree;
  double mean_combined = 0;
  std::size_t examples = 0;
  std::size_t skipped = 0;  // extractive-premise violations
};

// One pass over the dataset: seeded shuffle, batches padded to the batch max
// source length with masks, one Adagrad step per batch on the mean combined
// loss. Violating examples are skipped and counted. Metrics are exact means
// over the examples actually used.
inline EpochMetrics train_epoch(MtlModel& model,
                                const std::vector<EncodedTriplet>& dataset,
                                const TrainConfig& cfg, AdagradState& state,
                                Rng& rng) {
  if (dataset.empty()) throw ContractError("train_epoch: empty dataset");
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  NamedParams params = model.parameters();
  EpochMetrics em;
  double sum_title = 0, sum_query = 0, sum_agree = 0, sum_combined = 0;
  const bool has_query = model.config.mode != Mode::PtrOnly;

  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    std::size_t pad_len = 0;
    for (std::size_t i = start; i < end; ++i)
      pad_len = std::max(pad_len, dataset[order[i]].source.size());

    Tape tape;
    std::vector<Tensor> example_losses;
    for (std::size_t i = start; i < end; ++i) {
      const EncodedTriplet& ex = dataset[order[i]];
      std::vector<std::size_t> src = ex.source;
      std::vector<std::uint8_t> mask(src.size(), 1);
      src.resize(pad_len, Vocab::kPad);
      mask.resize(pad_len, 0);
      try {
        LossBreakdown lb = model.combined_loss(&tape, src, ex.title, ex.query, mask);
        example_losses.push_back(lb.combined);
        sum_title += lb.loss_title.item();
        if (lb.loss_query) sum_query += lb.loss_query->item();
        if (lb.loss_agree) sum_agree += lb.loss_agree->item();
        sum_combined += lb.combined.item();
        ++em.examples;
      } catch (const DataError&) {
        ++em.skipped;
      }
    }
    if (example_losses.empty()) continue;

    Tensor batch_loss = example_losses[0];
    for (std::size_t i = 1; i < example_losses.size(); ++i)
      batch_loss = add(&tape, batch_loss, example_losses[i]);
    batch_loss = scale(&tape, batch_loss,
                       1.0 / static_cast<double>(example_losses.size()));

    model.zero_grad();
    tape.backward(batch_loss);
    clip_gradients(params, cfg.max_grad_norm);
    adagrad_step(params, state, cfg.learning_rate);
  }

  if (em.examples > 0) {
    em.mean_title = sum_title / static_cast<double>(em.examples);
    em.mean_combined = sum_combined / static_cast<double>(em.examples);
    if (has_query) {
      em.mean_query = sum_query / static_cast<double>(em.examples);
      em.mean_agree = sum_agree / static_cast<double>(em.examples);
    }
  }
  return em;
}

inline std::string metrics_csv_header() {
  return "epoch,loss_title,loss_query,loss_agree,loss_combined,examples,skipped";
}

inline std::string metrics_csv_line(std::size_t epoch, const EpochMetrics& m) {
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  std::string line = std::to_string(epoch) + "," + fmt(m.mean_title) + ",";
  line += m.mean_query ? fmt(*m.mean_query) : "na";
  line += ",";
  line += m.mean_agree ? fmt(*m.mean_agree) : "na";
  line += "," + fmt(m.mean_combined) + "," + std::to_string(m.examples) + "," +
          std::to_string(m.skipped);
  return line;
}

// Multi-epoch driver. Writes one CSV line per epoch when a stream is given.
inline std::vector<EpochMetrics> train_model(MtlModel& model,
                                             const std::vector<EncodedTriplet>& dataset,
                                             const TrainConfig& cfg,
                                             Rng& rng,
                                             std::ostream* metrics_out = nullptr) {
  cfg.validate();
  NamedParams params = model.parameters();
  AdagradState state(params, cfg.accumulator_init);
  if (metrics_out) *metrics_out << metrics_csv_header() << "\n";
  std::vector<EpochMetrics> history;
  for (std::size_t e = 1; e <= cfg.epochs; ++e) {
    EpochMetrics m = train_epoch(model, dataset, cfg, state, rng);
    if (metrics_out) *metrics_out << metrics_csv_line(e, m) << "\n";
    history.push_back(m);
  }
  return history;
}

// ---------------------------------------------------------------------------
// lambda tuning (grid search against a dev metric)
// ---------------------------------------------------------------------------

struct TuneResult {
  double lambda1 = 0;        // vanilla: the single lambda
  double lambda2 = 0;        // agree only
  double best_score = 0;
  std::vector<std::pair<double, double>> trace;  // (grid value, score)
};

// Vanilla MTL: lambda over {0.1 .. 0.9}. Ties keep the smallest grid value.
inline TuneResult tune_lambda_vanilla(const std::function<double(double)>& dev_score,
                                      double grid_step = 0.1) {
  if (grid_step <= 0 || grid_step > 0.9)
    throw ContractError("tune_lambda_vanilla: bad grid step");
  TuneResult r;
  bool first = true;
  for (double l = 0.1; l <= 0.9 + 1e-9; l += grid_step) {
    double s = dev_score(l);
    r.trace.emplace_back(l, s);
    if (first || s > r.best_score) {
      first = false;
      r.best_score = s;
      r.lambda1 = l;
    }
  }
  return r;
}

// Agree MTL: lambda1 fixed at 0.5, lambda2 over {0.1 .. 0.4}.
inline TuneResult tune_lambdas_agree(
    const std::function<double(double, double)>& dev_score,
    double grid_step = 0.1) {
  if (grid_step <= 0 || grid_step > 0.4)
    throw ContractError("tune_lambdas_agree: bad grid step");
  TuneResult r;
  r.lambda1 = 0.5;
  bool first = true;
  for (double l2 = 0.1; l2 <= 0.4 + 1e-9; l2 += grid_step) {
    double s = dev_score(0.5, l2);
    r.trace.emplace_back(l2, s);
    if (first || s > r.best_score) {
      first = false;
      r.best_score = s;
      r.lambda2 = l2;
    }
  }
  return r;
}

}  // namespace titlecut
