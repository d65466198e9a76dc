#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "titlecut/corpus.hpp"
#include "titlecut/layers.hpp"
#include "titlecut/tensor.hpp"

namespace titlecut {

enum class Mode { PtrOnly, VanillaMtl, AgreeMtl };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::PtrOnly: return "ptr-only";
    case Mode::VanillaMtl: return "vanilla-mtl";
    case Mode::AgreeMtl: return "agree-mtl";
  }
  return "agree-mtl";
}

inline Mode mode_from_name(const std::string& s) {
  if (s == "ptr-only") return Mode::PtrOnly;
  if (s == "vanilla-mtl") return Mode::VanillaMtl;
  if (s == "agree-mtl") return Mode::AgreeMtl;
  throw ConfigError("unknown mode '" + s + "' (expected ptr-only, vanilla-mtl or agree-mtl)");
}

// Layer widths. The decoder state is the concatenation of the two encoder
// finals, so dec_hidden must equal 2 * enc_hidden.
struct ModelDims {
  std::size_t emb_dim = 128;
  std::size_t enc_hidden = 128;
  std::size_t dec_hidden = 256;
  std::size_t attn_dim = 256;
  std::size_t max_source_len = 120;

  static ModelDims paper() { return {}; }
  static ModelDims desk() { return {32, 32, 64, 64, 120}; }

  void validate() const {
    if (dec_hidden != 2 * enc_hidden)
      throw ConfigError("dec_hidden must be 2*enc_hidden (got " +
                        std::to_string(dec_hidden) + " vs 2*" +
                        std::to_string(enc_hidden) + ")");
    if (emb_dim == 0 || enc_hidden == 0 || attn_dim == 0 || max_source_len == 0)
      throw ConfigError("model dims must be positive");
  }
};

// Loss mixing. agree-mtl uses L = l1*L_T + l2*L_Q + (1-l1-l2)*L_agree;
// vanilla-mtl reads lambda1 as its single lambda: L = l*L_T + (1-l)*L_Q.
struct MtlConfig {
  Mode mode = Mode::AgreeMtl;
  double lambda1 = 0.5;
  double lambda2 = 0.3;
  bool renormalize_agree = true;  // off only for the ablation
  bool reverse_kl = false;        // KL(a^Q || a^T) instead of KL(a^T || a^Q)

  std::vector<std::string> validation_errors() const {
    std::vector<std::string> errs;
    if (lambda1 < 0 || lambda2 < 0)
      errs.push_back("lambda1 and lambda2 must be nonnegative");
    if (mode == Mode::AgreeMtl && lambda1 + lambda2 > 1.0)
      errs.push_back("agree-mtl requires lambda1 + lambda2 <= 1");
    if (mode == Mode::VanillaMtl && lambda1 > 1.0)
      errs.push_back("vanilla-mtl requires lambda (lambda1) <= 1");
    return errs;
  }

  void validate() const {
    auto errs = validation_errors();
    if (!errs.empty()) {
      std::string msg = "invalid loss config:";
      for (const auto& e : errs) msg += "\n  - " + e;
      throw ConfigError(msg);
    }
  }
};

// Per-step attention rows over the source positions (pads excluded by
// masking, the pointer STOP column already dropped). Rows of the query
// matrix each sum to 1; pointer rows sum to 1 minus their STOP mass.
struct AttentionMatrix {
  Tensor rows;  // [steps x M]

  std::size_t steps() const { return rows.rows(); }
  std::size_t source_len() const { return rows.cols(); }
};

struct LossBreakdown {
  Tensor loss_title;
  std::optional<Tensor> loss_query;  // absent in ptr-only mode
  std::optional<Tensor> loss_agree;  // absent in ptr-only mode
  Tensor combined;
  AttentionMatrix title_attention;
  std::optional<AttentionMatrix> query_attention;
};

struct PointerStepResult {
  Tensor weights;  // [M+1]; index M is the virtual STOP position
  Tensor context;  // [2H]
  Tensor h, c;
};

// Max-pool both attention matrices over their step axis, renormalize the two
// pooled vectors into distributions (unless disabled), and return their KL
// divergence. M mismatch is a contract error.
inline Tensor agreement_loss(Tape* tape, const AttentionMatrix& title,
                             const AttentionMatrix& query,
                             bool renormalize = true, bool reverse = false) {
  if (title.source_len() != query.source_len())
    throw ContractError("agreement_loss: source lengths differ (" +
                        std::to_string(title.source_len()) + " vs " +
                        std::to_string(query.source_len()) + ")");
  Tensor a_t = max_pool_rows(tape, title.rows);
  Tensor a_q = max_pool_rows(tape, query.rows);
  if (renormalize) {
    a_t = normalize(tape, a_t);
    a_q = normalize(tape, a_q);
  }
  return reverse ? kl_divergence(tape, a_q, a_t) : kl_divergence(tape, a_t, a_q);
}

// Shared bidirectional encoder feeding a pointer decoder (title compression)
// and an attentive vocabulary decoder (query generation).
class MtlModel {
 public:
  ModelDims dims;
  MtlConfig config;
  std::size_t vocab_size = 0;

  EmbeddingTable embedding;  // shared: encoder input and pointer-decoder input
  LstmCellParams enc_fwd, enc_bwd;

  LstmCellParams ptr_cell;
  AttentionParams ptr_attn;
  Tensor stop_key;  // [2H] learned key for the virtual STOP position

  EmbeddingTable query_embedding;  // query decoder keeps its own input table
  LstmCellParams q_cell;
  AttentionParams q_attn;
  Tensor out_w;  // [V x (S + 2H)]
  Tensor out_b;  // [V]

  MtlModel() = default;

  MtlModel(std::size_t vocab, ModelDims d, MtlConfig cfg, Rng& rng)
      : dims(d), config(cfg), vocab_size(vocab) {
    dims.validate();
    config.validate();
    const std::size_t two_h = 2 * dims.enc_hidden;
    const std::size_t dec_in = dims.emb_dim + two_h;
    embedding = EmbeddingTable(vocab, dims.emb_dim, rng);
    enc_fwd = LstmCellParams(dims.emb_dim, dims.enc_hidden, rng);
    enc_bwd = LstmCellParams(dims.emb_dim, dims.enc_hidden, rng);
    ptr_cell = LstmCellParams(dec_in, dims.dec_hidden, rng);
    ptr_attn = AttentionParams(dims.attn_dim, dims.dec_hidden, two_h, rng);
    stop_key = Tensor::zeros({two_h}, true);
    init_uniform(stop_key, rng);
    init_query_decoder(rng);
  }

  // Fresh query-side parameters; also used when warm-starting from a
  // ptr-only checkpoint that carries no query-decoder section.
  void init_query_decoder(Rng& rng) {
    const std::size_t two_h = 2 * dims.enc_hidden;
    const std::size_t dec_in = dims.emb_dim + two_h;
    query_embedding = EmbeddingTable(vocab_size, dims.emb_dim, rng);
    q_cell = LstmCellParams(dec_in, dims.dec_hidden, rng);
    q_attn = AttentionParams(dims.attn_dim, dims.dec_hidden, two_h, rng);
    out_w = Tensor::zeros({vocab_size, dims.dec_hidden + two_h}, true);
    out_b = Tensor::zeros({vocab_size}, true);
    init_uniform(out_w, rng);
    init_uniform(out_b, rng);
  }

  // Fixed registration order; checkpoint and optimizer state rely on it.
  std::vector<std::pair<std::string, Tensor>> parameters() const {
    std::vector<std::pair<std::string, Tensor>> p;
    p.emplace_back("encoder.embedding", embedding.weights);
    p.emplace_back("encoder.fwd.wx", enc_fwd.wx);
    p.emplace_back("encoder.fwd.wh", enc_fwd.wh);
    p.emplace_back("encoder.fwd.b", enc_fwd.b);
    p.emplace_back("encoder.bwd.wx", enc_bwd.wx);
    p.emplace_back("encoder.bwd.wh", enc_bwd.wh);
    p.emplace_back("encoder.bwd.b", enc_bwd.b);
    p.emplace_back("pointer.cell.wx", ptr_cell.wx);
    p.emplace_back("pointer.cell.wh", ptr_cell.wh);
    p.emplace_back("pointer.cell.b", ptr_cell.b);
    p.emplace_back("pointer.attn.v", ptr_attn.v);
    p.emplace_back("pointer.attn.w1", ptr_attn.w1);
    p.emplace_back("pointer.attn.w2", ptr_attn.w2);
    p.emplace_back("pointer.stop_key", stop_key);
    p.emplace_back("query.embedding", query_embedding.weights);
    p.emplace_back("query.cell.wx", q_cell.wx);
    p.emplace_back("query.cell.wh", q_cell.wh);
    p.emplace_back("query.cell.b", q_cell.b);
    p.emplace_back("query.attn.v", q_attn.v);
    p.emplace_back("query.attn.w1", q_attn.w1);
    p.emplace_back("query.attn.w2", q_attn.w2);
    p.emplace_back("query.out_w", out_w);
    p.emplace_back("query.out_b", out_b);
    return p;
  }

  void zero_grad() const {
    for (auto& [name, t] : parameters()) const_cast<Tensor&>(t).zero_grad();
  }

  EncoderStates encode(Tape* tape, const std::vector<std::size_t>& source) const {
    std::vector<std::uint8_t> mask(source.size(), 1);
    return encode(tape, source, mask);
  }

  EncoderStates encode(Tape* tape, const std::vector<std::size_t>& source,
                       const std::vector<std::uint8_t>& mask) const {
    if (source.empty()) throw ContractError("encode: empty source");
    if (source.size() > dims.max_source_len)
      throw ContractError("encode: source length " + std::to_string(source.size()) +
                          " exceeds max_source_len " + std::to_string(dims.max_source_len));
    Tensor embeds = embed(tape, source, embedding);
    return bilstm_encode(tape, embeds, mask, enc_fwd, enc_bwd);
  }

  // Encoder rows extended with the learned STOP key (row M), all unmasked
  // rows attendable. The attention distribution over these rows IS the
  // pointer decoder's output distribution.
  AttentionScorer pointer_scorer(Tape* tape, const EncoderStates& enc) const {
    Tensor ext = concat_rows(tape, enc.per_position,
                             stack_rows(tape, {stop_key}));
    std::vector<std::uint8_t> ext_mask = enc.mask;
    ext_mask.push_back(1);
    return AttentionScorer(tape, ext, ext_mask, ptr_attn);
  }

  PointerStepResult pointer_step(Tape* tape, const AttentionScorer& scorer,
                                 std::size_t prev_token, const Tensor& h,
                                 const Tensor& c) const {
    auto [weights, context] = scorer.step(h);
    Tensor x = concat(tape, embed_one(tape, prev_token, embedding), context);
    auto [h2, c2] = lstm_step(tape, x, h, c, ptr_cell);
    return {weights, context, h2, c2};
  }

  PointerStepResult pointer_step(Tape* tape, const EncoderStates& enc,
                                 std::size_t prev_token, const Tensor& h,
                                 const Tensor& c) const {
    return pointer_step(tape, pointer_scorer(tape, enc), prev_token, h, c);
  }

  struct TitleLossResult {
    Tensor loss;
    AttentionMatrix attention;
  };

  // Teacher-forced pointer loss. Per step the gold probability is the sum of
  // attention over every source position holding the gold character (any
  // matching position is a correct extraction); a trailing STOP step
  // supervises termination. Log probabilities are floored at 1e-10.
  TitleLossResult title_loss(Tape* tape, const EncoderStates& enc,
                             const std::vector<std::size_t>& source,
                             const std::vector<std::size_t>& gold_title) const {
    if (source.size() != enc.padded_len())
      throw ContractError("title_loss: source/encoder length mismatch");
    if (gold_title.empty()) throw ContractError("title_loss: empty gold title");
    const std::size_t m_pad = enc.padded_len();
    AttentionScorer scorer = pointer_scorer(tape, enc);

    Tensor h = enc.final_h, c = enc.final_c;
    Tensor loss = Tensor::scalar(0.0);
    std::vector<Tensor> attn_rows;
    std::size_t prev = Vocab::kBos;
    for (std::size_t n = 0; n <= gold_title.size(); ++n) {
      const bool stop_step = (n == gold_title.size());
      PointerStepResult step = pointer_step(tape, scorer, prev, h, c);
      h = step.h;
      c = step.c;
      std::vector<std::size_t> match;
      if (stop_step) {
        match.push_back(m_pad);
      } else {
        for (std::size_t m = 0; m < m_pad; ++m)
          if (enc.mask[m] && source[m] == gold_title[n]) match.push_back(m);
        if (match.empty())
          throw DataError("title_loss: gold character (token id " +
                          std::to_string(gold_title[n]) +
                          ") does not occur in the source");
        attn_rows.push_back(slice(tape, step.weights, 0, m_pad));
        prev = gold_title[n];
      }
      Tensor p = gather_sum(tape, step.weights, match);
      loss = add(tape, loss, scale(tape, log_floored(tape, p), -1.0));
    }
    return {loss, AttentionMatrix{stack_rows(tape, attn_rows)}};
  }

  struct QueryLossResult {
    Tensor loss;
    AttentionMatrix attention;
  };

  // Teacher-forced attentive decoder with a full-vocabulary softmax;
  // negative log-likelihood summed over the query plus its EOS step.
  QueryLossResult query_loss(Tape* tape, const EncoderStates& enc,
                             const std::vector<std::size_t>& gold_query) const {
    if (gold_query.empty()) throw ContractError("query_loss: empty gold query");
    AttentionScorer scorer(tape, enc.per_position, enc.mask, q_attn);

    Tensor h = enc.final_h, c = enc.final_c;
    Tensor loss = Tensor::scalar(0.0);
    std::vector<Tensor> attn_rows;
    std::size_t prev = Vocab::kBos;
    for (std::size_t n = 0; n <= gold_query.size(); ++n) {
      const bool eos_step = (n == gold_query.size());
      const std::size_t target = eos_step ? Vocab::kEos : gold_query[n];
      auto [weights, context] = scorer.step(h);
      Tensor x = concat(tape, embed_one(tape, prev, query_embedding), context);
      auto [h2, c2] = lstm_step(tape, x, h, c, q_cell);
      h = h2;
      c = c2;
      Tensor logits = add(tape, matvec(tape, out_w, concat(tape, h, context)), out_b);
      loss = add(tape, loss, cross_entropy_logits(tape, logits, target));
      if (!eos_step) {
        attn_rows.push_back(weights);
        prev = target;
      }
    }
    return {loss, AttentionMatrix{stack_rows(tape, attn_rows)}};
  }

  // Full loss for one triplet under the configured mode. The agreement term
  // is computed whenever both attention matrices exist (diagnostics), but
  // only agree-mtl mixes it into the combined loss.
  LossBreakdown combined_loss(Tape* tape, const std::vector<std::size_t>& source,
                              const std::vector<std::size_t>& gold_title,
                              const std::vector<std::size_t>& gold_query,
                              const std::vector<std::uint8_t>& mask) const {
    EncoderStates enc = encode(tape, source, mask);
    TitleLossResult title = title_loss(tape, enc, source, gold_title);

    LossBreakdown out;
    out.loss_title = title.loss;
    out.title_attention = title.attention;
    if (config.mode == Mode::PtrOnly) {
      out.combined = title.loss;
      return out;
    }

    QueryLossResult query = query_loss(tape, enc, gold_query);
    out.loss_query = query.loss;
    out.query_attention = query.attention;
    Tensor agree = agreement_loss(tape, title.attention, query.attention,
                                  config.renormalize_agree, config.reverse_kl);
    out.loss_agree = agree;

    if (config.mode == Mode::VanillaMtl) {
      const double l = config.lambda1;
      out.combined = add(tape, scale(tape, title.loss, l),
                         scale(tape, query.loss, 1.0 - l));
    } else {
      const double l1 = config.lambda1, l2 = config.lambda2;
      out.combined = add(tape,
                         add(tape, scale(tape, title.loss, l1),
                             scale(tape, query.loss, l2)),
                         scale(tape, agree, 1.0 - l1 - l2));
    }
    return out;
  }

  LossBreakdown combined_loss(Tape* tape, const std::vector<std::size_t>& source,
                              const std::vector<std::size_t>& gold_title,
                              const std::vector<std::size_t>& gold_query) const {
    return combined_loss(tape, source, gold_title, gold_query,
                         std::vector<std::uint8_t>(source.size(), 1));
  }
};

}  // namespace titlecut
