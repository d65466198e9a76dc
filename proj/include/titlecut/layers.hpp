#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "titlecut/rng.hpp"
#include "titlecut/tensor.hpp"

namespace titlecut {

inline void init_uniform(Tensor& t, Rng& rng, double lo = -0.1, double hi = 0.1) {
  for (double& v : t.value()) v = rng.uniform(lo, hi);
}

inline void init_normal(Tensor& t, Rng& rng, double mean, double stddev) {
  for (double& v : t.value()) v = rng.normal(mean, stddev);
}

// Token-id -> row lookup table. Embeddings are drawn from N(0, 1e-4^2).
struct EmbeddingTable {
  std::size_t vocab_size = 0;
  std::size_t dim = 0;
  Tensor weights;  // [vocab_size x dim]

  EmbeddingTable() = default;
  EmbeddingTable(std::size_t vocab, std::size_t d, Rng& rng)
      : vocab_size(vocab), dim(d), weights(Tensor::zeros({vocab, d}, true)) {
    init_normal(weights, rng, 0.0, 1e-4);
  }
};

inline Tensor embed(Tape* tape, const std::vector<std::size_t>& tokens,
                    const EmbeddingTable& table) {
  return gather_rows(tape, table.weights, tokens);
}

// Single-token lookup as a rank-1 vector.
inline Tensor embed_one(Tape* tape, std::size_t token, const EmbeddingTable& table) {
  return row(tape, gather_rows(tape, table.weights, {token}), 0);
}

// Gate layout along the 4H axis: [input, forget, candidate, output].
struct LstmCellParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Tensor wx;  // [4H x input_dim]
  Tensor wh;  // [4H x H]
  Tensor b;   // [4H]

  LstmCellParams() = default;
  LstmCellParams(std::size_t in_dim, std::size_t h_dim, Rng& rng)
      : input_dim(in_dim),
        hidden_dim(h_dim),
        wx(Tensor::zeros({4 * h_dim, in_dim}, true)),
        wh(Tensor::zeros({4 * h_dim, h_dim}, true)),
        b(Tensor::zeros({4 * h_dim}, true)) {
    init_uniform(wx, rng);
    init_uniform(wh, rng);
    init_uniform(b, rng);
    // forget-gate bias starts at 1.0
    for (std::size_t i = h_dim; i < 2 * h_dim; ++i) b.value()[i] = 1.0;
  }
};

// One LSTM step. |h'| entries stay below 1 since h' = o * tanh(c').
inline std::pair<Tensor, Tensor> lstm_step(Tape* tape, const Tensor& x,
                                           const Tensor& h, const Tensor& c,
                                           const LstmCellParams& p) {
  if (x.size() != p.input_dim || h.size() != p.hidden_dim || c.size() != p.hidden_dim)
    throw DimensionError("lstm_step: input/state dims do not match cell params");
  const std::size_t H = p.hidden_dim;
  Tensor z = add(tape, add(tape, matvec(tape, p.wx, x), matvec(tape, p.wh, h)), p.b);
  Tensor gi = sigmoid(tape, slice(tape, z, 0, H));
  Tensor gf = sigmoid(tape, slice(tape, z, H, H));
  Tensor gg = tanh(tape, slice(tape, z, 2 * H, H));
  Tensor go = sigmoid(tape, slice(tape, z, 3 * H, H));
  Tensor c_next = add(tape, mul(tape, gf, c), mul(tape, gi, gg));
  Tensor h_next = mul(tape, go, tanh(tape, c_next));
  return {h_next, c_next};
}

// Bidirectional encoder output. Pad rows of per_position are exact zeros and
// never hold state; final_h/final_c come from each direction's last real step.
struct EncoderStates {
  Tensor per_position;             // [M x 2H]
  Tensor final_h;                  // [2H]
  Tensor final_c;                  // [2H]
  std::vector<std::uint8_t> mask;  // 1 = real token, 0 = pad

  std::size_t padded_len() const { return mask.size(); }
  std::size_t real_len() const {
    std::size_t n = 0;
    for (auto m : mask) n += m;
    return n;
  }
};

inline EncoderStates bilstm_encode(Tape* tape, const Tensor& source_embeds,
                                   const std::vector<std::uint8_t>& mask,
                                   const LstmCellParams& fwd,
                                   const LstmCellParams& bwd) {
  const std::size_t M = source_embeds.rows();
  if (M == 0 || mask.size() != M)
    throw DimensionError("bilstm_encode: embeds/mask length mismatch");
  if (fwd.hidden_dim != bwd.hidden_dim)
    throw DimensionError("bilstm_encode: direction widths differ");
  bool any_real = false;
  for (auto m : mask) any_real = any_real || (m != 0);
  if (!any_real) throw ContractError("bilstm_encode: all positions are padding");

  const std::size_t H = fwd.hidden_dim;
  const Tensor zero_h = Tensor::zeros({H});

  std::vector<Tensor> rows_f(M), rows_b(M);
  Tensor hf = Tensor::zeros({H}), cf = Tensor::zeros({H});
  for (std::size_t m = 0; m < M; ++m) {
    if (mask[m]) {
      auto [h2, c2] = lstm_step(tape, row(tape, source_embeds, m), hf, cf, fwd);
      hf = h2;
      cf = c2;
      rows_f[m] = hf;
    } else {
      rows_f[m] = zero_h;
    }
  }
  Tensor hb = Tensor::zeros({H}), cb = Tensor::zeros({H});
  for (std::size_t m = M; m-- > 0;) {
    if (mask[m]) {
      auto [h2, c2] = lstm_step(tape, row(tape, source_embeds, m), hb, cb, bwd);
      hb = h2;
      cb = c2;
      rows_b[m] = hb;
    } else {
      rows_b[m] = zero_h;
    }
  }

  std::vector<Tensor> rows(M);
  for (std::size_t m = 0; m < M; ++m) rows[m] = concat(tape, rows_f[m], rows_b[m]);

  EncoderStates enc;
  enc.per_position = stack_rows(tape, rows);
  enc.final_h = concat(tape, hf, hb);
  enc.final_c = concat(tape, cf, cb);
  enc.mask = mask;
  return enc;
}

// v^T tanh(W1 s + W2 h_m) scoring parameters.
struct AttentionParams {
  Tensor v;   // [A]
  Tensor w1;  // [A x S]
  Tensor w2;  // [A x 2H]

  AttentionParams() = default;
  AttentionParams(std::size_t attn_dim, std::size_t state_dim,
                  std::size_t enc_dim, Rng& rng)
      : v(Tensor::zeros({attn_dim}, true)),
        w1(Tensor::zeros({attn_dim, state_dim}, true)),
        w2(Tensor::zeros({attn_dim, enc_dim}, true)) {
    init_uniform(v, rng);
    init_uniform(w1, rng);
    init_uniform(w2, rng);
  }
};

constexpr double kMaskScore = -1e9;

// Additive attention over a fixed set of rows. The W2 projection of the rows
// is computed once at construction and reused across decoder steps; each
// step() is numerically identical to a standalone additive_attention call.
class AttentionScorer {
 public:
  AttentionScorer(Tape* tape, Tensor rows, std::vector<std::uint8_t> mask,
                  const AttentionParams& params)
      : tape_(tape), rows_(std::move(rows)), params_(&params) {
    if (rows_.rank() != 2 || mask.size() != rows_.rows())
      throw DimensionError("attention: rows/mask mismatch");
    proj_ = matmul(tape_, rows_, transpose(tape_, params.w2));  // [R x A]
    std::vector<double> mv(mask.size(), 0.0);
    bool any_masked = false;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (!mask[i]) {
        mv[i] = kMaskScore;
        any_masked = true;
      }
    if (any_masked) mask_vec_ = Tensor::from({mask.size()}, std::move(mv));
  }

  // -> (weights over rows, context vector). Masked rows receive exactly zero
  // weight: their shifted scores underflow exp() to 0.
  std::pair<Tensor, Tensor> step(const Tensor& s_prev) const {
    Tensor u = matvec(tape_, params_->w1, s_prev);               // [A]
    Tensor t = tanh(tape_, add_row_broadcast(tape_, proj_, u));  // [R x A]
    Tensor scores = matvec(tape_, t, params_->v);                // [R]
    if (mask_vec_.defined()) scores = add(tape_, scores, mask_vec_);
    Tensor weights = softmax_rows(tape_, scores);
    Tensor context = vecmat(tape_, weights, rows_);
    return {weights, context};
  }

  const Tensor& rows() const { return rows_; }

 private:
  Tape* tape_;
  Tensor rows_;
  const AttentionParams* params_;
  Tensor proj_;
  Tensor mask_vec_;  // undefined when nothing is masked
};

// One-shot additive attention over the encoder states.
inline std::pair<Tensor, Tensor> additive_attention(Tape* tape,
                                                    const Tensor& s_prev,
                                                    const EncoderStates& enc,
                                                    const AttentionParams& p) {
  AttentionScorer scorer(tape, enc.per_position, enc.mask, p);
  return scorer.step(s_prev);
}

}  // namespace titlecut
