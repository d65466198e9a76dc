#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "titlecut/model.hpp"

namespace titlecut {

struct DecodeOptions {
  std::size_t beam_width = 10;
  std::size_t max_steps = 12;
  bool no_repeat = false;         // ablation: forbid re-pointing at a used position
  bool length_normalize = false;  // ablation: score finished hyps by lp/len
};

struct DecodeResult {
  std::vector<std::size_t> positions;  // emitted source positions, in order
  double log_prob = 0.0;
  bool finished = false;  // emitted STOP before the step cap
};

namespace detail {

inline double hyp_score(double lp, std::size_t len, bool length_normalize) {
  if (!length_normalize) return lp;
  return lp / static_cast<double>(std::max<std::size_t>(len, 1));
}

// Orders by score descending; ties go to the lexicographically earlier
// emission sequence.
inline bool hyp_better(double score_a, const std::vector<std::size_t>& pos_a,
                       double score_b, const std::vector<std::size_t>& pos_b) {
  if (score_a != score_b) return score_a > score_b;
  return pos_a < pos_b;
}

}  // namespace detail

// Breadth-limited best-first search over the pointer decoder. Hypotheses
// that emit STOP retire to a finished pool; the best finished hypothesis is
// returned, or the best partial when nothing finished by the cap. Every
// emitted position indexes the source, so outputs are extractive by
// construction.
inline DecodeResult beam_search(const MtlModel& model,
                                const std::vector<std::size_t>& source,
                                const DecodeOptions& opts = {}) {
  if (opts.beam_width < 1 || opts.max_steps < 1)
    throw ContractError("beam_search: width and max_steps must be >= 1");
  if (source.empty()) throw ContractError("beam_search: empty source");

  EncoderStates enc = model.encode(nullptr, source);
  AttentionScorer scorer = model.pointer_scorer(nullptr, enc);
  const std::size_t M = source.size();

  struct Hyp {
    std::vector<std::size_t> positions;
    Tensor h, c;
    std::size_t prev_token;
    double lp = 0.0;
  };
  struct Done {
    std::vector<std::size_t> positions;
    double lp;
  };

  std::vector<Hyp> live;
  live.push_back({{}, enc.final_h, enc.final_c, Vocab::kBos, 0.0});
  std::vector<Done> finished;

  for (std::size_t step = 0; step < opts.max_steps && !live.empty(); ++step) {
    struct Cand {
      std::size_t hyp_index;
      std::size_t emission;  // position or M for STOP
      double lp;
      std::vector<std::size_t> positions;
    };
    std::vector<Cand> cands;
    cands.reserve(live.size() * (M + 1));
    for (std::size_t hi = 0; hi < live.size(); ++hi) {
      Hyp& hyp = live[hi];
      auto [weights, context] = scorer.step(hyp.h);
      // all emissions from this hypothesis share one state update
      Tensor x = concat(nullptr, embed_one(nullptr, hyp.prev_token, model.embedding),
                        context);
      auto [h2, c2] = lstm_step(nullptr, x, hyp.h, hyp.c, model.ptr_cell);
      hyp.h = h2;
      hyp.c = c2;
      for (std::size_t e = 0; e <= M; ++e) {
        if (opts.no_repeat && e < M &&
            std::find(hyp.positions.begin(), hyp.positions.end(), e) !=
                hyp.positions.end())
          continue;
        double w = weights.at(e);
        double lp = hyp.lp + std::log(std::max(w, 1e-300));
        std::vector<std::size_t> pos = hyp.positions;
        if (e < M) pos.push_back(e);
        cands.push_back({hi, e, lp, std::move(pos)});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      return detail::hyp_better(a.lp, a.positions, b.lp, b.positions);
    });
    if (cands.size() > opts.beam_width) cands.resize(opts.beam_width);

    std::vector<Hyp> next_live;
    for (Cand& c : cands) {
      if (c.emission == M) {
        finished.push_back({std::move(c.positions), c.lp});
      } else {
        const Hyp& parent = live[c.hyp_index];
        next_live.push_back(
            {std::move(c.positions), parent.h, parent.c, source[c.emission], c.lp});
      }
    }
    live = std::move(next_live);
  }

  if (!finished.empty()) {
    const Done* best = &finished[0];
    for (const Done& d : finished) {
      double sb = detail::hyp_score(best->lp, best->positions.size(), opts.length_normalize);
      double sd = detail::hyp_score(d.lp, d.positions.size(), opts.length_normalize);
      if (detail::hyp_better(sd, d.positions, sb, best->positions)) best = &d;
    }
    return {best->positions, best->lp, true};
  }
  const Hyp* best = &live[0];
  for (const Hyp& h : live)
    if (detail::hyp_better(h.lp, h.positions, best->lp, best->positions)) best = &h;
  return {best->positions, best->lp, false};
}

// Argmax decoding; ties resolve to the lowest index. Kept independent of
// beam_search so the two can cross-check each other at width 1.
inline DecodeResult greedy_decode(const MtlModel& model,
                                  const std::vector<std::size_t>& source,
                                  std::size_t max_steps = 12,
                                  bool no_repeat = false) {
  if (max_steps < 1) throw ContractError("greedy_decode: max_steps must be >= 1");
  if (source.empty()) throw ContractError("greedy_decode: empty source");

  EncoderStates enc = model.encode(nullptr, source);
  AttentionScorer scorer = model.pointer_scorer(nullptr, enc);
  const std::size_t M = source.size();

  DecodeResult res;
  Tensor h = enc.final_h, c = enc.final_c;
  std::size_t prev = Vocab::kBos;
  for (std::size_t step = 0; step < max_steps; ++step) {
    auto [weights, context] = scorer.step(h);
    Tensor x = concat(nullptr, embed_one(nullptr, prev, model.embedding), context);
    auto [h2, c2] = lstm_step(nullptr, x, h, c, model.ptr_cell);
    h = h2;
    c = c2;
    std::size_t best = M + 1;
    for (std::size_t e = 0; e <= M; ++e) {
      if (no_repeat && e < M &&
          std::find(res.positions.begin(), res.positions.end(), e) !=
              res.positions.end())
        continue;
      if (best > M || weights.at(e) > weights.at(best)) best = e;
    }
    res.log_prob += std::log(std::max(weights.at(best), 1e-300));
    if (best == M) {
      res.finished = true;
      break;
    }
    res.positions.push_back(best);
    prev = source[best];
  }
  return res;
}

// Maps emitted positions back to characters of the original title.
inline std::u32string positions_to_text(const std::u32string& source,
                                        const std::vector<std::size_t>& positions) {
  std::u32string out;
  out.reserve(positions.size());
  for (std::size_t p : positions) out.push_back(source.at(p));
  return out;
}

}  // namespace titlecut
