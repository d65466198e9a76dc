#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "titlecut/corpus.hpp"
#include "titlecut/error.hpp"

namespace titlecut {

struct WeightedTerm {
  std::u32string text;
  TermKind kind;
  double weight = 0;      // nonnegative
  std::size_t cost = 0;   // character length of text
};

// Heuristic term weighting: Product > Brand > Modifier > Other by
// construction, with a small position decay for deterministic tie-breaking.
// The decay is capped below the smallest inter-kind gap so the kind ordering
// survives any input length.
inline double kind_base_weight(TermKind k) {
  switch (k) {
    case TermKind::Product: return 3.0;
    case TermKind::Brand: return 2.0;
    case TermKind::Modifier: return 1.0;
    case TermKind::Other: return 0.5;
  }
  return 0.5;
}

inline std::vector<WeightedTerm> heuristic_weights(
    const std::vector<std::pair<std::u32string, TermKind>>& tagged_terms) {
  std::vector<WeightedTerm> out;
  out.reserve(tagged_terms.size());
  for (std::size_t i = 0; i < tagged_terms.size(); ++i) {
    const auto& [text, kind] = tagged_terms[i];
    WeightedTerm t;
    t.text = text;
    t.kind = kind;
    t.cost = text.size();
    t.weight = kind_base_weight(kind) -
               0.01 * static_cast<double>(std::min<std::size_t>(i, 49));
    out.push_back(std::move(t));
  }
  return out;
}

// Longest token prefix whose total character count fits the budget; tokens
// are never split.
inline std::vector<std::u32string> truncate_title(
    const std::vector<std::u32string>& tokens, std::size_t limit) {
  std::vector<std::u32string> out;
  std::size_t used = 0;
  for (const auto& tok : tokens) {
    if (used + tok.size() > limit) break;
    used += tok.size();
    out.push_back(tok);
  }
  return out;
}

struct IlpInstance {
  std::vector<WeightedTerm> terms;
  std::size_t budget = 0;
};

struct IlpSolution {
  std::vector<std::size_t> selected;  // indices into terms, ascending
  double total_weight = 0;
  std::size_t total_cost = 0;
  bool relaxed = false;  // product rule dropped because it was infeasible

  std::u32string text(const IlpInstance& inst) const {
    std::u32string out;
    for (std::size_t i : selected) out += inst.terms[i].text;
    return out;
  }
};

namespace detail {

// Preference order shared by the exact solver and the brute-force oracle:
// higher weight first; on ties the selection whose first differing index is
// included wins (earlier positions win). This is exactly the order an
// include-branch-first depth-first search visits selections in.
inline bool selection_preferred(const std::vector<std::size_t>& a,
                                const std::vector<std::size_t>& b) {
  std::size_t ia = 0, ib = 0;
  while (ia < a.size() && ib < b.size()) {
    if (a[ia] == b[ib]) {
      ++ia;
      ++ib;
      continue;
    }
    return a[ia] < b[ib];
  }
  return ia < a.size();
}

inline bool selection_better(double w_a, const std::vector<std::size_t>& a,
                             double w_b, const std::vector<std::size_t>& b) {
  if (w_a != w_b) return w_a > w_b;
  return selection_preferred(a, b);
}

struct BnbContext {
  const IlpInstance* inst;
  bool product_required;
  std::vector<double> suffix_weight;   // max attainable weight from index i on
  std::vector<bool> product_in_suffix;
  std::vector<std::size_t> current;
  double current_weight = 0;  // incremental; only used for the bound
  std::size_t current_cost = 0;
  bool current_has_product = false;
  std::vector<std::size_t> best;
  double best_weight = 0;
  bool found = false;
};

// Fresh ascending-index summation so the solver and the brute-force oracle
// assign bit-identical values to identical selections.
inline double selection_weight(const IlpInstance& inst,
                               const std::vector<std::size_t>& selected) {
  double w = 0;
  for (std::size_t i : selected) w += inst.terms[i].weight;
  return w;
}

inline void bnb_search(BnbContext& ctx, std::size_t i) {
  const auto& terms = ctx.inst->terms;
  if (i == terms.size()) {
    if (ctx.product_required && !ctx.current_has_product) return;
    const double w = selection_weight(*ctx.inst, ctx.current);
    if (!ctx.found ||
        detail::selection_better(w, ctx.current, ctx.best_weight, ctx.best)) {
      ctx.found = true;
      ctx.best = ctx.current;
      ctx.best_weight = w;
    }
    return;
  }
  // bound: even taking every remaining term cannot strictly beat the best;
  // ties never replace the first-found optimum (DFS order = preference
  // order). The 1e-9 slack covers incremental-summation rounding.
  if (ctx.found &&
      ctx.current_weight + ctx.suffix_weight[i] <= ctx.best_weight - 1e-9)
    return;
  if (ctx.product_required && !ctx.current_has_product && !ctx.product_in_suffix[i])
    return;

  const WeightedTerm& t = terms[i];
  if (ctx.current_cost + t.cost <= ctx.inst->budget) {
    ctx.current.push_back(i);
    ctx.current_weight += t.weight;
    ctx.current_cost += t.cost;
    bool had_product = ctx.current_has_product;
    ctx.current_has_product = had_product || t.kind == TermKind::Product;
    bnb_search(ctx, i + 1);
    ctx.current_has_product = had_product;
    ctx.current_cost -= t.cost;
    ctx.current_weight -= t.weight;
    ctx.current.pop_back();
  }
  bnb_search(ctx, i + 1);
}

inline bool product_rule_feasible(const IlpInstance& inst) {
  bool any = false;
  std::size_t cheapest = 0;
  for (const WeightedTerm& t : inst.terms)
    if (t.kind == TermKind::Product) {
      if (!any || t.cost < cheapest) cheapest = t.cost;
      any = true;
    }
  if (!any) return false;  // rule vacuous
  return cheapest <= inst.budget;
}

inline bool has_product_term(const IlpInstance& inst) {
  for (const WeightedTerm& t : inst.terms)
    if (t.kind == TermKind::Product) return true;
  return false;
}

}  // namespace detail

// Exact weight-maximal subset under the character budget and the business
// rule "select at least one Product term when any exists". Depth-first
// branch and bound, include-branch first, so the first optimum found is the
// tie-break winner. When the cheapest Product term alone exceeds the budget
// the rule is dropped and the solution is flagged `relaxed`.
inline IlpSolution ilp_compress(const IlpInstance& inst) {
  for (const WeightedTerm& t : inst.terms) {
    if (t.weight < 0) throw ContractError("ilp_compress: negative term weight");
    if (t.cost == 0) throw ContractError("ilp_compress: zero-cost term");
  }
  const bool has_product = detail::has_product_term(inst);
  const bool feasible = detail::product_rule_feasible(inst);

  detail::BnbContext ctx;
  ctx.inst = &inst;
  ctx.product_required = has_product && feasible;
  const std::size_t n = inst.terms.size();
  ctx.suffix_weight.assign(n + 1, 0.0);
  ctx.product_in_suffix.assign(n + 1, false);
  for (std::size_t i = n; i-- > 0;) {
    ctx.suffix_weight[i] = ctx.suffix_weight[i + 1] + inst.terms[i].weight;
    ctx.product_in_suffix[i] = ctx.product_in_suffix[i + 1] ||
                               (inst.terms[i].kind == TermKind::Product &&
                                inst.terms[i].cost <= inst.budget);
  }
  detail::bnb_search(ctx, 0);

  IlpSolution sol;
  sol.selected = ctx.best;
  sol.total_weight = ctx.best_weight;
  for (std::size_t i : sol.selected) sol.total_cost += inst.terms[i].cost;
  sol.relaxed = has_product && !feasible;
  return sol;
}

// Exhaustive 2^n reference solver with the identical preference order.
// Only sensible for small instances; used to certify ilp_compress.
inline IlpSolution ilp_brute_force(const IlpInstance& inst) {
  const std::size_t n = inst.terms.size();
  if (n > 25) throw ContractError("ilp_brute_force: instance too large");
  const bool rule_active =
      detail::has_product_term(inst) && detail::product_rule_feasible(inst);

  IlpSolution best;
  bool found = false;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    std::vector<std::size_t> sel;
    double w = 0;
    std::size_t cost = 0;
    bool has_product = false;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (std::size_t{1} << i)) {
        sel.push_back(i);
        w += inst.terms[i].weight;
        cost += inst.terms[i].cost;
        has_product = has_product || inst.terms[i].kind == TermKind::Product;
      }
    if (cost > inst.budget) continue;
    if (rule_active && !has_product) continue;
    if (!found || detail::selection_better(w, sel, best.total_weight, best.selected)) {
      found = true;
      best.selected = sel;
      best.total_weight = w;
      best.total_cost = cost;
    }
  }
  best.relaxed = detail::has_product_term(inst) && !rule_active;
  return best;
}

}  // namespace titlecut
