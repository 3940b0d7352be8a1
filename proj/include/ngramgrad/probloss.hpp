#pragma once

// Probabilistic n-gram matching. Each emitted token counts with its model
// probability instead of 1, so n-gram counts, clipped matches and the
// precision-based objectives built on them are differentiable with respect to
// those probabilities. Token identities and the brevity penalty are constants.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ngramgrad/autodiff.hpp"
#include "ngramgrad/error.hpp"
#include "ngramgrad/metrics.hpp"

namespace ngramgrad {

/// Emitted tokens paired with p(token | prefix, source) as scalar Vars.
struct ProbSequence {
  TokenSequence tokens;
  std::vector<Var> probs;

  std::size_t size() const { return tokens.size(); }
};

struct ProbNgramTable {
  std::size_t order = 0;
  std::map<Ngram, Var> counts;
};

/// Sums over positions of the product of the probabilities under each gram.
inline ProbNgramTable prob_ngram_counts(const ProbSequence& seq, std::size_t n) {
  if (n == 0) throw Error("prob_ngram_counts: order must be >= 1");
  if (seq.tokens.size() != seq.probs.size()) {
    throw Error("prob_ngram_counts: " + std::to_string(seq.tokens.size()) + " tokens but " +
                std::to_string(seq.probs.size()) + " probabilities");
  }
  ProbNgramTable table;
  table.order = n;
  if (seq.size() < n) return table;
  for (std::size_t t = 0; t + n <= seq.size(); ++t) {
    Var product = seq.probs[t];
    for (std::size_t i = 1; i < n; ++i) product = product * seq.probs[t + i];
    Ngram gram(seq.tokens.begin() + t, seq.tokens.begin() + t + n);
    auto [it, inserted] = table.counts.try_emplace(std::move(gram), product);
    if (!inserted) it->second = it->second + product;
  }
  return table;
}

/// min(probabilistic hypothesis count, hard reference count) per gram. The
/// reference count is a constant; unmatched grams become a constant 0.
inline ProbNgramTable prob_clipped_matches(Tape& tape, const ProbNgramTable& hyp,
                                           const CountTable& ref) {
  if (hyp.order != ref.order) {
    throw Error("prob_clipped_matches: order mismatch " + std::to_string(hyp.order) + " vs " +
                std::to_string(ref.order));
  }
  ProbNgramTable out;
  out.order = hyp.order;
  for (const auto& [gram, count] : hyp.counts) {
    const std::int64_t limit = ref.at(gram);
    out.counts.emplace(gram, limit == 0 ? tape.constant(0.0)
                                        : min(count, tape.constant(static_cast<double>(limit))));
  }
  return out;
}

/// Clipped and total probabilistic counts for one order. Both are unset when
/// the hypothesis has no gram of that order.
struct ProbMatchTotals {
  std::optional<Var> matched;
  std::optional<Var> total;
};

inline Var sum_counts(const ProbNgramTable& table) {
  std::optional<Var> acc;
  for (const auto& [gram, c] : table.counts) acc = acc ? *acc + c : c;
  return *acc;
}

inline ProbMatchTotals prob_match_totals(Tape& tape, const ProbSequence& seq,
                                         std::span<const TokenId> ref, std::size_t n) {
  const ProbNgramTable counts = prob_ngram_counts(seq, n);
  if (counts.counts.empty()) return {};
  const ProbNgramTable clipped = prob_clipped_matches(tape, counts, ngram_counts(ref, n));
  return {sum_counts(clipped), sum_counts(counts)};
}

/// Probabilistic precision of order n; a constant 0 when the hypothesis is
/// shorter than n.
inline Var prob_precision(Tape& tape, const ProbSequence& seq, std::span<const TokenId> ref,
                          std::size_t n) {
  const ProbMatchTotals t = prob_match_totals(tape, seq, ref, n);
  if (!t.total) return tape.constant(0.0);
  return *t.matched / *t.total;
}

/// Single-order probabilistic precision (P-P2 for n = 2).
inline Var p_pn(Tape& tape, const ProbSequence& seq, std::span<const TokenId> ref, std::size_t n) {
  return prob_precision(tape, seq, ref, n);
}

inline Var p_bleu(Tape& tape, const ProbSequence& seq, std::span<const TokenId> ref,
                  std::size_t max_order = 4, std::span<const double> weights = {}) {
  const std::vector<double> w = bleu_weights(max_order, weights);
  const double bp = brevity_penalty(seq.size(), ref.size());
  if (bp == 0.0) return tape.constant(0.0);
  std::optional<Var> log_sum;
  for (std::size_t n = 1; n <= max_order; ++n) {
    Var p = prob_precision(tape, seq, ref, n);
    if (p.item() < kBleuSmoothing) p = tape.constant(kBleuSmoothing);
    Var term = scale(log(p), w[n - 1]);
    log_sum = log_sum ? *log_sum + term : term;
  }
  return scale(exp(*log_sum), bp);
}

/// Probabilistic precision with 1..4-gram counts pooled into one quotient.
inline Var p_gleu(Tape& tape, const ProbSequence& seq, std::span<const TokenId> ref) {
  std::optional<Var> matched;
  std::optional<Var> total;
  for (std::size_t n = 1; n <= kGleuMaxOrder; ++n) {
    const ProbMatchTotals t = prob_match_totals(tape, seq, ref, n);
    if (!t.total) break;
    matched = matched ? *matched + *t.matched : *t.matched;
    total = total ? *total + *t.total : *t.total;
  }
  if (!total) return tape.constant(0.0);
  return *matched / *total;
}

struct Objective {
  enum class Kind { kCrossEntropy, kPBleu, kPGleu, kPn };

  Kind kind = Kind::kPn;
  /// n for P-Pn, the maximum order N for P-BLEU.
  std::size_t order = 2;

  static Objective parse(const std::string& name) {
    if (name == "ce") return {Kind::kCrossEntropy, 0};
    if (name == "p-bleu") return {Kind::kPBleu, 4};
    if (name == "p-gleu") return {Kind::kPGleu, kGleuMaxOrder};
    if (name.size() > 3 && name.rfind("p-p", 0) == 0) {
      const std::string digits = name.substr(3);
      if (digits.find_first_not_of("0123456789") == std::string::npos) {
        const std::size_t n = std::stoul(digits);
        if (n >= 1) return {Kind::kPn, n};
      }
    }
    throw Error("unknown objective '" + name + "' (expected ce, p-bleu, p-gleu or p-p<n>)");
  }

  std::string name() const {
    switch (kind) {
      case Kind::kCrossEntropy: return "ce";
      case Kind::kPBleu: return "p-bleu";
      case Kind::kPGleu: return "p-gleu";
      case Kind::kPn: return "p-p" + std::to_string(order);
    }
    return "?";
  }

  /// Hypotheses shorter than this carry no signal and are skipped.
  std::size_t min_length() const { return kind == Kind::kPn ? order : 1; }
};

inline Var objective_value(Tape& tape, const ProbSequence& seq, std::span<const TokenId> ref,
                           const Objective& objective) {
  switch (objective.kind) {
    case Objective::Kind::kPBleu: return p_bleu(tape, seq, ref, objective.order);
    case Objective::Kind::kPGleu: return p_gleu(tape, seq, ref);
    case Objective::Kind::kPn: return p_pn(tape, seq, ref, objective.order);
    case Objective::Kind::kCrossEntropy: break;
  }
  throw Error("objective_value: cross-entropy is not a probabilistic n-gram objective");
}

struct ProbExample {
  ProbSequence hyp;
  TokenSequence ref;
};

struct BatchLoss {
  Var loss;
  std::size_t used = 0;
  std::size_t skipped = 0;
};

/// Negated sum of the objective over the batch. Degenerate hypotheses
/// (shorter than the objective's minimum order) contribute 0 and are counted.
inline BatchLoss batch_loss(Tape& tape, std::span<const ProbExample> batch,
                            const Objective& objective) {
  if (batch.empty()) throw Error("batch_loss: empty batch");
  BatchLoss out;
  std::optional<Var> total;
  for (const ProbExample& ex : batch) {
    if (ex.hyp.size() < objective.min_length()) {
      ++out.skipped;
      continue;
    }
    Var v = objective_value(tape, ex.hyp, ex.ref, objective);
    total = total ? *total + v : v;
    ++out.used;
  }
  out.loss = total ? scale(*total, -1.0) : tape.constant(0.0);
  return out;
}

}  // namespace ngramgrad
