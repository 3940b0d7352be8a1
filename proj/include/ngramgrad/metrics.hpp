#pragma once

// Hard n-gram statistics and the sentence/corpus metrics built on them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ngramgrad/error.hpp"

namespace ngramgrad {

using TokenId = std::uint32_t;
/// Content tokens only; sentinels and padding are stripped before scoring.
using TokenSequence = std::vector<TokenId>;
using Ngram = std::vector<TokenId>;

/// Floor applied to each precision inside the log of BLEU.
inline constexpr double kBleuSmoothing = 1e-9;
inline constexpr std::size_t kGleuMaxOrder = 4;

template <typename Count>
struct NgramTable {
  std::size_t order = 0;
  std::map<Ngram, Count> counts;

  Count total() const {
    Count t{};
    for (const auto& [gram, c] : counts) t += c;
    return t;
  }
  Count at(const Ngram& gram) const {
    auto it = counts.find(gram);
    return it == counts.end() ? Count{} : it->second;
  }
  bool operator==(const NgramTable&) const = default;
};

using CountTable = NgramTable<std::int64_t>;

inline CountTable ngram_counts(std::span<const TokenId> seq, std::size_t n) {
  if (n == 0) throw Error("ngram_counts: order must be >= 1");
  CountTable table;
  table.order = n;
  if (seq.size() < n) return table;
  for (std::size_t t = 0; t + n <= seq.size(); ++t) {
    ++table.counts[Ngram(seq.begin() + t, seq.begin() + t + n)];
  }
  return table;
}

/// Per hypothesis gram, min(hypothesis count, reference count).
inline CountTable clipped_matches(const CountTable& hyp, const CountTable& ref) {
  if (hyp.order != ref.order) {
    throw Error("clipped_matches: order mismatch " + std::to_string(hyp.order) + " vs " +
                std::to_string(ref.order));
  }
  CountTable out;
  out.order = hyp.order;
  for (const auto& [gram, c] : hyp.counts) out.counts[gram] = std::min(c, ref.at(gram));
  return out;
}

/// Matched/hypothesis/reference gram totals for one order.
struct MatchStats {
  std::int64_t matched = 0;
  std::int64_t hyp_total = 0;
  std::int64_t ref_total = 0;

  MatchStats& operator+=(const MatchStats& o) {
    matched += o.matched;
    hyp_total += o.hyp_total;
    ref_total += o.ref_total;
    return *this;
  }
};

inline MatchStats match_stats(std::span<const TokenId> hyp, std::span<const TokenId> ref,
                              std::size_t n) {
  const CountTable h = ngram_counts(hyp, n);
  const CountTable r = ngram_counts(ref, n);
  return {clipped_matches(h, r).total(), h.total(), r.total()};
}

inline double safe_ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

inline PrecisionRecall precision_recall(std::span<const TokenId> hyp, std::span<const TokenId> ref,
                                        std::size_t n) {
  const MatchStats s = match_stats(hyp, ref, n);
  return {safe_ratio(s.matched, s.hyp_total), safe_ratio(s.matched, s.ref_total)};
}

/// 1 when the hypothesis is not shorter, exp(1 - r/c) otherwise, 0 for an
/// empty hypothesis.
inline double brevity_penalty(std::size_t hyp_len, std::size_t ref_len) {
  if (ref_len == 0) throw Error("brevity_penalty: reference length must be >= 1");
  if (hyp_len == 0) return 0.0;
  if (hyp_len >= ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

/// Uniform 1/N weights when `weights` is empty; otherwise N weights summing to 1.
inline std::vector<double> bleu_weights(std::size_t max_order, std::span<const double> weights) {
  if (max_order == 0) throw Error("bleu: max order must be >= 1");
  if (weights.empty()) return std::vector<double>(max_order, 1.0 / static_cast<double>(max_order));
  if (weights.size() != max_order) {
    throw Error("bleu: expected " + std::to_string(max_order) + " weights, got " +
                std::to_string(weights.size()));
  }
  double total = 0.0;
  for (double w : weights) total += w;
  if (std::abs(total - 1.0) > 1e-9) throw Error("bleu: weights must sum to 1");
  return {weights.begin(), weights.end()};
}

inline double bleu(std::span<const TokenId> hyp, std::span<const TokenId> ref,
                   std::size_t max_order = 4, std::span<const double> weights = {}) {
  const std::vector<double> w = bleu_weights(max_order, weights);
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_order; ++n) {
    const double p = precision_recall(hyp, ref, n).precision;
    log_sum += w[n - 1] * std::log(std::max(p, kBleuSmoothing));
  }
  return brevity_penalty(hyp.size(), ref.size()) * std::exp(log_sum);
}

/// Totals pooled over orders 1..max_order.
inline MatchStats pooled_stats(std::span<const TokenId> hyp, std::span<const TokenId> ref,
                               std::size_t max_order = kGleuMaxOrder) {
  MatchStats pooled;
  for (std::size_t n = 1; n <= max_order; ++n) pooled += match_stats(hyp, ref, n);
  return pooled;
}

/// Pooled 1..max_order hard precision (what P-GLEU reduces to at unit probabilities).
inline double pooled_precision(std::span<const TokenId> hyp, std::span<const TokenId> ref,
                               std::size_t max_order = kGleuMaxOrder) {
  const MatchStats s = pooled_stats(hyp, ref, max_order);
  return safe_ratio(s.matched, s.hyp_total);
}

/// Pools only the orders the hypothesis has, so a short hypothesis is not
/// charged for reference n-grams it could never produce.
inline double gleu(std::span<const TokenId> hyp, std::span<const TokenId> ref) {
  const MatchStats s = pooled_stats(hyp, ref, std::min(kGleuMaxOrder, hyp.size()));
  return std::min(safe_ratio(s.matched, s.hyp_total), safe_ratio(s.matched, s.ref_total));
}

struct ScoredPair {
  TokenSequence hyp;
  TokenSequence ref;
};

/// Micro-averaged BLEU: clipped and hypothesis counts pooled per order over
/// the corpus, brevity penalty from the summed lengths.
inline double corpus_bleu(std::span<const ScoredPair> pairs, std::size_t max_order = 4) {
  if (pairs.empty()) throw Error("corpus_bleu: empty corpus");
  std::vector<MatchStats> per_order(max_order);
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
  for (const ScoredPair& p : pairs) {
    hyp_len += p.hyp.size();
    ref_len += p.ref.size();
    for (std::size_t n = 1; n <= max_order; ++n) per_order[n - 1] += match_stats(p.hyp, p.ref, n);
  }
  const std::vector<double> w = bleu_weights(max_order, {});
  double log_sum = 0.0;
  for (std::size_t n = 0; n < max_order; ++n) {
    const double p = safe_ratio(per_order[n].matched, per_order[n].hyp_total);
    log_sum += w[n] * std::log(std::max(p, kBleuSmoothing));
  }
  return brevity_penalty(hyp_len, ref_len) * std::exp(log_sum);
}

}  // namespace ngramgrad
