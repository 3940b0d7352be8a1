#pragma once

// Seeded random (hypothesis, probabilities, reference) batches and the
// finite-difference check of batch_loss over their probabilities.

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "ngramgrad/autodiff.hpp"
#include "ngramgrad/metrics.hpp"
#include "ngramgrad/probloss.hpp"

namespace ngramgrad {

struct RandomProbBatch {
  std::vector<TokenSequence> hyps;
  std::vector<TokenSequence> refs;
  /// Probabilities of every hypothesis token, concatenated, 1 x total.
  Matrix probs;
};

enum class RefMode {
  /// Drawn like the hypothesis, independently of it.
  kIndependent,
  /// The hypothesis with 30% of tokens redrawn and 0-2 tokens appended, so
  /// matched n-grams and active clips are common.
  kNoisyCopy,
};

/// Lengths uniform in [1, max_length], tokens uniform over `vocab` ids,
/// probabilities uniform in [0.05, 0.95].
inline RandomProbBatch make_random_batch(std::uint64_t seed, std::size_t sentences,
                                         std::size_t max_length, std::size_t vocab,
                                         RefMode mode = RefMode::kIndependent) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(1, max_length);
  std::uniform_int_distribution<TokenId> tok(0, static_cast<TokenId>(vocab - 1));
  std::uniform_real_distribution<double> prob(0.05, 0.95);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> extra(0, 2);
  RandomProbBatch b;
  std::vector<double> probs;
  for (std::size_t s = 0; s < sentences; ++s) {
    TokenSequence hyp(len(rng));
    TokenSequence ref(len(rng));
    for (TokenId& t : hyp) t = tok(rng);
    if (mode == RefMode::kIndependent) {
      for (TokenId& t : ref) t = tok(rng);
    } else {
      ref = hyp;
      for (TokenId& t : ref) {
        if (coin(rng) < 0.3) t = tok(rng);
      }
      for (std::size_t i = extra(rng); i > 0; --i) ref.push_back(tok(rng));
    }
    for (std::size_t i = 0; i < hyp.size(); ++i) probs.push_back(prob(rng));
    b.hyps.push_back(std::move(hyp));
    b.refs.push_back(std::move(ref));
  }
  b.probs = Matrix::row(std::move(probs));
  return b;
}

/// batch_loss of `batch` with its probabilities read from the 1 x total leaf `x`.
inline Var batch_loss_at(Tape& tape, Var x, const RandomProbBatch& batch,
                         const Objective& objective) {
  std::vector<ProbExample> examples;
  std::size_t k = 0;
  for (std::size_t s = 0; s < batch.hyps.size(); ++s) {
    ProbExample ex;
    ex.hyp.tokens = batch.hyps[s];
    for (std::size_t i = 0; i < batch.hyps[s].size(); ++i) ex.hyp.probs.push_back(element(x, 0, k++));
    ex.ref = batch.refs[s];
    examples.push_back(std::move(ex));
  }
  return batch_loss(tape, examples, objective).loss;
}

inline double check_batch_loss(const RandomProbBatch& batch, const Objective& objective,
                               double step) {
  return grad_check(
      [&](Tape& tape, Var x) { return batch_loss_at(tape, x, batch, objective); }, batch.probs,
      step);
}

}  // namespace ngramgrad
