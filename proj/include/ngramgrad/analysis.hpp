#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ngramgrad/autodiff.hpp"
#include "ngramgrad/corpus.hpp"
#include "ngramgrad/error.hpp"
#include "ngramgrad/metrics.hpp"
#include "ngramgrad/probloss.hpp"
#include "ngramgrad/seq2seq.hpp"
#include "ngramgrad/training.hpp"

namespace ngramgrad {

/// Sample Pearson correlation.
inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error("pearson: lengths differ");
  if (xs.size() < 2) throw Error("pearson: need at least 2 samples");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("pearson: zero variance, coefficient undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct CorrelationRow {
  std::size_t id = 0;
  double gleu = 0.0;
  double pgleu = 0.0;

  bool operator==(const CorrelationRow&) const = default;
};

struct CorrelationReport {
  std::vector<CorrelationRow> rows;
  double coefficient = 0.0;

  std::size_t sample_count() const { return rows.size(); }
  bool operator==(const CorrelationReport&) const = default;
};

inline double coefficient_of(const std::vector<CorrelationRow>& rows) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const CorrelationRow& r : rows) {
    xs.push_back(r.gleu);
    ys.push_back(r.pgleu);
  }
  return pearson(xs, ys);
}

/// Greedy-decodes `samples` pairs drawn without replacement and scores each
/// hypothesis with GLEU and P-GLEU. Empty hypotheses are dropped. With
/// `unit_probs` every token probability is replaced by the constant 1.
inline CorrelationReport correlate(ModelParams& params, const ParallelCorpus& corpus,
                                   std::size_t samples, std::uint64_t seed,
                                   bool unit_probs = false) {
  if (samples > corpus.size()) {
    throw Error("correlate: " + std::to_string(samples) + " samples requested from " +
                std::to_string(corpus.size()) + " pairs");
  }
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(samples);

  CorrelationReport report;
  Tape tape;
  for (std::size_t id : order) {
    const SentencePair& pair = corpus.pairs[id];
    tape.clear();
    Seq2Seq model(tape, params);
    ProbSequence hyp = to_prob_sequence(greedy_steps(model, pair.source));
    if (hyp.size() == 0) continue;
    if (unit_probs) {
      for (Var& p : hyp.probs) p = tape.constant(1.0);
    }
    report.rows.push_back({id, gleu(hyp.tokens, pair.target), p_gleu(tape, hyp, pair.target).item()});
  }
  if (report.rows.size() < 2) throw Error("correlate: fewer than 2 valid samples");
  report.coefficient = coefficient_of(report.rows);
  return report;
}

/// Scatter data as `id,gleu,pgleu` rows with round-trip precision.
inline void write_scatter_csv(std::ostream& out, const CorrelationReport& report) {
  out << "id,gleu,pgleu\n";
  for (const CorrelationRow& r : report.rows) {
    out << r.id << ',' << format_double(r.gleu) << ',' << format_double(r.pgleu) << '\n';
  }
}

inline CorrelationReport read_scatter_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "id,gleu,pgleu") throw Error("scatter csv: bad header");
  CorrelationReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, g, p;
    if (!std::getline(fields, id, ',') || !std::getline(fields, g, ',') ||
        !std::getline(fields, p)) {
      throw Error("scatter csv: bad row '" + line + "'");
    }
    report.rows.push_back({std::stoul(id), std::stod(g), std::stod(p)});
  }
  if (report.rows.size() >= 2) report.coefficient = coefficient_of(report.rows);
  return report;
}

}  // namespace ngramgrad
