#pragma once

// MLE pretraining, probabilistic n-gram finetuning and greedy evaluation.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "ngramgrad/autodiff.hpp"
#include "ngramgrad/checkpoint.hpp"
#include "ngramgrad/corpus.hpp"
#include "ngramgrad/error.hpp"
#include "ngramgrad/metrics.hpp"
#include "ngramgrad/optim.hpp"
#include "ngramgrad/probloss.hpp"
#include "ngramgrad/seq2seq.hpp"

namespace ngramgrad {

enum class Strategy { kTeacherForcing, kGreedy };

inline Strategy parse_strategy(const std::string& name) {
  if (name == "greedy") return Strategy::kGreedy;
  if (name == "teacher_forcing") return Strategy::kTeacherForcing;
  throw ConfigError("unknown strategy '" + name + "' (expected greedy or teacher_forcing)");
}

inline const char* strategy_name(Strategy s) {
  return s == Strategy::kGreedy ? "greedy" : "teacher_forcing";
}

struct TrainConfig {
  /// Vocabulary sizes are taken from the corpus.
  ModelConfig model;
  OptimizerConfig optimizer;
  Objective objective = Objective::parse("ce");
  Strategy strategy = Strategy::kGreedy;
  std::size_t batch_size = 40;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  /// Output-layer dropout, used by pretraining only.
  double dropout = 0.5;
  double init_scale = 0.1;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 5.0;
  std::size_t evals_per_epoch = 2;
  /// Minimum dev BLEU of the starting checkpoint for finetuning.
  double finetune_threshold = 0.5;
  /// When set, the best checkpoint so far is written here after every improvement.
  std::optional<std::filesystem::path> checkpoint_path;

  void validate() const {
    optimizer.validate();
    if (batch_size == 0) throw ConfigError("batch must be >= 1");
    if (evals_per_epoch == 0) throw ConfigError("eval_per_epoch must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(init_scale > 0.0)) throw ConfigError("init_scale must be > 0");
    if (clip_norm < 0.0) throw ConfigError("clip must be >= 0");
  }
};

struct CurvePoint {
  std::size_t step = 0;
  double epoch = 0.0;
  double dev_bleu = 0.0;
  /// Mean per-sentence training loss since the previous point; absent at step 0.
  std::optional<double> train_loss;

  bool operator==(const CurvePoint&) const = default;
};

struct LearningCurve {
  std::vector<CurvePoint> points;

  bool operator==(const LearningCurve&) const = default;
};

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// CSV with header `step,epoch,split,metric,value`.
inline void write_curve_csv(std::ostream& out, const LearningCurve& curve) {
  out << "step,epoch,split,metric,value\n";
  for (const CurvePoint& p : curve.points) {
    if (p.train_loss) {
      out << p.step << ',' << format_double(p.epoch) << ",train,loss,"
          << format_double(*p.train_loss) << '\n';
    }
    out << p.step << ',' << format_double(p.epoch) << ",dev,bleu," << format_double(p.dev_bleu)
        << '\n';
  }
}

struct TrainResult {
  Checkpoint best;
  LearningCurve curve;
  double best_dev_bleu = 0.0;
  /// Finetuning only: hypotheses too short for the objective.
  std::size_t skipped_sentences = 0;
  std::size_t steps = 0;
};

/// splitmix64 of a seed combined with a stream tag and an index.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::uint64_t z = seed * 0x9e3779b97f4a7c15ULL + stream * 0xd1b54a32d192ed03ULL + index;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Greedy translations with dropout off.
inline std::vector<StepOutput> greedy_steps(Seq2Seq& model, std::span<const TokenId> source) {
  EncoderStates enc = model.encode(source);
  return model.decode_greedy(enc, greedy_max_length(source.size()));
}

inline TokenSequence translate(ModelParams& params, std::span<const TokenId> source) {
  Tape tape;
  Seq2Seq model(tape, params);
  return tokens_of(greedy_steps(model, source));
}

struct EvalRecord {
  std::size_t id = 0;
  TokenSequence hyp;
  TokenSequence ref;
  double bleu = 0.0;

  bool operator==(const EvalRecord&) const = default;
};

struct EvalReport {
  double corpus_bleu = 0.0;
  std::vector<EvalRecord> records;

  bool operator==(const EvalReport&) const = default;
};

inline EvalReport evaluate(ModelParams& params, const ParallelCorpus& corpus) {
  if (corpus.empty()) throw Error("evaluate: empty test set");
  EvalReport report;
  std::vector<ScoredPair> scored;
  scored.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const SentencePair& p = corpus.pairs[i];
    TokenSequence hyp = translate(params, p.source);
    report.records.push_back({i, hyp, p.target, bleu(hyp, p.target)});
    scored.push_back({std::move(hyp), p.target});
  }
  report.corpus_bleu = corpus_bleu(scored);
  return report;
}

/// Rejects a checkpoint whose model fingerprint differs from `expected`'s.
inline EvalReport evaluate(const Checkpoint& ckpt, const ModelConfig& expected,
                           const ParallelCorpus& corpus) {
  if (ckpt.fingerprint() != model_fingerprint(expected)) {
    throw ConfigError("checkpoint fingerprint " + ckpt.fingerprint() +
                      " does not match configuration fingerprint " + model_fingerprint(expected));
  }
  ModelParams params = ckpt.params;
  return evaluate(params, corpus);
}

inline double dev_bleu(ModelParams& params, const ParallelCorpus& dev) {
  return evaluate(params, dev).corpus_bleu;
}

namespace detail {

/// Batch indices (1-based, within an epoch) after which the dev set is scored.
inline std::vector<std::size_t> eval_points(std::size_t num_batches, std::size_t per_epoch) {
  std::vector<std::size_t> points;
  for (std::size_t k = 1; k <= per_epoch; ++k) {
    const std::size_t at = (k * num_batches + per_epoch - 1) / per_epoch;
    if (at > 0 && (points.empty() || points.back() != at)) points.push_back(at);
  }
  return points;
}

inline ModelConfig with_vocab(ModelConfig model, const CorpusSplits& data) {
  model.source_vocab = data.train.source_vocab.size();
  model.target_vocab = data.train.target_vocab.size();
  return model;
}

// Shared epoch/eval/checkpoint loop. `batch_loss_fn` records the (mean)
// loss of one batch on the tape and returns it with the number of skipped rows.
template <typename BatchLossFn>
TrainResult run_training(const TrainConfig& config, const CorpusSplits& data, ModelParams params,
                         OptimizerState opt, std::uint64_t stream, BatchLossFn batch_loss_fn) {
  if (data.train.empty()) throw Error("training: empty training split");
  if (data.dev.empty()) throw Error("training: empty dev split");
  TrainResult result;
  result.best_dev_bleu = dev_bleu(params, data.dev);
  result.best = Checkpoint{params, opt};
  result.curve.points.push_back({0, 0.0, result.best_dev_bleu, std::nullopt});
  if (config.checkpoint_path) save_checkpoint(*config.checkpoint_path, result.best);

  Tape tape;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    BatchStream stream_of_batches(data.train, config.batch_size,
                                  derive_seed(config.seed, stream, epoch));
    const std::size_t num_batches = stream_of_batches.num_batches();
    const std::vector<std::size_t> evals = eval_points(num_batches, config.evals_per_epoch);
    std::size_t next_eval = 0;
    double loss_sum = 0.0;
    std::size_t loss_batches = 0;
    std::size_t batch_index = 0;
    while (std::optional<Batch> batch = stream_of_batches.next()) {
      ++batch_index;
      tape.clear();
      params.zero_grad();
      const auto [loss, skipped] = batch_loss_fn(tape, params, *batch, step);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw DivergenceError("non-finite loss at step " + std::to_string(step + 1));
      }
      tape.backward(loss);
      clip_grad_norm(params.params(), config.clip_norm);
      optimizer_step(params.params(), opt, config.optimizer);
      ++step;
      result.skipped_sentences += skipped;
      loss_sum += value;
      ++loss_batches;

      if (next_eval < evals.size() && batch_index == evals[next_eval]) {
        ++next_eval;
        const double bleu_now = dev_bleu(params, data.dev);
        const double epoch_pos =
            static_cast<double>(epoch) +
            static_cast<double>(batch_index) / static_cast<double>(num_batches);
        result.curve.points.push_back(
            {step, epoch_pos, bleu_now, loss_sum / static_cast<double>(loss_batches)});
        loss_sum = 0.0;
        loss_batches = 0;
        if (bleu_now > result.best_dev_bleu) {
          result.best_dev_bleu = bleu_now;
          result.best = Checkpoint{params, opt};
          if (config.checkpoint_path) save_checkpoint(*config.checkpoint_path, result.best);
        }
      }
    }
  }
  result.steps = step;
  return result;
}

struct StepLoss {
  Var loss;
  std::size_t skipped = 0;
};

}  // namespace detail

/// Cross-entropy training with teacher forcing; keeps the best-dev-BLEU parameters.
/// Starts from `resume` when given, otherwise from a seeded uniform initialisation.
inline TrainResult pretrain_mle(const TrainConfig& config, const CorpusSplits& data,
                                const Checkpoint* resume = nullptr) {
  config.validate();
  const ModelConfig model_config = detail::with_vocab(config.model, data);
  ModelParams params(model_config);
  OptimizerState opt = make_optimizer_state(config.optimizer.kind, params.params());
  if (resume) {
    if (resume->fingerprint() != model_fingerprint(model_config)) {
      throw ConfigError("resume checkpoint does not match the model configuration");
    }
    params = resume->params;
    if (!resume->optimizer.empty() && resume->optimizer.kind == config.optimizer.kind) {
      opt = resume->optimizer;
    }
  } else {
    params.init_uniform(derive_seed(config.seed, 1, 0), config.init_scale);
  }
  std::mt19937_64 dropout_rng(derive_seed(config.seed, 2, 0));

  auto loss_fn = [&](Tape& tape, ModelParams& p, const Batch& batch, std::size_t) {
    Seq2Seq model(tape, p, Dropout{config.dropout, &dropout_rng});
    std::optional<Var> total;
    for (std::size_t row = 0; row < batch.batch_size; ++row) {
      const SentencePair pair = batch.pair(row);
      EncoderStates enc = model.encode(pair.source);
      const TokenSequence target = with_eos(pair.target);
      const std::vector<StepOutput> steps = model.decode_teacher_forced(enc, target);
      Var ce = cross_entropy_loss(steps, target);
      total = total ? *total + ce : ce;
    }
    return detail::StepLoss{scale(*total, 1.0 / static_cast<double>(batch.batch_size)), 0};
  };
  return detail::run_training(config, data, std::move(params), std::move(opt), 3, loss_fn);
}

/// Minimises the negated probabilistic objective, decoding hypotheses by the
/// configured strategy. Keeps the best-dev-BLEU parameters, the start included.
inline TrainResult finetune(const TrainConfig& config, const CorpusSplits& data,
                            const Checkpoint& start) {
  config.validate();
  if (config.objective.kind == Objective::Kind::kCrossEntropy) {
    throw ConfigError("finetune: objective ce is not a sequence-level objective; use train");
  }
  const ModelConfig model_config = detail::with_vocab(config.model, data);
  if (start.fingerprint() != model_fingerprint(model_config)) {
    throw ConfigError("checkpoint fingerprint " + start.fingerprint() +
                      " does not match configuration fingerprint " +
                      model_fingerprint(model_config));
  }
  ModelParams params = start.params;
  const double start_bleu = dev_bleu(params, data.dev);
  if (start_bleu < config.finetune_threshold) {
    throw Error("finetune: starting dev BLEU " + format_double(start_bleu) +
                " is below the threshold " + format_double(config.finetune_threshold));
  }
  OptimizerState opt = make_optimizer_state(config.optimizer.kind, params.params());

  auto loss_fn = [&](Tape& tape, ModelParams& p, const Batch& batch, std::size_t) {
    Seq2Seq model(tape, p);
    std::vector<ProbExample> examples;
    examples.reserve(batch.batch_size);
    for (std::size_t row = 0; row < batch.batch_size; ++row) {
      const SentencePair pair = batch.pair(row);
      EncoderStates enc = model.encode(pair.source);
      const std::vector<StepOutput> steps =
          config.strategy == Strategy::kGreedy
              ? model.decode_greedy(enc, greedy_max_length(pair.source.size()))
              : model.decode_teacher_forced(enc, pair.target);
      examples.push_back({to_prob_sequence(steps), pair.target});
    }
    BatchLoss bl = batch_loss(tape, examples, config.objective);
    return detail::StepLoss{scale(bl.loss, 1.0 / static_cast<double>(batch.batch_size)),
                            bl.skipped};
  };
  TrainResult result =
      detail::run_training(config, data, std::move(params), std::move(opt), 4, loss_fn);
  // No dev improvement: the start checkpoint is returned unchanged.
  if (result.best.params.same_values(start.params)) result.best = start;
  return result;
}

}  // namespace ngramgrad
