#pragma once

// Command-line driver: gen-data, train, finetune, evaluate, correlate, gradcheck.
//
// Each run resolves defaults <- --config file <- --key flags, then writes its
// artifacts into <out>/<command>-<fingerprint>/ together with config.txt, the
// resolved configuration. <out> comes from --out, else $NGRAMGRAD_OUT, else "out".
// Exit codes: 0 success, 1 failure, 2 bad usage/config/missing file, 3 divergence.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ngramgrad/analysis.hpp"
#include "ngramgrad/checkpoint.hpp"
#include "ngramgrad/config.hpp"
#include "ngramgrad/corpus.hpp"
#include "ngramgrad/error.hpp"
#include "ngramgrad/gradcheck.hpp"
#include "ngramgrad/training.hpp"

namespace ngramgrad::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDivergence = 3;

inline std::vector<KeySpec> model_keys() {
  return {{"emb", "32", "embedding size"},
          {"hidden", "64", "recurrent hidden size"},
          {"attn", "64", "attention size"}};
}

inline std::vector<KeySpec> optimizer_keys(const std::string& lr) {
  return {{"optimizer", "adadelta", "sgd or adadelta"},
          {"lr", lr, "SGD step size / Adadelta multiplier"},
          {"rho", "0.95", "Adadelta decay"},
          {"eps", "1e-6", "Adadelta epsilon"},
          {"clip", "5", "global gradient-norm clip (0 disables)"},
          {"batch", "40", "minibatch size"},
          {"eval_per_epoch", "2", "dev evaluations per epoch"}};
}

inline const std::map<std::string, std::string>& command_help() {
  static const std::map<std::string, std::string> help{
      {"gen-data", "generate a synthetic parallel corpus"},
      {"train", "MLE pretraining with teacher forcing"},
      {"finetune", "finetune a checkpoint on a probabilistic n-gram objective"},
      {"evaluate", "corpus BLEU of greedy translations"},
      {"correlate", "Pearson correlation of GLEU and P-GLEU on sampled pairs"},
      {"gradcheck", "finite-difference check of the batch loss gradient"}};
  return help;
}

inline std::map<std::string, std::vector<KeySpec>> command_keys() {
  auto join = [](std::vector<KeySpec> a, const std::vector<KeySpec>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  std::map<std::string, std::vector<KeySpec>> keys;
  keys["gen-data"] = {{"task", "copy", "copy, reverse or cipher"},
                      {"size", "2000", "number of sentence pairs before splitting"},
                      {"min_len", "3", "minimum sentence length"},
                      {"max_len", "12", "maximum sentence length"},
                      {"vocab", "20", "number of content word types"},
                      {"seed", "1", "random seed"}};
  keys["train"] = join(join({{"data", "", "gen-data output directory"},
                             {"seed", "1", "random seed"},
                             {"epochs", "10", "training epochs"},
                             {"dropout", "0.5", "output-layer dropout"},
                             {"init_scale", "0.1", "uniform initialisation range"}},
                            model_keys()),
                       optimizer_keys("1.0"));
  keys["finetune"] = join(join({{"data", "", "gen-data output directory"},
                                {"checkpoint", "", "starting checkpoint"},
                                {"seed", "1", "random seed"},
                                {"epochs", "2", "finetuning epochs"},
                                {"objective", "p-p2", "p-bleu, p-gleu or p-p<n>"},
                                {"strategy", "greedy", "greedy or teacher_forcing"},
                                {"threshold", "0.5", "minimum starting dev BLEU"}},
                               model_keys()),
                          optimizer_keys("0.02"));
  keys["evaluate"] = join({{"data", "", "gen-data output directory"},
                           {"checkpoint", "", "checkpoint to evaluate"},
                           {"split", "test", "train, dev or test"}},
                          model_keys());
  keys["correlate"] = join({{"data", "", "gen-data output directory"},
                            {"checkpoint", "", "checkpoint to decode with"},
                            {"split", "train", "split to sample from"},
                            {"samples", "100", "number of sampled pairs"},
                            {"seed", "1", "sampling seed"},
                            {"unit_probs", "false", "replace token probabilities by 1"}},
                           model_keys());
  keys["gradcheck"] = {{"seed", "1", "random seed"},
                       {"objective", "p-p2", "p-bleu, p-gleu or p-p<n>"},
                       {"instances", "1", "number of random batches"},
                       {"sentences", "2", "sentences per batch"},
                       {"max_len", "8", "maximum sentence length"},
                       {"vocab", "10", "token types"},
                       {"step", "1e-5", "central-difference step"},
                       {"tolerance", "1e-4", "maximum accepted relative error"}};
  return keys;
}

struct RunContext {
  std::string command;
  Config config;
  std::filesystem::path run_dir;
  std::ostream* out = &std::cout;
};

namespace detail {

inline ModelConfig model_config(const Config& c, const CorpusSplits& data) {
  ModelConfig m;
  m.source_vocab = data.train.source_vocab.size();
  m.target_vocab = data.train.target_vocab.size();
  m.embedding = c.size("emb");
  m.hidden = c.size("hidden");
  m.attention = c.size("attn");
  return m;
}

inline std::filesystem::path required_path(const Config& c, const std::string& key) {
  const std::string& v = c.str(key);
  if (v.empty()) throw ConfigError("config key '" + key + "' is required");
  if (!std::filesystem::exists(v)) throw ConfigError("missing file " + v + " (key '" + key + "')");
  return v;
}

inline TrainConfig train_config(const Config& c, const CorpusSplits& data) {
  TrainConfig t;
  t.model = model_config(c, data);
  t.optimizer.kind = parse_optimizer(c.str("optimizer"));
  t.optimizer.lr = c.real("lr");
  t.optimizer.rho = c.real("rho");
  t.optimizer.eps = c.real("eps");
  t.clip_norm = c.real("clip");
  t.batch_size = c.size("batch");
  t.evals_per_epoch = c.size("eval_per_epoch");
  t.epochs = c.size("epochs");
  t.seed = c.u64("seed");
  return t;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

inline void write_training_outputs(const RunContext& ctx, const TrainResult& result) {
  save_checkpoint(ctx.run_dir / "model.ckpt", result.best);
  std::ofstream curve(ctx.run_dir / "curve.csv", std::ios::binary);
  write_curve_csv(curve, result.curve);
  *ctx.out << "best dev bleu " << format_double(result.best_dev_bleu) << "\n"
           << "checkpoint " << (ctx.run_dir / "model.ckpt").string() << "\n";
}

}  // namespace detail

inline int cmd_gen_data(const RunContext& ctx) {
  const Config& c = ctx.config;
  const ParallelCorpus corpus =
      gen_synthetic(parse_task(c.str("task")), c.size("size"),
                    {c.size("min_len"), c.size("max_len")}, c.size("vocab"), c.u64("seed"));
  const CorpusSplits splits = split_corpus(corpus);
  write_corpus(ctx.run_dir, splits);
  *ctx.out << "pairs train=" << splits.train.size() << " dev=" << splits.dev.size()
           << " test=" << splits.test.size() << "\n"
           << "data " << ctx.run_dir.string() << "\n";
  return kExitOk;
}

inline int cmd_train(const RunContext& ctx) {
  const Config& c = ctx.config;
  const CorpusSplits data = read_corpus(detail::required_path(c, "data"));
  TrainConfig t = detail::train_config(c, data);
  t.dropout = c.real("dropout");
  t.init_scale = c.real("init_scale");
  t.checkpoint_path = ctx.run_dir / "model.ckpt";
  detail::write_training_outputs(ctx, pretrain_mle(t, data));
  return kExitOk;
}

inline int cmd_finetune(const RunContext& ctx) {
  const Config& c = ctx.config;
  const CorpusSplits data = read_corpus(detail::required_path(c, "data"));
  const Checkpoint start = load_checkpoint(detail::required_path(c, "checkpoint"));
  TrainConfig t = detail::train_config(c, data);
  t.objective = Objective::parse(c.str("objective"));
  t.strategy = parse_strategy(c.str("strategy"));
  t.finetune_threshold = c.real("threshold");
  t.checkpoint_path = ctx.run_dir / "model.ckpt";
  const TrainResult result = finetune(t, data, start);
  detail::write_training_outputs(ctx, result);
  *ctx.out << "skipped sentences " << result.skipped_sentences << "\n";
  return kExitOk;
}

inline int cmd_evaluate(const RunContext& ctx) {
  const Config& c = ctx.config;
  const CorpusSplits data = read_corpus(detail::required_path(c, "data"));
  const Checkpoint ckpt = load_checkpoint(detail::required_path(c, "checkpoint"));
  const ParallelCorpus& part = data.get(parse_split(c.str("split")));
  const EvalReport report = evaluate(ckpt, detail::model_config(c, data), part);
  std::ofstream out(ctx.run_dir / "report.csv", std::ios::binary);
  out << "id,bleu,hypothesis,reference\n";
  for (const EvalRecord& r : report.records) {
    out << r.id << ',' << format_double(r.bleu) << ',' << detokenize(r.hyp, part.target_vocab)
        << ',' << detokenize(r.ref, part.target_vocab) << '\n';
  }
  detail::write_text(ctx.run_dir / "score.txt", format_double(report.corpus_bleu) + "\n");
  *ctx.out << "bleu " << format_double(report.corpus_bleu) << "\n";
  return kExitOk;
}

inline int cmd_correlate(const RunContext& ctx) {
  const Config& c = ctx.config;
  const CorpusSplits data = read_corpus(detail::required_path(c, "data"));
  const Checkpoint ckpt = load_checkpoint(detail::required_path(c, "checkpoint"));
  const ModelConfig expected = detail::model_config(c, data);
  if (ckpt.fingerprint() != model_fingerprint(expected)) {
    throw ConfigError("checkpoint fingerprint " + ckpt.fingerprint() +
                      " does not match configuration fingerprint " + model_fingerprint(expected));
  }
  ModelParams params = ckpt.params;
  const CorrelationReport report =
      correlate(params, data.get(parse_split(c.str("split"))), c.size("samples"), c.u64("seed"),
                c.flag("unit_probs"));
  std::ofstream out(ctx.run_dir / "scatter.csv", std::ios::binary);
  write_scatter_csv(out, report);
  char line[64];
  std::snprintf(line, sizeof line, "%.4f", report.coefficient);
  detail::write_text(ctx.run_dir / "coefficient.txt", std::string(line) + "\n");
  *ctx.out << "samples " << report.sample_count() << "\n"
           << "pearson " << line << "\n";
  return kExitOk;
}

inline int cmd_gradcheck(const RunContext& ctx) {
  const Config& c = ctx.config;
  const Objective objective = Objective::parse(c.str("objective"));
  if (objective.kind == Objective::Kind::kCrossEntropy) {
    throw ConfigError("gradcheck: objective must be p-bleu, p-gleu or p-p<n>");
  }
  const std::size_t vocab = c.size("vocab");
  const std::size_t max_len = c.size("max_len");
  if (vocab == 0 || max_len == 0) throw ConfigError("gradcheck: vocab and max_len must be >= 1");
  double worst = 0.0;
  for (std::size_t i = 0; i < c.size("instances"); ++i) {
    const RandomProbBatch batch =
        make_random_batch(derive_seed(c.u64("seed"), 5, i), c.size("sentences"), max_len, vocab);
    worst = std::max(worst, check_batch_loss(batch, objective, c.real("step")));
  }
  char line[64];
  std::snprintf(line, sizeof line, "%.3e", worst);
  detail::write_text(ctx.run_dir / "gradcheck.txt", std::string(line) + "\n");
  *ctx.out << "max relative error " << line << "\n";
  return worst <= c.real("tolerance") ? kExitOk : kExitFailure;
}

/// Parses argv, resolves the configuration, creates the run directory and
/// dispatches. Diagnostics go to `err`, results to `out`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  const auto keys = command_keys();
  CLI::App app{"Probabilistic n-gram objectives for sequence-to-sequence training", "ngramgrad"};
  app.require_subcommand(1);
  std::string out_root;
  std::string config_file;
  std::map<std::string, std::map<std::string, std::string>> flag_values;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, specs] : keys) {
    CLI::App* sub = app.add_subcommand(name, command_help().at(name));
    sub->add_option("--config", config_file, "key = value configuration file");
    sub->add_option("--out", out_root, "output root directory");
    for (const KeySpec& k : specs) {
      sub->add_option("--" + k.name, flag_values[name][k.name], k.help + " [" + k.default_value + "]");
    }
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  std::string command;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) command = name;
  }

  try {
    RunContext ctx;
    ctx.command = command;
    ctx.out = &out;
    ctx.config = Config(keys.at(command));
    if (!config_file.empty()) ctx.config.merge_file(config_file);
    for (const KeySpec& k : keys.at(command)) {
      if (subs[command]->count("--" + k.name) > 0) ctx.config.set(k.name, flag_values[command][k.name]);
    }
    if (out_root.empty()) {
      const char* env = std::getenv("NGRAMGRAD_OUT");
      out_root = env && *env ? env : "out";
    }
    ctx.run_dir = std::filesystem::path(out_root) / (command + "-" + ctx.config.fingerprint());
    std::filesystem::create_directories(ctx.run_dir);
    detail::write_text(ctx.run_dir / "config.txt", ctx.config.snapshot());
    out << "run " << ctx.run_dir.string() << "\n";

    if (command == "gen-data") return cmd_gen_data(ctx);
    if (command == "train") return cmd_train(ctx);
    if (command == "finetune") return cmd_finetune(ctx);
    if (command == "evaluate") return cmd_evaluate(ctx);
    if (command == "correlate") return cmd_correlate(ctx);
    return cmd_gradcheck(ctx);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace ngramgrad::cli
