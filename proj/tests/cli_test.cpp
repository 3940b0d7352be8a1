#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "ngramgrad/cli.hpp"

using namespace ngramgrad;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ngramgrad");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ngramgrad_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

// The run directory printed on the first output line.
fs::path run_dir_of(const Outcome& o) {
  const std::string first = o.out.substr(0, o.out.find('\n'));
  return first.substr(4);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Cli, UnknownSubcommandIsUsageError) {
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({}).code, cli::kExitUsage);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk); }

TEST(Cli, UnknownFlagIsUsageError) {
  const Outcome o = run_cli({"gen-data", "--out", fresh_dir("flag").string(), "--colour", "red"});
  EXPECT_EQ(o.code, cli::kExitUsage);
}

TEST(Cli, UnknownConfigKeyNamesTheKey) {
  const fs::path dir = fresh_dir("badkey");
  fs::create_directories(dir);
  std::ofstream(dir / "run.cfg") << "# comment\nsize = 100\nbogus_key = 3\n";
  const Outcome o =
      run_cli({"gen-data", "--config", (dir / "run.cfg").string(), "--out", dir.string()});
  EXPECT_EQ(o.code, cli::kExitUsage);
  EXPECT_NE(o.err.find("bogus_key"), std::string::npos) << o.err;
}

TEST(Cli, MissingFilesAreUsageErrors) {
  const fs::path dir = fresh_dir("missing");
  EXPECT_EQ(run_cli({"gen-data", "--config", "/nonexistent.cfg", "--out", dir.string()}).code,
            cli::kExitUsage);
  EXPECT_EQ(run_cli({"train", "--data", "/nonexistent", "--out", dir.string()}).code,
            cli::kExitUsage);
  EXPECT_EQ(run_cli({"evaluate", "--data", "/nonexistent", "--checkpoint", "/nonexistent.ckpt",
                     "--out", dir.string()})
                .code,
            cli::kExitUsage);
}

TEST(Cli, MalformedValueIsUsageError) {
  const Outcome o = run_cli({"gen-data", "--size", "many", "--out", fresh_dir("value").string()});
  EXPECT_EQ(o.code, cli::kExitUsage);
  EXPECT_NE(o.err.find("size"), std::string::npos) << o.err;
}

TEST(Cli, GenDataWritesCorpusAndConfig) {
  const fs::path root = fresh_dir("gendata");
  const Outcome o = run_cli({"gen-data", "--task", "copy", "--size", "2000", "--seed", "7",
                             "--out", root.string()});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  const fs::path dir = run_dir_of(o);
  EXPECT_EQ(dir.parent_path(), root);
  EXPECT_EQ(dir.filename().string().rfind("gen-data-", 0), 0u);
  for (const char* f : {"train.src", "train.tgt", "dev.src", "dev.tgt", "test.src", "test.tgt",
                        "vocab.src", "vocab.tgt", "config.txt"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_NE(slurp(dir / "config.txt").find("seed = 7\n"), std::string::npos);
  const CorpusSplits data = read_corpus(dir);
  EXPECT_EQ(data.train.size() + data.dev.size() + data.test.size(), 2000u);
}

TEST(Cli, ConfigFileAndFlagsResolveInOrder) {
  const fs::path root = fresh_dir("resolve");
  fs::create_directories(root);
  std::ofstream(root / "run.cfg") << "size = 50\nseed = 3  # trailing comment\n";
  const Outcome o = run_cli(
      {"gen-data", "--config", (root / "run.cfg").string(), "--seed", "4", "--out", root.string()});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  const std::string cfg = slurp(run_dir_of(o) / "config.txt");
  EXPECT_NE(cfg.find("size = 50\n"), std::string::npos) << cfg;
  EXPECT_NE(cfg.find("seed = 4\n"), std::string::npos) << cfg;
  EXPECT_NE(cfg.find("task = copy\n"), std::string::npos) << cfg;
}

TEST(Cli, ResolvedSnapshotReproducesTheRun) {
  const fs::path root = fresh_dir("snapshot");
  const Outcome first =
      run_cli({"gen-data", "--task", "cipher", "--size", "80", "--out", root.string()});
  ASSERT_EQ(first.code, cli::kExitOk) << first.err;
  const fs::path dir = run_dir_of(first);
  const fs::path other = fresh_dir("snapshot2");
  const Outcome second =
      run_cli({"gen-data", "--config", (dir / "config.txt").string(), "--out", other.string()});
  ASSERT_EQ(second.code, cli::kExitOk) << second.err;
  EXPECT_EQ(run_dir_of(second).filename(), dir.filename());
  for (const char* f : {"train.src", "train.tgt", "test.tgt", "vocab.tgt", "config.txt"}) {
    EXPECT_EQ(slurp(run_dir_of(second) / f), slurp(dir / f)) << f;
  }
}

TEST(Cli, OutputRootFromEnvironment) {
  const fs::path root = fresh_dir("env");
  ::setenv("NGRAMGRAD_OUT", root.c_str(), 1);
  const Outcome o = run_cli({"gen-data", "--size", "20"});
  ::unsetenv("NGRAMGRAD_OUT");
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  EXPECT_EQ(run_dir_of(o).parent_path(), root);
}

TEST(Cli, GradcheckPassesAtDefaultTolerance) {
  const Outcome o = run_cli({"gradcheck", "--seed", "1", "--out", fresh_dir("gc").string()});
  EXPECT_EQ(o.code, cli::kExitOk) << o.out << o.err;
  EXPECT_NE(o.out.find("max relative error "), std::string::npos);
  for (const char* obj : {"p-bleu", "p-gleu", "p-p3"}) {
    const Outcome r = run_cli({"gradcheck", "--objective", obj, "--instances", "5", "--out",
                               fresh_dir("gc").string()});
    EXPECT_EQ(r.code, cli::kExitOk) << obj << r.out << r.err;
  }
}

TEST(Cli, GradcheckFailsWhenToleranceIsUnreachable) {
  const Outcome o =
      run_cli({"gradcheck", "--objective", "p-gleu", "--instances", "5", "--tolerance", "1e-12",
               "--step", "0.1", "--out", fresh_dir("gc0").string()});
  EXPECT_EQ(o.code, cli::kExitFailure) << o.out << o.err;
}

TEST(Cli, TrainEvaluateCorrelatePipeline) {
  const fs::path root = fresh_dir("pipeline");
  const Outcome gen = run_cli({"gen-data", "--task", "copy", "--size", "300", "--vocab", "8",
                               "--max_len", "6", "--out", root.string()});
  ASSERT_EQ(gen.code, cli::kExitOk) << gen.err;
  const std::string data = run_dir_of(gen).string();
  const std::vector<std::string> dims{"--emb", "8", "--hidden", "16", "--attn", "8"};

  std::vector<std::string> train{"train", "--data", data, "--epochs", "2", "--batch", "20",
                                 "--out", root.string()};
  train.insert(train.end(), dims.begin(), dims.end());
  const Outcome tr = run_cli(train);
  ASSERT_EQ(tr.code, cli::kExitOk) << tr.err;
  const fs::path train_dir = run_dir_of(tr);
  EXPECT_TRUE(fs::exists(train_dir / "model.ckpt"));
  EXPECT_EQ(slurp(train_dir / "curve.csv").rfind("step,epoch,split,metric,value\n", 0), 0u);
  const std::string ckpt = (train_dir / "model.ckpt").string();

  std::vector<std::string> eval{"evaluate", "--data", data, "--checkpoint", ckpt, "--out",
                                root.string()};
  eval.insert(eval.end(), dims.begin(), dims.end());
  const Outcome ev = run_cli(eval);
  ASSERT_EQ(ev.code, cli::kExitOk) << ev.err;
  EXPECT_EQ(slurp(run_dir_of(ev) / "report.csv").rfind("id,bleu,hypothesis,reference\n", 0), 0u);
  EXPECT_NE(ev.out.find("bleu "), std::string::npos);

  std::vector<std::string> wrong = eval;
  wrong.back() = "9";
  EXPECT_EQ(run_cli(wrong).code, cli::kExitUsage);

  std::vector<std::string> corr{"correlate", "--data", data, "--checkpoint", ckpt,
                                "--samples", "30", "--out", root.string()};
  corr.insert(corr.end(), dims.begin(), dims.end());
  const Outcome co = run_cli(corr);
  if (co.code == cli::kExitOk) {
    EXPECT_NE(co.out.find("pearson "), std::string::npos);
    EXPECT_TRUE(fs::exists(run_dir_of(co) / "scatter.csv"));
  } else {
    // A barely trained model may emit nothing or score every sample alike.
    EXPECT_EQ(co.code, cli::kExitFailure) << co.err;
  }

  std::vector<std::string> ft{"finetune", "--data", data, "--checkpoint", ckpt, "--objective",
                              "ce", "--threshold", "0", "--out", root.string()};
  ft.insert(ft.end(), dims.begin(), dims.end());
  EXPECT_EQ(run_cli(ft).code, cli::kExitUsage);
}

TEST(Cli, DivergenceExitsThree) {
  const fs::path root = fresh_dir("diverge");
  const Outcome gen =
      run_cli({"gen-data", "--size", "100", "--vocab", "6", "--out", root.string()});
  ASSERT_EQ(gen.code, cli::kExitOk) << gen.err;
  const Outcome tr = run_cli({"train", "--data", run_dir_of(gen).string(), "--optimizer", "sgd",
                              "--lr", "1e300", "--clip", "0", "--epochs", "1", "--emb", "4",
                              "--hidden", "4", "--attn", "4", "--out", root.string()});
  EXPECT_EQ(tr.code, cli::kExitDivergence) << tr.out << tr.err;
}
