#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "ngramgrad/corpus.hpp"

using namespace ngramgrad;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ngramgrad_corpus_" + name);
  fs::remove_all(dir);
  return dir;
}

Sentence words_of(const TokenSequence& ids, const Vocab& v) {
  Sentence out;
  for (TokenId id : ids) out.push_back(v.token(id));
  return out;
}

ParallelCorpus numbered_corpus(std::size_t n) {
  ParallelCorpus c;
  for (std::size_t i = 0; i < n; ++i) {
    c.pairs.push_back({{static_cast<TokenId>(4 + i % 5)}, {static_cast<TokenId>(4 + i)}});
  }
  return c;
}

}  // namespace

TEST(Vocab, ReservedSlots) {
  const Vocab v = Vocab::from_types({"x", "y"});
  EXPECT_EQ(v.size(), kNumReserved + 2);
  EXPECT_EQ(v.token(kPad), "<pad>");
  EXPECT_EQ(v.token(kBos), "<s>");
  EXPECT_EQ(v.token(kEos), "</s>");
  EXPECT_EQ(v.token(kUnk), "<unk>");
  EXPECT_EQ(v.id("x"), 4u);
  EXPECT_EQ(v.id("unseen"), kUnk);
  EXPECT_THROW(v.token(6), Error);
}

TEST(BuildVocab, LargeLimitKeepsEverything) {
  const std::vector<Sentence> s{{"b", "a", "c"}, {"a", "d"}};
  const Vocab v = build_vocab(s, 100);
  for (const Sentence& sent : s) {
    for (const std::string& w : sent) EXPECT_NE(v.id(w), kUnk) << w;
  }
}

TEST(BuildVocab, LimitOneKeepsTopType) {
  const std::vector<Sentence> s{{"b", "a", "a"}, {"a", "c", "b"}};
  const Vocab v = build_vocab(s, 1);
  EXPECT_EQ(v.size(), kNumReserved + 1);
  EXPECT_EQ(v.id("a"), 4u);
  EXPECT_EQ(v.id("b"), kUnk);
  EXPECT_EQ(v.id("c"), kUnk);
}

TEST(BuildVocab, FrequencyTiesBreakLexicographically) {
  const std::vector<Sentence> s{{"zeta", "beta", "alpha", "zeta"}, {"gamma"}};
  const Vocab v = build_vocab(s, 10);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"<pad>", "<s>", "</s>", "<unk>", "zeta",
                                                   "alpha", "beta", "gamma"}));
}

TEST(Vocab, FileRoundTrip) {
  const fs::path dir = scratch_dir("vocab");
  fs::create_directories(dir);
  const Vocab v = Vocab::from_types({"w1", "w0"});
  v.save(dir / "vocab.txt");
  EXPECT_EQ(Vocab::load(dir / "vocab.txt"), v);
  std::ofstream(dir / "bad.txt") << "x\n<pad>\n";
  EXPECT_THROW(Vocab::load(dir / "bad.txt"), Error);
  EXPECT_THROW(Vocab::load(dir / "missing.txt"), ConfigError);
}

TEST(GenSynthetic, Copy) {
  const ParallelCorpus c = gen_synthetic(Task::kCopy, 50, {3, 7}, 10, 1);
  ASSERT_EQ(c.size(), 50u);
  for (const SentencePair& p : c.pairs) {
    EXPECT_EQ(words_of(p.source, c.source_vocab), words_of(p.target, c.target_vocab));
  }
}

TEST(GenSynthetic, Reverse) {
  const ParallelCorpus c = gen_synthetic(Task::kReverse, 50, {3, 7}, 10, 1);
  for (const SentencePair& p : c.pairs) {
    Sentence src = words_of(p.source, c.source_vocab);
    std::reverse(src.begin(), src.end());
    EXPECT_EQ(src, words_of(p.target, c.target_vocab));
  }
}

TEST(GenSynthetic, CipherIsBijectionWithPairSwaps) {
  const ParallelCorpus c = gen_synthetic(Task::kCipher, 300, {1, 9}, 12, 4);
  std::map<std::string, std::string> mapping;
  for (const SentencePair& p : c.pairs) {
    const Sentence src = words_of(p.source, c.source_vocab);
    Sentence tgt = words_of(p.target, c.target_vocab);
    ASSERT_EQ(src.size(), tgt.size());
    for (std::size_t k = 0; k + 1 < tgt.size(); k += 2) std::swap(tgt[k], tgt[k + 1]);
    for (std::size_t k = 0; k < src.size(); ++k) {
      auto [it, inserted] = mapping.emplace(src[k], tgt[k]);
      EXPECT_EQ(it->second, tgt[k]) << src[k];
    }
  }
  std::set<std::string> images;
  for (const auto& [from, to] : mapping) images.insert(to);
  EXPECT_EQ(images.size(), mapping.size());
  EXPECT_EQ(mapping.size(), 12u);
}

TEST(GenSynthetic, SameSeedSameCorpus) {
  for (Task t : {Task::kCopy, Task::kReverse, Task::kCipher}) {
    const ParallelCorpus a = gen_synthetic(t, 100, {3, 12}, 20, 7);
    const ParallelCorpus b = gen_synthetic(t, 100, {3, 12}, 20, 7);
    const ParallelCorpus c = gen_synthetic(t, 100, {3, 12}, 20, 8);
    EXPECT_EQ(a.pairs, b.pairs);
    EXPECT_EQ(a.source_vocab, b.source_vocab);
    EXPECT_EQ(a.target_vocab, b.target_vocab);
    EXPECT_NE(a.pairs, c.pairs);
  }
}

TEST(GenSynthetic, LengthsAndIdsAreValid) {
  const ParallelCorpus c = gen_synthetic(Task::kCipher, 500, {3, 12}, 30, 2);
  for (const SentencePair& p : c.pairs) {
    EXPECT_GE(p.source.size(), 3u);
    EXPECT_LE(p.source.size(), 12u);
    for (TokenId t : p.source) {
      EXPECT_FALSE(is_reserved(t));
      EXPECT_LT(t, c.source_vocab.size());
    }
    for (TokenId t : p.target) {
      EXPECT_FALSE(is_reserved(t));
      EXPECT_LT(t, c.target_vocab.size());
    }
  }
}

TEST(GenSynthetic, InvalidArguments) {
  EXPECT_THROW(gen_synthetic(Task::kCopy, 10, {0, 5}, 10, 1), ConfigError);
  EXPECT_THROW(gen_synthetic(Task::kCopy, 10, {3, 51}, 10, 1), ConfigError);
  EXPECT_THROW(gen_synthetic(Task::kCopy, 10, {6, 5}, 10, 1), ConfigError);
  EXPECT_THROW(gen_synthetic(Task::kCopy, 10, {3, 5}, 3, 1), ConfigError);
  EXPECT_THROW(gen_synthetic(Task::kCopy, 0, {3, 5}, 10, 1), ConfigError);
  EXPECT_THROW(parse_task("shuffle"), Error);
}

TEST(Tokenize, DetokenizeRoundTrip) {
  for (Task t : {Task::kCopy, Task::kReverse, Task::kCipher}) {
    const ParallelCorpus c = gen_synthetic(t, 100, {1, 12}, 15, 3);
    for (const SentencePair& p : c.pairs) {
      const std::string line = detokenize(p.source, c.source_vocab);
      EXPECT_EQ(tokenize(split_words(line), c.source_vocab), p.source);
      EXPECT_EQ(detokenize(tokenize(split_words(line), c.source_vocab), c.source_vocab), line);
    }
  }
}

TEST(Split, ProportionsAndDeterminism) {
  std::map<Split, std::size_t> counts;
  for (std::size_t i = 0; i < 10000; ++i) ++counts[split_of(i)];
  EXPECT_NEAR(static_cast<double>(counts[Split::kTrain]) / 10000.0, 0.8, 0.02);
  EXPECT_NEAR(static_cast<double>(counts[Split::kDev]) / 10000.0, 0.1, 0.02);
  EXPECT_NEAR(static_cast<double>(counts[Split::kTest]) / 10000.0, 0.1, 0.02);

  const ParallelCorpus c = gen_synthetic(Task::kCopy, 200, {3, 5}, 10, 1);
  const CorpusSplits s = split_corpus(c);
  EXPECT_EQ(s.train.size() + s.dev.size() + s.test.size(), c.size());
  EXPECT_EQ(s.train.source_vocab, c.source_vocab);
  EXPECT_EQ(split_name(parse_split("dev")), std::string("dev"));
  EXPECT_THROW(parse_split("valid"), ConfigError);
}

TEST(CorpusFiles, RoundTrip) {
  const fs::path dir = scratch_dir("files");
  const CorpusSplits s = split_corpus(gen_synthetic(Task::kCipher, 120, {3, 8}, 10, 5));
  write_corpus(dir, s);
  for (const char* f : {"train.src", "train.tgt", "dev.src", "dev.tgt", "test.src", "test.tgt",
                        "vocab.src", "vocab.tgt"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const CorpusSplits back = read_corpus(dir);
  EXPECT_EQ(back.train.pairs, s.train.pairs);
  EXPECT_EQ(back.dev.pairs, s.dev.pairs);
  EXPECT_EQ(back.test.pairs, s.test.pairs);
  EXPECT_EQ(back.test.target_vocab, s.test.target_vocab);
  EXPECT_THROW(read_corpus(dir / "nowhere"), ConfigError);
}

TEST(BatchStream, SizesWithPartialLastBatch) {
  const ParallelCorpus c = numbered_corpus(10);
  BatchStream stream(c, 4, 1);
  EXPECT_EQ(stream.num_batches(), 3u);
  std::vector<std::size_t> sizes;
  while (auto b = stream.next()) sizes.push_back(b->batch_size);
  EXPECT_EQ(sizes, (std::vector<std::size_t>{4, 4, 2}));
}

TEST(BatchStream, SameSeedSameOrder) {
  const ParallelCorpus c = numbered_corpus(25);
  auto order = [&](std::uint64_t seed) {
    BatchStream stream(c, 3, seed);
    std::vector<std::size_t> out;
    while (auto b = stream.next()) out.insert(out.end(), b->indices.begin(), b->indices.end());
    return out;
  };
  EXPECT_EQ(order(5), order(5));
  EXPECT_NE(order(5), order(6));
}

TEST(BatchStream, BatchOfOneIsPerSentence) {
  const ParallelCorpus c = numbered_corpus(7);
  BatchStream stream(c, 1, 2);
  std::size_t n = 0;
  while (auto b = stream.next()) {
    EXPECT_EQ(b->batch_size, 1u);
    EXPECT_EQ(b->pair(0), c.pairs[b->indices[0]]);
    ++n;
  }
  EXPECT_EQ(n, 7u);
  EXPECT_THROW(BatchStream(c, 0, 1), Error);
}

TEST(BatchStream, EpochCoversEveryPairOnce) {
  const ParallelCorpus c = gen_synthetic(Task::kReverse, 103, {1, 9}, 8, 9);
  BatchStream stream(c, 10, 3);
  std::multiset<std::vector<TokenId>> seen;
  std::multiset<std::vector<TokenId>> expected;
  std::set<std::size_t> indices;
  while (auto b = stream.next()) {
    for (std::size_t row = 0; row < b->batch_size; ++row) {
      const SentencePair p = b->pair(row);
      EXPECT_EQ(p, c.pairs[b->indices[row]]);
      std::vector<TokenId> key = p.source;
      key.insert(key.end(), p.target.begin(), p.target.end());
      seen.insert(key);
      indices.insert(b->indices[row]);
    }
  }
  for (const SentencePair& p : c.pairs) {
    std::vector<TokenId> key = p.source;
    key.insert(key.end(), p.target.begin(), p.target.end());
    expected.insert(key);
  }
  EXPECT_EQ(seen, expected);
  EXPECT_EQ(indices.size(), c.size());
}

TEST(BatchStream, PaddingOnlyAfterLength) {
  const ParallelCorpus c = gen_synthetic(Task::kCopy, 30, {1, 9}, 8, 4);
  BatchStream stream(c, 8, 1);
  while (auto b = stream.next()) {
    for (std::size_t row = 0; row < b->batch_size; ++row) {
      for (std::size_t k = 0; k < b->source_width; ++k) {
        const TokenId t = b->source[row * b->source_width + k];
        EXPECT_EQ(t == kPad, k >= b->source_lengths[row]);
      }
    }
  }
}
