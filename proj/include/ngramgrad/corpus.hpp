#pragma once

// Synthetic parallel corpora, vocabularies, on-disk text format and batching.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ngramgrad/error.hpp"
#include "ngramgrad/metrics.hpp"

namespace ngramgrad {

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr std::size_t kNumReserved = 4;
inline constexpr std::size_t kMaxSentenceLength = 50;

inline bool is_reserved(TokenId id) { return id < kNumReserved; }

class Vocab {
 public:
  Vocab() : tokens_{"<pad>", "<s>", "</s>", "<unk>"} { reindex(); }

  /// Reserved entries followed by `types` in order.
  static Vocab from_types(const std::vector<std::string>& types) {
    Vocab v;
    for (const std::string& t : types) {
      if (v.index_.count(t)) throw Error("vocab: duplicate token '" + t + "'");
      v.index_.emplace(t, static_cast<TokenId>(v.tokens_.size()));
      v.tokens_.push_back(t);
    }
    return v;
  }

  std::size_t size() const { return tokens_.size(); }

  TokenId id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }
  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  const std::string& token(TokenId id) const {
    if (id >= tokens_.size()) throw Error("vocab: id " + std::to_string(id) + " out of range");
    return tokens_[id];
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

  /// One token per line; the line number is the id.
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write vocabulary " + path.string());
    for (const std::string& t : tokens_) out << t << '\n';
  }

  static Vocab load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("missing vocabulary file " + path.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    Vocab reference;
    if (lines.size() < kNumReserved ||
        !std::equal(reference.tokens_.begin(), reference.tokens_.end(), lines.begin())) {
      throw Error("vocabulary " + path.string() + " does not start with the reserved tokens");
    }
    return from_types({lines.begin() + kNumReserved, lines.end()});
  }

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      index_.emplace(tokens_[i], static_cast<TokenId>(i));
    }
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

using Sentence = std::vector<std::string>;

/// Keeps the `limit` most frequent types; frequency ties break lexicographically.
inline Vocab build_vocab(const std::vector<Sentence>& sentences, std::size_t limit) {
  std::map<std::string, std::size_t> freq;
  for (const Sentence& s : sentences) {
    for (const std::string& t : s) ++freq[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < ranked.size() && i < limit; ++i) kept.push_back(ranked[i].first);
  return Vocab::from_types(kept);
}

inline TokenSequence tokenize(const Sentence& words, const Vocab& vocab) {
  TokenSequence ids;
  ids.reserve(words.size());
  for (const std::string& w : words) ids.push_back(vocab.id(w));
  return ids;
}

inline Sentence split_words(const std::string& line) {
  std::istringstream in(line);
  Sentence words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

inline std::string detokenize(const TokenSequence& ids, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(ids[i]);
  }
  return out;
}

struct SentencePair {
  TokenSequence source;
  TokenSequence target;

  bool operator==(const SentencePair&) const = default;
};

struct ParallelCorpus {
  std::vector<SentencePair> pairs;
  Vocab source_vocab;
  Vocab target_vocab;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

enum class Task { kCopy, kReverse, kCipher };

inline Task parse_task(const std::string& name) {
  if (name == "copy") return Task::kCopy;
  if (name == "reverse") return Task::kReverse;
  if (name == "cipher") return Task::kCipher;
  throw ConfigError("unknown task '" + name + "' (expected copy, reverse or cipher)");
}

struct LengthRange {
  std::size_t min = 3;
  std::size_t max = 12;
};

namespace detail {

inline std::string word_name(char prefix, std::size_t index, std::size_t count) {
  const std::size_t width = std::to_string(count > 0 ? count - 1 : 0).size();
  std::string digits = std::to_string(index);
  return std::string(1, prefix) + std::string(width - digits.size(), '0') + digits;
}

}  // namespace detail

/// Generates `size` source sentences of uniform random length and content
/// drawn from `vocab_size` types, and derives each target by the task rule.
/// The cipher maps each type through a seeded bijection, then swaps tokens
/// (0,1), (2,3), ... of the mapped sentence.
inline ParallelCorpus gen_synthetic(Task task, std::size_t size, LengthRange lengths,
                                    std::size_t vocab_size, std::uint64_t seed) {
  if (lengths.min < 1 || lengths.max > kMaxSentenceLength || lengths.min > lengths.max) {
    throw ConfigError("gen_synthetic: length range [" + std::to_string(lengths.min) + ", " +
                      std::to_string(lengths.max) + "] must lie within [1, " +
                      std::to_string(kMaxSentenceLength) + "]");
  }
  if (vocab_size < 4) throw ConfigError("gen_synthetic: vocab size must be >= 4");
  if (size == 0) throw ConfigError("gen_synthetic: size must be >= 1");

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> cipher(vocab_size);
  std::iota(cipher.begin(), cipher.end(), std::size_t{0});
  std::shuffle(cipher.begin(), cipher.end(), rng);

  std::uniform_int_distribution<std::size_t> length_dist(lengths.min, lengths.max);
  std::uniform_int_distribution<std::size_t> word_dist(0, vocab_size - 1);
  std::vector<Sentence> sources;
  std::vector<Sentence> targets;
  sources.reserve(size);
  targets.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    std::vector<std::size_t> words(length_dist(rng));
    for (std::size_t& w : words) w = word_dist(rng);
    Sentence src;
    Sentence tgt;
    for (std::size_t w : words) src.push_back(detail::word_name('w', w, vocab_size));
    switch (task) {
      case Task::kCopy:
        tgt = src;
        break;
      case Task::kReverse:
        tgt.assign(src.rbegin(), src.rend());
        break;
      case Task::kCipher:
        for (std::size_t w : words) tgt.push_back(detail::word_name('c', cipher[w], vocab_size));
        for (std::size_t k = 0; k + 1 < tgt.size(); k += 2) std::swap(tgt[k], tgt[k + 1]);
        break;
    }
    sources.push_back(std::move(src));
    targets.push_back(std::move(tgt));
  }

  ParallelCorpus corpus;
  corpus.source_vocab = build_vocab(sources, vocab_size);
  corpus.target_vocab = build_vocab(targets, vocab_size);
  corpus.pairs.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    corpus.pairs.push_back(
        {tokenize(sources[i], corpus.source_vocab), tokenize(targets[i], corpus.target_vocab)});
  }
  return corpus;
}

enum class Split { kTrain, kDev, kTest };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "dev") return Split::kDev;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + name + "' (expected train, dev or test)");
}

/// 80/10/10 assignment from a fixed mix of the pair index.
inline Split split_of(std::size_t index) {
  std::uint64_t z = static_cast<std::uint64_t>(index) + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  const std::uint64_t bucket = z % 10;
  return bucket < 8 ? Split::kTrain : (bucket == 8 ? Split::kDev : Split::kTest);
}

struct CorpusSplits {
  ParallelCorpus train;
  ParallelCorpus dev;
  ParallelCorpus test;

  const ParallelCorpus& get(Split s) const {
    return s == Split::kTrain ? train : (s == Split::kDev ? dev : test);
  }
};

inline CorpusSplits split_corpus(const ParallelCorpus& corpus) {
  CorpusSplits out;
  for (ParallelCorpus* part : {&out.train, &out.dev, &out.test}) {
    part->source_vocab = corpus.source_vocab;
    part->target_vocab = corpus.target_vocab;
  }
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
    switch (split_of(i)) {
      case Split::kTrain: out.train.pairs.push_back(corpus.pairs[i]); break;
      case Split::kDev: out.dev.pairs.push_back(corpus.pairs[i]); break;
      case Split::kTest: out.test.pairs.push_back(corpus.pairs[i]); break;
    }
  }
  return out;
}

namespace detail {

inline void write_lines(const std::filesystem::path& path, const std::vector<TokenSequence>& rows,
                        const Vocab& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const TokenSequence& r : rows) out << detokenize(r, vocab) << '\n';
}

inline std::vector<TokenSequence> read_lines(const std::filesystem::path& path,
                                             const Vocab& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("missing corpus file " + path.string());
  std::vector<TokenSequence> rows;
  for (std::string line; std::getline(in, line);) rows.push_back(tokenize(split_words(line), vocab));
  return rows;
}

}  // namespace detail

/// Writes `<split>.src` / `<split>.tgt` for each split plus `vocab.src` / `vocab.tgt`.
inline void write_corpus(const std::filesystem::path& dir, const CorpusSplits& splits) {
  std::filesystem::create_directories(dir);
  splits.train.source_vocab.save(dir / "vocab.src");
  splits.train.target_vocab.save(dir / "vocab.tgt");
  for (Split s : {Split::kTrain, Split::kDev, Split::kTest}) {
    const ParallelCorpus& part = splits.get(s);
    std::vector<TokenSequence> src;
    std::vector<TokenSequence> tgt;
    for (const SentencePair& p : part.pairs) {
      src.push_back(p.source);
      tgt.push_back(p.target);
    }
    detail::write_lines(dir / (std::string(split_name(s)) + ".src"), src, part.source_vocab);
    detail::write_lines(dir / (std::string(split_name(s)) + ".tgt"), tgt, part.target_vocab);
  }
}

inline CorpusSplits read_corpus(const std::filesystem::path& dir) {
  CorpusSplits out;
  const Vocab src_vocab = Vocab::load(dir / "vocab.src");
  const Vocab tgt_vocab = Vocab::load(dir / "vocab.tgt");
  for (Split s : {Split::kTrain, Split::kDev, Split::kTest}) {
    ParallelCorpus& part = s == Split::kTrain ? out.train : (s == Split::kDev ? out.dev : out.test);
    part.source_vocab = src_vocab;
    part.target_vocab = tgt_vocab;
    const auto src = detail::read_lines(dir / (std::string(split_name(s)) + ".src"), src_vocab);
    const auto tgt = detail::read_lines(dir / (std::string(split_name(s)) + ".tgt"), tgt_vocab);
    if (src.size() != tgt.size()) {
      throw Error(std::string(split_name(s)) + " split: " + std::to_string(src.size()) +
                  " source lines but " + std::to_string(tgt.size()) + " target lines");
    }
    for (std::size_t i = 0; i < src.size(); ++i) part.pairs.push_back({src[i], tgt[i]});
  }
  return out;
}

/// Padded sentences of one minibatch, row-major batch x max_length.
struct Batch {
  std::size_t batch_size = 0;
  std::size_t source_width = 0;
  std::size_t target_width = 0;
  std::vector<TokenId> source;
  std::vector<TokenId> target;
  std::vector<std::size_t> source_lengths;
  std::vector<std::size_t> target_lengths;
  /// Positions of the rows in the corpus.
  std::vector<std::size_t> indices;

  SentencePair pair(std::size_t row) const {
    auto src = source.begin() + static_cast<std::ptrdiff_t>(row * source_width);
    auto tgt = target.begin() + static_cast<std::ptrdiff_t>(row * target_width);
    return {TokenSequence(src, src + static_cast<std::ptrdiff_t>(source_lengths[row])),
            TokenSequence(tgt, tgt + static_cast<std::ptrdiff_t>(target_lengths[row]))};
  }
};

/// One epoch over a corpus in a seeded shuffled order; the last batch may be short.
class BatchStream {
 public:
  BatchStream(const ParallelCorpus& corpus, std::size_t batch_size, std::uint64_t shuffle_seed)
      : corpus_(&corpus), batch_size_(batch_size), order_(corpus.pairs.size()) {
    if (batch_size == 0) throw Error("batch_iter: batch size must be >= 1");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::mt19937_64 rng(shuffle_seed);
    std::shuffle(order_.begin(), order_.end(), rng);
  }

  std::size_t num_batches() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

  std::optional<Batch> next() {
    if (cursor_ >= order_.size()) return std::nullopt;
    const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
    Batch b;
    b.batch_size = end - cursor_;
    for (std::size_t k = cursor_; k < end; ++k) {
      const SentencePair& p = corpus_->pairs[order_[k]];
      b.indices.push_back(order_[k]);
      b.source_lengths.push_back(p.source.size());
      b.target_lengths.push_back(p.target.size());
      b.source_width = std::max(b.source_width, p.source.size());
      b.target_width = std::max(b.target_width, p.target.size());
    }
    b.source.assign(b.batch_size * b.source_width, kPad);
    b.target.assign(b.batch_size * b.target_width, kPad);
    for (std::size_t row = 0; row < b.batch_size; ++row) {
      const SentencePair& p = corpus_->pairs[b.indices[row]];
      std::copy(p.source.begin(), p.source.end(), b.source.begin() + row * b.source_width);
      std::copy(p.target.begin(), p.target.end(), b.target.begin() + row * b.target_width);
    }
    cursor_ = end;
    return b;
  }

 private:
  const ParallelCorpus* corpus_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace ngramgrad
