#pragma once

// Attention-based GRU encoder-decoder over the autodiff tape.
//
// Encoder: embeddings -> unidirectional GRU, states stacked as an L x H matrix.
// Decoder: state initialised from tanh(h_L W + b); at each step additive
// attention over the encoder states with the previous decoder state, a GRU
// step on [embedding(previous token); context], and a softmax projection of
// [state; context].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ngramgrad/autodiff.hpp"
#include "ngramgrad/corpus.hpp"
#include "ngramgrad/error.hpp"
#include "ngramgrad/metrics.hpp"
#include "ngramgrad/probloss.hpp"

namespace ngramgrad {

struct ModelConfig {
  std::size_t source_vocab = 0;
  std::size_t target_vocab = 0;
  std::size_t embedding = 32;
  std::size_t hidden = 64;
  std::size_t attention = 64;

  bool operator==(const ModelConfig&) const = default;
};

/// 64-bit FNV-1a; stable across platforms and runs.
inline std::uint64_t stable_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// First 8 hex digits of the stable hash.
inline std::string fingerprint_of(std::string_view text) {
  static constexpr char kHex[] = "0123456789abcdef";
  const std::uint64_t h = stable_hash(text);
  std::string out;
  for (int shift = 60; shift >= 32; shift -= 4) out += kHex[(h >> shift) & 0xf];
  return out;
}

inline std::string describe(const ModelConfig& c) {
  return "source_vocab=" + std::to_string(c.source_vocab) +
         ";target_vocab=" + std::to_string(c.target_vocab) +
         ";embedding=" + std::to_string(c.embedding) + ";hidden=" + std::to_string(c.hidden) +
         ";attention=" + std::to_string(c.attention);
}

inline std::string model_fingerprint(const ModelConfig& c) { return fingerprint_of(describe(c)); }

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Named parameter arrays in a fixed manifest order, with gradient buffers.
class ModelParams {
 public:
  ModelParams() = default;

  explicit ModelParams(const ModelConfig& config) : config_(config) {
    if (config.source_vocab <= kNumReserved || config.target_vocab <= kNumReserved) {
      throw Error("model: vocabularies must contain content tokens");
    }
    if (config.embedding == 0 || config.hidden == 0 || config.attention == 0) {
      throw Error("model: dimensions must be positive");
    }
    const std::size_t e = config.embedding;
    const std::size_t h = config.hidden;
    const std::size_t a = config.attention;
    add("src_embed", config.source_vocab, e);
    add("tgt_embed", config.target_vocab, e);
    add("enc_gate_z", e + h, h);
    add("enc_bias_z", 1, h);
    add("enc_gate_r", e + h, h);
    add("enc_bias_r", 1, h);
    add("enc_cand_x", e, h);
    add("enc_cand_h", h, h);
    add("enc_bias_h", 1, h);
    add("init_w", h, h);
    add("init_b", 1, h);
    add("att_w", h, a);
    add("att_u", h, a);
    add("att_v", a, 1);
    add("dec_gate_z", e + 2 * h, h);
    add("dec_bias_z", 1, h);
    add("dec_gate_r", e + 2 * h, h);
    add("dec_bias_r", 1, h);
    add("dec_cand_x", e + h, h);
    add("dec_cand_h", h, h);
    add("dec_bias_h", 1, h);
    add("out_w", 2 * h, config.target_vocab);
    add("out_b", 1, config.target_vocab);
  }

  const ModelConfig& config() const { return config_; }

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }

  Parameter& get(const std::string& name) { return params_.at(slot(name)); }
  const Parameter& get(const std::string& name) const { return params_.at(slot(name)); }

  /// Uniform initialisation over [-scale, scale].
  void init_uniform(std::uint64_t seed, double scale = 0.1) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (Parameter& p : params_) {
      for (double& v : p.value.flat()) v = dist(rng);
    }
  }

  void zero_grad() {
    for (Parameter& p : params_) p.grad.fill(0.0);
  }

  std::size_t num_values() const {
    std::size_t n = 0;
    for (const Parameter& p : params_) n += p.value.size();
    return n;
  }

  bool same_values(const ModelParams& other) const {
    if (params_.size() != other.params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name != other.params_[i].name || params_[i].value != other.params_[i].value) {
        return false;
      }
    }
    return true;
  }

 private:
  void add(const std::string& name, std::size_t rows, std::size_t cols) {
    index_.emplace(name, params_.size());
    params_.push_back({name, Matrix(rows, cols), Matrix(rows, cols)});
  }
  std::size_t slot(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("model: no parameter named '" + name + "'");
    return it->second;
  }

  ModelConfig config_;
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct StepOutput {
  TokenId token = 0;
  /// distribution[token] as a scalar.
  Var prob;
  /// 1 x target_vocab probabilities.
  Var distribution;
};

struct EncoderStates {
  /// L x H, one row per source position.
  Var states;
  /// states x att_u, L x A.
  Var keys;
  /// Last encoder state, 1 x H.
  Var last;
  std::size_t length = 0;
};

/// Output-layer dropout applied to [state; context]. Disabled when rate is 0.
struct Dropout {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;

  bool active() const { return rate > 0.0 && rng != nullptr; }
};

inline std::size_t greedy_max_length(std::size_t source_length) { return 2 * source_length + 5; }

/// Forward computations of one model on one tape. Binds every parameter to the
/// tape on construction; gradients accumulate into the parameters' grad buffers.
class Seq2Seq {
 public:
  Seq2Seq(Tape& tape, ModelParams& params, Dropout dropout = {})
      : tape_(tape), config_(params.config()), dropout_(dropout) {
    auto bind = [&](const char* name) {
      Parameter& p = params.get(name);
      return tape.param(p.value, p.grad);
    };
    src_embed_ = bind("src_embed");
    tgt_embed_ = bind("tgt_embed");
    enc_ = {bind("enc_gate_z"), bind("enc_bias_z"), bind("enc_gate_r"), bind("enc_bias_r"),
            bind("enc_cand_x"), bind("enc_cand_h"), bind("enc_bias_h")};
    init_w_ = bind("init_w");
    init_b_ = bind("init_b");
    att_w_ = bind("att_w");
    att_u_ = bind("att_u");
    att_v_ = bind("att_v");
    dec_ = {bind("dec_gate_z"), bind("dec_bias_z"), bind("dec_gate_r"), bind("dec_bias_r"),
            bind("dec_cand_x"), bind("dec_cand_h"), bind("dec_bias_h")};
    out_w_ = bind("out_w");
    out_b_ = bind("out_b");
  }

  Tape& tape() { return tape_; }
  const ModelConfig& config() const { return config_; }

  EncoderStates encode(std::span<const TokenId> source) {
    if (source.empty()) throw Error("encode: empty source sentence");
    for (TokenId t : source) check_token(t, config_.source_vocab, "source");
    std::vector<std::size_t> ids(source.begin(), source.end());
    Var h = tape_.constant(Matrix(1, config_.hidden));
    std::vector<Var> states;
    states.reserve(source.size());
    for (std::size_t t = 0; t < source.size(); ++t) {
      Var x = gather_rows(src_embed_, {ids[t]});
      h = gru_step(enc_, x, h);
      states.push_back(h);
    }
    EncoderStates enc;
    enc.states = concat(states, 0);
    enc.keys = matmul(enc.states, att_u_);
    enc.last = states.back();
    enc.length = source.size();
    return enc;
  }

  /// Softmax-weighted sum of encoder states scored by v . tanh(W s + U h_i).
  /// The weights (1 x L) are written to `weights` when given.
  Var attention_context(Var state, const EncoderStates& enc, Var* weights = nullptr) {
    Var scores = matmul(tanh(enc.keys + matmul(state, att_w_)), att_v_);
    Var alpha = softmax(reshape(scores, 1, enc.length));
    if (weights) *weights = alpha;
    return matmul(alpha, enc.states);
  }

  Var initial_state(const EncoderStates& enc) { return tanh(matmul(enc.last, init_w_) + init_b_); }

  struct DecoderStep {
    Var state;
    Var distribution;
  };

  /// One decoder step from `state` after feeding `previous`.
  DecoderStep step(Var state, TokenId previous, const EncoderStates& enc) {
    check_token(previous, config_.target_vocab, "target");
    Var context = attention_context(state, enc);
    Var x = gather_rows(tgt_embed_, {static_cast<std::size_t>(previous)});
    Var next = gru_step(dec_, concat({x, context}, 1), state);
    Var features = concat({next, context}, 1);
    if (dropout_.active()) features = features * tape_.constant(dropout_mask(features.cols()));
    Var logits = matmul(features, out_w_) + out_b_;
    return {next, softmax(logits)};
  }

  /// Conditions step j on the gold prefix target[<j]; emits target[j].
  std::vector<StepOutput> decode_teacher_forced(const EncoderStates& enc,
                                                std::span<const TokenId> target) {
    if (target.empty()) throw Error("decode_teacher_forced: empty target sentence");
    for (TokenId t : target) check_token(t, config_.target_vocab, "target");
    std::vector<StepOutput> out;
    out.reserve(target.size());
    Var state = initial_state(enc);
    TokenId previous = kBos;
    for (TokenId gold : target) {
      DecoderStep s = step(state, previous, enc);
      out.push_back({gold, element(s.distribution, 0, gold), s.distribution});
      state = s.state;
      previous = gold;
    }
    return out;
  }

  /// Feeds back the argmax token until the end sentinel or `max_length` steps.
  /// The end-sentinel step is not returned.
  std::vector<StepOutput> decode_greedy(const EncoderStates& enc, std::size_t max_length) {
    if (max_length == 0) throw Error("decode_greedy: max length must be >= 1");
    std::vector<StepOutput> out;
    Var state = initial_state(enc);
    TokenId previous = kBos;
    for (std::size_t j = 0; j < max_length; ++j) {
      DecoderStep s = step(state, previous, enc);
      const auto probs = s.distribution.value().flat();
      const auto best = static_cast<TokenId>(
          std::distance(probs.begin(), std::max_element(probs.begin(), probs.end())));
      if (best == kEos) break;
      out.push_back({best, element(s.distribution, 0, best), s.distribution});
      state = s.state;
      previous = best;
    }
    return out;
  }

 private:
  struct GruWeights {
    Var gate_z;
    Var bias_z;
    Var gate_r;
    Var bias_r;
    Var cand_x;
    Var cand_h;
    Var bias_h;
  };

  Var gru_step(const GruWeights& w, Var x, Var h) {
    Var xh = concat({x, h}, 1);
    Var z = sigmoid(matmul(xh, w.gate_z) + w.bias_z);
    Var r = sigmoid(matmul(xh, w.gate_r) + w.bias_r);
    Var candidate = tanh(matmul(x, w.cand_x) + matmul(r * h, w.cand_h) + w.bias_h);
    return h + z * (candidate - h);
  }

  Matrix dropout_mask(std::size_t width) {
    Matrix mask(1, width);
    std::bernoulli_distribution keep(1.0 - dropout_.rate);
    const double scale = 1.0 / (1.0 - dropout_.rate);
    for (double& m : mask.flat()) m = keep(*dropout_.rng) ? scale : 0.0;
    return mask;
  }

  static void check_token(TokenId t, std::size_t vocab, const char* side) {
    if (t >= vocab) {
      throw Error(std::string(side) + " token " + std::to_string(t) + " out of vocabulary of size " +
                  std::to_string(vocab));
    }
  }

  Tape& tape_;
  ModelConfig config_;
  Dropout dropout_;
  Var src_embed_;
  Var tgt_embed_;
  GruWeights enc_;
  Var init_w_;
  Var init_b_;
  Var att_w_;
  Var att_u_;
  Var att_v_;
  GruWeights dec_;
  Var out_w_;
  Var out_b_;
};

/// -sum_j log distribution_j[target_j].
inline Var cross_entropy_loss(std::span<const StepOutput> steps, std::span<const TokenId> target) {
  if (steps.size() != target.size()) {
    throw Error("cross_entropy_loss: " + std::to_string(steps.size()) + " steps for " +
                std::to_string(target.size()) + " target tokens");
  }
  if (steps.empty()) throw Error("cross_entropy_loss: no steps");
  Var total = log(element(steps[0].distribution, 0, target[0]));
  for (std::size_t j = 1; j < steps.size(); ++j) {
    total = total + log(element(steps[j].distribution, 0, target[j]));
  }
  return scale(total, -1.0);
}

/// Emitted tokens and their probabilities, skipping any reserved ids other than <unk>.
inline ProbSequence to_prob_sequence(std::span<const StepOutput> steps) {
  ProbSequence seq;
  for (const StepOutput& s : steps) {
    if (is_reserved(s.token) && s.token != kUnk) continue;
    seq.tokens.push_back(s.token);
    seq.probs.push_back(s.prob);
  }
  return seq;
}

inline TokenSequence tokens_of(std::span<const StepOutput> steps) {
  TokenSequence out;
  for (const StepOutput& s : steps) {
    if (is_reserved(s.token) && s.token != kUnk) continue;
    out.push_back(s.token);
  }
  return out;
}

/// Gold target followed by the end sentinel, as used for cross-entropy.
inline TokenSequence with_eos(std::span<const TokenId> target) {
  TokenSequence out(target.begin(), target.end());
  out.push_back(kEos);
  return out;
}

}  // namespace ngramgrad
