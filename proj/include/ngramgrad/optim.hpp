#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ngramgrad/error.hpp"
#include "ngramgrad/matrix.hpp"
#include "ngramgrad/seq2seq.hpp"

namespace ngramgrad {

enum class OptimizerKind { kSgd, kAdadelta };

inline OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adadelta") return OptimizerKind::kAdadelta;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adadelta)");
}

inline const char* optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::kSgd ? "sgd" : "adadelta";
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdadelta;
  /// Step size for SGD; multiplies the Adadelta update (1 = plain Adadelta).
  double lr = 1.0;
  double rho = 0.95;
  double eps = 1e-6;

  void validate() const {
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
    if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  }
};

/// Adadelta accumulators E[g^2] and E[dx^2], one pair per parameter. Empty for SGD.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kAdadelta;
  std::vector<Matrix> mean_sq_grad;
  std::vector<Matrix> mean_sq_delta;

  bool empty() const { return mean_sq_grad.empty(); }
  bool operator==(const OptimizerState&) const = default;
};

inline OptimizerState make_optimizer_state(OptimizerKind kind, std::span<const Parameter> params) {
  OptimizerState s;
  s.kind = kind;
  if (kind == OptimizerKind::kAdadelta) {
    for (const Parameter& p : params) {
      s.mean_sq_grad.emplace_back(p.value.rows(), p.value.cols());
      s.mean_sq_delta.emplace_back(p.value.rows(), p.value.cols());
    }
  }
  return s;
}

/// Applies one update from the gradients held in `params`.
inline void optimizer_step(std::span<Parameter> params, OptimizerState& state,
                           const OptimizerConfig& config) {
  for (const Parameter& p : params) {
    for (double g : p.grad.flat()) {
      if (!std::isfinite(g)) throw DivergenceError("non-finite gradient in parameter " + p.name);
    }
  }
  if (config.kind == OptimizerKind::kSgd) {
    for (Parameter& p : params) {
      for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= config.lr * p.grad[i];
    }
    return;
  }
  if (state.kind != OptimizerKind::kAdadelta || state.mean_sq_grad.size() != params.size()) {
    state = make_optimizer_state(OptimizerKind::kAdadelta, params);
  }
  const double rho = config.rho;
  const double eps = config.eps;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = params[k];
    Matrix& eg = state.mean_sq_grad[k];
    Matrix& ed = state.mean_sq_delta[k];
    if (!eg.same_shape(p.value)) throw Error("optimizer state does not match parameter " + p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      eg[i] = rho * eg[i] + (1.0 - rho) * g * g;
      const double delta = -(std::sqrt(ed[i] + eps) / std::sqrt(eg[i] + eps)) * g;
      ed[i] = rho * ed[i] + (1.0 - rho) * delta * delta;
      p.value[i] += config.lr * delta;
    }
  }
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_grad_norm(std::span<Parameter> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter& p : params) {
    for (double g : p.grad.flat()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (Parameter& p : params) {
      for (double& g : p.grad.flat()) g *= factor;
    }
  }
  return norm;
}

}  // namespace ngramgrad
