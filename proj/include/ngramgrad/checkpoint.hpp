#pragma once

// Checkpoint file layout:
//
//   ngramgrad-checkpoint
//   version 1
//   fingerprint <8 hex digits of the model configuration hash>
//   model source_vocab=V;target_vocab=V;embedding=E;hidden=H;attention=A
//   params <count>
//   <name> <rows> <cols>        (one line per parameter, manifest order)
//   data
//   <little-endian float64 values of every parameter, manifest order>
//   optimizer <sgd|adadelta> <count>
//   <name> <rows> <cols>
//   data
//   <little-endian float64 values of the optimizer arrays>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ngramgrad/error.hpp"
#include "ngramgrad/optim.hpp"
#include "ngramgrad/seq2seq.hpp"

namespace ngramgrad {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  OptimizerState optimizer;

  std::string fingerprint() const { return model_fingerprint(params.config()); }
};

namespace detail {

struct ManifestEntry {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

inline void write_f64(std::ostream& out, const Matrix& m) {
  for (double v : m.flat()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    out.write(bytes, 8);
  }
}

inline void read_f64(std::istream& in, Matrix& m) {
  for (double& v : m.flat()) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw Error("checkpoint: truncated data");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    v = std::bit_cast<double>(bits);
  }
}

inline std::string expect_line(std::istream& in, const std::string& what) {
  std::string line;
  if (!std::getline(in, line)) throw Error("checkpoint: missing " + what);
  return line;
}

inline std::vector<ManifestEntry> read_manifest(std::istream& in, std::size_t count) {
  std::vector<ManifestEntry> entries(count);
  for (ManifestEntry& e : entries) {
    std::istringstream line(expect_line(in, "manifest entry"));
    if (!(line >> e.name >> e.rows >> e.cols)) throw Error("checkpoint: bad manifest entry");
  }
  if (expect_line(in, "data marker") != "data") throw Error("checkpoint: expected 'data'");
  return entries;
}

inline ModelConfig parse_model_line(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  for (std::string field; std::getline(in, field, ';');) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw Error("checkpoint: bad model field '" + field + "'");
    const std::string key = field.substr(0, eq);
    const std::size_t value = std::stoul(field.substr(eq + 1));
    if (key == "source_vocab") c.source_vocab = value;
    else if (key == "target_vocab") c.target_vocab = value;
    else if (key == "embedding") c.embedding = value;
    else if (key == "hidden") c.hidden = value;
    else if (key == "attention") c.attention = value;
    else throw Error("checkpoint: unknown model field '" + key + "'");
  }
  return c;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const ModelParams& params = ckpt.params;
  out << "ngramgrad-checkpoint\n"
      << "version " << kCheckpointVersion << "\n"
      << "fingerprint " << ckpt.fingerprint() << "\n"
      << "model " << describe(params.config()) << "\n"
      << "params " << params.params().size() << "\n";
  for (const Parameter& p : params.params()) {
    out << p.name << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
  }
  out << "data\n";
  for (const Parameter& p : params.params()) detail::write_f64(out, p.value);

  const OptimizerState& opt = ckpt.optimizer;
  out << "optimizer " << optimizer_name(opt.kind) << ' '
      << opt.mean_sq_grad.size() + opt.mean_sq_delta.size() << '\n';
  for (std::size_t k = 0; k < opt.mean_sq_grad.size(); ++k) {
    const Parameter& p = params.params()[k];
    out << "mean_sq_grad/" << p.name << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
  }
  for (std::size_t k = 0; k < opt.mean_sq_delta.size(); ++k) {
    const Parameter& p = params.params()[k];
    out << "mean_sq_delta/" << p.name << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
  }
  out << "data\n";
  for (const Matrix& m : opt.mean_sq_grad) detail::write_f64(out, m);
  for (const Matrix& m : opt.mean_sq_delta) detail::write_f64(out, m);
}

inline Checkpoint read_checkpoint(std::istream& in) {
  if (detail::expect_line(in, "magic") != "ngramgrad-checkpoint") {
    throw Error("checkpoint: not a ngramgrad checkpoint");
  }
  if (detail::expect_line(in, "version") != "version " + std::to_string(kCheckpointVersion)) {
    throw Error("checkpoint: unsupported version");
  }
  const std::string fp_line = detail::expect_line(in, "fingerprint");
  const std::string model_line = detail::expect_line(in, "model");
  if (fp_line.rfind("fingerprint ", 0) != 0 || model_line.rfind("model ", 0) != 0) {
    throw Error("checkpoint: malformed header");
  }
  const ModelConfig config = detail::parse_model_line(model_line.substr(6));
  if (fp_line.substr(12) != model_fingerprint(config)) {
    throw Error("checkpoint: fingerprint does not match the stored model description");
  }

  Checkpoint ckpt{ModelParams(config), {}};
  std::istringstream count_line(detail::expect_line(in, "parameter count"));
  std::string tag;
  std::size_t count = 0;
  if (!(count_line >> tag >> count) || tag != "params") throw Error("checkpoint: bad params line");
  const auto manifest = detail::read_manifest(in, count);
  auto& params = ckpt.params.params();
  if (manifest.size() != params.size()) throw Error("checkpoint: parameter count mismatch");
  for (std::size_t k = 0; k < manifest.size(); ++k) {
    const auto& e = manifest[k];
    if (e.name != params[k].name || e.rows != params[k].value.rows() ||
        e.cols != params[k].value.cols()) {
      throw Error("checkpoint: manifest entry " + e.name + " does not match the model");
    }
  }
  for (Parameter& p : params) detail::read_f64(in, p.value);

  std::istringstream opt_line(detail::expect_line(in, "optimizer"));
  std::string kind;
  if (!(opt_line >> tag >> kind >> count) || tag != "optimizer") {
    throw Error("checkpoint: bad optimizer line");
  }
  ckpt.optimizer.kind = parse_optimizer(kind);
  const auto opt_manifest = detail::read_manifest(in, count);
  if (count != 0 && count != 2 * params.size()) throw Error("checkpoint: bad optimizer manifest");
  std::vector<Matrix> arrays;
  for (const auto& e : opt_manifest) {
    arrays.emplace_back(e.rows, e.cols);
    detail::read_f64(in, arrays.back());
  }
  const std::size_t half = arrays.size() / 2;
  ckpt.optimizer.mean_sq_grad.assign(arrays.begin(), arrays.begin() + half);
  ckpt.optimizer.mean_sq_delta.assign(arrays.begin() + half, arrays.end());
  return ckpt;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  write_checkpoint(out, ckpt);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("missing checkpoint file " + path.string());
  return read_checkpoint(in);
}

}  // namespace ngramgrad
