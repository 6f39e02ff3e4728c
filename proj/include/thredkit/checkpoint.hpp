#ifndef THREDKIT_CHECKPOINT_HPP
#define THREDKIT_CHECKPOINT_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "thredkit/binary_io.hpp"
#include "thredkit/model.hpp"

namespace thredkit {

struct AdamState {
  std::uint64_t t = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Everything needed to resume training or to generate: configuration,
/// weights, optimizer moments, step counter and the vocabulary tokens
/// (regular tokens only; IDs start after the specials).
struct Checkpoint {
  model::ModelConfig config;
  std::map<std::string, Tensor> params;
  AdamState optimizer;
  std::uint64_t global_step = 0;
  std::vector<std::string> vocab;

  model::Model instantiate() const { return model::Model(config, params); }

  Vocabulary vocabulary() const { return Vocabulary::from_tokens(vocab); }

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline Checkpoint make_checkpoint(const model::Model& m, const AdamState& opt, std::uint64_t step,
                                  std::vector<std::string> vocab = {}) {
  return {m.config(), m.weights(), opt, step, std::move(vocab)};
}

inline constexpr std::uint32_t checkpoint_version = 1;

/// "THRD", u32 version, config text, u64 global step, vocabulary, then the
/// parameter table of (name, u32 rank, u64 dims..., row-major f64 LE) and the
/// optimizer moments in the same order.
inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  out.write("THRD", 4);
  io::write_le<std::uint32_t>(out, checkpoint_version);
  io::write_string(out, ck.config.serialize());
  io::write_le<std::uint64_t>(out, ck.global_step);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.vocab.size()));
  for (const auto& t : ck.vocab) io::write_string(out, t);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& [name, t] : ck.params) {
    io::write_string(out, name);
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.dims()) io::write_le<std::uint64_t>(out, d);
    io::write_doubles(out, t.storage());
  }
  io::write_le<std::uint64_t>(out, ck.optimizer.t);
  const bool has_moments = !ck.optimizer.m.empty();
  io::write_le<std::uint32_t>(out, has_moments ? 1 : 0);
  if (has_moments) {
    for (const auto& [name, t] : ck.params) {
      io::write_doubles(out, ck.optimizer.m.at(name).storage());
      io::write_doubles(out, ck.optimizer.v.at(name).storage());
    }
  }
}

inline Checkpoint read_checkpoint(std::istream& in, const std::string& source) {
  io::expect_magic(in, "THRD", source);
  const auto version = io::read_le<std::uint32_t>(in);
  if (version != checkpoint_version) {
    throw IoError("'" + source + "': unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config = model::ModelConfig::parse(io::read_string(in, 1u << 16));
  ck.global_step = io::read_le<std::uint64_t>(in);
  const auto n_vocab = io::read_le<std::uint32_t>(in);
  ck.vocab.resize(n_vocab);
  for (auto& t : ck.vocab) t = io::read_string(in, 1u << 16);
  const auto n_params = io::read_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name = io::read_string(in, 1024);
    const auto rank = io::read_le<std::uint32_t>(in);
    if (rank > 8) throw IoError("'" + source + "': corrupt tensor rank");
    Dims dims(rank);
    for (auto& d : dims) d = io::read_le<std::uint64_t>(in);
    const std::size_t n = element_count(dims);
    if (n > (std::size_t{1} << 32)) throw IoError("'" + source + "': corrupt tensor size");
    if (!ck.params.emplace(name, Tensor(dims, io::read_doubles(in, n))).second) {
      throw IoError("'" + source + "': duplicate parameter '" + name + "'");
    }
  }
  ck.optimizer.t = io::read_le<std::uint64_t>(in);
  if (io::read_le<std::uint32_t>(in) == 1) {
    for (const auto& [name, t] : ck.params) {
      ck.optimizer.m.emplace(name, Tensor(t.dims(), io::read_doubles(in, t.size())));
      ck.optimizer.v.emplace(name, Tensor(t.dims(), io::read_doubles(in, t.size())));
    }
  }
  // the parameter table must match the variant's architecture exactly
  const auto shapes = model::Model::parameter_shapes(ck.config);
  if (shapes.size() != ck.params.size()) throw IoError("'" + source + "': parameter table does not match variant");
  for (const auto& [name, dims] : shapes) {
    auto it = ck.params.find(name);
    if (it == ck.params.end() || it->second.dims() != dims) {
      throw IoError("'" + source + "': parameter '" + name + "' missing or misshapen");
    }
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  write_checkpoint(out, ck);
  if (!out) throw IoError("error while writing '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint '" + path + "'");
  try {
    return read_checkpoint(in, path);
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw IoError("'" + path + "': " + e.what());
  }
}

}  // namespace thredkit

#endif  // THREDKIT_CHECKPOINT_HPP
