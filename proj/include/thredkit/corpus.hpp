#ifndef THREDKIT_CORPUS_HPP
#define THREDKIT_CORPUS_HPP

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "thredkit/error.hpp"
#include "thredkit/rng.hpp"

namespace thredkit {

using TokenId = std::uint32_t;

namespace special {
inline constexpr TokenId pad = 0;
inline constexpr TokenId unk = 1;
inline constexpr TokenId eou = 2;
inline constexpr TokenId sos = 3;
inline constexpr TokenId count = 4;
}  // namespace special

/// Utterance separator in corpus files and the surface form of EOU.
inline constexpr std::string_view eou_marker = "__eou__";

inline const std::array<std::string, special::count>& special_surfaces() {
  static const std::array<std::string, special::count> s{"<pad>", "<unk>", std::string(eou_marker),
                                                         "<sos>"};
  return s;
}

/// One speaker turn as token IDs, terminated by special::eou.
using Utterance = std::vector<TokenId>;

struct Dialog {
  std::vector<Utterance> utterances;
  std::string source_id;
};

/// Dialog before vocabulary lookup: utterances of whitespace tokens, no EOU.
struct RawDialog {
  std::vector<std::vector<std::string>> utterances;
  std::string source_id;

  friend bool operator==(const RawDialog&, const RawDialog&) = default;
};

class Vocabulary {
 public:
  Vocabulary() {
    for (const auto& s : special_surfaces()) {
      id_of_.emplace(s, static_cast<TokenId>(token_of_.size()));
      token_of_.push_back(s);
      freq_.push_back(0);
    }
  }

  /// Tokens must be unique, non-special, and already in rank order.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens,
                                const std::vector<std::uint64_t>& freqs = {}) {
    Vocabulary v;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const auto& t = tokens[i];
      if (t.empty() || v.id_of_.contains(t)) {
        throw ConfigError("vocabulary: duplicate or empty token '" + t + "'");
      }
      v.id_of_.emplace(t, static_cast<TokenId>(v.token_of_.size()));
      v.token_of_.push_back(t);
      v.freq_.push_back(i < freqs.size() ? freqs[i] : 0);
    }
    return v;
  }

  std::size_t size() const noexcept { return token_of_.size(); }

  TokenId id_of(std::string_view token) const {
    auto it = id_of_.find(std::string(token));
    return it == id_of_.end() ? special::unk : it->second;
  }

  bool contains(std::string_view token) const { return id_of_.contains(std::string(token)); }

  const std::string& token_of(TokenId id) const {
    if (id >= token_of_.size()) {
      throw ContractError("token id " + std::to_string(id) + " outside vocabulary of size " +
                          std::to_string(token_of_.size()));
    }
    return token_of_[id];
  }

  std::uint64_t freq(TokenId id) const { return freq_.at(id); }

  /// Non-special tokens in ID order.
  std::vector<std::string> regular_tokens() const {
    return {token_of_.begin() + special::count, token_of_.end()};
  }

  static bool is_special(TokenId id) noexcept { return id < special::count; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.token_of_ == b.token_of_;
  }

 private:
  std::unordered_map<std::string, TokenId> id_of_;
  std::vector<std::string> token_of_;
  std::vector<std::uint64_t> freq_;
};

// ---- parsing --------------------------------------------------------------

inline std::vector<std::string> split_whitespace(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string to_lower_ascii(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

/// Splits one corpus line into utterances at `__eou__`; empty utterances are
/// dropped.
inline std::vector<std::vector<std::string>> parse_eou_line(std::string_view line, bool lowercase) {
  std::vector<std::vector<std::string>> utterances;
  std::vector<std::string> current;
  for (auto& tok : split_whitespace(line)) {
    if (tok == eou_marker) {
      if (!current.empty()) utterances.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(lowercase ? to_lower_ascii(std::move(tok)) : std::move(tok));
    }
  }
  if (!current.empty()) utterances.push_back(std::move(current));
  return utterances;
}

enum class CorpusFormat { eou_lines };

inline CorpusFormat parse_corpus_format(std::string_view tag) {
  if (tag == "eou-lines") return CorpusFormat::eou_lines;
  throw ConfigError("unknown corpus format '" + std::string(tag) + "'");
}

struct CorpusLoad {
  std::vector<RawDialog> dialogs;
  std::size_t skipped = 0;  // lines with fewer than two utterances
};

inline CorpusLoad parse_corpus(std::istream& in, const std::string& source, bool lowercase = true) {
  CorpusLoad result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto utts = parse_eou_line(line, lowercase);
    if (utts.size() < 2) {
      // blank lines are not dialogs and are not counted as malformed
      if (!utts.empty()) ++result.skipped;
      continue;
    }
    result.dialogs.push_back({std::move(utts), source + ":" + std::to_string(line_no)});
  }
  return result;
}

/// Reads a corpus file. Throws IoError when unreadable and EmptyCorpusError
/// when no line yields a dialog.
inline CorpusLoad load_corpus(const std::string& path, CorpusFormat fmt = CorpusFormat::eou_lines,
                              bool lowercase = true) {
  (void)fmt;
  std::ifstream in(path);
  if (!in) throw IoError("cannot read corpus file '" + path + "'");
  CorpusLoad result = parse_corpus(in, path, lowercase);
  if (in.bad()) throw IoError("error while reading '" + path + "'");
  if (result.dialogs.empty()) throw EmptyCorpusError("no valid dialogs in '" + path + "'");
  return result;
}

// ---- vocabulary -----------------------------------------------------------

inline constexpr std::size_t default_top_k = 20000;

/// Keeps the `top_k` most frequent tokens; ties are broken lexicographically.
inline Vocabulary build_vocab(const std::vector<RawDialog>& dialogs,
                              std::size_t top_k = default_top_k) {
  if (top_k < 1) throw ConfigError("build_vocab: top_k must be >= 1");
  std::map<std::string, std::uint64_t> counts;
  for (const auto& d : dialogs) {
    for (const auto& u : d.utterances) {
      for (const auto& t : u) {
        if (t == eou_marker) continue;
        ++counts[t];
      }
    }
  }
  // special surfaces occurring in text are not re-added
  for (const auto& s : special_surfaces()) counts.erase(s);

  std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > top_k) ranked.resize(top_k);

  std::vector<std::string> tokens;
  std::vector<std::uint64_t> freqs;
  for (auto& [t, c] : ranked) {
    tokens.push_back(t);
    freqs.push_back(c);
  }
  return Vocabulary::from_tokens(tokens, freqs);
}

/// Writes the 4-line special header followed by one token per line, so the
/// token on file line L (1-based) has ID L - 1.
inline void write_vocab(std::ostream& out, const Vocabulary& vocab) {
  for (std::size_t id = 0; id < vocab.size(); ++id) out << vocab.token_of(static_cast<TokenId>(id)) << '\n';
}

inline void save_vocab(const std::string& path, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary file '" + path + "'");
  write_vocab(out, vocab);
  if (!out) throw IoError("error while writing '" + path + "'");
}

inline Vocabulary read_vocab(std::istream& in, const std::string& source) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() < special::count) {
    throw IoError("vocabulary file '" + source + "' lacks the special-token header");
  }
  for (std::size_t i = 0; i < special::count; ++i) {
    if (lines[i] != special_surfaces()[i]) {
      throw IoError("vocabulary file '" + source + "': line " + std::to_string(i + 1) +
                    " should be '" + special_surfaces()[i] + "'");
    }
  }
  std::vector<std::string> tokens(lines.begin() + special::count, lines.end());
  while (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
  try {
    return Vocabulary::from_tokens(tokens);
  } catch (const ConfigError& e) {
    throw IoError("vocabulary file '" + source + "': " + e.what());
  }
}

inline Vocabulary load_vocab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read vocabulary file '" + path + "'");
  return read_vocab(in, path);
}

// ---- encoding -------------------------------------------------------------

inline Utterance encode_utterance(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  Utterance u;
  u.reserve(tokens.size() + 1);
  for (const auto& t : tokens) u.push_back(vocab.id_of(t));
  u.push_back(special::eou);
  return u;
}

inline Dialog encode(const RawDialog& raw, const Vocabulary& vocab) {
  Dialog d;
  d.source_id = raw.source_id;
  d.utterances.reserve(raw.utterances.size());
  for (const auto& u : raw.utterances) d.utterances.push_back(encode_utterance(u, vocab));
  return d;
}

inline std::vector<Dialog> encode_all(const std::vector<RawDialog>& raws, const Vocabulary& vocab) {
  std::vector<Dialog> out;
  out.reserve(raws.size());
  for (const auto& r : raws) out.push_back(encode(r, vocab));
  return out;
}

/// Surface tokens of an utterance, stopping at the first EOU.
inline std::vector<std::string> decode_utterance(const Utterance& u, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (TokenId id : u) {
    if (id == special::eou) break;
    out.push_back(vocab.token_of(id));
  }
  return out;
}

inline RawDialog decode_dialog(const Dialog& d, const Vocabulary& vocab) {
  RawDialog r;
  r.source_id = d.source_id;
  for (const auto& u : d.utterances) r.utterances.push_back(decode_utterance(u, vocab));
  return r;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  return s;
}

// ---- splitting ------------------------------------------------------------

template <typename T>
struct Split {
  std::vector<T> train;
  std::vector<T> valid;
  std::vector<T> test;
};

/// Seeded random partition. Sizes are cut at round(r0 n) and
/// round((r0 + r1) n); each part keeps input order.
template <typename T>
Split<T> split(const std::vector<T>& items, const std::array<double, 3>& ratios, std::uint64_t seed) {
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ConfigError("split: ratios must be non-negative");
  }
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("split: ratios sum to " + std::to_string(total) + ", expected 1");
  }
  const std::size_t n = items.size();
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  rng.shuffle(perm);

  const auto cut1 = static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(n)));
  const auto cut2 = std::max(cut1, std::min(n, static_cast<std::size_t>(std::llround(
                                                   (ratios[0] + ratios[1]) * static_cast<double>(n)))));
  auto take = [&](std::size_t lo, std::size_t hi) {
    std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(lo),
                                 perm.begin() + static_cast<std::ptrdiff_t>(hi));
    std::sort(idx.begin(), idx.end());
    std::vector<T> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(items[i]);
    return out;
  };
  return {take(0, std::min(cut1, n)), take(std::min(cut1, n), cut2), take(cut2, n)};
}

inline std::array<double, 3> parse_ratios(std::string_view text) {
  std::array<double, 3> r{};
  std::stringstream ss{std::string(text)};
  std::string part;
  std::size_t i = 0;
  while (std::getline(ss, part, ',')) {
    if (i >= 3) throw ConfigError("split ratios need exactly three values: '" + std::string(text) + "'");
    try {
      r[i++] = std::stod(part);
    } catch (const std::exception&) {
      throw ConfigError("bad split ratio '" + part + "'");
    }
  }
  if (i != 3) throw ConfigError("split ratios need exactly three values: '" + std::string(text) + "'");
  return r;
}

// ---- training pairs -------------------------------------------------------

/// A (context, reply) pair: the reply is predicted from every preceding turn.
struct Example {
  std::vector<Utterance> context;
  Utterance target;
};

/// One example per reply position m >= 1 of every dialog.
inline std::vector<Example> make_examples(const std::vector<Dialog>& dialogs) {
  std::vector<Example> out;
  for (const auto& d : dialogs) {
    for (std::size_t m = 1; m < d.utterances.size(); ++m) {
      out.push_back({{d.utterances.begin(), d.utterances.begin() + static_cast<std::ptrdiff_t>(m)},
                     d.utterances[m]});
    }
  }
  return out;
}

/// Checks that every ID is inside the vocabulary.
inline void validate_dialog(const Dialog& d, std::size_t vocab_size) {
  if (d.utterances.size() < 2) throw ContractError("dialog '" + d.source_id + "' has < 2 utterances");
  for (const auto& u : d.utterances) {
    if (u.empty()) throw ContractError("dialog '" + d.source_id + "' has an empty utterance");
    for (TokenId id : u) {
      if (id >= vocab_size) {
        throw ContractError("dialog '" + d.source_id + "': token id " + std::to_string(id) +
                            " >= vocabulary size " + std::to_string(vocab_size));
      }
    }
  }
}

}  // namespace thredkit

#endif  // THREDKIT_CORPUS_HPP
