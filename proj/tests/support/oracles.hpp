#ifndef THREDKIT_TESTS_ORACLES_HPP
#define THREDKIT_TESTS_ORACLES_HPP

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "thredkit/corpus.hpp"
#include "thredkit/decode.hpp"
#include "thredkit/rng.hpp"
#include "thredkit/tensor.hpp"
#include "thredkit/topics.hpp"

namespace thredkit::fixtures {

// ---- reference tables --------------------------------------------------------

struct ReferenceRow {
  const char* table;
  const char* model;
  double dist1, dist2, topic_div;
  double f1_d1, f1_d2, f05_d1, f05_d2, f15_d1, f15_d2;
};

inline const std::array<ReferenceRow, 8>& reference_rows() {
  static const std::array<ReferenceRow, 8> rows{{
      {"ubuntu", "seq2seq", 0.7870, 0.9564, 0.2723, 0.7562, 0.8265, 0.7744, 0.8998, 0.7450, 0.7855},
      {"ubuntu", "hred", 0.7093, 0.9025, 0.2382, 0.7346, 0.8262, 0.7192, 0.8704, 0.7448, 0.8002},
      {"ubuntu", "vhred", 0.8018, 0.9702, 0.2908, 0.7527, 0.8194, 0.7814, 0.9037, 0.7353, 0.7732},
      {"ubuntu", "thred", 0.8008, 0.9712, 0.2750, 0.7610, 0.8302, 0.7844, 0.9094, 0.7467, 0.7863},
      {"daily", "seq2seq", 0.6044, 0.9699, 0.3276, 0.6366, 0.7942, 0.6169, 0.8911, 0.6499, 0.7425},
      {"daily", "hred", 0.6349, 0.9229, 0.3334, 0.6504, 0.7741, 0.6410, 0.8570, 0.6565, 0.7289},
      {"daily", "vhred", 0.6310, 0.9165, 0.3351, 0.6475, 0.7707, 0.6375, 0.8520, 0.6541, 0.7262},
      {"daily", "thred", 0.6604, 0.9273, 0.3101, 0.6748, 0.7912, 0.6661, 0.8676, 0.6805, 0.7489},
  }};
  return rows;
}

inline const std::vector<double>& reference_ppmi_divergences() {
  static const std::vector<double> v{6.8266e-06, 0.0916, 0.0739, 0.0047, 0.1112,
                                     0.0896,     0.0256, 0.0008, 0.0881, 0.1065};
  return v;
}

inline const std::vector<double>& reference_nmf_divergences() {
  static const std::vector<double> v{0.0133, 0.0106, 0.0102, 0.0035, 0.0093,
                                     0.0088, 0.0082, 0.0010, 0.0092, 0.0107};
  return v;
}

inline constexpr double reference_ppmi_variance = 0.001897;
inline constexpr double reference_nmf_variance = 0.000012;

// ---- PPMI by pair enumeration -------------------------------------------------

/// Dense PPMI over the content words of `vocab`, counting every ordered pair
/// of content-word positions (i != j, |i - j| <= window) of different type.
inline Tensor brute_force_ppmi(const std::vector<Dialog>& dialogs, const Vocabulary& vocab,
                               const topics::StopwordSet& stopwords, std::size_t window,
                               std::vector<std::string>* words_out = nullptr) {
  std::vector<std::string> words;
  std::vector<long> index(vocab.size(), -1);
  for (std::size_t id = special::count; id < vocab.size(); ++id) {
    const auto& t = vocab.token_of(static_cast<TokenId>(id));
    if (stopwords.count(t)) continue;
    index[id] = static_cast<long>(words.size());
    words.push_back(t);
  }
  const std::size_t n = words.size();
  std::vector<double> count(n * n, 0.0);
  for (const auto& d : dialogs) {
    for (const auto& u : d.utterances) {
      std::vector<std::size_t> seq;
      for (TokenId id : u)
        if (index[id] >= 0) seq.push_back(static_cast<std::size_t>(index[id]));
      for (std::size_t i = 0; i < seq.size(); ++i) {
        for (std::size_t j = 0; j < seq.size(); ++j) {
          const std::size_t gap = i > j ? i - j : j - i;
          if (gap == 0 || gap > window || seq[i] == seq[j]) continue;
          count[seq[i] * n + seq[j]] += 1.0;
        }
      }
    }
  }
  double total = 0.0;
  std::vector<double> row(n, 0.0), col(n, 0.0);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      total += count[a * n + b];
      row[a] += count[a * n + b];
      col[b] += count[a * n + b];
    }
  Tensor m({n, n});
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      if (count[a * n + b] == 0.0) continue;
      const double pab = count[a * n + b] / total;
      const double pa = row[a] / total, pb = col[b] / total;
      m.at(a, b) = std::max(std::log(pab / (pa * pb)), 0.0);
    }
  if (words_out) *words_out = words;
  return m;
}

/// Random corpus of `tokens` tokens over a small alphabet with stopwords
/// sprinkled in; returned as one dialog per chunk of 2-3 utterances.
inline std::vector<RawDialog> random_small_corpus(std::size_t tokens, Rng& rng) {
  static const std::vector<std::string> alphabet{"apple", "berry", "cider", "dough", "eel", "fig", "the", "a", "is"};
  std::vector<std::string> stream;
  for (std::size_t i = 0; i < tokens; ++i) stream.push_back(alphabet[rng.below(alphabet.size())]);
  std::vector<RawDialog> out;
  std::size_t pos = 0;
  while (pos < stream.size()) {
    RawDialog d;
    const std::size_t utts = 2 + rng.below(2);
    for (std::size_t u = 0; u < utts && pos < stream.size(); ++u) {
      const std::size_t len = 1 + rng.below(5);
      std::vector<std::string> words;
      for (std::size_t k = 0; k < len && pos < stream.size(); ++k) words.push_back(stream[pos++]);
      d.utterances.push_back(words);
    }
    d.source_id = "rand:" + std::to_string(out.size());
    out.push_back(std::move(d));
  }
  return out;
}

// ---- exhaustive decoding ------------------------------------------------------

struct ExhaustiveBest {
  Utterance tokens;
  double score = -std::numeric_limits<double>::infinity();
};

/// Best length-normalized sequence over every complete hypothesis: those
/// ending in EOU within max_len tokens, plus unfinished ones of exactly
/// max_len tokens. Banned tokens are never expanded.
template <decode::StepModel M>
ExhaustiveBest exhaustive_best(const M& m, std::size_t max_len) {
  ExhaustiveBest best;
  struct Frame {
    typename M::State state;
    Utterance tokens;
    double log_prob;
  };
  std::vector<Frame> stack{{m.initial_state(), {}, 0.0}};
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    auto [next, logp] = m.step(f.state, f.tokens.empty() ? special::sos : f.tokens.back());
    for (std::size_t id = 0; id < logp.size(); ++id) {
      if (decode::banned(static_cast<TokenId>(id))) continue;
      Utterance t = f.tokens;
      t.push_back(static_cast<TokenId>(id));
      const double lp = f.log_prob + logp[id];
      if (id == special::eou || t.size() == max_len) {
        const double score = lp / static_cast<double>(t.size());
        if (score > best.score) best = {t, score};
      } else {
        stack.push_back({next, std::move(t), lp});
      }
    }
  }
  return best;
}

}  // namespace thredkit::fixtures

#endif  // THREDKIT_TESTS_ORACLES_HPP
