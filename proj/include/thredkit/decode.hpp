#ifndef THREDKIT_DECODE_HPP
#define THREDKIT_DECODE_HPP

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "thredkit/corpus.hpp"
#include "thredkit/model.hpp"

namespace thredkit::decode {

inline constexpr std::size_t default_beam = 5;
inline constexpr std::size_t default_max_len = 50;

/// Anything that yields next-token log-probabilities from a decoder state.
template <typename M>
concept StepModel = requires(const M& m, const typename M::State& s, TokenId t) {
  { m.initial_state() } -> std::convertible_to<typename M::State>;
  { m.step(s, t) } -> std::convertible_to<std::pair<typename M::State, std::vector<double>>>;
};

/// Tokens that are never generated.
inline bool banned(TokenId id) { return id == special::unk || id == special::pad || id == special::sos; }

/// Decoder of a trained model bound to one context and one latent draw.
class ModelStepper {
 public:
  using State = model::LstmState;

  /// z, for latent variants, is drawn once from P(z|c) using `seed`.
  ModelStepper(const model::Model& m, const std::vector<Utterance>& context, std::uint64_t seed) : model_(&m) {
    ad::NoGradGuard guard;
    c_ = m.context_state(context);
    if (model::has_latent(m.config().variant)) {
      Rng rng(seed);
      auto lat = m.prior_posterior(c_, std::nullopt);
      z_ = ad::gaussian_sample(lat.prior.mu, lat.prior.var, rng);
    }
  }

  /// Fixed latent sample (or none for seq2seq/hred).
  ModelStepper(const model::Model& m, const std::vector<Utterance>& context, std::optional<ad::Var> z)
      : model_(&m), z_(std::move(z)) {
    ad::NoGradGuard guard;
    c_ = m.context_state(context);
  }

  State initial_state() const { return model_->zero_state(); }

  std::pair<State, std::vector<double>> step(const State& s, TokenId prev) const {
    ad::NoGradGuard guard;
    auto [next, logp] = model_->decode_step(c_, z_, s, prev);
    return {next, logp.value().storage()};
  }

  const ad::Var& context() const noexcept { return c_; }
  const std::optional<ad::Var>& latent() const noexcept { return z_; }
  const model::Model& model() const noexcept { return *model_; }

 private:
  const model::Model* model_;
  ad::Var c_;
  std::optional<ad::Var> z_;
};

/// Argmax decoding (ties go to the lowest ID); stops after EOU or max_len tokens.
template <StepModel M>
Utterance greedy(const M& m, std::size_t max_len) {
  if (max_len < 1) throw ConfigError("greedy: max_len must be >= 1");
  Utterance out;
  auto state = m.initial_state();
  TokenId prev = special::sos;
  while (out.size() < max_len) {
    auto [next, logp] = m.step(state, prev);
    TokenId best = 0;
    double best_lp = -std::numeric_limits<double>::infinity();
    bool found = false;
    for (std::size_t id = 0; id < logp.size(); ++id) {
      if (banned(static_cast<TokenId>(id))) continue;
      if (!found || logp[id] > best_lp) {
        best = static_cast<TokenId>(id);
        best_lp = logp[id];
        found = true;
      }
    }
    if (!found) break;
    out.push_back(best);
    if (best == special::eou) break;
    state = std::move(next);
    prev = best;
  }
  return out;
}

template <typename State>
struct Hypothesis {
  Utterance tokens;
  double log_prob = 0.0;
  bool finished = false;
  State state{};

  /// Length-normalized log-probability.
  double score() const { return tokens.empty() ? 0.0 : log_prob / static_cast<double>(tokens.size()); }
};

/// Beam search ranked by length-normalized log-probability. Finished
/// hypotheses stay in the beam and compete with active ones; the returned
/// list is sorted best first.
template <StepModel M>
std::vector<Hypothesis<typename M::State>> beam_search(const M& m, std::size_t width, std::size_t max_len) {
  using Hyp = Hypothesis<typename M::State>;
  if (width < 1) throw ConfigError("beam_search: width must be >= 1");
  if (max_len < 1) throw ConfigError("beam_search: max_len must be >= 1");

  struct Candidate {
    Hyp hyp;
    std::size_t parent_rank;
    double step_log_prob;
  };

  std::vector<Hyp> beam{Hyp{{}, 0.0, false, m.initial_state()}};
  for (std::size_t t = 0; t < max_len; ++t) {
    std::vector<Candidate> cands;
    for (std::size_t r = 0; r < beam.size(); ++r) {
      const Hyp& h = beam[r];
      if (h.finished) {
        cands.push_back({h, r, 0.0});
        continue;
      }
      auto [next, logp] = m.step(h.state, h.tokens.empty() ? special::sos : h.tokens.back());
      for (std::size_t id = 0; id < logp.size(); ++id) {
        if (banned(static_cast<TokenId>(id))) continue;
        Hyp c{h.tokens, h.log_prob + logp[id], id == special::eou, next};
        c.tokens.push_back(static_cast<TokenId>(id));
        cands.push_back({std::move(c), r, logp[id]});
      }
    }
    // ties: earlier parent, then more probable last step, then lower ID (generation order)
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      const double sa = a.hyp.score(), sb = b.hyp.score();
      if (sa != sb) return sa > sb;
      if (a.parent_rank != b.parent_rank) return a.parent_rank < b.parent_rank;
      return a.step_log_prob > b.step_log_prob;
    });
    if (cands.size() > width) cands.resize(width);
    beam.clear();
    bool all_finished = true;
    for (auto& c : cands) {
      all_finished = all_finished && c.hyp.finished;
      beam.push_back(std::move(c.hyp));
    }
    if (all_finished) break;
  }
  return beam;
}

// ---- model-level conveniences ------------------------------------------------

inline Utterance greedy(const model::Model& m, const std::vector<Utterance>& context, std::size_t max_len,
                        std::uint64_t seed) {
  return greedy(ModelStepper(m, context, seed), max_len);
}

inline std::vector<Utterance> beam_search(const model::Model& m, const std::vector<Utterance>& context,
                                          std::size_t width, std::size_t max_len, std::uint64_t seed) {
  auto hyps = beam_search(ModelStepper(m, context, seed), width, max_len);
  std::vector<Utterance> out;
  out.reserve(hyps.size());
  for (auto& h : hyps) out.push_back(std::move(h.tokens));
  return out;
}

/// Teacher-forced log-probability of a complete token sequence.
inline double sequence_log_prob(const ModelStepper& s, const Utterance& tokens) {
  ad::NoGradGuard guard;
  auto logp = s.model().decode_log_probs(s.context(), s.latent(), tokens);
  double total = 0.0;
  for (std::size_t t = 0; t < tokens.size(); ++t) total += logp[t][tokens[t]];
  return total;
}

}  // namespace thredkit::decode

#endif  // THREDKIT_DECODE_HPP
