#ifndef THREDKIT_METRICS_HPP
#define THREDKIT_METRICS_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "thredkit/corpus.hpp"
#include "thredkit/decode.hpp"
#include "thredkit/model.hpp"
#include "thredkit/topics.hpp"

namespace thredkit::metrics {

inline const std::vector<double>& default_betas() {
  static const std::vector<double> betas{0.5, 1.0, 1.5};
  return betas;
}

// ---- perplexity ---------------------------------------------------------------

/// exp(-mean log-probability) over the given per-token log-probabilities.
inline double perplexity_from_log_probs(std::span<const double> token_log_probs) {
  if (token_log_probs.empty()) throw ContractError("perplexity: zero tokens");
  double total = 0.0;
  for (double lp : token_log_probs) total += lp;
  return std::exp(-total / static_cast<double>(token_log_probs.size()));
}

/// Teacher-forced perplexity over every reply token. Latent variants draw
/// z ~ P(z|c); the log-likelihood is averaged over `samples` draws.
inline double perplexity(const model::Model& m, std::span<const Example> corpus, std::size_t samples = 1,
                         std::uint64_t seed = 0) {
  if (corpus.empty()) throw ContractError("perplexity: empty corpus");
  if (samples == 0) throw ConfigError("perplexity: samples must be >= 1");
  ad::NoGradGuard guard;
  const bool latent = model::has_latent(m.config().variant);
  Rng rng(seed);
  double log_lik = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : corpus) {
    ad::Var c = m.context_state(ex.context);
    const std::size_t draws = latent ? samples : 1;
    double sum = 0.0;
    for (std::size_t s = 0; s < draws; ++s) {
      std::optional<ad::Var> z;
      if (latent) {
        auto lat = m.prior_posterior(c, std::nullopt);
        z = ad::gaussian_sample(lat.prior.mu, lat.prior.var, rng);
      }
      auto logp = m.decode_log_probs(c, z, ex.target);
      for (std::size_t t = 0; t < ex.target.size(); ++t) sum += logp[t][ex.target[t]];
    }
    log_lik += sum / static_cast<double>(draws);
    tokens += ex.target.size();
  }
  if (tokens == 0) throw ContractError("perplexity: zero tokens");
  return std::exp(-log_lik / static_cast<double>(tokens));
}

// ---- distinct-n -------------------------------------------------------------

/// Corpus-level distinct n-grams / total n-grams. EOU tokens are dropped
/// before counting.
template <typename Token>
double distinct_n(std::span<const std::vector<Token>> responses, std::size_t n, const Token& eou) {
  if (n < 1) throw ConfigError("distinct_n: n must be >= 1");
  std::set<std::vector<Token>> distinct;
  std::size_t total = 0;
  std::vector<Token> clean;
  for (const auto& r : responses) {
    clean.clear();
    for (const auto& t : r)
      if (!(t == eou)) clean.push_back(t);
    if (clean.size() < n) continue;
    for (std::size_t i = 0; i + n <= clean.size(); ++i) {
      distinct.emplace(clean.begin() + static_cast<std::ptrdiff_t>(i),
                       clean.begin() + static_cast<std::ptrdiff_t>(i + n));
      ++total;
    }
  }
  if (total == 0) throw ContractError("distinct_n: no " + std::to_string(n) + "-grams in responses");
  return static_cast<double>(distinct.size()) / static_cast<double>(total);
}

inline double distinct_n(std::span<const Utterance> responses, std::size_t n) {
  return distinct_n<TokenId>(responses, n, special::eou);
}

inline double distinct_n(std::span<const std::vector<std::string>> responses, std::size_t n) {
  return distinct_n<std::string>(responses, n, std::string(eou_marker));
}

// ---- topic divergence ---------------------------------------------------------

struct TopicDivResult {
  double value = 0.0;  // mean over evaluated pairs
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // either side had no content word
};

/// Mean smoothed topic KL between each context and its response. Pairs with
/// no content word on either side are skipped and counted.
inline TopicDivResult topic_div(std::span<const Utterance> contexts, std::span<const Utterance> responses,
                                const topics::TopicModel& model, const Vocabulary& vocab,
                                double eps = topics::default_kl_eps) {
  if (contexts.size() != responses.size()) {
    throw ContractError("topic_div: " + std::to_string(contexts.size()) + " contexts vs " +
                        std::to_string(responses.size()) + " responses");
  }
  TopicDivResult r;
  double total = 0.0;
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    auto tc = topics::topic_vector(contexts[i], model, vocab);
    auto tr = topics::topic_vector(responses[i], model, vocab);
    if (tc.matched_tokens == 0 || tr.matched_tokens == 0) {
      ++r.skipped;
      continue;
    }
    total += topics::topic_kl(tc, tr, eps);
    ++r.evaluated;
  }
  if (r.evaluated == 0) throw DomainError("topic_div: every pair was skipped (no content words)");
  r.value = total / static_cast<double>(r.evaluated);
  return r;
}

// ---- F-beta -------------------------------------------------------------------

/// (1 + b^2) d (1 - t) / (b^2 d + (1 - t)) with t clamped to [0, 1].
inline double f_score(double dist, double topic_div, double beta, std::ostream* warn = &std::cerr) {
  if (!(beta > 0.0)) throw ConfigError("f_score: beta must be positive");
  if (topic_div > 1.0 || topic_div < 0.0) {
    if (warn) *warn << "warning: TopicDiv " << topic_div << " clamped to [0, 1]\n";
    topic_div = std::clamp(topic_div, 0.0, 1.0);
  }
  const double coherence = 1.0 - topic_div;
  if (dist == 0.0 || coherence == 0.0) return 0.0;
  const double b2 = beta * beta;
  return (1.0 + b2) * dist * coherence / (b2 * dist + coherence);
}

// ---- variance diagnostic ------------------------------------------------------

/// Population variance.
inline double divergence_variance(std::span<const double> values) {
  if (values.size() < 2) throw ContractError("divergence_variance: need at least 2 values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(values.size());
}

// ---- report -----------------------------------------------------------------

inline std::string beta_key(double beta) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, beta);
  return std::string(buf, end);
}

struct FPair {
  double dist1 = 0.0;
  double dist2 = 0.0;
};

struct MetricsReport {
  std::optional<double> perplexity;
  double dist1 = 0.0;
  double dist2 = 0.0;
  double topic_div = 0.0;
  std::map<double, FPair> f;  // keyed by beta
  std::size_t skipped_pairs = 0;
  std::size_t n_responses = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["perplexity"] = perplexity ? nlohmann::ordered_json(*perplexity) : nlohmann::ordered_json(nullptr);
    j["dist1"] = dist1;
    j["dist2"] = dist2;
    j["topic_div"] = topic_div;
    nlohmann::ordered_json fj = nlohmann::ordered_json::object();
    for (const auto& [beta, pair] : f) fj[beta_key(beta)] = {{"dist1", pair.dist1}, {"dist2", pair.dist2}};
    j["f"] = fj;
    j["skipped_pairs"] = skipped_pairs;
    j["n_responses"] = n_responses;
    return j;
  }
};

/// Fills the F grid from (dist1, dist2, topic_div).
inline MetricsReport make_report(double dist1, double dist2, double topic_div,
                                 const std::vector<double>& betas = default_betas(),
                                 std::ostream* warn = &std::cerr) {
  MetricsReport r;
  r.dist1 = dist1;
  r.dist2 = dist2;
  r.topic_div = topic_div;
  for (double b : betas) {
    r.f[b] = {f_score(dist1, topic_div, b, warn), f_score(dist2, topic_div, b, nullptr)};
  }
  return r;
}

}  // namespace thredkit::metrics

#endif  // THREDKIT_METRICS_HPP
