#ifndef THREDKIT_MODEL_HPP
#define THREDKIT_MODEL_HPP

// Hierarchical encoder-decoder with an optional conditional-VAE latent and
// a topic-coherence term. The four variants share one implementation:
//
//   seq2seq  flattened context -> bidirectional encoder -> decoder
//   hred     utterance encoder -> context recurrence -> decoder
//   vhred    hred + latent z ~ Q(z|X,c) (train) / P(z|c) (inference)
//   thred    vhred + topic divergence between context and decoder output

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "thredkit/autodiff.hpp"
#include "thredkit/corpus.hpp"
#include "thredkit/error.hpp"
#include "thredkit/rng.hpp"
#include "thredkit/topics.hpp"

namespace thredkit::model {

enum class Variant { seq2seq, hred, vhred, thred };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::seq2seq: return "seq2seq";
    case Variant::hred: return "hred";
    case Variant::vhred: return "vhred";
    case Variant::thred: return "thred";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "seq2seq") return Variant::seq2seq;
  if (s == "hred") return Variant::hred;
  if (s == "vhred") return Variant::vhred;
  if (s == "thred") return Variant::thred;
  throw ConfigError("unknown variant '" + std::string(s) + "' (expected seq2seq, hred, vhred or thred)");
}

inline bool has_latent(Variant v) { return v == Variant::vhred || v == Variant::thred; }

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct ModelConfig {
  Variant variant = Variant::thred;
  std::size_t vocab_size = default_top_k + special::count;
  std::size_t embed_dim = 500;
  std::size_t hidden_dim = 500;
  std::size_t d_z = 100;
  std::size_t d_t = 40;
  double topic_weight = 1.0;
  std::uint64_t kl_anneal_steps = 10000;
  double topic_eps = topics::default_kl_eps;

  void validate() const {
    if (vocab_size <= special::count) throw ConfigError("vocab_size must exceed the 4 special tokens");
    if (embed_dim == 0 || hidden_dim == 0) throw ConfigError("embed_dim and hidden_dim must be positive");
    if (has_latent(variant) && d_z == 0) throw ConfigError(to_string(variant) + " requires d_z > 0");
    if (variant == Variant::thred && d_t == 0) throw ConfigError("thred requires d_t > 0");
    if (!(topic_weight >= 0.0)) throw ConfigError("topic_weight must be non-negative");
    if (!(topic_eps > 0.0)) throw ConfigError("topic_eps must be positive");
  }

  /// min(1, step / kl_anneal_steps); 1 when annealing is disabled.
  double anneal(std::uint64_t step) const {
    if (kl_anneal_steps == 0) return 1.0;
    return std::min(1.0, static_cast<double>(step) / static_cast<double>(kl_anneal_steps));
  }

  std::string serialize() const {
    std::ostringstream os;
    os << "variant=" << to_string(variant) << '\n'
       << "vocab_size=" << vocab_size << '\n'
       << "embed_dim=" << embed_dim << '\n'
       << "hidden_dim=" << hidden_dim << '\n'
       << "d_z=" << d_z << '\n'
       << "d_t=" << d_t << '\n'
       << "topic_weight=" << format_double(topic_weight) << '\n'
       << "kl_anneal_steps=" << kl_anneal_steps << '\n'
       << "topic_eps=" << format_double(topic_eps) << '\n';
    return os.str();
  }

  static ModelConfig parse(const std::string& text) {
    ModelConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw IoError("model config: malformed line '" + line + "'");
      const std::string key = line.substr(0, eq);
      const std::string val = line.substr(eq + 1);
      try {
        if (key == "variant") c.variant = parse_variant(val);
        else if (key == "vocab_size") c.vocab_size = std::stoull(val);
        else if (key == "embed_dim") c.embed_dim = std::stoull(val);
        else if (key == "hidden_dim") c.hidden_dim = std::stoull(val);
        else if (key == "d_z") c.d_z = std::stoull(val);
        else if (key == "d_t") c.d_t = std::stoull(val);
        else if (key == "topic_weight") c.topic_weight = std::stod(val);
        else if (key == "kl_anneal_steps") c.kl_anneal_steps = std::stoull(val);
        else if (key == "topic_eps") c.topic_eps = std::stod(val);
        else throw IoError("model config: unknown key '" + key + "'");
      } catch (const std::logic_error&) {
        throw IoError("model config: bad value for '" + key + "'");
      }
    }
    return c;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Diagonal Gaussian N(mu, diag(var)).
struct LatentGaussian {
  ad::Var mu;
  ad::Var var;
};

/// KL(q || p) for diagonal Gaussians:
/// sum_i 0.5 log(v_p / v_q) + (v_q + (mu_q - mu_p)^2) / (2 v_p) - 0.5.
inline double gaussian_kl(std::span<const double> mu_q, std::span<const double> var_q,
                          std::span<const double> mu_p, std::span<const double> var_p) {
  const std::size_t n = mu_q.size();
  if (var_q.size() != n || mu_p.size() != n || var_p.size() != n) {
    throw ShapeError("gaussian_kl: length mismatch");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(var_q[i] > 0.0) || !(var_p[i] > 0.0)) throw DomainError("gaussian_kl: non-positive variance");
    const double d = mu_q[i] - mu_p[i];
    kl += 0.5 * std::log(var_p[i] / var_q[i]) + (var_q[i] + d * d) / (2.0 * var_p[i]) - 0.5;
  }
  return kl;
}

inline ad::Var gaussian_kl(const LatentGaussian& q, const LatentGaussian& p) {
  if (q.mu.size() != p.mu.size() || q.var.size() != p.var.size() || q.mu.size() != q.var.size()) {
    throw ShapeError("gaussian_kl: shape mismatch " + shape_string(q.mu.dims()) + " vs " +
                     shape_string(p.mu.dims()));
  }
  for (std::size_t i = 0; i < q.var.size(); ++i) {
    if (!(q.var[i] > 0.0) || !(p.var[i] > 0.0)) throw DomainError("gaussian_kl: non-positive variance");
  }
  using namespace ad;
  Var log_ratio = scale(sub(log(p.var), log(q.var)), 0.5);
  Var quad = div(add(q.var, square(sub(q.mu, p.mu))), scale(p.var, 2.0));
  return add_scalar(sum(add(log_ratio, quad)), -0.5 * static_cast<double>(q.mu.size()));
}

struct LstmState {
  ad::Var h;
  ad::Var c;
};

struct Latents {
  LatentGaussian prior;
  std::optional<LatentGaussian> posterior;
};

struct LossBreakdown {
  ad::Var total;
  double ce = 0.0;         // mean NLL per target token
  double kl_global = 0.0;  // mean KL(Q || P) per example
  double kl_local = 0.0;   // mean topic divergence per example
  std::size_t tokens = 0;
};

inline constexpr double variance_floor = 1e-6;

class Model {
 public:
  using ParamMap = std::map<std::string, ad::Var>;

  /// Fresh weights: uniform in +-1/sqrt(hidden_dim), LSTM forget-gate bias 1,
  /// other biases 0.
  Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    Rng rng(seed);
    const double r = 1.0 / std::sqrt(static_cast<double>(config_.hidden_dim));
    for (const auto& [name, dims] : parameter_shapes(config_)) {
      Tensor t(dims);
      const bool bias = name.ends_with(".bias");
      if (!bias) {
        for (auto& x : t.storage()) x = rng.uniform(-r, r);
      } else if (is_lstm(name)) {
        const std::size_t h = config_.hidden_dim;
        for (std::size_t j = h; j < 2 * h; ++j) t[j] = 1.0;
      }
      params_.emplace(name, ad::parameter(std::move(t)));
    }
  }

  Model(ModelConfig config, const std::map<std::string, Tensor>& weights) : config_(std::move(config)) {
    config_.validate();
    const auto shapes = parameter_shapes(config_);
    if (weights.size() != shapes.size()) {
      throw ContractError("model: expected " + std::to_string(shapes.size()) + " parameters, got " +
                          std::to_string(weights.size()));
    }
    for (const auto& [name, dims] : shapes) {
      auto it = weights.find(name);
      if (it == weights.end()) throw ContractError("model: missing parameter '" + name + "'");
      if (it->second.dims() != dims) {
        throw ShapeError("model: parameter '" + name + "' has shape " + it->second.shape() + ", expected " +
                         shape_string(dims));
      }
      params_.emplace(name, ad::parameter(it->second));
    }
  }

  /// Architecture of a variant as (name, dims), in initialization order.
  static std::vector<std::pair<std::string, Dims>> parameter_shapes(const ModelConfig& c) {
    const std::size_t V = c.vocab_size, E = c.embed_dim, H = c.hidden_dim, Z = c.d_z;
    const bool latent = has_latent(c.variant);
    std::vector<std::pair<std::string, Dims>> s{
        {"embedding", {V, E}},
        {"encoder.fwd.weight", {4 * H, E + H}},
        {"encoder.fwd.bias", {4 * H}},
        {"encoder.bwd.weight", {4 * H, E + H}},
        {"encoder.bwd.bias", {4 * H}},
        {"context.weight", {4 * H, 2 * H + H}},
        {"context.bias", {4 * H}},
    };
    if (latent) {
      s.push_back({"prior.mu.weight", {Z, H}});
      s.push_back({"prior.mu.bias", {Z}});
      s.push_back({"prior.var.weight", {Z, H}});
      s.push_back({"prior.var.bias", {Z}});
      s.push_back({"posterior.mu.weight", {Z, 3 * H}});
      s.push_back({"posterior.mu.bias", {Z}});
      s.push_back({"posterior.var.weight", {Z, 3 * H}});
      s.push_back({"posterior.var.bias", {Z}});
    }
    const std::size_t dec_in = H + (latent ? Z : 0) + E;
    s.push_back({"decoder.weight", {4 * H, dec_in + H}});
    s.push_back({"decoder.bias", {4 * H}});
    s.push_back({"output.weight", {V, H}});
    s.push_back({"output.bias", {V}});
    return s;
  }

  const ModelConfig& config() const noexcept { return config_; }
  ParamMap& params() noexcept { return params_; }
  const ParamMap& params() const noexcept { return params_; }

  ad::Var& param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("model: no parameter '" + name + "'");
    return it->second;
  }
  const ad::Var& param(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("model: no parameter '" + name + "'");
    return it->second;
  }

  std::vector<ad::Var> parameter_list() const {
    std::vector<ad::Var> out;
    for (const auto& [_, v] : params_) out.push_back(v);
    return out;
  }

  std::map<std::string, Tensor> weights() const {
    std::map<std::string, Tensor> out;
    for (const auto& [n, v] : params_) out.emplace(n, v.value());
    return out;
  }

  void zero_grad() {
    for (auto& [_, v] : params_) v.zero_grad();
  }

  /// Required for the thred topic term.
  void set_topics(std::shared_ptr<const topics::TopicProjector> proj) {
    if (proj && proj->rank() != config_.d_t) {
      throw ConfigError("topic model rank " + std::to_string(proj->rank()) + " != d_t " +
                        std::to_string(config_.d_t));
    }
    if (proj && proj->vocab_size() != config_.vocab_size) {
      throw ConfigError("topic projector vocabulary size does not match the model");
    }
    topics_ = std::move(proj);
  }
  const topics::TopicProjector* topics() const noexcept { return topics_.get(); }

  // ---- layers ---------------------------------------------------------------

  ad::Var embed(TokenId id) const {
    if (id >= config_.vocab_size) {
      throw ContractError("token id " + std::to_string(id) + " >= vocab_size " +
                          std::to_string(config_.vocab_size));
    }
    return ad::gather_row(param("embedding"), id);
  }

  LstmState zero_state() const {
    return {ad::constant(Tensor({config_.hidden_dim})), ad::constant(Tensor({config_.hidden_dim}))};
  }

  LstmState lstm_step(const std::string& prefix, const ad::Var& x, const LstmState& s) const {
    const std::size_t h = config_.hidden_dim;
    ad::Var gates = ad::affine(param(prefix + ".weight"), ad::concat({x, s.h}), param(prefix + ".bias"));
    ad::Var hc = ad::lstm_cell(gates, s.c);
    return {ad::slice(hc, 0, h), ad::slice(hc, h, h)};
  }

  /// Bidirectional encoding: [h_forward(last) ; h_backward(first)], length 2H.
  ad::Var encode_utterance(std::span<const TokenId> utt) const {
    if (utt.empty()) throw ContractError("encode_utterance: empty utterance");
    std::vector<ad::Var> emb;
    emb.reserve(utt.size());
    for (TokenId id : utt) emb.push_back(embed(id));
    LstmState fwd = zero_state();
    for (const auto& e : emb) fwd = lstm_step("encoder.fwd", e, fwd);
    LstmState bwd = zero_state();
    for (auto it = emb.rbegin(); it != emb.rend(); ++it) bwd = lstm_step("encoder.bwd", *it, bwd);
    return ad::concat({fwd.h, bwd.h});
  }

  /// Final state of the context recurrence over utterance vectors (length H).
  ad::Var encode_context(const std::vector<ad::Var>& utterance_vectors) const {
    if (utterance_vectors.empty()) throw ContractError("encode_context: no utterances");
    LstmState s = zero_state();
    for (const auto& u : utterance_vectors) s = lstm_step("context", u, s);
    return s.h;
  }

  /// Conditional factor c. seq2seq reads the whole context as one utterance.
  ad::Var context_state(const std::vector<Utterance>& context) const {
    if (context.empty()) throw ContractError("context_state: empty context");
    if (config_.variant == Variant::seq2seq) {
      Utterance flat;
      for (const auto& u : context) flat.insert(flat.end(), u.begin(), u.end());
      return encode_context({encode_utterance(flat)});
    }
    std::vector<ad::Var> vecs;
    vecs.reserve(context.size());
    for (const auto& u : context) vecs.push_back(encode_utterance(u));
    return encode_context(vecs);
  }

  /// P(z|c), plus Q(z|X,c) when the encoded target is supplied.
  Latents prior_posterior(const ad::Var& c, const std::optional<ad::Var>& x_enc) const {
    if (!has_latent(config_.variant)) throw ContractError(to_string(config_.variant) + " has no latent variable");
    auto gaussian = [&](const std::string& prefix, const ad::Var& in) {
      ad::Var mu = ad::affine(param(prefix + ".mu.weight"), in, param(prefix + ".mu.bias"));
      ad::Var var = ad::add_scalar(
          ad::softplus(ad::affine(param(prefix + ".var.weight"), in, param(prefix + ".var.bias"))),
          variance_floor);
      return LatentGaussian{mu, var};
    };
    Latents out{gaussian("prior", c), std::nullopt};
    if (x_enc) out.posterior = gaussian("posterior", ad::concat({c, *x_enc}));
    return out;
  }

  /// Training-mode latents; x_enc is mandatory.
  Latents prior_posterior_train(const ad::Var& c, const std::optional<ad::Var>& x_enc) const {
    if (!x_enc) throw ContractError("prior_posterior: training mode requires the encoded target");
    return prior_posterior(c, x_enc);
  }

  /// One decoder step; returns the new state and log-probabilities over the
  /// vocabulary.
  std::pair<LstmState, ad::Var> decode_step(const ad::Var& c, const std::optional<ad::Var>& z,
                                            const LstmState& state, TokenId prev) const {
    check_latent_arg(z);
    std::vector<ad::Var> in{c};
    if (z) in.push_back(*z);
    in.push_back(embed(prev));
    LstmState next = lstm_step("decoder", ad::concat(in), state);
    ad::Var logits = ad::affine(param("output.weight"), next.h, param("output.bias"));
    return {next, ad::log_softmax(logits)};
  }

  /// Log-probability vectors for each target position under teacher forcing;
  /// step t reads target token t-1 (SOS at t = 0).
  std::vector<ad::Var> decode_log_probs(const ad::Var& c, const std::optional<ad::Var>& z,
                                        std::span<const TokenId> target) const {
    std::vector<ad::Var> out;
    out.reserve(target.size());
    LstmState s = zero_state();
    TokenId prev = special::sos;
    for (TokenId t : target) {
      auto [next, logp] = decode_step(c, z, s, prev);
      out.push_back(logp);
      s = next;
      prev = t;
    }
    return out;
  }

  /// Probability vectors per target position (teacher forced).
  std::vector<ad::Var> decode_teacher_forced(const ad::Var& c, const std::optional<ad::Var>& z,
                                             std::span<const TokenId> target) const {
    auto logp = decode_log_probs(c, z, target);
    for (auto& v : logp) v = ad::exp(v);
    return logp;
  }

  /// Joint objective over a batch:
  /// CE + anneal(step) * KL(Q||P) [latent variants] + lambda * topic KL [thred].
  /// `rng` supplies the reparameterization noise.
  LossBreakdown loss(std::span<const Example> batch, std::uint64_t step, Rng& rng) const {
    if (batch.empty()) throw ContractError("loss: empty batch");
    const bool latent = has_latent(config_.variant);
    const bool topical = config_.variant == Variant::thred;
    if (topical && !topics_) throw ConfigError("thred loss requires a topic model");

    std::vector<ad::Var> nll_terms, kl_terms, local_terms;
    std::size_t tokens = 0;
    for (const Example& ex : batch) {
      if (ex.target.empty()) throw ContractError("loss: empty target utterance");
      ad::Var c = context_state(ex.context);
      std::optional<ad::Var> z;
      if (latent) {
        Latents lat = prior_posterior_train(c, encode_utterance(ex.target));
        z = ad::gaussian_sample(lat.posterior->mu, lat.posterior->var, rng);
        kl_terms.push_back(gaussian_kl(*lat.posterior, lat.prior));
      }
      auto logp = decode_log_probs(c, z, ex.target);
      std::vector<ad::Var> picked;
      picked.reserve(logp.size());
      for (std::size_t t = 0; t < logp.size(); ++t) picked.push_back(ad::pick(logp[t], ex.target[t]));
      nll_terms.push_back(ad::neg(ad::sum(ad::concat(picked))));
      tokens += ex.target.size();
      if (topical) {
        Utterance flat;
        for (const auto& u : ex.context) flat.insert(flat.end(), u.begin(), u.end());
        const auto tc = topics_->topic_vector(flat);
        std::vector<ad::Var> probs;
        probs.reserve(logp.size());
        for (const auto& l : logp) probs.push_back(ad::exp(l));
        ad::Var tr = topics::soft_topic_vector(probs, *topics_);
        local_terms.push_back(topics::topic_kl(tc.values, tr, config_.topic_eps));
      }
    }

    LossBreakdown out;
    out.tokens = tokens;
    ad::Var ce = ad::scale(ad::sum(ad::concat(nll_terms)), 1.0 / static_cast<double>(tokens));
    out.ce = ce.item();
    check_finite("ce", out.ce);
    ad::Var total = ce;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    if (latent) {
      ad::Var kl = ad::scale(ad::sum(ad::concat(kl_terms)), inv_b);
      out.kl_global = kl.item();
      check_finite("kl_global", out.kl_global);
      total = ad::add(total, ad::scale(kl, config_.anneal(step)));
    }
    if (topical) {
      ad::Var local = ad::scale(ad::sum(ad::concat(local_terms)), inv_b);
      out.kl_local = local.item();
      check_finite("kl_local", out.kl_local);
      total = ad::add(total, ad::scale(local, config_.topic_weight));
    }
    check_finite("total", total.item());
    out.total = total;
    return out;
  }

 private:
  static bool is_lstm(const std::string& name) {
    return name.starts_with("encoder.") || name.starts_with("context.") || name.starts_with("decoder.");
  }

  void check_latent_arg(const std::optional<ad::Var>& z) const {
    if (has_latent(config_.variant) != z.has_value()) {
      throw ContractError(to_string(config_.variant) + (z ? " takes no latent sample" : " requires a latent sample"));
    }
    if (z && z->size() != config_.d_z) {
      throw ShapeError("latent sample " + shape_string(z->dims()) + " vs d_z " + std::to_string(config_.d_z));
    }
  }

  static void check_finite(const char* component, double v) {
    if (!std::isfinite(v)) throw DivergenceError(component, v);
  }

  ModelConfig config_;
  ParamMap params_;
  std::shared_ptr<const topics::TopicProjector> topics_;
};

}  // namespace thredkit::model

#endif  // THREDKIT_MODEL_HPP
