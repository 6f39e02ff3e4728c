#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "thredkit/grad_check.hpp"
#include "thredkit/model.hpp"
#include "support/tiny_model.hpp"

using namespace thredkit;
using namespace thredkit::model;
using fixtures::tiny_batch;
using fixtures::tiny_config;

namespace {

Model tiny_thred(std::uint64_t seed = 1) {
  Model m(tiny_config(Variant::thred), seed);
  m.set_topics(fixtures::tiny_topics(fixtures::tiny_vocab()));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST(Config, DefaultSizes) {
  ModelConfig c;
  EXPECT_EQ(c.hidden_dim, 500u);
  EXPECT_EQ(c.d_z, 100u);
  EXPECT_EQ(c.d_t, 40u);
  EXPECT_EQ(c.vocab_size, 20004u);
  EXPECT_EQ(c.topic_weight, 1.0);
}

TEST(Config, AnnealEndpoints) {
  ModelConfig c;
  c.kl_anneal_steps = 100;
  EXPECT_EQ(c.anneal(0), 0.0);
  EXPECT_EQ(c.anneal(50), 0.5);
  EXPECT_EQ(c.anneal(100), 1.0);
  EXPECT_EQ(c.anneal(1000), 1.0);
  c.kl_anneal_steps = 0;
  EXPECT_EQ(c.anneal(0), 1.0);
}

TEST(Config, SerializeRoundTripAndValidation) {
  auto c = tiny_config(Variant::vhred);
  c.topic_weight = 0.3;
  EXPECT_EQ(ModelConfig::parse(c.serialize()), c);
  EXPECT_THROW(parse_variant("lstm"), ConfigError);
  auto bad = tiny_config(Variant::vhred);
  bad.d_z = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = tiny_config(Variant::thred);
  bad.d_t = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = tiny_config(Variant::hred);
  bad.d_z = 0;
  EXPECT_NO_THROW(bad.validate());
}

TEST(GaussianKl, ClosedFormCases) {
  std::vector<double> mu{0.3, -1}, var{0.5, 2};
  EXPECT_EQ(gaussian_kl(mu, var, mu, var), 0.0);
  std::vector<double> mq{1, 0}, mp{0, 0}, one{1, 1};
  EXPECT_DOUBLE_EQ(gaussian_kl(mq, one, mp, one), 0.5);
  std::vector<double> zero{0, 1};
  EXPECT_THROW(gaussian_kl(mq, zero, mp, one), DomainError);
}

TEST(GaussianKl, MatchesMonteCarlo) {
  Rng rng(31);
  for (int trial = 0; trial < 3; ++trial) {
    const std::size_t d = 3;
    std::vector<double> mq(d), vq(d), mp(d), vp(d);
    for (std::size_t i = 0; i < d; ++i) {
      mq[i] = rng.uniform(-1, 1);
      mp[i] = rng.uniform(-1, 1);
      vq[i] = rng.uniform(0.3, 2.0);
      vp[i] = rng.uniform(0.3, 2.0);
    }
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int s = 0; s < n; ++s) {
      double lq = 0.0, lp = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double z = mq[i] + std::sqrt(vq[i]) * rng.normal();
        lq += -0.5 * std::log(2 * M_PI * vq[i]) - (z - mq[i]) * (z - mq[i]) / (2 * vq[i]);
        lp += -0.5 * std::log(2 * M_PI * vp[i]) - (z - mp[i]) * (z - mp[i]) / (2 * vp[i]);
      }
      sum += lq - lp;
      sq += (lq - lp) * (lq - lp);
    }
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    EXPECT_NEAR(gaussian_kl(mq, vq, mp, vp), mean, 3 * se) << trial;
  }
}

TEST(GaussianKl, VarFormMatchesScalarForm) {
  LatentGaussian q{ad::constant(Tensor::vector({0.1, 0.5})), ad::constant(Tensor::vector({0.7, 1.2}))};
  LatentGaussian p{ad::constant(Tensor::vector({-0.4, 0.2})), ad::constant(Tensor::vector({1.5, 0.3}))};
  EXPECT_NEAR(gaussian_kl(q, p).item(),
              gaussian_kl(q.mu.value().storage(), q.var.value().storage(), p.mu.value().storage(),
                          p.var.value().storage()),
              1e-15);
}

TEST(Encoder, OutputShapes) {
  Model m(tiny_config(Variant::hred), 1);
  EXPECT_EQ(m.encode_utterance(Utterance{4, 5, 2}).size(), 16u);
  EXPECT_EQ(m.encode_utterance(Utterance{4}).size(), 16u);
  auto u = m.encode_utterance(Utterance{4, 2});
  EXPECT_EQ(m.encode_context({u}).size(), 8u);
  EXPECT_THROW(m.encode_utterance(Utterance{}), ContractError);
  EXPECT_THROW(m.encode_utterance(Utterance{25}), ContractError);
  EXPECT_THROW(m.encode_context({}), ContractError);
}

TEST(Encoder, GradientOfScalarHead) {
  Model m(tiny_config(Variant::hred), 2);
  std::vector<ad::Var> p{m.param("embedding"), m.param("encoder.fwd.weight"), m.param("encoder.fwd.bias"),
                         m.param("encoder.bwd.weight"), m.param("encoder.bwd.bias")};
  auto r = ad::grad_check([&] { return ad::sum(ad::tanh(m.encode_utterance(Utterance{4, 9, 5, 2}))); }, p, 1e-4);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Context, OrderSensitive) {
  Model m(tiny_config(Variant::hred), 3);
  auto c1 = m.context_state({{4, 5, 2}, {6, 7, 2}});
  auto c2 = m.context_state({{6, 7, 2}, {4, 5, 2}});
  EXPECT_GT(max_abs_diff(c1.value(), c2.value()), 1e-6);
}

TEST(Latent, PriorPosteriorContracts) {
  Model m(tiny_config(Variant::vhred), 4);
  auto c = m.context_state({{4, 5, 2}});
  auto lat = m.prior_posterior(c, std::nullopt);
  EXPECT_FALSE(lat.posterior.has_value());
  EXPECT_THROW(m.prior_posterior_train(c, std::nullopt), ContractError);
  auto x = m.encode_utterance(Utterance{6, 2});
  auto lat2 = m.prior_posterior_train(c, x);
  ASSERT_TRUE(lat2.posterior.has_value());
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_GT(lat2.prior.var[i], 0.0);
    EXPECT_GT(lat2.posterior->var[i], 0.0);
  }
  Model h(tiny_config(Variant::hred), 4);
  EXPECT_THROW(h.prior_posterior(c, std::nullopt), ContractError);
}

TEST(Latent, VariancePositiveForExtremeInputs) {
  Model m(tiny_config(Variant::vhred), 4);
  for (auto& x : m.param("prior.var.bias").mutable_value().storage()) x = -800.0;
  auto lat = m.prior_posterior(m.context_state({{4, 2}}), std::nullopt);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_GE(lat.prior.var[i], variance_floor);
}

TEST(Latent, ZeroedPosteriorWeightsIgnoreTarget) {
  Model m(tiny_config(Variant::vhred), 5);
  for (const char* n : {"posterior.mu.weight", "posterior.var.weight"})
    for (auto& x : m.param(n).mutable_value().storage()) x = 0.0;
  auto c = m.context_state({{4, 5, 2}});
  auto q1 = m.prior_posterior(c, m.encode_utterance(Utterance{6, 2})).posterior;
  auto q2 = m.prior_posterior(c, m.encode_utterance(Utterance{9, 10, 11, 2})).posterior;
  EXPECT_EQ(q1->mu.value(), q2->mu.value());
  EXPECT_EQ(q1->var.value(), q2->var.value());
}

TEST(Decoder, DistributionsSumToOne) {
  for (auto v : {Variant::seq2seq, Variant::hred, Variant::vhred, Variant::thred}) {
    Model m(tiny_config(v), 6);
    auto c = m.context_state({{4, 5, 2}, {6, 2}});
    std::optional<ad::Var> z;
    if (has_latent(v)) z = ad::constant(Tensor::vector({0.1, -0.2, 0.3, 0.0}));
    for (const auto& p : m.decode_teacher_forced(c, z, Utterance{7, 8, 2})) {
      double s = 0.0;
      for (double x : p.value().storage()) {
        EXPECT_GE(x, 0.0);
        s += x;
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Decoder, LatentArgumentContract) {
  Model s(tiny_config(Variant::seq2seq), 6);
  auto c = s.context_state({{4, 2}});
  EXPECT_NO_THROW(s.decode_teacher_forced(c, std::nullopt, Utterance{5, 2}));
  EXPECT_THROW(s.decode_teacher_forced(c, ad::constant(Tensor({4})), Utterance{5, 2}), ContractError);
  Model v(tiny_config(Variant::vhred), 6);
  EXPECT_THROW(v.decode_teacher_forced(c, std::nullopt, Utterance{5, 2}), ContractError);
}

TEST(Decoder, WeightSensitivity) {
  Model m(tiny_config(Variant::hred), 7);
  auto c = m.context_state({{4, 5, 2}});
  auto before = m.decode_teacher_forced(c, std::nullopt, Utterance{6, 2})[1].value();
  for (auto& x : m.param("decoder.weight").mutable_value().storage()) x *= 2.0;
  auto after = m.decode_teacher_forced(c, std::nullopt, Utterance{6, 2})[1].value();
  EXPECT_GT(max_abs_diff(before, after), 1e-6);
}

TEST(Loss, HredHasNoKlTerms) {
  Model m(tiny_config(Variant::hred), 8);
  Rng rng(1);
  auto batch = tiny_batch();
  auto l = m.loss(batch, 5, rng);
  EXPECT_EQ(l.kl_global, 0.0);
  EXPECT_EQ(l.kl_local, 0.0);
  EXPECT_DOUBLE_EQ(l.total.item(), l.ce);
  EXPECT_EQ(l.tokens, 8u);
}

TEST(Loss, ComponentsAssembleTotal) {
  Model m = tiny_thred(9);
  auto batch = tiny_batch();
  Rng rng(2);
  auto l = m.loss(batch, 5, rng);
  EXPECT_GT(l.kl_global, 0.0);
  EXPECT_GE(l.kl_local, 0.0);
  EXPECT_NEAR(l.total.item(), l.ce + 0.5 * l.kl_global + 1.0 * l.kl_local, 1e-12);
  EXPECT_TRUE(std::isfinite(l.total.item()));
}

TEST(Loss, ThredRequiresTopics) {
  Model m(tiny_config(Variant::thred), 1);
  Rng rng(1);
  auto batch = tiny_batch();
  EXPECT_THROW(m.loss(batch, 0, rng), ConfigError);
  EXPECT_THROW(m.set_topics(fixtures::tiny_topics(fixtures::tiny_vocab(), 1, 3)), ConfigError);
}

TEST(Loss, DivergenceNamesComponent) {
  Model m(tiny_config(Variant::hred), 1);
  m.param("output.bias").mutable_value()[5] = std::numeric_limits<double>::infinity();
  Rng rng(1);
  auto batch = tiny_batch();
  try {
    m.loss(batch, 0, rng);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.component(), "ce");
  }
}

TEST(Loss, FullThredGradientCheck) {
  Model m = tiny_thred(10);
  auto batch = tiny_batch();
  auto params = m.parameter_list();
  auto f = [&] {
    Rng rng(99);
    return m.loss(batch, 5, rng).total;
  };
  auto r = ad::grad_check(f, params, 1e-4);
  EXPECT_LT(r.max_rel_error, 1e-4) << "param " << r.worst_param << " index " << r.worst_index << " analytic "
                                   << r.analytic << " numeric " << r.numeric;
}

TEST(Ablation, ThredWithZeroLatentAndNoTopicWeightEqualsVhred) {
  auto tc = tiny_config(Variant::thred);
  tc.topic_weight = 0.0;
  Model thred(tc, 11);
  thred.set_topics(fixtures::tiny_topics(fixtures::tiny_vocab()));
  Model vhred(tiny_config(Variant::vhred), thred.weights());
  const std::vector<Utterance> ctx{{4, 5, 2}, {6, 2}};
  auto z = ad::constant(Tensor({4}));
  auto a = thred.decode_teacher_forced(thred.context_state(ctx), z, Utterance{7, 8, 2});
  auto b = vhred.decode_teacher_forced(vhred.context_state(ctx), z, Utterance{7, 8, 2});
  for (std::size_t t = 0; t < a.size(); ++t) EXPECT_EQ(a[t].value(), b[t].value());
  auto batch = tiny_batch();
  Rng r1(4), r2(4);
  EXPECT_EQ(thred.loss(batch, 3, r1).total.item(), vhred.loss(batch, 3, r2).total.item());
}

TEST(Ablation, VhredWithoutLatentPathHasHredShape) {
  auto v = Model::parameter_shapes(tiny_config(Variant::vhred));
  auto h = Model::parameter_shapes(tiny_config(Variant::hred));
  std::map<std::string, Dims> vm(v.begin(), v.end()), hm(h.begin(), h.end());
  for (auto it = vm.begin(); it != vm.end();) {
    if (it->first.starts_with("prior.") || it->first.starts_with("posterior.")) it = vm.erase(it);
    else ++it;
  }
  ASSERT_EQ(vm.size(), hm.size());
  for (const auto& [name, dims] : hm) {
    if (name == "decoder.weight") {
      EXPECT_EQ(vm[name][1], dims[1] + 4);
    } else {
      EXPECT_EQ(vm[name], dims) << name;
    }
  }
}

TEST(ModelWeights, ConstructorChecksTable) {
  Model m(tiny_config(Variant::hred), 1);
  auto w = m.weights();
  w.erase("output.bias");
  EXPECT_THROW(Model(tiny_config(Variant::hred), w), ContractError);
  auto w2 = m.weights();
  w2["output.bias"] = Tensor({3});
  EXPECT_THROW(Model(tiny_config(Variant::hred), w2), ShapeError);
  EXPECT_THROW(Model(tiny_config(Variant::vhred), m.weights()), ContractError);
}

TEST(ModelInit, ForgetBiasAndRange) {
  Model m(tiny_config(Variant::hred), 1);
  const auto& b = m.param("decoder.bias").value();
  for (std::size_t j = 0; j < 32; ++j) EXPECT_EQ(b[j], (j >= 8 && j < 16) ? 1.0 : 0.0);
  const double r = 1.0 / std::sqrt(8.0);
  for (double x : m.param("output.weight").value().storage()) EXPECT_LE(std::abs(x), r);
}
