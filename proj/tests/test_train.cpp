#include <gtest/gtest.h>

#include <cmath>

#include "thredkit/train.hpp"
#include "support/pipeline.hpp"

using namespace thredkit;
using namespace thredkit::train;

namespace {

constexpr double kDeskLr = 2e-3;

std::shared_ptr<topics::TopicProjector> projector(const fixtures::Pipeline& p) {
  return std::make_shared<topics::TopicProjector>(*p.nmf, p.vocab);
}

}  // namespace

TEST(Adam, DefaultLearningRate) {
  EXPECT_EQ(default_lr, 0.0002);
  EXPECT_EQ(AdamOptions{}.lr, 0.0002);
}

TEST(Adam, FirstStepMovesBySignedLearningRate) {
  model::Model m(fixtures::desk_config(model::Variant::hred, 10, 3), 1);
  auto& p = m.param("output.bias");
  const Tensor before = p.value();
  m.zero_grad();
  auto& g = m.param("output.bias").grad_storage();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (i % 2 ? 1.0 : -1.0) * static_cast<double>(i + 1);
  AdamState state;
  AdamOptions opt;
  opt.lr = 0.01;
  adam_step(m.params(), state, opt);
  for (std::size_t i = 0; i < before.size(); ++i) {
    const double gi = (i % 2 ? 1.0 : -1.0) * static_cast<double>(i + 1);
    EXPECT_NEAR(p.value()[i], before[i] - 0.01 * gi / (std::abs(gi) + 1e-8), 1e-12);
  }
}

TEST(Clip, ScalesToMaxNormAndKeepsDirection) {
  model::Model m(fixtures::desk_config(model::Variant::hred, 10, 3), 1);
  m.zero_grad();
  auto& g = m.param("output.bias").grad_storage();
  g[0] = 6.0;
  g[1] = 8.0;
  EXPECT_DOUBLE_EQ(clip_gradients(m.params(), 5.0), 10.0);
  EXPECT_NEAR(g[0], 3.0, 1e-12);
  EXPECT_NEAR(g[1], 4.0, 1e-12);
  EXPECT_NEAR(clip_gradients(m.params(), 5.0), 5.0, 1e-12);
  EXPECT_NEAR(g[0], 3.0, 1e-12);
  EXPECT_NEAR(clip_gradients(m.params(), 0.0), 5.0, 1e-12);
}

TEST(Train, MemorizationCorpusHalvesCrossEntropy) {
  auto p = fixtures::make_pipeline(50, 1, 3, {1.0, 0.0, 0.0});
  ASSERT_EQ(p.dialogs.size(), 50u);
  TrainOptions opt;
  opt.lr = kDeskLr;
  opt.steps = 2000;
  opt.batch = 8;
  auto r = train::train(fixtures::desk_config(model::Variant::thred, p.vocab.size(), 3), p.train, {}, opt,
                        projector(p));
  ASSERT_FALSE(r.diverged);
  ASSERT_FALSE(r.log.empty());
  EXPECT_LE(r.log.back().step, 2000u);
  EXPECT_LE(r.log.back().ce, 0.5 * r.log.front().ce)
      << "first " << r.log.front().ce << " last " << r.log.back().ce;
}

TEST(Train, SameSeedSameBits) {
  auto p = fixtures::make_pipeline(40, 2);
  TrainOptions opt;
  opt.lr = kDeskLr;
  opt.steps = 30;
  opt.batch = 8;
  auto cfg = fixtures::desk_config(model::Variant::thred, p.vocab.size(), 3);
  auto a = train::train(cfg, p.train, p.valid, opt, projector(p));
  auto b = train::train(cfg, p.train, p.valid, opt, projector(p));
  EXPECT_EQ(a.last, b.last);
  EXPECT_EQ(a.best, b.best);
  opt.seed = 2;
  auto c = train::train(cfg, p.train, p.valid, opt, projector(p));
  EXPECT_NE(a.last.params, c.last.params);
}

TEST(Train, BestCheckpointHasLowestValidationLoss) {
  auto p = fixtures::make_pipeline(60, 3);
  ASSERT_FALSE(p.valid.empty());
  TrainOptions opt;
  opt.lr = 0.05;
  opt.steps = 120;
  opt.batch = 8;
  auto r = train::train(fixtures::desk_config(model::Variant::vhred, p.vocab.size(), 3), p.train, p.valid, opt);
  ASSERT_FALSE(r.log.empty());
  const EpochRecord* best = &r.log.front();
  for (const auto& rec : r.log)
    if (rec.valid_loss < best->valid_loss) best = &rec;
  EXPECT_EQ(r.best.global_step, best->step);
  EXPECT_EQ(r.last.global_step, 120u);
  auto m = r.best.instantiate();
  EXPECT_NEAR(evaluate_loss(m, p.valid, opt.batch, best->step, opt.seed + 1), best->valid_loss, 1e-9);
}

TEST(Train, ResumeContinuesStepCount) {
  auto p = fixtures::make_pipeline(40, 4);
  TrainOptions opt;
  opt.lr = kDeskLr;
  opt.steps = 20;
  opt.batch = 8;
  auto cfg = fixtures::desk_config(model::Variant::hred, p.vocab.size(), 3);
  auto first = train::train(cfg, p.train, {}, opt);
  EXPECT_EQ(first.last.global_step, 20u);
  opt.steps = 45;
  auto second = train::train(cfg, p.train, {}, opt, nullptr, &first.last);
  EXPECT_EQ(second.last.global_step, 45u);
  EXPECT_GT(second.log.front().step, 20u);
  EXPECT_EQ(second.last.optimizer.t, 45u);
  auto other = cfg;
  other.hidden_dim = 16;
  EXPECT_THROW(train::train(other, p.train, {}, opt, nullptr, &first.last), ConfigError);
}

TEST(Train, DivergenceStopsWithLastFiniteWeights) {
  auto p = fixtures::make_pipeline(30, 5);
  auto cfg = fixtures::desk_config(model::Variant::hred, p.vocab.size(), 3);
  model::Model m(cfg, 1);
  m.param("output.bias").mutable_value()[special::eou] = std::numeric_limits<double>::infinity();
  auto ck = make_checkpoint(m, AdamState{}, 0);
  TrainOptions opt;
  opt.steps = 10;
  auto r = train::train(cfg, p.train, {}, opt, nullptr, &ck);
  EXPECT_TRUE(r.diverged);
  EXPECT_EQ(r.divergence_component, "ce");
  EXPECT_EQ(r.last.global_step, 0u);
}

TEST(Train, PreconditionErrors) {
  auto p = fixtures::make_pipeline(30, 6);
  TrainOptions opt;
  opt.steps = 1;
  EXPECT_THROW(train::train(fixtures::desk_config(model::Variant::thred, p.vocab.size(), 3), p.train, {}, opt),
               ConfigError);
  EXPECT_THROW(train::train(fixtures::desk_config(model::Variant::hred, p.vocab.size(), 3), {}, {}, opt),
               EmptyCorpusError);
  opt.batch = 0;
  EXPECT_THROW(train::train(fixtures::desk_config(model::Variant::hred, p.vocab.size(), 3), p.train, {}, opt),
               ConfigError);
}
