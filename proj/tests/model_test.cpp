#include "aif/model/generative_model.hpp"
#include "aif/preference.hpp"
#include "aif/sim/observation.hpp"
#include "aif/sim/workstation.hpp"
#include "finite_diff.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace aif;
using namespace aif::model;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.n_binary = 5;
  c.n_machines = 2;
  c.latent_dim = 3;
  c.hidden = {6, 5};
  c.dropout = 0.2;
  c.transition_depth = 2;
  return c;
}

WindowBatch random_batch(const ModelConfig& c, Index n, Rng& rng) {
  WindowBatch b;
  b.obs_now = Matrix::Zero(n, c.obs_width());
  b.obs_next = Matrix::Zero(n, c.obs_width());
  b.actions = Matrix(n, c.transition_depth);
  for (Index r = 0; r < n; ++r) {
    for (Index k = 0; k < c.n_binary; ++k) {
      b.obs_now(r, k) = uniform01(rng) < 0.5;
      b.obs_next(r, k) = uniform01(rng) < 0.5;
    }
    for (Index k = c.n_binary; k < c.obs_width(); ++k) {
      b.obs_now(r, k) = uniform01(rng);
      b.obs_next(r, k) = uniform01(rng);
    }
    for (Index k = 0; k < c.transition_depth; ++k)
      b.actions(r, k) = static_cast<double>(rng() % c.n_actions()) / c.n_machines;
  }
  return b;
}

void expect_vfe_gradients(const ModelConfig& c, Index batch_size, double omega, std::uint64_t seed) {
  auto rng = make_rng(seed);
  auto p = AgentParams::init(c, rng);
  // Zero biases put rows with an all-dropped input exactly on the relu kink.
  for (auto* net : {&p.encoder, &p.transition, &p.decoder})
    for (auto& l : net->layers()) l.bias += 0.1 * Vector::Random(l.bias.size());
  const auto batch = random_batch(c, batch_size, rng);
  const auto noise = VfeNoise::draw(batch_size, c.latent_dim, rng);
  VfeGradients g;
  vfe_loss(p, batch, omega, noise, &g);
  auto loss = [&] { return vfe_loss(p, batch, omega, noise).total; };
  EXPECT_LT(oracle::relative_error(g.encoder, oracle::numeric_gradient(p.encoder, loss)), 1e-4);
  EXPECT_LT(oracle::relative_error(g.transition, oracle::numeric_gradient(p.transition, loss)), 1e-4);
  EXPECT_LT(oracle::relative_error(g.decoder, oracle::numeric_gradient(p.decoder, loss)), 1e-4);
}

// Windows of a random-policy run of the default workstation.
WindowBatch simulated_windows(const ModelConfig& c, int count, std::uint64_t seed) {
  sim::SimConfig sc;
  pref::PreferenceConfig pc;
  auto s = sim::init_sim(sc, seed);
  auto policy = make_rng(seed, 1);
  std::vector<Vector> obs;
  std::vector<int> acts;
  for (int i = 0; i < count + c.transition_depth + 200; ++i) {
    obs.push_back(sim::observe(s, pc));
    acts.push_back(static_cast<int>(policy() % c.n_actions()));
    sim::apply_action(s, acts.back());
    sim::advance_to_next_event(s);
  }
  WindowBatch b;
  b.obs_now.resize(count, c.obs_width());
  b.obs_next.resize(count, c.obs_width());
  b.actions.resize(count, c.transition_depth);
  for (int i = 0; i < count; ++i) {
    const int t = 200 + i;
    b.obs_now.row(i) = obs[t].transpose();
    b.obs_next.row(i) = obs[t + c.transition_depth].transpose();
    b.actions.row(i) = encode_actions(std::span(acts).subspan(t, c.transition_depth), c.n_machines).transpose();
  }
  return b;
}

}  // namespace

TEST(ModelInit, NetworkShapes) {
  ModelConfig c;
  c.transition_depth = 90;
  auto rng = make_rng(1);
  const auto p = AgentParams::init(c, rng);
  EXPECT_EQ(p.encoder.input_width(), 44);
  EXPECT_EQ(p.encoder.output_width(), 16);
  EXPECT_EQ(p.transition.input_width(), 8 + 90);
  EXPECT_EQ(p.transition.output_width(), 16);
  EXPECT_EQ(p.decoder.input_width(), 8);
  EXPECT_EQ(p.decoder.output_width(), 44);
  EXPECT_EQ(p.habit.input_width(), 44);
  EXPECT_EQ(p.habit.output_width(), 7);
  EXPECT_TRUE(p.transition.has_dropout());
  EXPECT_TRUE(p.decoder.has_dropout());
  EXPECT_FALSE(p.encoder.has_dropout());
}

TEST(ModelInit, RejectsBadConfig) {
  auto rng = make_rng(1);
  ModelConfig c;
  c.transition_depth = 0;
  EXPECT_THROW(AgentParams::init(c, rng), std::invalid_argument);
  c = {};
  c.lambda_s = 0.0;
  EXPECT_THROW(AgentParams::init(c, rng), std::invalid_argument);
  c = {};
  c.dropout = 1.0;
  EXPECT_THROW(AgentParams::init(c, rng), std::invalid_argument);
}

TEST(Encode, VarianceStaysInRange) {
  ModelConfig c;
  auto rng = make_rng(2);
  auto p = AgentParams::init(c, rng);
  for (auto& l : p.encoder.layers()) l.weight *= 20.0;
  const auto g = encode(p, Matrix(Matrix::Random(50, c.obs_width()) * 10.0));
  EXPECT_TRUE((g.variance.array() >= c.variance_floor).all());
  EXPECT_TRUE((g.variance.array() <= c.lambda_s + c.variance_floor).all());
  EXPECT_TRUE((g.mean.array().abs() <= 1.0).all());
}

TEST(Encode, ZeroWeightsGiveCentredHalfScaleVariance) {
  ModelConfig c;
  auto rng = make_rng(3);
  auto p = AgentParams::init(c, rng);
  for (auto& l : p.encoder.layers()) {
    l.weight.setZero();
    l.bias.setZero();
  }
  const auto g = encode(p, Vector(Vector::Random(c.obs_width())));
  EXPECT_TRUE(g.mean.isZero(0.0));
  for (Index k = 0; k < g.variance.size(); ++k) EXPECT_NEAR(g.variance(k), c.lambda_s / 2.0 + c.variance_floor, 1e-15);
}

TEST(Transition, PrecisionScalesVariance) {
  ModelConfig c;
  auto rng = make_rng(4);
  const auto p = AgentParams::init(c, rng);
  const Vector s = Vector::Random(c.latent_dim);
  const Vector a = repeated_action(3, 1, c.n_machines);
  const auto base = transition(p, s, a, 1.0);
  const auto sharp = transition(p, s, a, 4.0);
  EXPECT_TRUE(base.mean.isApprox(sharp.mean, 0.0));
  EXPECT_TRUE((base.variance / 4.0).isApprox(sharp.variance, 1e-14));
  EXPECT_EQ(sharp.precision, 4.0);
  EXPECT_THROW(transition(p, s, a, 0.0), std::invalid_argument);
}

TEST(Transition, RejectsWrongSequenceLength) {
  ModelConfig c;
  c.transition_depth = 3;
  auto rng = make_rng(5);
  const auto p = AgentParams::init(c, rng);
  EXPECT_THROW(transition(p, Vector(Vector::Zero(c.latent_dim)), repeated_action(1, 2, 6)), std::invalid_argument);
  EXPECT_NO_THROW(transition(p, Vector(Vector::Zero(c.latent_dim)), repeated_action(1, 3, 6)));
}

TEST(Transition, RepeatedActionEncoding) {
  const Vector v = repeated_action(4, 90, 6);
  ASSERT_EQ(v.size(), 90);
  EXPECT_TRUE((v.array() == 4.0 / 6.0).all());
  const std::vector<int> seq = {0, 6, 3};
  const Vector e = encode_actions(seq, 6);
  EXPECT_DOUBLE_EQ(e(0), 0.0);
  EXPECT_DOUBLE_EQ(e(1), 1.0);
  EXPECT_DOUBLE_EQ(e(2), 0.5);
}

TEST(Decode, OutputRanges) {
  ModelConfig c;
  auto rng = make_rng(6);
  auto p = AgentParams::init(c, rng);
  for (auto& l : p.decoder.layers()) l.weight *= 30.0;
  const auto o = decode(p, Matrix(Matrix::Random(40, c.latent_dim) * 5.0));
  EXPECT_TRUE((o.probs.array() >= 0.0).all() && (o.probs.array() <= 1.0).all());
  EXPECT_TRUE((o.rewards.array() >= 0.0).all() && (o.rewards.array() <= kRewardCeiling).all());
}

TEST(Vfe, GradientsMatchFiniteDifferencesSmall) { expect_vfe_gradients(small_config(), 5, 1.0, 7); }

TEST(Vfe, GradientsMatchFiniteDifferencesWithPrecision) { expect_vfe_gradients(small_config(), 4, 2.7, 8); }

TEST(Vfe, GradientsMatchFiniteDifferencesFullShape) {
  ModelConfig c;
  c.transition_depth = 3;
  expect_vfe_gradients(c, 3, 1.3, 9);
}

TEST(Vfe, BceWithLogits) {
  EXPECT_NEAR(bce_with_logits(0.0, 1.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_with_logits(800.0, 1.0), 0.0, 1e-15);
  EXPECT_NEAR(bce_with_logits(-800.0, 0.0), 0.0, 1e-15);
  EXPECT_NEAR(bce_with_logits(2.0, 0.3), -(0.3 * std::log(1.0 / (1.0 + std::exp(-2.0))) + 0.7 * std::log(1.0 - 1.0 / (1.0 + std::exp(-2.0)))), 1e-12);
}

TEST(Vfe, KlVanishesWhenPriorEqualsPosterior) {
  // Encoder and transition both constant with identical heads.
  auto c = small_config();
  c.dropout = 0.0;
  auto rng = make_rng(10);
  auto p = AgentParams::init(c, rng);
  auto flatten = [](nn::DenseNet& net) {
    for (auto& l : net.layers()) l.weight.setZero();
    net.layers().back().bias.setConstant(0.3);
  };
  flatten(p.encoder);
  flatten(p.transition);
  const auto batch = random_batch(c, 6, rng);
  const auto rep = vfe_loss(p, batch, 1.0, VfeNoise::draw(6, c.latent_dim, rng));
  EXPECT_NEAR(rep.kl, 0.0, 1e-14);
  EXPECT_NEAR(rep.total, rep.recon, 1e-14);
}

TEST(Vfe, LossFallsDuringTraining) {
  ModelConfig c;
  c.transition_depth = 4;
  auto rng = make_rng(11);
  auto p = AgentParams::init(c, rng);
  auto st = TrainingState::for_params(p);
  const auto data = simulated_windows(c, 400, 11);
  auto batch_of = [&](Index size) {
    WindowBatch b;
    b.obs_now.resize(size, c.obs_width());
    b.obs_next.resize(size, c.obs_width());
    b.actions.resize(size, c.transition_depth);
    for (Index r = 0; r < size; ++r) {
      const Index i = static_cast<Index>(rng() % data.size());
      b.obs_now.row(r) = data.obs_now.row(i);
      b.obs_next.row(r) = data.obs_next.row(i);
      b.actions.row(r) = data.actions.row(i);
    }
    return b;
  };
  const auto eval_noise = VfeNoise::draw(data.size(), c.latent_dim, rng);
  const double before = vfe_loss(p, data, 1.0, eval_noise).total;
  for (int step = 0; step < 200; ++step) vfe_step(p, st, batch_of(32), 1.0, {}, rng);
  const double after = vfe_loss(p, data, 1.0, eval_noise).total;
  EXPECT_LT(after, 0.5 * before);
}

TEST(Habit, LossIsMeanSquaredRewardWithoutBootstrap) {
  ModelConfig c;
  auto rng = make_rng(12);
  auto p = AgentParams::init(c, rng);
  p.habit.layers().back().weight.setZero();
  p.habit.layers().back().bias.setZero();
  QBatch b;
  b.obs = Matrix::Random(5, c.obs_width());
  b.obs_next = Matrix::Random(5, c.obs_width());
  b.actions = {0, 1, 2, 3, 6};
  b.rewards = Vector(5);
  b.rewards << 0.1, 0.4, 0.9, 1.0, 0.2;
  const auto rep = habit_q_loss(p.habit, p.habit, b, 0.0);
  EXPECT_NEAR(rep.loss, b.rewards.squaredNorm() / 5.0, 1e-15);
}

TEST(Habit, GradientMatchesFiniteDifferences) {
  ModelConfig c;
  auto rng = make_rng(13);
  auto p = AgentParams::init(c, rng);
  auto target = p.habit;
  for (auto& l : target.layers()) l.weight *= 0.5;
  QBatch b;
  b.obs = Matrix::Random(4, c.obs_width());
  b.obs_next = Matrix::Random(4, c.obs_width());
  b.actions = {0, 5, 2, 2};
  b.rewards = Vector::Random(4);
  const auto rep = habit_q_loss(p.habit, target, b, 0.99);
  const auto fd = oracle::numeric_gradient(p.habit, [&] { return habit_q_loss(p.habit, target, b, 0.99, false).loss; });
  EXPECT_LT(oracle::relative_error(rep.grads, fd), 1e-4);
}

TEST(Habit, EqualQValuesGiveUniformPolicy) {
  ModelConfig c;
  auto rng = make_rng(14);
  auto p = AgentParams::init(c, rng);
  p.habit.layers().back().weight.setZero();
  p.habit.layers().back().bias.setConstant(0.7);
  const Vector pi = habit_distribution(p, Vector(Vector::Random(c.obs_width())));
  for (Index a = 0; a < pi.size(); ++a) EXPECT_NEAR(pi(a), 1.0 / 7.0, 1e-15);
}

TEST(Habit, TwoStateChainMatchesValueIteration) {
  // States {0, 1}; action a moves to state a. Reward 1 for staying in state 1,
  // 0.5 for leaving it, 0 otherwise.
  ModelConfig c;
  c.n_binary = 2;
  c.n_machines = 1;
  c.hidden = {16};
  auto rng = make_rng(15);
  auto p = AgentParams::init(c, rng);
  auto st = TrainingState::for_params(p);
  const double discount = 0.9;
  auto reward = [](int s, int a) { return s == 1 ? (a == 1 ? 1.0 : 0.5) : 0.0; };
  auto obs = [&](int s) {
    Vector o = Vector::Zero(c.obs_width());
    o(s) = 1.0;
    return o;
  };

  Eigen::Matrix2d q = Eigen::Matrix2d::Zero();
  for (int it = 0; it < 2000; ++it) {
    Eigen::Matrix2d next;
    for (int s = 0; s < 2; ++s)
      for (int a = 0; a < 2; ++a) next(s, a) = reward(s, a) + discount * q.row(a).maxCoeff();
    q = next;
  }

  QBatch b;
  b.obs.resize(4, c.obs_width());
  b.obs_next.resize(4, c.obs_width());
  b.rewards.resize(4);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) {
      const int r = 2 * s + a;
      b.obs.row(r) = obs(s).transpose();
      b.obs_next.row(r) = obs(a).transpose();
      b.actions.push_back(a);
      b.rewards(r) = reward(s, a);
    }
  nn::AdamConfig adam;
  adam.lr = 3e-3;
  for (int step = 0; step < 6000; ++step) habit_step(p, st, b, discount, 50, adam);
  for (int s = 0; s < 2; ++s) {
    const Matrix row = habit_q(p, Matrix(obs(s).transpose()));
    for (int a = 0; a < 2; ++a) EXPECT_NEAR(row(0, a), q(s, a), 0.05 * std::abs(q(s, a)) + 0.05) << s << a;
  }
}

TEST(Habit, TargetRefreshCadence) {
  ModelConfig c;
  auto rng = make_rng(16);
  auto p = AgentParams::init(c, rng);
  auto st = TrainingState::for_params(p);
  QBatch b;
  b.obs = Matrix::Random(2, c.obs_width());
  b.obs_next = Matrix::Random(2, c.obs_width());
  b.actions = {1, 4};
  b.rewards = Vector::Ones(2);
  for (int i = 0; i < 49; ++i) habit_step(p, st, b, 0.99, 50, {});
  EXPECT_FALSE(same_parameters(st.habit_target, p.habit));
  habit_step(p, st, b, 0.99, 50, {});
  EXPECT_TRUE(same_parameters(st.habit_target, p.habit));
  habit_step(p, st, b, 0.99, 50, {});
  EXPECT_FALSE(same_parameters(st.habit_target, p.habit));
}

TEST(Checkpoint, RoundTripIsExact) {
  ModelConfig c;
  c.transition_depth = 5;
  auto rng = make_rng(17);
  const auto p = AgentParams::init(c, rng);
  const auto dir = std::filesystem::temp_directory_path() / "aif_model_test";
  std::filesystem::create_directories(dir);
  const auto stem = (dir / "ckpt").string();
  save_checkpoint(p, stem, {{"epoch", 3}});
  const auto q = load_checkpoint(stem);
  EXPECT_TRUE(same_parameters(p, q));
  EXPECT_EQ(q.config.transition_depth, 5);
  EXPECT_THROW(load_checkpoint((dir / "missing").string()), nn::ArchiveError);
  std::filesystem::remove_all(dir);
}
