#include "aif/efe.hpp"
#include "aif/model/generative_model.hpp"
#include "aif/plan/mcts.hpp"
#include "aif/plan/planner.hpp"

#include <boost/math/distributions/fisher_f.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

using namespace aif;
using namespace aif::plan;

namespace {

model::AgentParams random_params(std::uint64_t seed, int depth = 1) {
  model::ModelConfig c;
  c.transition_depth = depth;
  auto rng = make_rng(seed);
  return model::AgentParams::init(c, rng);
}

PlannerConfig fast_config() {
  PlannerConfig c;
  c.efe.sampling = {2, 8, 2};
  return c;
}

Vector random_distribution(int n, Rng& rng) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = uniform_open0(rng);
  return v / v.sum();
}

// Scripted evaluator: edge G depends only on the action.
struct ScriptedG {
  Vector g;
  int calls = 0;
  MctsEdge operator()(const Vector& latent, int action, Rng&) {
    ++calls;
    return {latent, g(action)};
  }
};

Vector uniform_habit(const Vector&, int, int n) { return Vector::Constant(n, 1.0 / n); }

}  // namespace

TEST(HybridPolicy, EndpointsAreExact) {
  auto rng = make_rng(1);
  const Vector h = random_distribution(7, rng);
  const Vector p = random_distribution(7, rng);
  EXPECT_EQ(hybrid_policy(h, p, 1.0), h);
  EXPECT_EQ(hybrid_policy(h, p, 0.0), p);
}

TEST(HybridPolicy, ConvexCombinationSumsToOne) {
  auto rng = make_rng(2);
  for (double gamma : {0.05, 0.3, 0.5, 0.99}) {
    const Vector h = random_distribution(7, rng);
    const Vector p = random_distribution(7, rng);
    const Vector mix = hybrid_policy(h, p, gamma);
    EXPECT_NEAR(mix.sum(), 1.0, 1e-12);
    for (int a = 0; a < 7; ++a) {
      EXPECT_NEAR(mix(a), gamma * h(a) + (1 - gamma) * p(a), 1e-15);
      EXPECT_GE(mix(a), std::min(h(a), p(a)) - 1e-15);
      EXPECT_LE(mix(a), std::max(h(a), p(a)) + 1e-15);
    }
  }
}

TEST(HybridPolicy, ConstantShiftOfGLeavesDistribution) {
  Vector g(4);
  g << 1.0, -2.0, 0.5, 3.0;
  const Vector a = efe_distribution(g);
  const Vector b = efe_distribution((g.array() + 123.0).matrix());
  EXPECT_TRUE(a.isApprox(b, 1e-12));
}

TEST(Precision, Midpoint) {
  const PrecisionParams p{1.3, 2.0, 0.4, 0.7};
  EXPECT_NEAR(precision_update(2.0, p), 1.3 / 2.0 + 0.7, 1e-15);
}

TEST(Precision, AnalyticValue) {
  const PrecisionParams p{1.0, 2.0, 0.5, 0.5};
  EXPECT_NEAR(precision_update(0.0, p), 1.0 / (1.0 + std::exp(-4.0)) + 0.5, 1e-15);
  EXPECT_NEAR(precision_update(0.0, p), 1.482, 1e-3);
}

TEST(Precision, AsymptoteAndBounds) {
  const PrecisionParams p;
  EXPECT_NEAR(precision_update(1e3, p), p.d, 1e-12);
  double prev = INFINITY;
  for (double d = 0.0; d <= 5.0; d += 0.05) {
    const double w = precision_update(d, p);
    EXPECT_GT(w, p.d);
    EXPECT_LT(w, p.d + p.alpha);
    EXPECT_LT(w, prev);
    prev = w;
  }
}

TEST(Precision, RejectsZeroScaleAndNegativeDivergence) {
  PrecisionParams p;
  p.c = 0.0;
  EXPECT_THROW(precision_update(0.1, p), std::invalid_argument);
  EXPECT_THROW(precision_update(-0.1, PrecisionParams{}), std::invalid_argument);
}

TEST(HabitDivergence, IdenticalIsZero) {
  auto rng = make_rng(3);
  const Vector q = random_distribution(7, rng);
  EXPECT_NEAR(habit_divergence(q, q), 0.0, 1e-15);
}

TEST(HabitDivergence, AnalyticTwoAction) {
  Vector q(2), p(2);
  q << 0.9, 0.1;
  p << 0.5, 0.5;
  EXPECT_NEAR(habit_divergence(q, p), 0.9 * std::log(1.8) + 0.1 * std::log(0.2), 1e-15);
  EXPECT_NEAR(habit_divergence(q, p), 0.368, 1e-3);
}

TEST(HabitDivergence, NonNegativeAndFloored) {
  auto rng = make_rng(4);
  for (int i = 0; i < 200; ++i) EXPECT_GE(habit_divergence(random_distribution(7, rng), random_distribution(7, rng)), 0.0);
  Vector q(2), p(2);
  q << 0.5, 0.5;
  p << 1.0, 0.0;
  EXPECT_TRUE(std::isfinite(habit_divergence(q, p)));
}

TEST(SelectAction, PointMass) {
  auto rng = make_rng(5);
  Vector d = Vector::Zero(7);
  d(4) = 1.0;
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(select_action(d, rng), 4);
}

TEST(SelectAction, UniformFrequencies) {
  auto rng = make_rng(6);
  const int n = 100'000;
  std::vector<int> counts(7, 0);
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(select_action(Vector::Constant(7, 1.0 / 7.0), rng))];
  const double p = 1.0 / 7.0;
  const double sigma = std::sqrt(n * p * (1 - p));
  for (int c : counts) EXPECT_LT(std::abs(c - n * p), 3.0 * sigma);
}

TEST(SelectAction, ReproducibleUnderSeed) {
  auto a = make_rng(7);
  auto b = make_rng(7);
  Vector d(3);
  d << 0.2, 0.5, 0.3;
  for (int i = 0; i < 100; ++i) EXPECT_EQ(select_action(d, a), select_action(d, b));
}

TEST(RepeatedPlan, OneEvaluationPerAction) {
  const auto p = random_params(8, 90);
  efe::NetworkModel m(p);
  const auto r = repeated_action_plan(m, Vector::Zero(8), 1.0, fast_config(), 8);
  EXPECT_EQ(r.g.size(), 7);
  EXPECT_EQ(r.terms.size(), 7u);
  EXPECT_NEAR(r.distribution.sum(), 1.0, 1e-9);
  EXPECT_TRUE((r.distribution.array() >= 0.0).all());
}

TEST(RepeatedPlan, UntrainedModelsShowNoActionEffect) {
  // One-way ANOVA with actions as groups and random models as replicates.
  const int n_models = 100;
  const int k = 7;
  Eigen::MatrixXd g(n_models, k);
  for (int i = 0; i < n_models; ++i) {
    const auto p = random_params(1000 + i);
    efe::NetworkModel m(p);
    auto rng = make_rng(2000 + i);
    const Vector s0 = model::sample_latents(model::encode(p, Matrix(Matrix::Zero(1, 44))), rng).row(0).transpose();
    g.row(i) = repeated_action_plan(m, s0, 1.0, fast_config(), rng()).g.transpose();
  }
  const double grand = g.mean();
  const Eigen::RowVectorXd group = g.colwise().mean();
  const double ss_between = n_models * (group.array() - grand).square().sum();
  const double ss_within = (g.rowwise() - group).array().square().sum();
  const double f = (ss_between / (k - 1)) / (ss_within / (k * n_models - k));
  const boost::math::fisher_f dist(k - 1, k * n_models - k);
  const double p_value = boost::math::cdf(boost::math::complement(dist, f));
  EXPECT_GT(p_value, 0.01) << "F = " << f;
}

TEST(LightRollout, DepthOneEqualsRepeatedPlan) {
  const auto p = random_params(9, 5);
  efe::NetworkModel m(p);
  auto cfg = fast_config();
  cfg.rollout_depth = 1;
  const Vector s0 = Vector::Random(8) * 0.3;
  const auto a = light_rollout_plan(m, s0, 1.3, cfg, 99);
  const auto b = repeated_action_plan(m, s0, 1.3, cfg, 99);
  EXPECT_EQ(a.g, b.g);
  EXPECT_EQ(a.distribution, b.distribution);
}

TEST(LightRollout, DeeperRolloutsAccumulate) {
  const auto p = random_params(10, 5);
  efe::NetworkModel m(p);
  auto cfg = fast_config();
  cfg.rollout_depth = 3;
  const auto r = light_rollout_plan(m, Vector::Zero(8), 1.0, cfg, 10);
  EXPECT_EQ(r.g.size(), 7);
  EXPECT_NEAR(r.distribution.sum(), 1.0, 1e-9);
  EXPECT_TRUE(r.g.allFinite());
}

TEST(LightRollout, ContinuationEndpoints) {
  auto p = random_params(11, 3);
  efe::NetworkModel m(p);
  auto cfg = fast_config();
  const Vector s = Vector::Random(8) * 0.2;

  cfg.c_explore = 0.0;
  auto r1 = make_rng(11);
  auto r2 = make_rng(11);
  const Vector cont = rollout_continuation(m, s, 1.0, cfg, r1);
  EXPECT_EQ(cont, habit_at_latent(m, s, r2));

  cfg.c_explore = 1.0;
  auto r3 = make_rng(12);
  const Vector before = rollout_continuation(m, s, 1.0, cfg, r3);
  for (auto& l : p.habit.layers()) l.weight = Matrix::Random(l.weight.rows(), l.weight.cols());
  auto r4 = make_rng(12);
  EXPECT_EQ(rollout_continuation(m, s, 1.0, cfg, r4), before);
}

TEST(Mcts, VisitCountsConserveLoops) {
  ScriptedG eval{Vector::LinSpaced(7, 0.0, 0.6)};
  MctsSettings s;
  s.t_dec = 1.0;  // never stop early
  auto rng = make_rng(13);
  const auto r = mcts_search(Vector::Zero(2), Vector::Constant(7, 1.0 / 7), s, eval,
                             [](const Vector& l, int d) { return uniform_habit(l, d, 7); }, rng);
  EXPECT_EQ(r.loops, s.budget);
  EXPECT_EQ(r.visits.sum(), s.budget);
  EXPECT_FALSE(r.stopped_early);
  EXPECT_NEAR(r.distribution.sum(), 1.0, 1e-12);
  // Edges are scored once, on expansion.
  EXPECT_LE(eval.calls, s.budget);
}

TEST(Mcts, DominantActionStopsEarly) {
  Vector g = Vector::Ones(7);
  g(3) = 0.0;
  ScriptedG eval{g};
  MctsSettings s;
  s.t_dec = 0.2;
  auto rng = make_rng(14);
  const auto r = mcts_search(Vector::Zero(2), Vector::Constant(7, 1.0 / 7), s, eval,
                             [](const Vector& l, int d) { return uniform_habit(l, d, 7); }, rng);
  EXPECT_TRUE(r.stopped_early);
  EXPECT_LT(r.loops, s.budget);
  EXPECT_EQ(r.visits.sum(), r.loops);
  for (int a = 0; a < 7; ++a)
    if (a != 3) EXPECT_GT(r.distribution(3), r.distribution(a));
  EXPECT_GT(visit_margin(r.visits), 0.2);
}

TEST(Mcts, SingleActionRunsFullBudget) {
  ScriptedG eval{Vector::Constant(1, 0.5)};
  MctsSettings s;
  s.n_actions = 1;
  s.budget = 9;
  auto rng = make_rng(15);
  const auto r = mcts_search(Vector::Zero(2), Vector::Ones(1), s, eval,
                             [](const Vector& l, int d) { return uniform_habit(l, d, 1); }, rng);
  EXPECT_EQ(r.distribution(0), 1.0);
  EXPECT_EQ(r.loops, 9);
}

TEST(Mcts, RelabelingPermutesVisits) {
  Vector g(5);
  g << 0.31, 0.12, 0.55, 0.08, 0.47;
  const std::vector<int> perm = {3, 0, 4, 1, 2};  // new label of each old action
  Vector g_perm(5);
  for (int a = 0; a < 5; ++a) g_perm(perm[static_cast<std::size_t>(a)]) = g(a);
  MctsSettings s;
  s.n_actions = 5;
  s.budget = 40;
  s.max_depth = 1;
  s.t_dec = 1.0;
  auto habit = [](const Vector& l, int d) { return uniform_habit(l, d, 5); };
  auto r1 = make_rng(16);
  auto r2 = make_rng(16);
  ScriptedG e1{g}, e2{g_perm};
  const auto a = mcts_search(Vector::Zero(1), Vector::Constant(5, 0.2), s, e1, habit, r1);
  const auto b = mcts_search(Vector::Zero(1), Vector::Constant(5, 0.2), s, e2, habit, r2);
  for (int k = 0; k < 5; ++k) EXPECT_EQ(a.visits(k), b.visits(perm[static_cast<std::size_t>(k)]));
}

TEST(Mcts, SymmetricScoresBalanceVisits) {
  MctsSettings s;
  s.t_dec = 1.0;
  s.budget = 59;
  ScriptedG eval{Vector::Constant(7, 0.4)};
  auto rng = make_rng(21);
  const auto r = mcts_search(Vector::Zero(1), Vector::Constant(7, 1.0 / 7), s, eval,
                             [](const Vector& l, int d) { return uniform_habit(l, d, 7); }, rng);
  EXPECT_LE(r.visits.maxCoeff() - r.visits.minCoeff(), 1.0);
}

TEST(Mcts, RejectsBudgetBelowActionCount) {
  ScriptedG eval{Vector::Zero(7)};
  MctsSettings s;
  s.budget = 6;
  auto rng = make_rng(17);
  EXPECT_THROW(mcts_search(Vector::Zero(1), Vector::Constant(7, 1.0 / 7), s, eval,
                           [](const Vector& l, int d) { return uniform_habit(l, d, 7); }, rng),
               std::invalid_argument);
}

TEST(Mcts, NetworkPlannerProducesDistribution) {
  const auto p = random_params(18, 4);
  efe::NetworkModel m(p);
  auto cfg = fast_config();
  cfg.kind = PlannerKind::Mcts;
  cfg.mcts_budget = 20;
  auto rng = make_rng(18);
  const auto r = mcts_plan(m, Vector::Zero(8), Vector::Constant(7, 1.0 / 7), 1.0, cfg, rng);
  EXPECT_NEAR(r.distribution.sum(), 1.0, 1e-12);
  EXPECT_LE(r.loops, 20);
}

TEST(Decide, AllPlannersGiveValidDistributions) {
  const auto p = random_params(19, 3);
  efe::NetworkModel m(p);
  Vector obs = Vector::Zero(44);
  obs(0) = 1.0;
  for (auto kind : {PlannerKind::Repeated, PlannerKind::LightRollout, PlannerKind::Mcts}) {
    auto cfg = fast_config();
    cfg.kind = kind;
    auto rng = make_rng(19);
    const auto d = decide(m, obs, 1.0, cfg, rng);
    EXPECT_NEAR(d.hybrid.sum(), 1.0, 1e-9) << to_string(kind);
    EXPECT_TRUE((d.hybrid.array() >= 0.0).all());
    EXPECT_GE(d.action, 0);
    EXPECT_LT(d.action, 7);
    EXPECT_GE(d.divergence, 0.0);
    EXPECT_GT(d.next_omega, cfg.precision.d);
    EXPECT_LT(d.next_omega, cfg.precision.d + cfg.precision.alpha);
  }
}

TEST(Decide, ReproducibleUnderSeed) {
  const auto p = random_params(20, 3);
  efe::NetworkModel m(p);
  Vector obs = Vector::Zero(44);
  obs(3) = 1.0;
  auto a = make_rng(20);
  auto b = make_rng(20);
  for (int i = 0; i < 5; ++i) {
    const auto da = decide(m, obs, 1.0, fast_config(), a);
    const auto db = decide(m, obs, 1.0, fast_config(), b);
    EXPECT_EQ(da.action, db.action);
    EXPECT_EQ(da.hybrid, db.hybrid);
  }
}

TEST(PlannerConfig, Validation) {
  PlannerConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.rollout_depth = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.precision.c = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(parse_planner_kind("beam"), ConfigError);
}

TEST(DecisionLog, CsvColumns) {
  std::ostringstream os;
  write_decision_header(os, 2);
  Decision d;
  d.action = 1;
  d.hybrid = Vector(2);
  d.hybrid << 0.25, 0.75;
  d.plan.g = Vector(2);
  d.plan.g << 1.5, -0.5;
  d.divergence = 0.125;
  d.omega = 1.25;
  write_decision_row(os, 3.5, d);
  EXPECT_EQ(os.str(), "time,action,p0,p1,g0,g1,divergence,omega\n3.5,1,0.25,0.75,1.5,-0.5,0.125,1.25\n");
}
