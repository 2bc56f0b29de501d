#pragma once

// Monte-Carlo expected free energy with MC-dropout parameter draws.
//
// G = -E[log P(o|pi)]                           (preference surprise)
//   + E_theta E_o [H(s|o)] - E_theta [H(s|pi)]  (state information gain)
//   + E_s [E_theta H(o|s,theta) - H(o|s)]       (parameter novelty)

#include "aif/model/generative_model.hpp"
#include "aif/nn/prob.hpp"
#include "aif/rng.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace aif::efe {

using model::GaussianBatch;
using model::ObservationDistribution;
using nn::Index;
using nn::Matrix;
using nn::Vector;

struct EfeSampling {
  int n_theta = 4;
  int n_state = 32;
  int n_obs = 4;

  void validate() const {
    if (n_theta < 1 || n_state < 1 || n_obs < 1) throw std::invalid_argument("EFE sample counts must be >= 1");
  }
};

struct EfeConfig {
  EfeSampling sampling;
  double reward_floor = 1e-6;
  bool accumulate_trajectory = false;  // sum G over every transition instead of the horizon only

  void validate() const {
    sampling.validate();
    if (!(reward_floor > 0.0 && reward_floor < 1.0)) throw std::invalid_argument("reward_floor must be in (0, 1)");
  }
};

struct EfeEstimate {
  double term_reward = 0.0;
  double term_state = 0.0;
  double term_novelty = 0.0;
  double total = 0.0;
  int n_theta = 0;
  int n_state = 0;
  int n_obs = 0;

  EfeEstimate& operator+=(const EfeEstimate& o) {
    term_reward += o.term_reward;
    term_state += o.term_state;
    term_novelty += o.term_novelty;
    total = term_reward + term_state + term_novelty;
    return *this;
  }
};

// What the estimator needs from a generative model. `Theta` is one draw of
// the uncertain parameters; a model without dropout reports stochastic() ==
// false and is evaluated with a single null draw.
template <typename M>
concept EfeModel = requires(const M& m, const Matrix& x, Rng& rng, const typename M::Theta* theta) {
  { m.latent_dim() } -> std::convertible_to<int>;
  { m.n_actions() } -> std::convertible_to<int>;
  { m.depth() } -> std::convertible_to<int>;
  { m.stochastic() } -> std::convertible_to<bool>;
  { m.sample_theta(rng) } -> std::same_as<typename M::Theta>;
  { m.transition(x, x, 1.0, theta) } -> std::same_as<GaussianBatch>;
  { m.decode(x, theta) } -> std::same_as<ObservationDistribution>;
  { m.encode(x) } -> std::same_as<GaussianBatch>;
  { m.habit(Vector{}) } -> std::same_as<Vector>;
};

// Adapter over trained networks. Dropout masks of the transition and the
// decoder are drawn together.
class NetworkModel {
 public:
  struct Theta {
    nn::ThetaSample transition;
    nn::ThetaSample decoder;
  };

  explicit NetworkModel(const model::AgentParams& p) : p_(&p) {}

  const model::AgentParams& params() const { return *p_; }
  int latent_dim() const { return p_->config.latent_dim; }
  int n_actions() const { return p_->config.n_actions(); }
  int n_machines() const { return p_->config.n_machines; }
  int depth() const { return p_->config.transition_depth; }
  int n_binary() const { return p_->config.n_binary; }
  bool stochastic() const { return p_->transition.has_dropout() || p_->decoder.has_dropout(); }

  Theta sample_theta(Rng& rng) const {
    Theta t;
    t.transition = nn::sample_theta(p_->transition, rng);
    t.decoder = nn::sample_theta(p_->decoder, rng);
    return t;
  }
  GaussianBatch transition(const Matrix& latents, const Matrix& actions, double omega, const Theta* theta) const {
    return model::transition(*p_, latents, actions, omega, theta ? &theta->transition : nullptr);
  }
  ObservationDistribution decode(const Matrix& latents, const Theta* theta) const {
    return model::decode(*p_, latents, theta ? &theta->decoder : nullptr);
  }
  GaussianBatch encode(const Matrix& obs) const { return model::encode(*p_, obs); }
  Vector habit(const Vector& obs) const { return model::habit_distribution(*p_, obs); }

 private:
  const model::AgentParams* p_;
};

// ---------------------------------------------------------------------------
// Terms.

// -mean log R over predicted combined rewards, clamped to [floor, 1].
inline double efe_term_reward(const Eigen::Ref<const Vector>& predicted_r, double floor = 1e-6) {
  if (predicted_r.size() == 0) throw std::invalid_argument("no reward predictions");
  return -predicted_r.array().max(floor).min(1.0).log().mean();
}

// Mean posterior entropy over sampled observations minus mean prior entropy.
inline double efe_term_state(const Eigen::Ref<const Vector>& posterior_entropy,
                             const Eigen::Ref<const Vector>& prior_entropy) {
  if (posterior_entropy.size() == 0 || prior_entropy.size() == 0) throw std::invalid_argument("no entropies");
  return posterior_entropy.mean() - prior_entropy.mean();
}

// Summed Bernoulli entropy of each row.
inline Vector bernoulli_entropy_rows(const Matrix& probs) {
  const auto p = probs.array().max(0.0).min(1.0);
  const Eigen::ArrayXXd plogp = (p > 0.0).select(p * p.log(), 0.0);
  const Eigen::ArrayXXd q = 1.0 - p;
  const Eigen::ArrayXXd qlogq = (q > 0.0).select(q * q.log(), 0.0);
  return -(plogp + qlogq).rowwise().sum().matrix();
}

// Jensen gap of the observation entropy over parameter draws: one matrix of
// Bernoulli probabilities per draw, rows are latent samples.
inline double efe_term_novelty(const std::vector<Matrix>& probs_per_theta) {
  if (probs_per_theta.empty()) throw std::invalid_argument("no parameter draws");
  if (probs_per_theta.size() == 1) return 0.0;
  Vector mean_entropy = Vector::Zero(probs_per_theta.front().rows());
  Matrix mean_probs = Matrix::Zero(probs_per_theta.front().rows(), probs_per_theta.front().cols());
  for (const auto& p : probs_per_theta) {
    mean_entropy += bernoulli_entropy_rows(p);
    mean_probs += p;
  }
  const double k = static_cast<double>(probs_per_theta.size());
  mean_entropy /= k;
  mean_probs /= k;
  return (mean_entropy - bernoulli_entropy_rows(mean_probs)).mean();
}

inline Vector gaussian_entropy_rows(const Matrix& variance) {
  return 0.5 * (nn::kTwoPiE * variance.array()).log().rowwise().sum().matrix();
}

// Bernoulli draws for the one-hot block; reward columns keep their means.
inline Matrix sample_observations(const ObservationDistribution& d, Rng& rng) {
  Matrix o(d.probs.rows(), d.probs.cols() + d.rewards.cols());
  for (Index r = 0; r < o.rows(); ++r)
    for (Index k = 0; k < d.probs.cols(); ++k) o(r, k) = uniform01(rng) < d.probs(r, k) ? 1.0 : 0.0;
  o.rightCols(d.rewards.cols()) = d.rewards;
  return o;
}

// ---------------------------------------------------------------------------
// Estimation at one transition.

struct StepResult {
  EfeEstimate estimate;
  Vector next_latent;  // one sample of the predicted latent, for continuing a rollout
};

template <EfeModel M>
std::vector<typename M::Theta> draw_thetas(const M& m, const EfeSampling& s, Rng& rng) {
  std::vector<typename M::Theta> thetas;
  if (!m.stochastic()) return thetas;
  for (int i = 0; i < s.n_theta; ++i) thetas.push_back(m.sample_theta(rng));
  return thetas;
}

// EFE of the prior reached from `latent` under one encoded action block.
template <EfeModel M>
StepResult efe_step(const M& m, const Vector& latent, const Vector& actions, double omega, const EfeConfig& cfg,
                       Rng& rng) {
  const auto& s = cfg.sampling;
  const auto thetas = draw_thetas(m, s, rng);
  const int n_theta = thetas.empty() ? 1 : static_cast<int>(thetas.size());
  auto theta_at = [&](int i) { return thetas.empty() ? nullptr : &thetas[static_cast<std::size_t>(i)]; };
  const int d = m.latent_dim();

  Matrix latents(static_cast<Index>(n_theta) * s.n_state, d);
  Vector prior_entropy(n_theta);
  const Matrix from = latent.transpose();
  const Matrix act = actions.transpose();
  for (int i = 0; i < n_theta; ++i) {
    const auto prior = m.transition(from, act, omega, theta_at(i));
    prior_entropy(i) = gaussian_entropy_rows(prior.variance)(0);
    const Matrix eps = nn::standard_normal_matrix(s.n_state, d, rng);
    const auto sd = prior.variance.row(0).array().sqrt();
    for (int j = 0; j < s.n_state; ++j)
      latents.row(static_cast<Index>(i) * s.n_state + j) = prior.mean.row(0).array() + sd * eps.row(j).array();
  }

  // Every draw decodes every latent (novelty); each latent block is also
  // paired with the draw that generated it (reward and state terms).
  std::vector<Matrix> probs;
  ObservationDistribution matched;
  for (int k = 0; k < n_theta; ++k) {
    auto dist = m.decode(latents, theta_at(k));
    const auto block = Eigen::seqN(static_cast<Index>(k) * s.n_state, s.n_state);
    if (k == 0) matched = dist;
    matched.probs(block, Eigen::all) = dist.probs(block, Eigen::all);
    matched.rewards(block, Eigen::all) = dist.rewards(block, Eigen::all);
    probs.push_back(std::move(dist.probs));
  }
  const Vector r_hat = matched.rewards.col(matched.rewards.cols() - 1);

  ObservationDistribution repeated;
  repeated.probs = matched.probs.replicate(s.n_obs, 1);
  repeated.rewards = matched.rewards.replicate(s.n_obs, 1);
  const auto posterior = m.encode(sample_observations(repeated, rng));

  StepResult out;
  auto& e = out.estimate;
  e.term_reward = efe_term_reward(r_hat, cfg.reward_floor);
  e.term_state = efe_term_state(gaussian_entropy_rows(posterior.variance), prior_entropy);
  e.term_novelty = efe_term_novelty(probs);
  e.total = e.term_reward + e.term_state + e.term_novelty;
  e.n_theta = n_theta;
  e.n_state = s.n_state;
  e.n_obs = s.n_obs;
  out.next_latent = latents.row(0).transpose();
  return out;
}

// G of a policy given as consecutive action blocks of the transition depth.
// Only the horizon is scored unless accumulate_trajectory is set.
template <EfeModel M>
EfeEstimate efe_policy(const M& m, const Vector& latent, const std::vector<Vector>& blocks, double omega,
                       const EfeConfig& cfg, Rng& rng) {
  if (blocks.empty()) throw std::invalid_argument("empty policy");
  EfeEstimate total;
  Vector s = latent;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    auto step = efe_step(m, s, blocks[k], omega, cfg, rng);
    if (cfg.accumulate_trajectory || k + 1 == blocks.size()) {
      total += step.estimate;
      total.n_theta = step.estimate.n_theta;
      total.n_state = step.estimate.n_state;
      total.n_obs = step.estimate.n_obs;
    }
    s = std::move(step.next_latent);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Per-decision term log: time, action, term1, term2, term3.

inline void write_term_header(std::ostream& os) { os << "time,action,term1,term2,term3\n"; }

inline void write_term_row(std::ostream& os, double time, int action, const EfeEstimate& e) {
  os << time << ',' << action << ',' << e.term_reward << ',' << e.term_state << ',' << e.term_novelty << '\n';
}

}  // namespace aif::efe
