#pragma once

// The agent's amortized networks: encoder Q(s|o), multi-step transition
// P(s_{t+k}|s_t, a_t..a_{t+k-1}), decoder P(o|s) and the Q-value habit
// network, plus their training objectives.

#include "aif/config_file.hpp"
#include "aif/nn/adam.hpp"
#include "aif/nn/archive.hpp"
#include "aif/nn/dense.hpp"
#include "aif/nn/prob.hpp"
#include "aif/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace aif::model {

using nn::Index;
using nn::Matrix;
using nn::Vector;

struct ModelConfig {
  int n_binary = 41;  // one-hot observation dimensions
  int n_reward = 3;   // production, energy, combined
  int n_machines = 6;
  int latent_dim = 8;
  std::vector<int> hidden = {64, 64};
  double lambda_s = 1.5;
  double dropout = 0.1;      // transition and decoder hidden layers
  int transition_depth = 1;  // events predicted ahead by one transition
  double variance_floor = 1e-6;
  double habit_temperature = 1.0;

  int n_actions() const { return n_machines + 1; }
  int obs_width() const { return n_binary + n_reward; }
  int combined_index() const { return n_binary + n_reward - 1; }

  void validate() const {
    if (n_binary < 1 || n_reward != 3) throw std::invalid_argument("observation layout must have 3 reward terms");
    if (n_machines < 1) throw std::invalid_argument("n_machines must be >= 1");
    if (latent_dim < 1) throw std::invalid_argument("latent_dim must be >= 1");
    if (hidden.empty()) throw std::invalid_argument("need at least one hidden layer");
    for (int h : hidden)
      if (h < 1) throw std::invalid_argument("hidden widths must be >= 1");
    if (!(lambda_s > 0.0)) throw std::invalid_argument("lambda_s must be > 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
    if (transition_depth < 1) throw std::invalid_argument("transition_depth must be >= 1");
    if (!(habit_temperature > 0.0)) throw std::invalid_argument("habit_temperature must be > 0");
  }

  void read(const KeyValues& kv, const std::string& prefix = "agent.") {
    kv.read(prefix + "latent_dim", latent_dim);
    std::string widths;
    kv.read(prefix + "hidden", widths);
    if (!widths.empty()) {
      hidden.clear();
      std::size_t pos = 0;
      while (pos <= widths.size()) {
        const auto comma = widths.find(',', pos);
        const auto token = widths.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
          hidden.push_back(std::stoi(token));
        } catch (const std::exception&) {
          throw ConfigError("bad hidden width list: " + widths);
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    }
    kv.read(prefix + "lambda_s", lambda_s);
    kv.read(prefix + "dropout", dropout);
    kv.read(prefix + "transition_depth", transition_depth);
    kv.read(prefix + "habit_temperature", habit_temperature);
  }

  nlohmann::json to_json() const {
    return {{"n_binary", n_binary},       {"n_reward", n_reward},     {"n_machines", n_machines},
            {"latent_dim", latent_dim},   {"hidden", hidden},         {"lambda_s", lambda_s},
            {"dropout", dropout},         {"transition_depth", transition_depth},
            {"variance_floor", variance_floor}, {"habit_temperature", habit_temperature}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.n_binary = j.at("n_binary");
    c.n_reward = j.at("n_reward");
    c.n_machines = j.at("n_machines");
    c.latent_dim = j.at("latent_dim");
    c.hidden = j.at("hidden").get<std::vector<int>>();
    c.lambda_s = j.at("lambda_s");
    c.dropout = j.at("dropout");
    c.transition_depth = j.at("transition_depth");
    c.variance_floor = j.at("variance_floor");
    c.habit_temperature = j.at("habit_temperature");
    return c;
  }
};

struct GaussianLatent {
  Vector mean;
  Vector variance;
  double precision = 1.0;
};

// One Gaussian per row.
struct GaussianBatch {
  Matrix mean;
  Matrix variance;

  GaussianLatent row(Index r) const { return {mean.row(r).transpose(), variance.row(r).transpose(), 1.0}; }
};

struct ObservationDistribution {
  Matrix probs;    // Bernoulli probability per one-hot dimension
  Matrix rewards;  // predicted means of the reward terms, clamped to [0, 1.05]
};

inline constexpr double kRewardCeiling = 1.05;

struct AgentParams {
  ModelConfig config;
  nn::DenseNet encoder;
  nn::DenseNet transition;
  nn::DenseNet decoder;
  nn::DenseNet habit;

  static AgentParams init(const ModelConfig& c, Rng& rng) {
    c.validate();
    using nn::Activation;
    using nn::LayerSpec;
    auto hidden_specs = [&](double dropout) {
      std::vector<LayerSpec> specs;
      for (int h : c.hidden) specs.push_back({h, {{h, Activation::relu()}}, dropout});
      return specs;
    };
    const std::vector<nn::Segment> gaussian_head = {
        {c.latent_dim, Activation::tanh()},
        {c.latent_dim, Activation::scaled_sigmoid(c.lambda_s, c.variance_floor)}};

    AgentParams p;
    p.config = c;
    auto enc = hidden_specs(0.0);
    enc.push_back({2 * c.latent_dim, gaussian_head});
    p.encoder = nn::DenseNet(c.obs_width(), enc, rng);

    auto tr = hidden_specs(c.dropout);
    tr.push_back({2 * c.latent_dim, gaussian_head});
    p.transition = nn::DenseNet(c.latent_dim + c.transition_depth, tr, rng);

    auto dec = hidden_specs(c.dropout);
    dec.push_back({c.obs_width()});
    p.decoder = nn::DenseNet(c.latent_dim, dec, rng);
    // Start reward predictions inside the clamp range.
    p.decoder.layers().back().bias.tail(c.n_reward).setConstant(0.5);

    auto hab = hidden_specs(0.0);
    hab.push_back({c.n_actions()});
    p.habit = nn::DenseNet(c.obs_width(), hab, rng);
    return p;
  }

  nn::TensorMap tensors() const {
    nn::TensorMap t;
    nn::export_net(encoder, "encoder", t);
    nn::export_net(transition, "transition", t);
    nn::export_net(decoder, "decoder", t);
    nn::export_net(habit, "habit", t);
    return t;
  }

  void load_tensors(const nn::TensorMap& t) {
    nn::import_net(encoder, "encoder", t);
    nn::import_net(transition, "transition", t);
    nn::import_net(decoder, "decoder", t);
    nn::import_net(habit, "habit", t);
  }
};

inline bool same_parameters(const nn::DenseNet& a, const nn::DenseNet& b) {
  if (a.layers().size() != b.layers().size()) return false;
  for (std::size_t i = 0; i < a.layers().size(); ++i)
    if (a.layers()[i].weight != b.layers()[i].weight || a.layers()[i].bias != b.layers()[i].bias) return false;
  return true;
}

inline bool same_parameters(const AgentParams& a, const AgentParams& b) {
  return same_parameters(a.encoder, b.encoder) && same_parameters(a.transition, b.transition) &&
         same_parameters(a.decoder, b.decoder) && same_parameters(a.habit, b.habit);
}

// ---------------------------------------------------------------------------
// Checkpoints: <stem>.tensors (tensor archive) + <stem>.json (manifest).

inline void save_checkpoint(const AgentParams& p, const std::string& stem, const nlohmann::json& extra = {}) {
  nn::save_archive(stem + ".tensors", p.tensors());
  nlohmann::json manifest = {{"format", "aif-checkpoint"}, {"version", 1}, {"model", p.config.to_json()}};
  nlohmann::json shapes = nlohmann::json::object();
  for (const auto& [name, m] : p.tensors()) shapes[name] = {m.rows(), m.cols()};
  manifest["tensors"] = shapes;
  if (!extra.is_null()) manifest["extra"] = extra;
  std::ofstream os(stem + ".json");
  if (!os) throw nn::ArchiveError("cannot write " + stem + ".json");
  os << manifest.dump(2) << '\n';
}

inline AgentParams load_checkpoint(const std::string& stem) {
  std::ifstream is(stem + ".json");
  if (!is) throw nn::ArchiveError("cannot read " + stem + ".json");
  const auto manifest = nlohmann::json::parse(is);
  if (manifest.value("format", "") != "aif-checkpoint") throw nn::ArchiveError("not a checkpoint manifest");
  Rng rng = make_rng(0);
  auto p = AgentParams::init(ModelConfig::from_json(manifest.at("model")), rng);
  p.load_tensors(nn::load_archive(stem + ".tensors"));
  return p;
}

// ---------------------------------------------------------------------------
// Forward maps.

inline GaussianBatch split_gaussian(const Matrix& out, int latent_dim) {
  return {out.leftCols(latent_dim), out.rightCols(latent_dim)};
}

inline GaussianBatch encode(const AgentParams& p, const Matrix& obs) {
  if (obs.cols() != p.config.obs_width()) throw nn::ShapeError("observation width mismatch");
  return split_gaussian(nn::forward(p.encoder, obs), p.config.latent_dim);
}

inline GaussianLatent encode(const AgentParams& p, const Vector& o) {
  return encode(p, Matrix(o.transpose())).row(0);
}

// Integer action encoding: each action divided by n_machines.
inline Vector encode_actions(std::span<const int> actions, int n_machines) {
  Vector v(static_cast<Index>(actions.size()));
  for (std::size_t i = 0; i < actions.size(); ++i) v(static_cast<Index>(i)) = actions[i] / static_cast<double>(n_machines);
  return v;
}

inline Vector repeated_action(int action, int depth, int n_machines) {
  return Vector::Constant(depth, action / static_cast<double>(n_machines));
}

inline Matrix transition_input(const Matrix& latents, const Matrix& actions) {
  Matrix in(latents.rows(), latents.cols() + actions.cols());
  in << latents, actions;
  return in;
}

// Prior over the latent `transition_depth` events ahead. The variance is
// divided by the precision omega.
inline GaussianBatch transition(const AgentParams& p, const Matrix& latents, const Matrix& actions,
                                double omega = 1.0, const nn::ThetaSample* theta = nullptr) {
  if (actions.cols() != p.config.transition_depth)
    throw std::invalid_argument("action sequence length must equal the transition depth");
  if (latents.cols() != p.config.latent_dim) throw nn::ShapeError("latent width mismatch");
  if (!(omega > 0.0)) throw std::invalid_argument("precision must be positive");
  auto g = split_gaussian(nn::forward(p.transition, transition_input(latents, actions), theta), p.config.latent_dim);
  g.variance /= omega;
  return g;
}

inline GaussianLatent transition(const AgentParams& p, const Vector& latent, const Vector& actions,
                                 double omega = 1.0, const nn::ThetaSample* theta = nullptr) {
  auto g = transition(p, Matrix(latent.transpose()), Matrix(actions.transpose()), omega, theta).row(0);
  g.precision = omega;
  return g;
}

inline Matrix sigmoid(const Matrix& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

inline ObservationDistribution decode(const AgentParams& p, const Matrix& latents,
                                      const nn::ThetaSample* theta = nullptr) {
  if (latents.cols() != p.config.latent_dim) throw nn::ShapeError("latent width mismatch");
  const Matrix out = nn::forward(p.decoder, latents, theta);
  return {sigmoid(out.leftCols(p.config.n_binary)),
          out.rightCols(p.config.n_reward).cwiseMax(0.0).cwiseMin(kRewardCeiling)};
}

inline Matrix habit_q(const AgentParams& p, const Matrix& obs) { return nn::forward(p.habit, obs); }

inline Vector habit_distribution(const AgentParams& p, const Vector& o) {
  const Vector q = nn::forward_one(p.habit, o);
  return nn::softmax(q / p.config.habit_temperature);
}

inline Matrix sample_latents(const GaussianBatch& g, Rng& rng) {
  return g.mean + (g.variance.array().sqrt() * nn::standard_normal_matrix(g.mean.rows(), g.mean.cols(), rng).array()).matrix();
}

// ---------------------------------------------------------------------------
// Variational free energy.

struct WindowBatch {
  Matrix obs_now;   // o_t per row
  Matrix actions;   // encoded a_t .. a_{t+s-1}
  Matrix obs_next;  // o_{t+s}
  Index size() const { return obs_now.rows(); }
};

// Random quantities of one VFE evaluation; fixing them makes the loss a
// deterministic function of the parameters.
struct VfeNoise {
  Matrix eps_now;
  Matrix eps_next;
  std::uint64_t dropout_seed = 0;

  static VfeNoise draw(Index batch, int latent_dim, Rng& rng) {
    VfeNoise n;
    n.eps_now = nn::standard_normal_matrix(batch, latent_dim, rng);
    n.eps_next = nn::standard_normal_matrix(batch, latent_dim, rng);
    n.dropout_seed = rng();
    return n;
  }
};

struct VfeReport {
  double total = 0.0;
  double recon = 0.0;  // binary cross-entropy + squared error, per sample
  double kl = 0.0;     // per sample
};

struct VfeGradients {
  nn::Gradients encoder;
  nn::Gradients transition;
  nn::Gradients decoder;
};

// Numerically stable binary cross-entropy from logits.
inline double bce_with_logits(double logit, double target) {
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

// Reconstruction of o_{t+s} from a posterior sample plus
// KL[Q(s_{t+s}|o_{t+s}) || P(s_{t+s}|s_t sample, actions) with variance / omega],
// averaged over the batch. Gradients are produced when `grads` is non-null.
inline VfeReport vfe_loss(const AgentParams& p, const WindowBatch& batch, double omega, const VfeNoise& noise,
                          VfeGradients* grads = nullptr) {
  const auto& c = p.config;
  const int d = c.latent_dim;
  const Index n = batch.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  if (batch.actions.cols() != c.transition_depth)
    throw std::invalid_argument("window length must equal the transition depth");
  Rng dropout_rng(noise.dropout_seed);

  // s_t ~ Q(s|o_t)
  auto enc_now = nn::forward_tape(p.encoder, batch.obs_now);
  const Matrix mu_t = enc_now.output.leftCols(d), var_t = enc_now.output.rightCols(d);
  const Matrix sd_t = var_t.array().sqrt();
  const Matrix s_t = mu_t + (sd_t.array() * noise.eps_now.array()).matrix();

  // prior over s_{t+s}
  auto trans = nn::forward_tape(p.transition, transition_input(s_t, batch.actions), nn::DropoutMode::PerRow,
                                &dropout_rng);
  const Matrix mu_p = trans.output.leftCols(d);
  const Matrix var_p = trans.output.rightCols(d) / omega;

  // posterior at t+s and its reconstruction
  auto enc_next = nn::forward_tape(p.encoder, batch.obs_next);
  const Matrix mu_q = enc_next.output.leftCols(d), var_q = enc_next.output.rightCols(d);
  const Matrix sd_q = var_q.array().sqrt();
  const Matrix z = mu_q + (sd_q.array() * noise.eps_next.array()).matrix();
  auto dec = nn::forward_tape(p.decoder, z, nn::DropoutMode::PerRow, &dropout_rng);

  VfeReport report;
  Matrix d_dec(n, c.obs_width());
  for (Index r = 0; r < n; ++r) {
    for (Index k = 0; k < c.n_binary; ++k) {
      const double logit = dec.output(r, k);
      const double y = batch.obs_next(r, k);
      report.recon += bce_with_logits(logit, y);
      d_dec(r, k) = (1.0 / (1.0 + std::exp(-logit)) - y) * inv_n;
    }
    for (Index k = c.n_binary; k < c.obs_width(); ++k) {
      const double e = dec.output(r, k) - batch.obs_next(r, k);
      report.recon += e * e;
      d_dec(r, k) = 2.0 * e * inv_n;
    }
  }
  const Matrix diff = mu_q - mu_p;
  report.kl = 0.5 * ((var_p.array() / var_q.array()).log() + (var_q.array() + diff.array().square()) / var_p.array() - 1.0).sum();
  report.recon *= inv_n;
  report.kl *= inv_n;
  report.total = report.recon + report.kl;
  if (!grads) return report;

  // KL partials
  const Matrix dkl_mu_q = diff.array() / var_p.array() * inv_n;
  const Matrix dkl_var_q = 0.5 * (1.0 / var_p.array() - 1.0 / var_q.array()) * inv_n;
  const Matrix dkl_mu_p = -dkl_mu_q;
  const Matrix dkl_var_p_scaled =
      0.5 * (1.0 / var_p.array() - (var_q.array() + diff.array().square()) / var_p.array().square()) * inv_n;

  auto dec_back = nn::backward(p.decoder, dec.tape, d_dec);
  const Matrix& dz = dec_back.input_grad;
  Matrix d_enc_next(n, 2 * d);
  d_enc_next.leftCols(d) = dz + dkl_mu_q;
  d_enc_next.rightCols(d) = (dz.array() * noise.eps_next.array() / (2.0 * sd_q.array())).matrix() + dkl_var_q;
  auto enc_next_back = nn::backward(p.encoder, enc_next.tape, d_enc_next);

  Matrix d_trans(n, 2 * d);
  d_trans.leftCols(d) = dkl_mu_p;
  d_trans.rightCols(d) = dkl_var_p_scaled / omega;
  auto trans_back = nn::backward(p.transition, trans.tape, d_trans);
  const Matrix ds_t = trans_back.input_grad.leftCols(d);

  Matrix d_enc_now(n, 2 * d);
  d_enc_now.leftCols(d) = ds_t;
  d_enc_now.rightCols(d) = ds_t.array() * noise.eps_now.array() / (2.0 * sd_t.array());
  auto enc_now_back = nn::backward(p.encoder, enc_now.tape, d_enc_now);

  grads->decoder = std::move(dec_back.grads);
  grads->transition = std::move(trans_back.grads);
  grads->encoder = std::move(enc_next_back.grads);
  grads->encoder += enc_now_back.grads;
  return report;
}

// ---------------------------------------------------------------------------
// Habit network trained by deep Q-learning.

struct QBatch {
  Matrix obs;
  std::vector<int> actions;
  Vector rewards;
  Matrix obs_next;
  Index size() const { return obs.rows(); }
};

struct QReport {
  double loss = 0.0;
  nn::Gradients grads;
};

// Mean squared TD error against r + discount * max_a' Q_target(o', a').
inline QReport habit_q_loss(const nn::DenseNet& habit, const nn::DenseNet& target, const QBatch& batch,
                            double discount, bool with_grads = true) {
  const Index n = batch.size();
  const Matrix q_next = nn::forward(target, batch.obs_next);
  auto fr = nn::forward_tape(habit, batch.obs);
  Matrix d = Matrix::Zero(n, fr.output.cols());
  QReport rep;
  for (Index r = 0; r < n; ++r) {
    const int a = batch.actions[static_cast<std::size_t>(r)];
    const double y = batch.rewards(r) + discount * q_next.row(r).maxCoeff();
    const double e = fr.output(r, a) - y;
    rep.loss += e * e / static_cast<double>(n);
    d(r, a) = 2.0 * e / static_cast<double>(n);
  }
  if (with_grads) rep.grads = nn::backward(habit, fr.tape, d).grads;
  return rep;
}

// ---------------------------------------------------------------------------
// Optimizer state for all four networks plus the habit target network.

struct TrainingState {
  nn::AdamState encoder, transition, decoder, habit;
  nn::DenseNet habit_target;
  int habit_updates = 0;

  static TrainingState for_params(const AgentParams& p) {
    return {nn::AdamState::for_net(p.encoder), nn::AdamState::for_net(p.transition),
            nn::AdamState::for_net(p.decoder), nn::AdamState::for_net(p.habit), p.habit, 0};
  }
};

inline VfeReport vfe_step(AgentParams& p, TrainingState& st, const WindowBatch& batch, double omega,
                          const nn::AdamConfig& cfg, Rng& rng) {
  const auto noise = VfeNoise::draw(batch.size(), p.config.latent_dim, rng);
  VfeGradients g;
  const auto rep = vfe_loss(p, batch, omega, noise, &g);
  if (!std::isfinite(rep.total)) throw std::runtime_error("non-finite free energy");
  nn::adam_step(p.encoder, g.encoder, st.encoder, cfg);
  nn::adam_step(p.transition, g.transition, st.transition, cfg);
  nn::adam_step(p.decoder, g.decoder, st.decoder, cfg);
  return rep;
}

// One Q-learning update; the target network is refreshed every
// `target_refresh` updates.
inline double habit_step(AgentParams& p, TrainingState& st, const QBatch& batch, double discount,
                         int target_refresh, const nn::AdamConfig& cfg) {
  auto rep = habit_q_loss(p.habit, st.habit_target, batch, discount);
  nn::adam_step(p.habit, rep.grads, st.habit, cfg);
  if (++st.habit_updates % std::max(target_refresh, 1) == 0) st.habit_target = p.habit;
  return rep.loss;
}

}  // namespace aif::model
