#pragma once

// PPO learner with an independent-Beta policy over per-pump set-points.

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wwps/config.hpp"
#include "wwps/emulator.hpp"

namespace wwps::agent {

using emulator::EnvState;
using synth::PumpFlags;
using synth::PumpVector;

constexpr std::size_t kStateDim = 2 + 2 * kPumps + emulator::kBlockQuantiles * emulator::kForecastHorizons;
using StateVector = std::array<double, kStateDim>;

// Fixed scaling: level / tank height, flows / max intake, set-points / rated power.
// mask_forecast zeroes the forecast block while keeping the input width.
StateVector encode_state(const EnvState& s, const PlantConfig& plant, bool mask_forecast = false);

// Fully connected network, ReLU on hidden layers, linear output. Parameters are
// stored flat: per layer the row-major weight matrix, then the bias.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<std::size_t> sizes);

  // He-uniform hidden layers; the output layer is scaled by output_gain.
  void init(std::mt19937_64& rng, double output_gain);

  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  // Activations of every layer, input first.
  struct Cache {
    std::vector<std::vector<double>> acts;
  };
  void forward(std::span<const double> x, std::span<double> y, Cache* cache = nullptr) const;
  // Accumulates dL/dparams into grad given dL/dy and the cache of the matching forward pass.
  void backward(const Cache& cache, std::span<const double> dy, std::span<double> grad) const;

  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& doc);

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;  // weight offset per layer
  std::vector<double> params_;
};

// Beta helpers. Concentrations are 1 + softplus(raw) so both exceed one.
double softplus(double z);
double sigmoid(double z);
double beta_log_prob(double alpha, double beta, double x);
// d log p / d alpha and d log p / d beta.
std::pair<double, double> beta_log_prob_grad(double alpha, double beta, double x);
double beta_mean(double alpha, double beta);
double beta_entropy(double alpha, double beta);
std::pair<double, double> beta_entropy_grad(double alpha, double beta);
double sample_beta(double alpha, double beta, std::mt19937_64& rng);
constexpr double kBetaEps = 1e-6;

struct BetaParams {
  PumpVector alpha{};
  PumpVector beta{};
};

class Policy {
 public:
  Policy() = default;
  Policy(const PpoConfig& cfg, std::mt19937_64& rng);

  BetaParams forward(const StateVector& s, Mlp::Cache* cache = nullptr) const;
  // Unit-interval action; masked pumps get 0.
  PumpVector sample(const BetaParams& p, const PumpFlags& online, std::mt19937_64& rng) const;
  PumpVector mean_action(const BetaParams& p, const PumpFlags& online) const;
  // Joint log-density over online pumps.
  double log_prob(const BetaParams& p, const PumpVector& x, const PumpFlags& online) const;
  double value(const StateVector& s, Mlp::Cache* cache = nullptr) const;

  Mlp& actor() { return actor_; }
  Mlp& critic() { return critic_; }
  const Mlp& actor() const { return actor_; }
  const Mlp& critic() const { return critic_; }

  nlohmann::json to_json() const;
  static Policy from_json(const nlohmann::json& doc);

 private:
  Mlp actor_;
  Mlp critic_;
};

PumpVector to_kw(const PumpVector& unit, const PumpFlags& online, const PlantConfig& plant);

struct Transition {
  StateVector state{};
  PumpVector action{};  // unit interval
  PumpFlags online{};
  double log_prob = 0.0;
  double reward = 0.0;  // already divided by the reward scale
  double value = 0.0;
  double next_value = 0.0;  // V of the successor state, ignored when done
  bool done = false;        // terminal: no bootstrap
  bool truncated = false;   // window ends here but the successor is bootstrapped
};

// Advantages summed over at most `horizon` TD residuals, stopping at any done or
// truncated step.
std::vector<double> gae_truncated(std::span<const Transition> traj, double gamma, double lambda, std::size_t horizon);

class Adam {
 public:
  explicit Adam(std::size_t n = 0, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grad, double lr);
  nlohmann::json to_json() const;
  static Adam from_json(const nlohmann::json& doc);

 private:
  double beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<double> m_, v_;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  std::size_t skipped = 0;  // minibatches dropped for non-finite gradients
};

// Gradient of the negated clipped surrogate (plus entropy bonus) with respect to
// the actor parameters, averaged over the batch.
std::vector<double> surrogate_gradient(const Policy& policy, std::span<const Transition> batch,
                                       std::span<const double> advantages, double clip, double entropy_coef,
                                       double* loss = nullptr, double* clip_fraction = nullptr);

class Learner {
 public:
  Learner(const PpoConfig& cfg, std::uint64_t seed);

  Policy& policy() { return policy_; }
  const Policy& policy() const { return policy_; }
  const PpoConfig& config() const { return cfg_; }

  // Exponential decay reaching lr_final_fraction after lr_decay_iterations, flat afterwards.
  double learning_rate(std::size_t iteration) const;
  UpdateStats update(std::span<const Transition> batch, std::size_t iteration);

  nlohmann::json to_json() const;
  static Learner from_json(const nlohmann::json& doc, const PpoConfig& cfg);

 private:
  PpoConfig cfg_;
  Policy policy_;
  Adam actor_opt_;
  Adam critic_opt_;
  std::mt19937_64 rng_;
};

std::string rng_state(const std::mt19937_64& rng);
std::mt19937_64 rng_from_state(const std::string& state);

}  // namespace wwps::agent
