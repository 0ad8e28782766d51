#include "wwps/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "wwps/error.hpp"
#include "wwps/kernels.hpp"

namespace wwps::agent {

StateVector encode_state(const EnvState& s, const PlantConfig& plant, bool mask_forecast) {
  StateVector v{};
  std::size_t i = 0;
  v[i++] = s.level_m / plant.tank_max_m;
  v[i++] = s.intake_m3h / plant.intake_max_m3h;
  for (std::size_t p = 0; p < kPumps; ++p) v[i++] = s.online[p] ? 1.0 : 0.0;
  for (std::size_t p = 0; p < kPumps; ++p) v[i++] = s.setpoints_kw[p] / plant.rated_power_kw;
  for (double q : s.forecast) v[i++] = mask_forecast ? 0.0 : q / plant.intake_max_m3h;
  for (double x : v) {
    if (!std::isfinite(x)) throw DomainError("encode_state: non-finite state component");
  }
  return v;
}

// ---------------------------------------------------------------- MLP

Mlp::Mlp(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw ValidationError("Mlp needs at least an input and an output layer");
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(off);
    off += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
  }
  params_.assign(off, 0.0);
}

void Mlp::init(std::mt19937_64& rng, double output_gain) {
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const std::size_t in = sizes_[l], out = sizes_[l + 1];
    double limit = std::sqrt(6.0 / static_cast<double>(in));
    if (l + 2 == sizes_.size()) limit *= output_gain;
    std::uniform_real_distribution<double> u(-limit, limit);
    double* w = params_.data() + offsets_[l];
    for (std::size_t k = 0; k < out * in; ++k) w[k] = u(rng);
    std::fill(w + out * in, w + out * in + out, 0.0);
  }
}

void Mlp::forward(std::span<const double> x, std::span<double> y, Cache* cache) const {
  if (x.size() != input_size() || y.size() != output_size()) throw ValidationError("Mlp::forward: size mismatch");
  const auto& k = kernels::active();
  Cache local;
  Cache& c = cache != nullptr ? *cache : local;
  c.acts.resize(sizes_.size());
  c.acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const std::size_t in = sizes_[l], out = sizes_[l + 1];
    const double* w = params_.data() + offsets_[l];
    auto& a = c.acts[l + 1];
    a.resize(out);
    k.gemv(w, w + out * in, c.acts[l].data(), a.data(), out, in);
    if (l + 2 < sizes_.size()) {
      for (double& v : a) v = v > 0.0 ? v : 0.0;
    }
  }
  std::copy(c.acts.back().begin(), c.acts.back().end(), y.begin());
}

void Mlp::backward(const Cache& cache, std::span<const double> dy, std::span<double> grad) const {
  if (grad.size() != params_.size() || dy.size() != output_size()) throw ValidationError("Mlp::backward: size mismatch");
  const auto& k = kernels::active();
  std::vector<double> delta(dy.begin(), dy.end());
  std::vector<double> prev;
  for (std::size_t l = sizes_.size() - 1; l-- > 0;) {
    const std::size_t in = sizes_[l], out = sizes_[l + 1];
    const double* w = params_.data() + offsets_[l];
    double* gw = grad.data() + offsets_[l];
    k.ger(delta.data(), cache.acts[l].data(), gw, out, in);
    k.axpy(1.0, delta.data(), gw + out * in, out);
    if (l == 0) break;
    prev.assign(in, 0.0);
    k.gemv_t(w, delta.data(), prev.data(), out, in);
    for (std::size_t i = 0; i < in; ++i) {
      if (cache.acts[l][i] <= 0.0) prev[i] = 0.0;
    }
    delta.swap(prev);
  }
}

nlohmann::json Mlp::to_json() const { return {{"sizes", sizes_}, {"params", params_}}; }

Mlp Mlp::from_json(const nlohmann::json& doc) {
  Mlp m(doc.at("sizes").get<std::vector<std::size_t>>());
  auto p = doc.at("params").get<std::vector<double>>();
  if (p.size() != m.params_.size()) throw SchemaMismatchError("Mlp parameter count does not match layer sizes");
  m.params_ = std::move(p);
  return m;
}

// ---------------------------------------------------------------- Beta

double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

namespace {

double clamp_unit(double x) { return std::clamp(x, kBetaEps, 1.0 - kBetaEps); }

double log_beta_fn(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

}  // namespace

double beta_log_prob(double alpha, double beta, double x) {
  x = clamp_unit(x);
  return (alpha - 1.0) * std::log(x) + (beta - 1.0) * std::log1p(-x) - log_beta_fn(alpha, beta);
}

std::pair<double, double> beta_log_prob_grad(double alpha, double beta, double x) {
  using boost::math::digamma;
  x = clamp_unit(x);
  const double s = digamma(alpha + beta);
  return {std::log(x) - digamma(alpha) + s, std::log1p(-x) - digamma(beta) + s};
}

double beta_mean(double alpha, double beta) { return alpha / (alpha + beta); }

double beta_entropy(double alpha, double beta) {
  using boost::math::digamma;
  return log_beta_fn(alpha, beta) - (alpha - 1.0) * digamma(alpha) - (beta - 1.0) * digamma(beta) +
         (alpha + beta - 2.0) * digamma(alpha + beta);
}

std::pair<double, double> beta_entropy_grad(double alpha, double beta) {
  using boost::math::trigamma;
  const double t = (alpha + beta - 2.0) * trigamma(alpha + beta);
  return {t - (alpha - 1.0) * trigamma(alpha), t - (beta - 1.0) * trigamma(beta)};
}

double sample_beta(double alpha, double beta, std::mt19937_64& rng) {
  std::gamma_distribution<double> ga(alpha, 1.0), gb(beta, 1.0);
  const double a = ga(rng);
  const double b = gb(rng);
  return clamp_unit(a / (a + b));
}

// ---------------------------------------------------------------- policy

namespace {

std::vector<std::size_t> layer_sizes(const PpoConfig& cfg, std::size_t out) {
  std::vector<std::size_t> s{kStateDim};
  s.insert(s.end(), cfg.hidden.begin(), cfg.hidden.end());
  s.push_back(out);
  return s;
}

}  // namespace

Policy::Policy(const PpoConfig& cfg, std::mt19937_64& rng)
    : actor_(layer_sizes(cfg, 2 * kPumps)), critic_(layer_sizes(cfg, 1)) {
  actor_.init(rng, 0.01);
  critic_.init(rng, 1.0);
}

BetaParams Policy::forward(const StateVector& s, Mlp::Cache* cache) const {
  std::array<double, 2 * kPumps> z{};
  actor_.forward(s, z, cache);
  BetaParams p;
  for (std::size_t i = 0; i < kPumps; ++i) {
    p.alpha[i] = 1.0 + softplus(z[2 * i]);
    p.beta[i] = 1.0 + softplus(z[2 * i + 1]);
  }
  return p;
}

PumpVector Policy::sample(const BetaParams& p, const PumpFlags& online, std::mt19937_64& rng) const {
  PumpVector a{};
  for (std::size_t i = 0; i < kPumps; ++i) {
    // Draw for every pump so the random stream does not depend on availability.
    const double x = sample_beta(p.alpha[i], p.beta[i], rng);
    a[i] = online[i] ? x : 0.0;
  }
  return a;
}

PumpVector Policy::mean_action(const BetaParams& p, const PumpFlags& online) const {
  PumpVector a{};
  for (std::size_t i = 0; i < kPumps; ++i) a[i] = online[i] ? beta_mean(p.alpha[i], p.beta[i]) : 0.0;
  return a;
}

double Policy::log_prob(const BetaParams& p, const PumpVector& x, const PumpFlags& online) const {
  double s = 0.0;
  for (std::size_t i = 0; i < kPumps; ++i) {
    if (online[i]) s += beta_log_prob(p.alpha[i], p.beta[i], x[i]);
  }
  return s;
}

double Policy::value(const StateVector& s, Mlp::Cache* cache) const {
  double v = 0.0;
  critic_.forward(s, std::span<double>(&v, 1), cache);
  return v;
}

nlohmann::json Policy::to_json() const { return {{"actor", actor_.to_json()}, {"critic", critic_.to_json()}}; }

Policy Policy::from_json(const nlohmann::json& doc) {
  Policy p;
  p.actor_ = Mlp::from_json(doc.at("actor"));
  p.critic_ = Mlp::from_json(doc.at("critic"));
  if (p.actor_.input_size() != kStateDim || p.actor_.output_size() != 2 * kPumps ||
      p.critic_.input_size() != kStateDim || p.critic_.output_size() != 1) {
    throw SchemaMismatchError("policy network shapes do not match the state layout");
  }
  return p;
}

PumpVector to_kw(const PumpVector& unit, const PumpFlags& online, const PlantConfig& plant) {
  PumpVector kw{};
  for (std::size_t i = 0; i < kPumps; ++i) kw[i] = online[i] ? unit[i] * plant.rated_power_kw : 0.0;
  return kw;
}

// ---------------------------------------------------------------- GAE

std::vector<double> gae_truncated(std::span<const Transition> traj, double gamma, double lambda, std::size_t horizon) {
  const std::size_t n = traj.size();
  std::vector<double> delta(n), adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const Transition& s = traj[t];
    delta[t] = s.reward + (s.done ? 0.0 : gamma * s.next_value) - s.value;
  }
  if (horizon == 0) return adv;
  const double c = gamma * lambda;
  const double c_h = std::pow(c, static_cast<double>(horizon));
  // A_t = delta_t + c A_{t+1} - c^T delta_{t+T}, restarted at every window boundary.
  std::size_t seg_end = n;  // one past the last index of the current segment
  for (std::size_t t = n; t-- > 0;) {
    const bool boundary = traj[t].done || traj[t].truncated || t + 1 == n;
    if (boundary) {
      seg_end = t + 1;
      adv[t] = delta[t];
      continue;
    }
    double a = delta[t] + c * adv[t + 1];
    if (t + horizon < seg_end) a -= c_h * delta[t + horizon];
    adv[t] = a;
  }
  return adv;
}

// ---------------------------------------------------------------- Adam

Adam::Adam(std::size_t n, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

nlohmann::json Adam::to_json() const {
  return {{"beta1", beta1_}, {"beta2", beta2_}, {"eps", eps_}, {"t", t_}, {"m", m_}, {"v", v_}};
}

Adam Adam::from_json(const nlohmann::json& doc) {
  Adam a(0, doc.at("beta1").get<double>(), doc.at("beta2").get<double>(), doc.at("eps").get<double>());
  a.t_ = doc.at("t").get<std::uint64_t>();
  a.m_ = doc.at("m").get<std::vector<double>>();
  a.v_ = doc.at("v").get<std::vector<double>>();
  if (a.m_.size() != a.v_.size()) throw SchemaMismatchError("optimizer moment sizes differ");
  return a;
}

// ---------------------------------------------------------------- PPO

std::vector<double> surrogate_gradient(const Policy& policy, std::span<const Transition> batch,
                                       std::span<const double> advantages, double clip, double entropy_coef,
                                       double* loss, double* clip_fraction) {
  const Mlp& actor = policy.actor();
  std::vector<double> grad(actor.params().size(), 0.0);
  if (batch.empty()) return grad;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  Mlp::Cache cache;
  std::array<double, 2 * kPumps> dz{};
  double total = 0.0;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& tr = batch[i];
    const BetaParams p = policy.forward(tr.state, &cache);
    const double lp = policy.log_prob(p, tr.action, tr.online);
    const double ratio = std::exp(lp - tr.log_prob);
    const double adv = advantages[i];
    const double unclipped = ratio * adv;
    const double bounded = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * adv;
    total += -std::min(unclipped, bounded);
    const bool active = unclipped <= bounded;
    if (!active) ++clipped;
    const double g_lp = active ? -unclipped * inv_n : 0.0;
    const auto& z = cache.acts.back();
    dz.fill(0.0);
    for (std::size_t k = 0; k < kPumps; ++k) {
      if (!tr.online[k]) continue;
      const auto [da, db] = beta_log_prob_grad(p.alpha[k], p.beta[k], tr.action[k]);
      double ga = g_lp * da, gb = g_lp * db;
      if (entropy_coef != 0.0) {
        const auto [ea, eb] = beta_entropy_grad(p.alpha[k], p.beta[k]);
        ga -= entropy_coef * ea * inv_n;
        gb -= entropy_coef * eb * inv_n;
        total -= entropy_coef * beta_entropy(p.alpha[k], p.beta[k]);
      }
      dz[2 * k] = ga * sigmoid(z[2 * k]);
      dz[2 * k + 1] = gb * sigmoid(z[2 * k + 1]);
    }
    actor.backward(cache, dz, grad);
  }
  if (loss != nullptr) *loss = total * inv_n;
  if (clip_fraction != nullptr) *clip_fraction = static_cast<double>(clipped) * inv_n;
  return grad;
}

namespace {

// Returns false when the gradient is not finite.
bool clip_norm(std::vector<double>& g, double max_norm) {
  double sq = 0.0;
  for (double v : g) sq += v * v;
  if (!std::isfinite(sq)) return false;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (double& v : g) v *= s;
  }
  return true;
}

}  // namespace

Learner::Learner(const PpoConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
  policy_ = Policy(cfg_, rng_);
  actor_opt_ = Adam(policy_.actor().params().size());
  critic_opt_ = Adam(policy_.critic().params().size());
}

double Learner::learning_rate(std::size_t iteration) const {
  const double frac =
      std::min(1.0, static_cast<double>(iteration) / static_cast<double>(cfg_.lr_decay_iterations));
  return cfg_.learning_rate * std::pow(cfg_.lr_final_fraction, frac);
}

UpdateStats Learner::update(std::span<const Transition> batch, std::size_t iteration) {
  UpdateStats stats;
  if (batch.empty()) return stats;
  const auto adv_raw = gae_truncated(batch, cfg_.gamma, cfg_.lambda, cfg_.gae_horizon);
  std::vector<double> returns(batch.size()), adv = adv_raw;
  for (std::size_t i = 0; i < batch.size(); ++i) returns[i] = adv_raw[i] + batch[i].value;
  if (cfg_.normalize_advantages) {
    const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(adv.size());
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / static_cast<double>(adv.size()));
    for (double& a : adv) a = (a - mean) / (sd + 1e-8);
  }
  const double lr = learning_rate(iteration);
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Transition> mb;
  std::vector<double> mb_adv, mb_ret;
  std::size_t n_mb = 0;
  Mlp::Cache cache;
  for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng_);
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
      mb.clear();
      mb_adv.clear();
      mb_ret.clear();
      for (std::size_t j = start; j < end; ++j) {
        mb.push_back(batch[order[j]]);
        mb_adv.push_back(adv[order[j]]);
        mb_ret.push_back(returns[order[j]]);
      }
      double ploss = 0.0, cfrac = 0.0;
      auto g_actor = surrogate_gradient(policy_, mb, mb_adv, cfg_.clip, cfg_.entropy_coef, &ploss, &cfrac);
      std::vector<double> g_critic(policy_.critic().params().size(), 0.0);
      double vloss = 0.0, kl = 0.0;
      const double inv = 1.0 / static_cast<double>(mb.size());
      for (std::size_t j = 0; j < mb.size(); ++j) {
        const double v = policy_.value(mb[j].state, &cache);
        const double err = v - mb_ret[j];
        vloss += cfg_.value_coef * err * err * inv;
        const double dv = 2.0 * cfg_.value_coef * err * inv;
        policy_.critic().backward(cache, std::span<const double>(&dv, 1), g_critic);
        const BetaParams p = policy_.forward(mb[j].state);
        kl += (mb[j].log_prob - policy_.log_prob(p, mb[j].action, mb[j].online)) * inv;
      }
      ++n_mb;
      if (!clip_norm(g_actor, cfg_.max_grad_norm) || !clip_norm(g_critic, cfg_.max_grad_norm) ||
          !std::isfinite(ploss) || !std::isfinite(vloss)) {
        ++stats.skipped;
        continue;
      }
      actor_opt_.step(policy_.actor().params(), g_actor, lr);
      critic_opt_.step(policy_.critic().params(), g_critic, lr);
      stats.policy_loss += ploss;
      stats.value_loss += vloss;
      stats.clip_fraction += cfrac;
      stats.approx_kl += kl;
    }
  }
  const std::size_t applied = n_mb - stats.skipped;
  if (applied > 0) {
    const double d = static_cast<double>(applied);
    stats.policy_loss /= d;
    stats.value_loss /= d;
    stats.clip_fraction /= d;
    stats.approx_kl /= d;
  }
  return stats;
}

nlohmann::json Learner::to_json() const {
  return {{"policy", policy_.to_json()},
          {"actor_opt", actor_opt_.to_json()},
          {"critic_opt", critic_opt_.to_json()},
          {"rng", rng_state(rng_)}};
}

Learner Learner::from_json(const nlohmann::json& doc, const PpoConfig& cfg) {
  Learner l(cfg, 0);
  l.policy_ = Policy::from_json(doc.at("policy"));
  l.actor_opt_ = Adam::from_json(doc.at("actor_opt"));
  l.critic_opt_ = Adam::from_json(doc.at("critic_opt"));
  l.rng_ = rng_from_state(doc.at("rng").get<std::string>());
  return l;
}

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 rng_from_state(const std::string& state) {
  std::mt19937_64 rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw SchemaMismatchError("invalid random generator state");
  return rng;
}

}  // namespace wwps::agent
