#include <doctest.h>

#include <cmath>
#include <random>

#include "wwps/agent.hpp"
#include "wwps/error.hpp"

using namespace wwps;
using namespace wwps::agent;

namespace {

// Direct window sum of discounted TD residuals, the definition the recursion must match.
std::vector<double> gae_oracle(const std::vector<Transition>& tr, double gamma, double lambda, std::size_t h) {
  const std::size_t n = tr.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double a = 0.0, w = 1.0;
    for (std::size_t l = 0; l < h && t + l < n; ++l) {
      const auto& s = tr[t + l];
      a += w * (s.reward + (s.done ? 0.0 : gamma * s.next_value) - s.value);
      if (s.done || s.truncated) break;
      w *= gamma * lambda;
    }
    out[t] = a;
  }
  return out;
}

std::vector<Transition> random_traj(std::size_t n, std::uint64_t seed, double boundary_p) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1), p(0, 1);
  std::vector<Transition> tr(n);
  for (std::size_t i = 0; i < n; ++i) {
    tr[i].reward = u(rng);
    tr[i].value = u(rng);
  }
  for (std::size_t i = 0; i < n; ++i) {
    tr[i].done = p(rng) < boundary_p;
    tr[i].truncated = !tr[i].done && p(rng) < boundary_p;
    tr[i].next_value = (i + 1 < n && !tr[i].done && !tr[i].truncated) ? tr[i + 1].value : u(rng);
  }
  return tr;
}

StateVector random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  StateVector s{};
  for (auto& v : s) v = u(rng);
  return s;
}

PpoConfig small_cfg() {
  PpoConfig c;
  c.hidden = {8, 8};
  return c;
}

}  // namespace

TEST_CASE("truncated gae matches the window sum") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    for (std::size_t h : {1u, 3u, 20u, 50u}) {
      const auto tr = random_traj(120, seed, seed % 2 ? 0.05 : 0.0);
      const auto got = gae_truncated(tr, 0.99, 0.95, h);
      const auto want = gae_oracle(tr, 0.99, 0.95, h);
      for (std::size_t i = 0; i < tr.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-10));
    }
  }
}

TEST_CASE("gae hand values") {
  std::vector<Transition> tr(3);
  for (auto& t : tr) t.reward = 1.0;
  tr[2].done = true;
  // all values zero, gamma = lambda = 1: returns-to-go within the window
  auto a = gae_truncated(tr, 1.0, 1.0, 20);
  CHECK(a == std::vector<double>{3.0, 2.0, 1.0});
  a = gae_truncated(tr, 1.0, 1.0, 2);
  CHECK(a == std::vector<double>{2.0, 2.0, 1.0});
  // single transition: one TD residual
  std::vector<Transition> one(1);
  one[0].reward = 0.5;
  one[0].value = 0.2;
  one[0].next_value = 1.0;
  one[0].truncated = true;
  CHECK(gae_truncated(one, 0.9, 0.95, 20)[0] == doctest::Approx(0.5 + 0.9 - 0.2));
  one[0].done = true;
  CHECK(gae_truncated(one, 0.9, 0.95, 20)[0] == doctest::Approx(0.3));
}

TEST_CASE("beta density and gradients") {
  // Beta(2,3) density is 12 x (1-x)^2
  CHECK(beta_log_prob(2, 3, 0.3) == doctest::Approx(std::log(12 * 0.3 * 0.49)));
  CHECK(beta_mean(2, 3) == doctest::Approx(0.4));
  const double e = 1e-6;
  for (auto [a, b, x] : {std::tuple{1.5, 2.5, 0.2}, std::tuple{4.0, 1.2, 0.9}, std::tuple{1.01, 1.01, 0.5}}) {
    const auto [ga, gb] = beta_log_prob_grad(a, b, x);
    CHECK(ga == doctest::Approx((beta_log_prob(a + e, b, x) - beta_log_prob(a - e, b, x)) / (2 * e)).epsilon(1e-6));
    CHECK(gb == doctest::Approx((beta_log_prob(a, b + e, x) - beta_log_prob(a, b - e, x)) / (2 * e)).epsilon(1e-6));
    const auto [ea, eb] = beta_entropy_grad(a, b);
    CHECK(ea == doctest::Approx((beta_entropy(a + e, b) - beta_entropy(a - e, b)) / (2 * e)).epsilon(1e-6));
    CHECK(eb == doctest::Approx((beta_entropy(a, b + e) - beta_entropy(a, b - e)) / (2 * e)).epsilon(1e-6));
  }
}

TEST_CASE("beta entropy against quadrature") {
  for (auto [a, b] : {std::pair{2.0, 3.0}, std::pair{1.3, 5.0}}) {
    const int n = 200000;
    double h = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = (i + 0.5) / n;
      const double lp = beta_log_prob(a, b, x);
      h -= std::exp(lp) * lp / n;
    }
    CHECK(beta_entropy(a, b) == doctest::Approx(h).epsilon(1e-5));
  }
}

TEST_CASE("beta sampling mean") {
  std::mt19937_64 rng(9);
  for (auto [a, b] : {std::pair{2.0, 3.0}, std::pair{1.1, 1.1}, std::pair{8.0, 1.5}}) {
    double s = 0.0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) {
      const double x = sample_beta(a, b, rng);
      REQUIRE(x > 0.0);
      REQUIRE(x < 1.0);
      s += x;
    }
    CHECK(s / n == doctest::Approx(beta_mean(a, b)).epsilon(0.01));
  }
}

TEST_CASE("mlp backward matches finite differences") {
  Mlp net({5, 4, 3, 2});
  std::mt19937_64 rng(3);
  net.init(rng, 1.0);
  const std::vector<double> x = {0.3, -0.2, 0.9, 0.1, -0.7};
  const std::vector<double> dy = {0.7, -1.3};
  auto loss = [&](const Mlp& m) {
    std::vector<double> y(2);
    m.forward(x, y);
    return dy[0] * y[0] + dy[1] * y[1];
  };
  Mlp::Cache cache;
  std::vector<double> y(2);
  net.forward(x, y, &cache);
  std::vector<double> g(net.params().size(), 0.0);
  net.backward(cache, dy, g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    Mlp p = net;
    p.params()[i] += 1e-6;
    Mlp m = net;
    m.params()[i] -= 1e-6;
    CHECK(g[i] == doctest::Approx((loss(p) - loss(m)) / 2e-6).epsilon(1e-5).scale(1e-3));
  }
  const auto back = Mlp::from_json(net.to_json());
  CHECK(loss(back) == loss(net));
}

TEST_CASE("surrogate gradient") {
  const PpoConfig cfg = small_cfg();
  std::mt19937_64 rng(5);
  Policy pol(cfg, rng);
  // larger output weights so the gradient is not vanishingly small
  for (auto& v : pol.actor().params()) v *= 5.0;
  std::vector<Transition> batch(6);
  std::vector<double> adv = {1.0, -0.5, 2.0, 0.3, -1.2, 0.8};
  for (auto& tr : batch) {
    tr.state = random_state(rng);
    tr.online = {true, true, true, false, true};
    const auto p = pol.forward(tr.state);
    tr.action = pol.sample(p, tr.online, rng);
    tr.log_prob = pol.log_prob(p, tr.action, tr.online) + 0.05;  // ratio near but not at 1
  }
  const std::vector<double> zero(6, 0.0);

  SUBCASE("zero advantage gives zero gradient") {
    const auto g = surrogate_gradient(pol, batch, zero, 0.2, 0.0);
    for (double v : g) CHECK(v == 0.0);
  }
  SUBCASE("matches finite differences of the loss") {
    for (double ent : {0.0, 0.01}) {
      double l0 = 0.0;
      const auto g = surrogate_gradient(pol, batch, adv, 0.2, ent, &l0);
      for (std::size_t i = 0; i < g.size(); i += 7) {
        Policy p = pol, m = pol;
        p.actor().params()[i] += 1e-5;
        m.actor().params()[i] -= 1e-5;
        double lp = 0, lm = 0;
        surrogate_gradient(p, batch, adv, 0.2, ent, &lp);
        surrogate_gradient(m, batch, adv, 0.2, ent, &lm);
        CHECK(g[i] == doctest::Approx((lp - lm) / 2e-5).epsilon(1e-4).scale(1e-4));
      }
    }
  }
  SUBCASE("ratio one is the plain policy gradient") {
    for (auto& tr : batch) tr.log_prob = pol.log_prob(pol.forward(tr.state), tr.action, tr.online);
    double l0 = 0.0, cf = 1.0;
    const auto g = surrogate_gradient(pol, batch, adv, 0.2, 0.0, &l0, &cf);
    CHECK(cf == 0.0);
    double mean_adv = 0.0;
    for (double a : adv) mean_adv += a / 6.0;
    CHECK(l0 == doctest::Approx(-mean_adv));
    // -mean(A grad log p)
    for (std::size_t i = 0; i < g.size(); i += 11) {
      auto f = [&](const Policy& q) {
        double s = 0.0;
        for (std::size_t k = 0; k < 6; ++k)
          s -= adv[k] * q.log_prob(q.forward(batch[k].state), batch[k].action, batch[k].online) / 6.0;
        return s;
      };
      Policy p = pol, m = pol;
      p.actor().params()[i] += 1e-5;
      m.actor().params()[i] -= 1e-5;
      CHECK(g[i] == doctest::Approx((f(p) - f(m)) / 2e-5).epsilon(1e-4).scale(1e-4));
    }
  }
  SUBCASE("clipped samples contribute nothing") {
    for (auto& tr : batch) tr.log_prob = pol.log_prob(pol.forward(tr.state), tr.action, tr.online) - 1.0;
    const std::vector<double> pos(6, 1.0);
    double cf = 0.0;
    const auto g = surrogate_gradient(pol, batch, pos, 0.2, 0.0, nullptr, &cf);
    CHECK(cf == 1.0);
    for (double v : g) CHECK(v == 0.0);
  }
}

TEST_CASE("policy masks offline pumps") {
  const PpoConfig cfg = small_cfg();
  std::mt19937_64 rng(6);
  Policy pol(cfg, rng);
  const auto s = random_state(rng);
  const PumpFlags on{true, false, true, false, true};
  const auto p = pol.forward(s);
  for (std::size_t k = 0; k < kPumps; ++k) {
    CHECK(p.alpha[k] > 1.0);
    CHECK(p.beta[k] > 1.0);
  }
  const auto a = pol.sample(p, on, rng);
  CHECK(a[1] == 0.0);
  CHECK(a[3] == 0.0);
  const auto m = pol.mean_action(p, on);
  CHECK(m[0] == doctest::Approx(beta_mean(p.alpha[0], p.beta[0])));
  CHECK(m[3] == 0.0);
  // offline entries do not enter the density
  auto b = a;
  b[1] = 0.7;
  CHECK(pol.log_prob(p, a, on) == pol.log_prob(p, b, on));
  const PlantConfig plant;
  CHECK(to_kw(m, on, plant)[0] == doctest::Approx(m[0] * plant.rated_power_kw));
}

TEST_CASE("state encoding") {
  EnvState s;
  s.level_m = 4.0;
  s.intake_m3h = 7200.0;
  s.online = {true, false, true, true, true};
  s.setpoints_kw = {55, 0, 110, 0, 0};
  s.forecast.fill(1440.0);
  const PlantConfig plant;
  const auto v = encode_state(s, plant);
  CHECK(v[0] == 0.5);
  CHECK(v[1] == 0.5);
  CHECK(v[2] == 1.0);
  CHECK(v[3] == 0.0);
  CHECK(v[7] == 0.5);
  CHECK(v[9] == 1.0);
  CHECK(v[kStateDim - 1] == doctest::Approx(0.1));
  const auto masked = encode_state(s, plant, true);
  CHECK(masked[kStateDim - 1] == 0.0);
  CHECK(masked[0] == 0.5);
  s.level_m = std::nan("");
  CHECK_THROWS_AS(encode_state(s, plant), DomainError);
}

TEST_CASE("learner schedule and round trip") {
  PpoConfig cfg = small_cfg();
  cfg.iterations = 100;
  cfg.lr_decay_iterations = 100;
  Learner a(cfg, 17);
  CHECK(a.learning_rate(0) == doctest::Approx(cfg.learning_rate));
  CHECK(a.learning_rate(100) == doctest::Approx(cfg.learning_rate * 0.1));
  CHECK(a.learning_rate(50) == doctest::Approx(cfg.learning_rate * std::sqrt(0.1)));
  CHECK(a.learning_rate(400) == doctest::Approx(cfg.learning_rate * 0.1));

  std::mt19937_64 rng(2);
  std::vector<Transition> batch(300);
  for (auto& tr : batch) {
    tr.state = random_state(rng);
    tr.online = {true, true, true, true, true};
    const auto p = a.policy().forward(tr.state);
    tr.action = a.policy().sample(p, tr.online, rng);
    tr.log_prob = a.policy().log_prob(p, tr.action, tr.online);
    tr.reward = tr.action[0] - 0.5;
    tr.value = a.policy().value(tr.state);
    tr.next_value = tr.value;
  }
  batch.back().truncated = true;
  Learner b = Learner::from_json(a.to_json(), cfg);
  const auto sa = a.update(batch, 3);
  const auto sb = b.update(batch, 3);
  CHECK(sa.policy_loss == sb.policy_loss);
  CHECK(a.policy().actor().params() == b.policy().actor().params());
  CHECK(a.policy().critic().params() == b.policy().critic().params());
  CHECK(sa.skipped == 0);

  std::mt19937_64 r1(77);
  r1();
  auto r2 = rng_from_state(rng_state(r1));
  CHECK(r1() == r2());
}

TEST_CASE("full-window gae with lambda one is the discounted return advantage") {
  auto tr = random_traj(40, 12, 0.0);
  tr.back().done = true;
  const double gamma = 0.97;
  const auto a = gae_truncated(tr, gamma, 1.0, tr.size());
  for (std::size_t t = 0; t < tr.size(); ++t) {
    double g = 0.0, w = 1.0;
    for (std::size_t k = t; k < tr.size(); ++k, w *= gamma) g += w * tr[k].reward;
    CHECK(a[t] == doctest::Approx(g - tr[t].value).epsilon(1e-12));
  }
}
