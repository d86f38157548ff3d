#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <cstring>

#include "doctest.h"
#include "model_fixtures.h"

#include "cross/autodiff/ops.h"
#include "cross/rl/trainer.h"
#include "cross/sim/generator.h"

using namespace cross;
using namespace cross::rl;
using ad::Tensor;

namespace {

// Brute force: A_t = sum_k (gamma lambda)^k delta_{t+k}, stopping after a done.
std::vector<double> gae_oracle(const std::vector<double>& r, const std::vector<double>& v,
                               const std::vector<std::uint8_t>& d, double boot, double g, double l) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = t + 1 < n ? v[t + 1] : boot;
    delta[t] = r[t] + g * next * (d[t] ? 0.0 : 1.0) - v[t];
  }
  std::vector<double> a(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double w = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      a[t] += w * delta[k];
      if (d[k]) break;
      w *= g * l;
    }
  }
  return a;
}

sim::Scenario tiny_scenario(int episode_s = 150, double rate = 12.0) {
  sim::GridSpec g;
  g.rows = 1;
  g.cols = 1;
  g.total_rate_vpm = rate;
  g.episode_s = episode_s;
  g.seed = 3;
  auto sc = sim::generate_grid(g);
  sc.name = "tiny";
  return sc;
}

TrainConfig quick_train(int iterations = 1) {
  TrainConfig tc;
  tc.iterations = iterations;
  tc.epochs = 2;
  tc.seed = 5;
  return tc;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "cross_test_rl";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

// ---- GAE ---------------------------------------------------------------------

TEST_CASE("gae single step and zero residuals") {
  const std::vector<double> r{1.0}, v{0.0};
  const std::vector<std::uint8_t> d{0};
  CHECK(compute_gae(r, v, d, 0.0, 0.95, 0.98).advantages[0] == 1.0);
  // r = V - gamma V' makes every delta vanish
  const std::vector<double> vals{2.0, 1.0, 3.0};
  const std::vector<double> rew{2.0 - 0.95 * 1.0, 1.0 - 0.95 * 3.0, 3.0 - 0.95 * 4.0};
  const auto g = compute_gae(rew, vals, std::vector<std::uint8_t>{0, 0, 0}, 4.0, 0.95, 0.98);
  for (double a : g.advantages) CHECK(std::abs(a) < 1e-15);
}

TEST_CASE("gae two-step example") {
  const auto g = compute_gae(std::vector<double>{1, 1}, std::vector<double>{0, 0}, std::vector<std::uint8_t>{0, 0}, 0.0,
                             0.95, 0.98);
  CHECK(g.advantages[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g.advantages[0] == doctest::Approx(1.931).epsilon(1e-12));
  CHECK(g.returns[0] == g.advantages[0]);
}

TEST_CASE("gae matches the brute-force discounted sum") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5, 5);
  std::uniform_int_distribution<int> len(1, 10);
  std::bernoulli_distribution coin(0.2);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = static_cast<std::size_t>(len(rng));
    std::vector<double> r(n), v(n);
    std::vector<std::uint8_t> d(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = u(rng);
      v[i] = u(rng);
      d[i] = coin(rng);
    }
    const double boot = u(rng);
    const auto g = compute_gae(r, v, d, boot, 0.95, 0.98);
    const auto oracle = gae_oracle(r, v, d, boot, 0.95, 0.98);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(g.advantages[i] - oracle[i]) < 1e-10);
      CHECK(g.returns[i] == doctest::Approx(g.advantages[i] + v[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("gae rejects misaligned inputs") {
  CHECK_THROWS_WITH(compute_gae(std::vector<double>{1, 2}, std::vector<double>{0}, std::vector<std::uint8_t>{0, 0}, 0,
                                0.9, 0.9),
                    doctest::Contains("length mismatch"));
}

TEST_CASE("advantage normalisation") {
  const auto z = normalize(std::vector<double>{1, 2, 3, 4});
  double m = 0, s = 0;
  for (double x : z) m += x / 4;
  for (double x : z) s += (x - m) * (x - m) / 4;
  CHECK(std::abs(m) < 1e-15);
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  for (double x : normalize(std::vector<double>{3, 3, 3})) CHECK(x == 0.0);
}

// ---- losses ------------------------------------------------------------------

TEST_CASE("clipped surrogate examples") {
  const std::vector<double> old{std::log(0.3), std::log(0.2)};
  const std::vector<double> adv{0.5, -1.5};
  CHECK(ppo_actor_loss(Tensor::from({2}, old), old, adv, 0.2).item() == doctest::Approx(0.5).epsilon(1e-15));
  // kappa = 2, A = 1 -> clipped at 1.2
  CHECK(ppo_actor_loss(Tensor::from({1}, {std::log(2.0)}), std::vector<double>{0.0}, std::vector<double>{1.0}, 0.2)
            .item() == doctest::Approx(-1.2).epsilon(1e-14));
  // kappa = 0.5, A = -1 -> min(-0.5, -0.8) = -0.8
  CHECK(ppo_actor_loss(Tensor::from({1}, {std::log(0.5)}), std::vector<double>{0.0}, std::vector<double>{-1.0}, 0.2)
            .item() == doctest::Approx(0.8).epsilon(1e-14));
}

TEST_CASE("one-step TD value loss") {
  const std::vector<std::uint8_t> live{0}, dead{1};
  // perfect values on a zero-reward chain
  CHECK(td_value_loss(Tensor::from({1}, {0.0}), std::vector<double>{0.0}, std::vector<double>{0.0}, live, 0.95, 1.0)
            .item() == 0.0);
  CHECK(td_value_loss(Tensor::from({1}, {3.0}), std::vector<double>{1.0}, std::vector<double>{2.0}, live, 0.95, 1.0)
            .item() == doctest::Approx(0.01).epsilon(1e-12));
  // terminal: V_next counts as zero
  CHECK(td_value_loss(Tensor::from({1}, {3.0}), std::vector<double>{1.0}, std::vector<double>{2.0}, dead, 0.95, 1.0)
            .item() == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(td_value_loss(Tensor::from({1}, {3.0}), std::vector<double>{1.0}, std::vector<double>{2.0}, dead, 0.95, 0.5)
            .item() == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("entropy of a uniform 3-phase policy") {
  std::vector<double> lp(8, 0.0);
  std::vector<std::uint8_t> mask(8, 0);
  for (int p = 0; p < 3; ++p) {
    lp[static_cast<std::size_t>(p)] = -std::log(3.0);
    mask[static_cast<std::size_t>(p)] = 1;
  }
  const double h = policy_entropy(Tensor::from({1, 8}, lp), mask).item();
  CHECK(h == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  CHECK(0.01 * h == doctest::Approx(0.010986).epsilon(1e-4));
}

TEST_CASE("auxiliary totals follow the weights") {
  TrainConfig tc;
  AuxLosses a;
  a.pred = Tensor::scalar(2.0);
  a.pcc = Tensor::scalar(3.0);
  a.moe = Tensor::scalar(0.5);
  CHECK(aux_total(a, tc).item() == doctest::Approx(0.05 * 2.0 + 0.1 * 3.0 + 0.5).epsilon(1e-15));
  tc.lambda_p = tc.lambda_c = 0.0;
  a.moe = Tensor();
  CHECK(aux_total(a, tc).item() == 0.0);
  CHECK(aux_total(AuxLosses{}, TrainConfig{}).item() == 0.0);
  // moe term carries its own weights
  const Tensor moe = model::loss_moe(Tensor::scalar(1.2), Tensor::scalar(0.7), tc.lambda_lb, tc.lambda_se);
  CHECK(moe.item() == doctest::Approx(0.001 * 1.2 + 0.0001 * 0.7).epsilon(1e-15));
}

TEST_CASE("train config round-trip and validation") {
  TrainConfig tc;
  tc.lr_actor = 0.0;
  tc.iterations = 3;
  nlohmann::json j = tc;
  CHECK(nlohmann::json(j.get<TrainConfig>()) == j);
  j["epochs"] = 0;
  CHECK_THROWS(j.get<TrainConfig>());
}

// ---- rollout -----------------------------------------------------------------

TEST_CASE("rollouts are aligned, contiguous per agent and deterministic") {
  auto cfg = testutil::tiny_config();
  model::CrossNet actor(cfg, model::Role::Actor, 1), critic(cfg, model::Role::Critic, 2);
  sim::GridSpec g;
  g.total_rate_vpm = 30;
  g.episode_s = 200;
  const auto sc = sim::generate_grid(g);
  EpisodeStats st;
  const auto r = collect_rollout(sc, actor, critic, 9, 10, 0, &st);
  const std::size_t n = r.size();
  REQUIRE(n > 0);
  CHECK(r.obs.size() == n);
  CHECK(r.next_obs.size() == n);
  CHECK(r.hidden_actor.size() == n * cfg.hidden);
  CHECK(r.value.size() == n);
  std::size_t dones = 0;
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(r.reward[i] <= 0.0);
    dones += r.done[i];
    if (!r.done[i]) CHECK(r.agent[i + 1] == r.agent[i]);
  }
  CHECK(dones == sc.network.intersections.size());
  CHECK(r.done.back() == 1);
  // the first step of every trajectory starts from a reset state
  for (std::size_t i = 0; i < n; ++i)
    if (i == 0 || r.done[i - 1])
      for (std::size_t k = 0; k < cfg.hidden; ++k) CHECK(r.hidden_actor[i * cfg.hidden + k] == 0.0);
  const auto again = collect_rollout(sc, actor, critic, 9, 10, 0);
  CHECK(again.action == r.action);
  CHECK(again.reward == r.reward);
  CHECK(again.logp == r.logp);
}

// ---- trainer -----------------------------------------------------------------

TEST_CASE("one iteration writes a checkpoint and one curve row") {
  const auto cfg = testutil::tiny_config();
  Trainer tr(cfg, quick_train(1), {tiny_scenario()});
  std::ostringstream csv;
  write_curve_header(csv, tr.scenarios(), cfg);
  tr.run([&](const IterationLog& l) { write_curve_row(csv, l, cfg); });
  const auto ck = scratch("one.ckpt.json");
  tr.save_checkpoint(ck);
  CHECK(std::filesystem::exists(ck));

  std::istringstream in(csv.str());
  std::string header, row, extra;
  std::getline(in, header);
  std::getline(in, row);
  CHECK_FALSE(std::getline(in, extra));
  for (const auto& c : loss_columns()) CHECK(header.find(c) != std::string::npos);
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));

  const auto loaded = load_checkpoint(ck);
  CHECK(loaded.actor->params().fingerprint() == tr.actor().params().fingerprint());
  CHECK(loaded.critic->params().fingerprint() == tr.critic().params().fingerprint());
  CHECK(loaded.meta.at("iteration") == 1);
}

TEST_CASE("zero learning rates leave parameters bit-identical") {
  auto tc = quick_train(2);
  tc.lr_actor = tc.lr_critic = 0.0;
  Trainer tr(testutil::tiny_config(), tc, {tiny_scenario()});
  const auto a = tr.actor().params().fingerprint(), c = tr.critic().params().fingerprint();
  tr.run();
  CHECK(tr.actor().params().fingerprint() == a);
  CHECK(tr.critic().params().fingerprint() == c);
}

TEST_CASE("every rollout of an iteration reads one parameter set") {
  Trainer tr(testutil::tiny_config(), quick_train(2), {tiny_scenario(), tiny_scenario(120, 20.0)});
  const auto before = tr.actor().params().fingerprint();
  const auto log = tr.iterate();
  CHECK(log.actor_hash == before);
  CHECK(log.scenario_return.size() == 2);
  const auto mid = tr.actor().params().fingerprint();
  CHECK(mid != before);
  CHECK(tr.iterate().actor_hash == mid);
}

TEST_CASE("actor and critic parameters are disjoint and update independently") {
  auto cfg = testutil::tiny_config();
  Trainer tr(cfg, quick_train(1), {tiny_scenario()});
  std::set<std::string> a(tr.actor().params().paths().begin(), tr.actor().params().paths().end());
  for (const auto& p : tr.critic().params().paths()) CHECK(a.count(p) == 0);
  // actor loss alone leaves every critic grad empty
  model::CrossNet actor(cfg, model::Role::Actor, 1), critic(cfg, model::Role::Critic, 2);
  const auto r = collect_rollout(tiny_scenario(), actor, critic, 1, 2, 0);
  const auto b = prepare_update(r, cfg, cfg, TrainConfig{});
  auto o = compute_objectives(actor, critic, b, TrainConfig{});
  ad::backward(o.actor);
  for (const auto& t : critic.params().tensors()) CHECK_FALSE(t.has_grad());
  bool any = false;
  for (const auto& t : actor.params().tensors()) any = any || t.has_grad();
  CHECK(any);
}

TEST_CASE("a non-finite loss aborts the update and names its component") {
  Trainer tr(testutil::tiny_config(), quick_train(1), {tiny_scenario()});
  auto pred = tr.actor().params().get("actor.pcc.predict");
  pred.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    tr.iterate();
    FAIL("expected NonFiniteLoss");
  } catch (const NonFiniteLoss& e) {
    CHECK(e.component() == "pred_a");
    CHECK(std::string(e.what()).find("pred_a") != std::string::npos);
  }
}

TEST_CASE("with auxiliaries off the objectives are plain masked PPO") {
  auto cfg = testutil::tiny_config();
  cfg.use_pcc = false;
  cfg.use_moe = false;
  TrainConfig tc;
  tc.lambda_p = tc.lambda_c = tc.lambda_lb = tc.lambda_se = 0.0;
  model::CrossNet actor(cfg, model::Role::Actor, 3), critic(cfg, model::Role::Critic, 4);
  sim::GridSpec g;
  g.total_rate_vpm = 40;
  g.episode_s = 150;
  const auto r = collect_rollout(sim::generate_grid(g), actor, critic, 1, 2, 0);
  const auto b = prepare_update(r, cfg, cfg, tc);
  const auto o = compute_objectives(actor, critic, b, tc);

  // reference computed from raw forward outputs with plain loops
  const auto fa = actor.forward(b.actor_in);
  const auto fc = critic.forward(b.critic_in);
  const std::size_t n = r.size();
  double surr = 0, ent = 0, val = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double k = std::exp(fa.log_probs[i * 8 + b.action[i]] - b.old_logp[i]);
    const double a = b.advantages[i];
    surr += std::min(k * a, std::clamp(k, 1 - tc.clip, 1 + tc.clip) * a);
    for (std::size_t p = 0; p < 8; ++p)
      if (b.actor_in.phase_mask[i * 8 + p]) ent -= std::exp(fa.log_probs[i * 8 + p]) * fa.log_probs[i * 8 + p];
    const double next = r.done[i] ? 0.0 : fc.value[i + 1];
    const double td = r.reward[i] + tc.gamma * next - fc.value[i];
    val += tc.lambda_v * td * td;
  }
  const double ref_actor = -surr / n - tc.lambda_e * ent / n;
  const double ref_critic = val / n;
  CHECK(std::abs(o.actor.item() - ref_actor) <= 1e-10);
  CHECK(std::abs(o.critic.item() - ref_critic) <= 1e-10);
}

TEST_CASE("greedy evaluation is deterministic and transfers to T-junctions") {
  const auto cfg = testutil::tiny_config();
  auto actor = std::make_shared<const model::CrossNet>(cfg, model::Role::Actor, 6);
  const auto sc = tiny_scenario(200, 20.0);
  const auto a = evaluate(actor, sc, 2, 17), b = evaluate(actor, sc, 2, 17);
  REQUIRE(a.size() == 2);
  for (std::size_t e = 0; e < a.size(); ++e) CHECK(std::memcmp(&a[e], &b[e], sizeof(sim::MetricReport)) == 0);
  sim::GridSpec g;
  g.total_rate_vpm = 20;
  g.episode_s = 200;
  const auto mixed = sim::generate_mixed(g);
  CHECK_NOTHROW(evaluate(actor, mixed, 1, 3));
  CHECK_THROWS(evaluate(actor, mixed, 0, 3));
}
