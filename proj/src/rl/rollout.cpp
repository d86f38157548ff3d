#include "cross/rl/rollout.h"

#include <cmath>
#include <memory>
#include <random>

#include "cross/autodiff/ops.h"

namespace cross::rl {

void Rollout::append(const Rollout& o) {
  obs.insert(obs.end(), o.obs.begin(), o.obs.end());
  next_obs.insert(next_obs.end(), o.next_obs.begin(), o.next_obs.end());
  hidden_actor.insert(hidden_actor.end(), o.hidden_actor.begin(), o.hidden_actor.end());
  hidden_critic.insert(hidden_critic.end(), o.hidden_critic.begin(), o.hidden_critic.end());
  action.insert(action.end(), o.action.begin(), o.action.end());
  logp.insert(logp.end(), o.logp.begin(), o.logp.end());
  value.insert(value.end(), o.value.begin(), o.value.end());
  reward.insert(reward.end(), o.reward.begin(), o.reward.end());
  done.insert(done.end(), o.done.begin(), o.done.end());
  agent.insert(agent.end(), o.agent.begin(), o.agent.end());
  scenario.insert(scenario.end(), o.scenario.begin(), o.scenario.end());
}

namespace {

struct Step {
  model::Observation obs;
  model::Observation next;
  std::vector<double> ha, hc;
  std::size_t action = 0;
  double logp = 0, value = 0, reward_sum = 0;
  int ticks = 0;
};

}  // namespace

Rollout collect_rollout(const sim::Scenario& sc, const model::CrossNet& actor, const model::CrossNet& critic,
                        std::uint64_t vehicle_seed, std::uint64_t action_seed, int scenario_index,
                        EpisodeStats* stats) {
  ad::NoGradGuard guard;
  const std::size_t ha = actor.config().hidden, hc = critic.config().hidden;
  auto net = std::make_shared<const sim::Network>(sc.network);
  sim::DemandSchedule demand = sc.demand;
  demand.seed = vehicle_seed;
  sim::Simulator sim(net, sim::generate_vehicles(*net, demand, sc.episode_s), sc.episode_s);
  std::mt19937_64 rng(action_seed);

  const std::size_t n = net->intersections.size();
  std::vector<std::vector<double>> hid_a(n, std::vector<double>(ha, 0.0)), hid_c(n, std::vector<double>(hc, 0.0));
  std::vector<std::vector<Step>> traj(n);
  std::vector<bool> open(n, false);

  std::vector<int> ready;
  while (!sim.done()) {
    ready.clear();
    for (std::size_t ix = 0; ix < n; ++ix)
      if (sim.needs_decision(static_cast<int>(ix))) ready.push_back(static_cast<int>(ix));
    if (!ready.empty()) {
      std::vector<model::Observation> obs;
      std::vector<double> ba, bc;
      for (int ix : ready) {
        obs.push_back(model::build_observation(sim, ix));
        ba.insert(ba.end(), hid_a[static_cast<std::size_t>(ix)].begin(), hid_a[static_cast<std::size_t>(ix)].end());
        bc.insert(bc.end(), hid_c[static_cast<std::size_t>(ix)].begin(), hid_c[static_cast<std::size_t>(ix)].end());
      }
      std::vector<const model::Observation*> ptrs;
      for (const auto& o : obs) ptrs.push_back(&o);
      const auto fa = actor.forward(model::make_batch(ptrs, ba, ha));
      const auto fc = critic.forward(model::make_batch(ptrs, bc, hc));
      for (std::size_t k = 0; k < ready.size(); ++k) {
        const auto ix = static_cast<std::size_t>(ready[k]);
        if (open[ix]) traj[ix].back().next = obs[k];
        std::vector<double> probs(model::kPhases, 0.0);
        for (std::size_t p = 0; p < model::kPhases; ++p)
          if (obs[k].phase_mask[p]) probs[p] = std::exp(fa.log_probs[k * model::kPhases + p]);
        const auto a = static_cast<std::size_t>(std::discrete_distribution<int>(probs.begin(), probs.end())(rng));
        Step s;
        s.obs = obs[k];
        s.ha = hid_a[ix];
        s.hc = hid_c[ix];
        s.action = a;
        s.logp = fa.log_probs[k * model::kPhases + a];
        s.value = fc.value[k];
        traj[ix].push_back(std::move(s));
        open[ix] = true;
        std::copy_n(&fa.gfe.h_s.data()[k * ha], ha, hid_a[ix].begin());
        std::copy_n(&fc.gfe.h_s.data()[k * hc], hc, hid_c[ix].begin());
        sim.apply_action(static_cast<int>(ix), static_cast<int>(a));
      }
    }
    sim.step();
    for (std::size_t ix = 0; ix < n; ++ix) {
      if (!open[ix]) continue;
      traj[ix].back().reward_sum += sim.reward(static_cast<int>(ix));
      ++traj[ix].back().ticks;
    }
  }

  Rollout r;
  double total_return = 0.0;
  for (std::size_t ix = 0; ix < n; ++ix) {
    if (!traj[ix].empty()) traj[ix].back().next = model::build_observation(sim, static_cast<int>(ix));
    double ret = 0.0;
    for (std::size_t t = 0; t < traj[ix].size(); ++t) {
      auto& s = traj[ix][t];
      const double reward = s.ticks > 0 ? s.reward_sum / s.ticks : 0.0;
      ret += reward;
      r.obs.push_back(std::move(s.obs));
      r.next_obs.push_back(std::move(s.next));
      r.hidden_actor.insert(r.hidden_actor.end(), s.ha.begin(), s.ha.end());
      r.hidden_critic.insert(r.hidden_critic.end(), s.hc.begin(), s.hc.end());
      r.action.push_back(s.action);
      r.logp.push_back(s.logp);
      r.value.push_back(s.value);
      r.reward.push_back(reward);
      r.done.push_back(t + 1 == traj[ix].size() ? 1 : 0);
      r.agent.push_back(static_cast<int>(ix));
      r.scenario.push_back(scenario_index);
    }
    total_return += ret;
  }
  if (stats) {
    stats->mean_return = n ? total_return / static_cast<double>(n) : 0.0;
    stats->metrics = sim.metrics();
  }
  return r;
}

}  // namespace cross::rl
