#include "cross/control/controllers.h"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "cross/autodiff/ops.h"

namespace cross::control {

int fixed_time_phase(const FixedTimePlan& plan, int num_phases, int clock) {
  if (num_phases <= 1) return 0;
  const int slot = sim::kYellowTicks + sim::kGreenTicks;
  std::vector<int> splits = plan.splits_s;
  if (splits.empty()) splits.assign(static_cast<std::size_t>(num_phases), slot);
  if (static_cast<int>(splits.size()) != num_phases)
    throw std::invalid_argument("fixed-time: plan has " + std::to_string(splits.size()) + " splits for " +
                                std::to_string(num_phases) + " phases");
  const int cycle = std::accumulate(splits.begin(), splits.end(), 0);
  if (cycle <= 0) throw std::invalid_argument("fixed-time: empty cycle");
  int t = clock % cycle;
  for (int p = 0; p < num_phases; ++p) {
    if (t < splits[static_cast<std::size_t>(p)]) return p;
    t -= splits[static_cast<std::size_t>(p)];
  }
  return num_phases - 1;
}

std::vector<int> FixedTime::act(const sim::Simulator& sim, std::span<const int> ready) {
  std::vector<int> out;
  for (int ix : ready) {
    const int n = static_cast<int>(sim.network().intersections[static_cast<std::size_t>(ix)].phases.size());
    // keyed on when the green would start, so a kept phase (no yellow) does
    // not shift the cycle
    out.push_back(fixed_time_phase(plan_, n, sim.clock() + sim::kYellowTicks));
  }
  return out;
}

std::vector<double> phase_pressures(const sim::Intersection& inter, std::span<const sim::MovementReading> readings) {
  std::vector<double> p(inter.phases.size(), 0.0);
  for (std::size_t k = 0; k < inter.phases.size(); ++k)
    for (int m : inter.phases[k]) {
      const auto& r = readings[static_cast<std::size_t>(m)];
      p[k] += r.q_in - r.q_out;
    }
  return p;
}

int max_pressure_phase(const sim::Intersection& inter, std::span<const sim::MovementReading> readings) {
  const auto p = phase_pressures(inter, readings);
  int best = 0;
  for (std::size_t k = 1; k < p.size(); ++k)
    if (p[k] > p[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
  return best;
}

std::vector<int> MaxPressure::act(const sim::Simulator& sim, std::span<const int> ready) {
  std::vector<int> out;
  for (int ix : ready)
    out.push_back(max_pressure_phase(sim.network().intersections[static_cast<std::size_t>(ix)], sim.read_detectors(ix)));
  return out;
}

void RandomController::reset(const sim::Simulator&) { rng_.seed(seed_); }

std::vector<int> RandomController::act(const sim::Simulator& sim, std::span<const int> ready) {
  std::vector<int> out;
  for (int ix : ready) {
    const int n = static_cast<int>(sim.network().intersections[static_cast<std::size_t>(ix)].phases.size());
    out.push_back(std::uniform_int_distribution<int>(0, n - 1)(rng_));
  }
  return out;
}

CrossController::CrossController(std::shared_ptr<const model::CrossNet> actor, std::string label)
    : actor_(std::move(actor)), label_(std::move(label)) {
  if (!actor_ || actor_->role() != model::Role::Actor) throw std::invalid_argument("cross controller needs an actor");
}

void CrossController::reset(const sim::Simulator& sim) {
  hidden_.assign(sim.network().intersections.size(), std::vector<double>(actor_->config().hidden, 0.0));
}

std::vector<int> CrossController::act(const sim::Simulator& sim, std::span<const int> ready) {
  const std::size_t h = actor_->config().hidden;
  std::vector<model::Observation> obs;
  std::vector<double> hid;
  for (int ix : ready) {
    obs.push_back(model::build_observation(sim, ix));
    const auto& hs = hidden_.at(static_cast<std::size_t>(ix));
    hid.insert(hid.end(), hs.begin(), hs.end());
  }
  std::vector<const model::Observation*> ptrs;
  for (const auto& o : obs) ptrs.push_back(&o);
  ad::NoGradGuard guard;
  const auto f = actor_->forward(model::make_batch(ptrs, hid, h));
  std::vector<int> out;
  for (std::size_t i = 0; i < ready.size(); ++i) {
    int best = -1;
    for (std::size_t p = 0; p < model::kPhases; ++p) {
      if (!obs[i].phase_mask[p]) continue;
      if (best < 0 || f.log_probs[i * model::kPhases + p] > f.log_probs[i * model::kPhases + static_cast<std::size_t>(best)])
        best = static_cast<int>(p);
    }
    out.push_back(best);
    auto& hs = hidden_[static_cast<std::size_t>(ready[i])];
    std::copy_n(&f.gfe.h_s.data()[i * h], h, hs.begin());
  }
  return out;
}

sim::MetricReport run_episode(sim::Simulator& sim, Controller& controller) {
  controller.reset(sim);
  const int n = static_cast<int>(sim.network().intersections.size());
  std::vector<int> ready;
  while (!sim.done()) {
    ready.clear();
    for (int ix = 0; ix < n; ++ix)
      if (sim.needs_decision(ix)) ready.push_back(ix);
    if (!ready.empty()) {
      const auto phases = controller.act(sim, ready);
      for (std::size_t k = 0; k < ready.size(); ++k) sim.apply_action(ready[k], phases[k]);
    }
    sim.step();
  }
  return sim.metrics();
}

}  // namespace cross::control
