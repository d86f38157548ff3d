#include "cross/rl/trainer.h"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "cross/autodiff/ops.h"
#include "cross/autodiff/params.h"
#include "cross/control/controllers.h"

namespace cross::rl {

using namespace cross::ad;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 step over the pair
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double value_of(const Tensor& t) { return t.defined() ? t.item() : 0.0; }

std::vector<const model::Observation*> pointers(const std::vector<model::Observation>& v) {
  std::vector<const model::Observation*> p;
  p.reserve(v.size());
  for (const auto& o : v) p.push_back(&o);
  return p;
}

}  // namespace

UpdateBatch prepare_update(const Rollout& r, const model::ModelConfig& actor_cfg, const model::ModelConfig& critic_cfg,
                           const TrainConfig& tc) {
  const std::size_t n = r.size();
  if (n == 0) throw std::invalid_argument("prepare_update: empty rollout");
  UpdateBatch b;
  const auto obs = pointers(r.obs), next = pointers(r.next_obs);
  b.actor_in = model::make_batch(obs, r.hidden_actor, actor_cfg.hidden);
  b.critic_in = model::make_batch(obs, r.hidden_critic, critic_cfg.hidden);
  b.next_state = model::state_targets(next);
  b.action = r.action;
  b.old_logp = r.logp;
  b.reward = r.reward;
  b.done = r.done;
  b.next_index.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i)
    if (!r.done[i]) b.next_index[i] = static_cast<long>(i + 1);

  // GAE per trajectory with the behaviour values
  std::vector<double> adv(n);
  std::size_t start = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!r.done[i] && i + 1 < n) continue;
    const std::size_t len = i + 1 - start;
    const auto g = compute_gae(std::span(r.reward).subspan(start, len), std::span(r.value).subspan(start, len),
                               std::span(r.done).subspan(start, len), 0.0, tc.gamma, tc.gae_lambda);
    std::copy(g.advantages.begin(), g.advantages.end(), adv.begin() + static_cast<long>(start));
    start = i + 1;
  }
  b.advantages = tc.normalize_advantages ? normalize(adv) : adv;
  return b;
}

Objectives compute_objectives(const model::CrossNet& actor, const model::CrossNet& critic, const UpdateBatch& b,
                              const TrainConfig& tc) {
  Objectives o;
  auto& rec = o.record;

  o.actor_fwd = actor.forward(b.actor_in);
  const auto& fa = o.actor_fwd;
  const Tensor new_logp = pick(fa.log_probs, b.action);
  const Tensor policy = ppo_actor_loss(new_logp, b.old_logp, b.advantages, tc.clip);
  const Tensor entropy = policy_entropy(fa.log_probs, b.actor_in.phase_mask);
  const AuxLosses aux_a = aux_losses(fa, actor.config(), b.next_state, b.actor_in.entry_mask, tc);
  o.actor = add(sub(policy, scale(entropy, tc.lambda_e)), aux_total(aux_a, tc));

  const auto fc = critic.forward(b.critic_in);
  std::vector<double> next_v(b.reward.size(), 0.0);
  for (std::size_t i = 0; i < next_v.size(); ++i)
    if (b.next_index[i] >= 0) next_v[i] = fc.value[static_cast<std::size_t>(b.next_index[i])];
  const Tensor value = td_value_loss(fc.value, b.reward, next_v, b.done, tc.gamma, tc.lambda_v);
  const AuxLosses aux_c = aux_losses(fc, critic.config(), b.next_state, b.critic_in.entry_mask, tc);
  o.critic = add(value, aux_total(aux_c, tc));

  // components before totals so a non-finite check names the culprit
  rec.set("policy", policy.item());
  rec.set("entropy", entropy.item());
  rec.set("value", value.item());
  for (const auto& [suffix, a] : {std::pair<std::string, const AuxLosses*>{"_a", &aux_a}, {"_c", &aux_c}}) {
    rec.set("pred" + suffix, value_of(a->pred));
    rec.set("cont" + suffix, value_of(a->cont));
    rec.set("div" + suffix, value_of(a->div));
    rec.set("pcc" + suffix, value_of(a->pcc));
    rec.set("lb" + suffix, value_of(a->lb));
    rec.set("se" + suffix, value_of(a->se));
    rec.set("moe" + suffix, value_of(a->moe));
  }
  rec.set("actor_total", o.actor.item());
  rec.set("critic_total", o.critic.item());
  return o;
}

Trainer::Trainer(model::ModelConfig cfg, TrainConfig tc, std::vector<sim::Scenario> scenarios)
    : cfg_(cfg), tc_(tc), scenarios_(std::move(scenarios)) {
  tc_.validate();
  if (scenarios_.empty()) throw std::invalid_argument("train: no scenarios");
  for (const auto& s : scenarios_)
    if (s.network.intersections.empty()) throw std::invalid_argument("train: scenario '" + s.name + "' has no intersections");
  actor_ = std::make_shared<model::CrossNet>(cfg_, model::Role::Actor, mix(tc_.seed, 1));
  critic_ = std::make_shared<model::CrossNet>(cfg_, model::Role::Critic, mix(tc_.seed, 2));
  opt_actor_ = std::make_unique<Adam>(actor_->params().tensors(), AdamConfig{.learning_rate = tc_.lr_actor});
  opt_critic_ = std::make_unique<Adam>(critic_->params().tensors(), AdamConfig{.learning_rate = tc_.lr_critic});
}

LossRecord Trainer::update(const Rollout& r, int iteration) {
  const UpdateBatch b = prepare_update(r, actor_->config(), critic_->config(), tc_);
  LossRecord mean;
  for (const auto& c : loss_columns()) mean.set(c, 0.0);
  auto params_a = actor_->params().tensors();
  auto params_c = critic_->params().tensors();
  for (int epoch = 0; epoch < tc_.epochs; ++epoch) {
    actor_->params().zero_grad();
    critic_->params().zero_grad();
    auto o = compute_objectives(*actor_, *critic_, b, tc_);
    for (const auto& [k, v] : o.record.values)
      if (!std::isfinite(v)) throw NonFiniteLoss(k, iteration);
    backward(o.actor);
    backward(o.critic);
    for (auto& t : params_a) t.ensure_grad();
    for (auto& t : params_c) t.ensure_grad();
    const double gn_a = clip_grad_norm(params_a, tc_.grad_clip);
    const double gn_c = clip_grad_norm(params_c, tc_.grad_clip);
    if (!std::isfinite(gn_a)) throw NonFiniteLoss("grad_norm_a", iteration);
    if (!std::isfinite(gn_c)) throw NonFiniteLoss("grad_norm_c", iteration);
    opt_actor_->step();
    opt_critic_->step();
    o.record.set("grad_norm_a", gn_a);
    o.record.set("grad_norm_c", gn_c);
    for (const auto& [k, v] : o.record.values) mean.set(k, mean.get(k) + v / tc_.epochs);
  }
  actor_->params().zero_grad();
  critic_->params().zero_grad();
  return mean;
}

IterationLog Trainer::iterate() {
  IterationLog log;
  log.iteration = iteration_;
  log.actor_hash = actor_->params().fingerprint();
  const std::size_t ns = scenarios_.size();
  std::vector<Rollout> parts(ns);
  std::vector<EpisodeStats> stats(ns);
  const model::CrossNet& actor = *actor_;
  const model::CrossNet& critic = *critic_;
#pragma omp parallel for schedule(static)
  for (std::size_t s = 0; s < ns; ++s) {
    const auto& sc = scenarios_[s];
    parts[s] = collect_rollout(sc, actor, critic, mix(sc.demand.seed, static_cast<std::uint64_t>(iteration_)),
                               mix(mix(tc_.seed, s), static_cast<std::uint64_t>(iteration_)), static_cast<int>(s),
                               &stats[s]);
  }
  Rollout pooled;
  for (std::size_t s = 0; s < ns; ++s) {
    pooled.append(parts[s]);
    log.scenario_return.push_back(stats[s].mean_return);
    log.scenario_queue.push_back(stats[s].metrics.queue_veh);
  }
  log.samples = pooled.size();

  // usage diagnostics from the behaviour policy
  {
    NoGradGuard guard;
    const auto obs = pointers(pooled.obs);
    const auto f = actor.forward(model::make_batch(obs, pooled.hidden_actor, actor.config().hidden));
    if (f.moe.routing.alpha.defined()) {
      const auto& a = f.moe.routing.alpha;
      log.expert_usage.assign(a.cols(), 0.0);
      double total = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        log.expert_usage[i % a.cols()] += a[i];
        total += a[i];
      }
      for (auto& v : log.expert_usage) v /= total;
    }
    if (f.pcc) {
      const auto& w = f.pcc->w;
      log.cluster_usage.assign(w.cols(), 0.0);
      for (std::size_t i = 0; i < w.size(); ++i) log.cluster_usage[i % w.cols()] += w[i] / static_cast<double>(w.rows());
    }
  }

  log.losses = update(pooled, iteration_);
  ++iteration_;
  return log;
}

std::vector<IterationLog> Trainer::run(const std::function<void(const IterationLog&)>& on_iteration) {
  std::vector<IterationLog> logs;
  while (iteration_ < tc_.iterations) {
    logs.push_back(iterate());
    if (on_iteration) on_iteration(logs.back());
  }
  return logs;
}

void Trainer::save_checkpoint(const std::filesystem::path& file) const {
  nlohmann::json meta;
  meta["model"] = cfg_;
  meta["train"] = tc_;
  meta["iteration"] = iteration_;
  meta["actor_hash"] = actor_->params().fingerprint();
  ad::save_checkpoint(file, meta, {{"", &actor_->params()}, {"", &critic_->params()}});
}

void write_curve_header(std::ostream& out, const std::vector<sim::Scenario>& scenarios, const model::ModelConfig& cfg) {
  out << "iteration,samples";
  for (const auto& s : scenarios) out << ",return_" << s.name;
  for (const auto& s : scenarios) out << ",queue_" << s.name;
  for (const auto& c : loss_columns()) out << ',' << c;
  if (cfg.use_moe)
    for (std::size_t e = 0; e < cfg.experts; ++e) out << ",expert_" << e;
  if (cfg.use_pcc)
    for (std::size_t k = 0; k < cfg.clusters; ++k) out << ",cluster_" << k;
  out << '\n';
}

void write_curve_row(std::ostream& out, const IterationLog& log, const model::ModelConfig& cfg) {
  out << log.iteration << ',' << log.samples << std::setprecision(10);
  for (double v : log.scenario_return) out << ',' << v;
  for (double v : log.scenario_queue) out << ',' << v;
  for (const auto& c : loss_columns()) out << ',' << log.losses.get(c);
  if (cfg.use_moe)
    for (double v : log.expert_usage) out << ',' << v;
  if (cfg.use_pcc)
    for (double v : log.cluster_usage) out << ',' << v;
  out << '\n';
}

LoadedModel load_checkpoint(const std::filesystem::path& file) {
  LoadedModel m;
  const auto doc = ad::read_checkpoint(file);
  m.meta = doc.at("meta");
  if (!m.meta.contains("model")) throw std::runtime_error("checkpoint " + file.string() + " has no model config");
  m.cfg = m.meta.at("model").get<model::ModelConfig>();
  m.actor = std::make_shared<model::CrossNet>(m.cfg, model::Role::Actor, 0);
  m.critic = std::make_shared<model::CrossNet>(m.cfg, model::Role::Critic, 0);
  m.actor->params().load_json(doc.at("params"));
  m.critic->params().load_json(doc.at("params"));
  return m;
}

std::vector<sim::MetricReport> evaluate(std::shared_ptr<const model::CrossNet> actor, const sim::Scenario& sc,
                                        int episodes, std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  auto net = std::make_shared<const sim::Network>(sc.network);
  control::CrossController ctl(std::move(actor));
  std::vector<sim::MetricReport> out;
  for (int e = 0; e < episodes; ++e) {
    sim::DemandSchedule d = sc.demand;
    d.seed = seed + static_cast<std::uint64_t>(e);
    sim::Simulator s(net, sim::generate_vehicles(*net, d, sc.episode_s), sc.episode_s);
    out.push_back(control::run_episode(s, ctl));
  }
  return out;
}

}  // namespace cross::rl
