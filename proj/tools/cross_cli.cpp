// cross: train / evaluate / compare / gen-scenario
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "cross/control/harness.h"
#include "cross/rl/trainer.h"
#include "cross/sim/generator.h"

namespace fs = std::filesystem;
using namespace cross;

namespace {

// {"model": {...}, "train": {...}, "scenarios": ["a.json", {...}, "smoke"]}
// Strings are paths relative to the config file, or the builtin "smoke".
struct RunConfig {
  model::ModelConfig model;
  rl::TrainConfig train;
  std::vector<sim::Scenario> scenarios;
};

sim::Scenario resolve_scenario(const nlohmann::json& s, const fs::path& base) {
  if (s.is_object()) return sim::parse_scenario(s, s.value("name", "inline"));
  const std::string ref = s.get<std::string>();
  if (ref == "smoke") return control::smoke_scenario();
  return sim::load_scenario(fs::path(ref).is_absolute() ? fs::path(ref) : base / ref);
}

RunConfig load_run_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open config '" + file.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("config '" + file.string() + "': " + e.what());
  }
  RunConfig rc;
  if (j.contains("model")) rc.model = j.at("model").get<model::ModelConfig>();
  if (j.contains("train")) rc.train = j.at("train").get<rl::TrainConfig>();
  if (!j.contains("scenarios") || !j.at("scenarios").is_array() || j.at("scenarios").empty())
    throw std::runtime_error("config '" + file.string() + "': 'scenarios' must be a non-empty array");
  for (const auto& s : j.at("scenarios")) rc.scenarios.push_back(resolve_scenario(s, file.parent_path()));
  rc.model.validate();
  rc.train.validate();
  return rc;
}

void write_usage(std::ostream& out, const rl::IterationLog& log, const std::vector<double>& v) {
  out << log.iteration;
  for (double x : v) out << ',' << x;
  out << '\n';
}

int cmd_train(const fs::path& config, const fs::path& out_dir, int iterations) {
  auto rc = load_run_config(config);
  if (iterations > 0) rc.train.iterations = iterations;
  fs::create_directories(out_dir);
  rl::Trainer tr(rc.model, rc.train, rc.scenarios);
  std::ofstream curves(out_dir / "curves.csv"), experts(out_dir / "experts.csv"), clusters(out_dir / "clusters.csv");
  curves.precision(10);
  rl::write_curve_header(curves, tr.scenarios(), rc.model);
  experts << "iteration";
  for (std::size_t m = 0; rc.model.use_moe && m < rc.model.experts; ++m) experts << ",expert_" << m;
  experts << '\n';
  clusters << "iteration";
  for (std::size_t k = 0; rc.model.use_pcc && k < rc.model.clusters; ++k) clusters << ",cluster_" << k;
  clusters << '\n';
  tr.run([&](const rl::IterationLog& l) {
    rl::write_curve_row(curves, l, rc.model);
    write_usage(experts, l, l.expert_usage);
    write_usage(clusters, l, l.cluster_usage);
    curves.flush();
    std::cerr << "iter " << l.iteration << " return";
    for (double r : l.scenario_return) std::cerr << ' ' << r;
    std::cerr << '\n';
  });
  tr.save_checkpoint(out_dir / "checkpoint.json");
  std::cout << "wrote " << (out_dir / "checkpoint.json").string() << '\n';
  return 0;
}

int cmd_evaluate(const std::string& method, const fs::path& checkpoint, const fs::path& scenario_file, int episodes,
                 std::uint64_t seed, const fs::path& out) {
  if (!fs::exists(checkpoint)) throw std::runtime_error("checkpoint '" + checkpoint.string() + "' not found");
  const auto sc = scenario_file.empty() ? control::smoke_scenario() : sim::load_scenario(scenario_file);
  std::vector<std::uint64_t> seeds;
  for (int e = 0; e < episodes; ++e) seeds.push_back(seed + static_cast<std::uint64_t>(e));
  const auto rows = control::run_compare({control::ControllerSpec::parse(method + "=" + checkpoint.string())}, {sc}, seeds);
  if (out.empty()) {
    control::write_compare_csv(std::cout, rows);
  } else {
    std::ofstream f(out);
    control::write_compare_csv(f, rows);
  }
  return 0;
}

int cmd_compare(const std::vector<std::string>& methods, const std::vector<std::string>& scenario_refs, int seeds,
                std::uint64_t seed_base, const fs::path& out_dir) {
  std::vector<control::ControllerSpec> specs;
  for (const auto& m : methods) specs.push_back(control::ControllerSpec::parse(m));
  std::vector<sim::Scenario> scenarios;
  for (const auto& s : scenario_refs) scenarios.push_back(resolve_scenario(s, fs::current_path()));
  std::vector<std::uint64_t> seed_list;
  for (int s = 0; s < seeds; ++s) seed_list.push_back(seed_base + static_cast<std::uint64_t>(s));
  const auto rows = control::run_compare(specs, scenarios, seed_list);
  fs::create_directories(out_dir);
  std::ofstream raw(out_dir / "compare.csv"), summary(out_dir / "summary.csv");
  control::write_compare_csv(raw, rows);
  control::write_summary_csv(summary, rows);
  control::write_summary_csv(std::cout, rows);
  control::write_trip_duration_charts(out_dir, rows);
  return 0;
}

int cmd_gen(const std::string& kind, int rows, int cols, double rate, int episode, std::uint64_t seed, bool eight,
            double main_weight, const fs::path& out) {
  sim::Scenario sc;
  if (kind == "smoke") {
    sc = control::smoke_scenario(seed);
  } else {
    sim::GridSpec g;
    g.rows = rows;
    g.cols = cols;
    g.total_rate_vpm = rate > 0 ? rate : 6.08 * 2 * (rows + cols);
    g.episode_s = episode;
    g.seed = seed;
    g.eight_phase = eight;
    if (kind == "grid") sc = sim::generate_grid(g);
    else if (kind == "arterial") sc = sim::generate_arterial(g, main_weight);
    else if (kind == "mixed") sc = sim::generate_mixed(g);
    else throw std::runtime_error("unknown scenario kind '" + kind + "' (grid, arterial, mixed, smoke)");
  }
  sim::save_scenario(sc, out);
  sim::load_scenario(out);  // round-trip check
  std::cout << "wrote " << out.string() << " (" << sc.network.intersections.size() << " intersections)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traffic signal control: training, evaluation and baselines"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "train actor and critic from a config document");
  fs::path train_cfg, train_out = "run";
  int train_iters = 0;
  train->add_option("--config,-c", train_cfg, "config JSON")->required();
  train->add_option("--out,-o", train_out, "output directory");
  train->add_option("--iterations", train_iters, "override train.iterations");

  auto* eval = app.add_subcommand("evaluate", "greedy evaluation of a checkpoint");
  fs::path eval_ckpt, eval_scenario, eval_out;
  std::string eval_method = "cross";
  int eval_episodes = 3;
  std::uint64_t eval_seed = 1000;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--scenario", eval_scenario, "scenario file (default: builtin smoke)");
  eval->add_option("--method", eval_method, "cross, cross-no-pcc or cross-no-moe");
  eval->add_option("--episodes", eval_episodes)->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_seed);
  eval->add_option("--out", eval_out, "CSV file (default: stdout)");

  auto* cmp = app.add_subcommand("compare", "controller x scenario x seed matrix");
  std::vector<std::string> cmp_methods{"fixed-time", "max-pressure", "random"}, cmp_scenarios{"smoke"};
  int cmp_seeds = 3;
  std::uint64_t cmp_base = 1000;
  fs::path cmp_out = "compare";
  cmp->add_option("--method,-m", cmp_methods, "fixed-time | max-pressure | random[:seed] | cross[-no-pcc|-no-moe]=ckpt");
  cmp->add_option("--scenario,-s", cmp_scenarios, "scenario files or 'smoke'");
  cmp->add_option("--seeds", cmp_seeds)->check(CLI::PositiveNumber);
  cmp->add_option("--seed-base", cmp_base);
  cmp->add_option("--out,-o", cmp_out, "output directory");

  auto* gen = app.add_subcommand("gen-scenario", "write a synthetic scenario");
  std::string gen_kind;
  int gen_rows = 2, gen_cols = 2, gen_episode = 3600;
  double gen_rate = 0.0, gen_main = 3.0;
  std::uint64_t gen_seed = 0;
  bool gen_eight = false;
  fs::path gen_out;
  gen->add_option("kind", gen_kind, "grid | arterial | mixed | smoke")->required();
  gen->add_option("rows", gen_rows)->check(CLI::PositiveNumber);
  gen->add_option("cols", gen_cols)->check(CLI::PositiveNumber);
  gen->add_option("--rate", gen_rate, "network arrival rate, veh/min (default 6.08 per origin)");
  gen->add_option("--episode", gen_episode)->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed);
  gen->add_flag("--eight-phase", gen_eight);
  gen->add_option("--main-weight", gen_main, "arterial origin weight");
  gen->add_option("--out,-o", gen_out)->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(train_cfg, train_out, train_iters);
    if (*eval) return cmd_evaluate(eval_method, eval_ckpt, eval_scenario, eval_episodes, eval_seed, eval_out);
    if (*cmp) return cmd_compare(cmp_methods, cmp_scenarios, cmp_seeds, cmp_base, cmp_out);
    if (*gen) return cmd_gen(gen_kind, gen_rows, gen_cols, gen_rate, gen_episode, gen_seed, gen_eight, gen_main, gen_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
