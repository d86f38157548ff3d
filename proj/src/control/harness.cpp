#include "cross/control/harness.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include "cross/rl/trainer.h"
#include "cross/sim/generator.h"

namespace cross::control {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

struct Stats {
  double mean = 0.0, std = 0.0;
};

// sample std, 0 for a single value
Stats stats(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    for (double x : v) s.std += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(s.std / static_cast<double>(v.size() - 1));
  }
  return s;
}

// (method, scenario) groups in first-seen order
std::vector<std::pair<std::pair<std::string, std::string>, std::vector<const CompareRow*>>> group(
    const std::vector<CompareRow>& rows) {
  std::vector<std::pair<std::pair<std::string, std::string>, std::vector<const CompareRow*>>> g;
  std::map<std::pair<std::string, std::string>, std::size_t> at;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.method, r.scenario);
    auto it = at.find(key);
    if (it == at.end()) {
      it = at.emplace(key, g.size()).first;
      g.push_back({key, {}});
    }
    g[it->second].second.push_back(&r);
  }
  return g;
}

}  // namespace

std::string kind_name(ControllerKind k) {
  switch (k) {
    case ControllerKind::FixedTime: return "fixed-time";
    case ControllerKind::MaxPressure: return "max-pressure";
    case ControllerKind::Random: return "random";
    case ControllerKind::Cross: return "cross";
    case ControllerKind::CrossNoPcc: return "cross-no-pcc";
    case ControllerKind::CrossNoMoe: return "cross-no-moe";
  }
  return "?";
}

ControllerSpec ControllerSpec::parse(const std::string& text) {
  ControllerSpec s;
  std::string head = text, arg;
  const auto cut = text.find_first_of("=:");
  if (cut != std::string::npos) {
    head = text.substr(0, cut);
    arg = text.substr(cut + 1);
  }
  bool found = false;
  for (auto k : {ControllerKind::FixedTime, ControllerKind::MaxPressure, ControllerKind::Random, ControllerKind::Cross,
                 ControllerKind::CrossNoPcc, ControllerKind::CrossNoMoe}) {
    if (kind_name(k) == head) {
      s.kind = k;
      found = true;
    }
  }
  if (!found) throw std::invalid_argument("unknown controller '" + head + "'");
  switch (s.kind) {
    case ControllerKind::Random:
      if (!arg.empty()) s.seed = std::stoull(arg);
      break;
    case ControllerKind::Cross:
    case ControllerKind::CrossNoPcc:
    case ControllerKind::CrossNoMoe: s.checkpoint = arg; break;
    default:
      if (!arg.empty()) throw std::invalid_argument("controller '" + head + "' takes no argument");
  }
  s.validate();
  return s;
}

std::string ControllerSpec::name() const { return label.empty() ? kind_name(kind) : label; }

void ControllerSpec::validate() const {
  const bool learned = kind == ControllerKind::Cross || kind == ControllerKind::CrossNoPcc || kind == ControllerKind::CrossNoMoe;
  if (learned && checkpoint.empty()) throw std::invalid_argument(kind_name(kind) + " needs a checkpoint");
  if (!learned && !checkpoint.empty()) throw std::invalid_argument(kind_name(kind) + " takes no checkpoint");
  if (kind != ControllerKind::FixedTime && !plan.splits_s.empty())
    throw std::invalid_argument(kind_name(kind) + " takes no cycle plan");
  for (int s : plan.splits_s)
    if (s <= 0) throw std::invalid_argument("fixed-time splits must be positive");
}

ControllerFactory::ControllerFactory(ControllerSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.checkpoint.empty()) return;
  auto loaded = rl::load_checkpoint(spec_.checkpoint);
  const bool want_pcc = spec_.kind != ControllerKind::CrossNoPcc, want_moe = spec_.kind != ControllerKind::CrossNoMoe;
  if (loaded.cfg.use_pcc != want_pcc || loaded.cfg.use_moe != want_moe) {
    throw std::invalid_argument("checkpoint '" + spec_.checkpoint + "' (pcc=" + std::to_string(loaded.cfg.use_pcc) +
                                ", moe=" + std::to_string(loaded.cfg.use_moe) + ") does not match " + kind_name(spec_.kind));
  }
  actor_ = loaded.actor;
}

std::unique_ptr<Controller> ControllerFactory::make(std::uint64_t episode_seed) const {
  switch (spec_.kind) {
    case ControllerKind::FixedTime: return std::make_unique<FixedTime>(spec_.plan);
    case ControllerKind::MaxPressure: return std::make_unique<MaxPressure>();
    case ControllerKind::Random: return std::make_unique<RandomController>(splitmix(spec_.seed ^ splitmix(episode_seed)));
    default: return std::make_unique<CrossController>(actor_, spec_.name());
  }
}

sim::MetricReport run_scenario(const sim::Scenario& sc, Controller& ctl, std::uint64_t vehicle_seed) {
  auto net = std::make_shared<const sim::Network>(sc.network);
  sim::DemandSchedule d = sc.demand;
  d.seed = vehicle_seed;
  sim::Simulator s(net, sim::generate_vehicles(*net, d, sc.episode_s), sc.episode_s);
  return run_episode(s, ctl);
}

std::vector<CompareRow> run_compare(const std::vector<ControllerSpec>& methods, const std::vector<sim::Scenario>& scenarios,
                                    const std::vector<std::uint64_t>& seeds) {
  std::vector<ControllerFactory> factories;
  for (const auto& m : methods) factories.emplace_back(m);
  const std::size_t ns = scenarios.size(), nd = seeds.size();
  const std::size_t cells = methods.size() * ns * nd;
  std::vector<CompareRow> rows(cells);
  std::vector<std::string> errors(cells);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t c = 0; c < cells; ++c) {
    const std::size_t mi = c / (ns * nd), si = (c / nd) % ns, di = c % nd;
    try {
      auto ctl = factories[mi].make(seeds[di]);
      rows[c] = CompareRow{methods[mi].name(), scenarios[si].name, seeds[di], run_scenario(scenarios[si], *ctl, seeds[di])};
    } catch (const std::exception& e) {
      errors[c] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw std::runtime_error("compare: " + e);
  return rows;
}

double metric_value(const sim::MetricReport& m, std::size_t i) {
  switch (i) {
    case 0: return m.queue_veh;
    case 1: return m.speed_mps;
    case 2: return m.completion_vps;
    case 3: return m.trip_time_s;
    case 4: return m.trip_delay_s;
    case 5: return m.trip_duration_s;
  }
  throw std::out_of_range("metric index " + std::to_string(i));
}

void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows) {
  out << "method,scenario,seed";
  for (const char* n : kMetricNames) out << ',' << n;
  out << '\n';
  for (const auto& r : rows) {
    out << r.method << ',' << r.scenario << ',' << r.seed;
    for (std::size_t i = 0; i < 6; ++i) out << ',' << fmt("%.17g", metric_value(r.metrics, i));
    out << '\n';
  }
}

void write_summary_csv(std::ostream& out, const std::vector<CompareRow>& rows) {
  out << "method,scenario,seeds";
  for (const char* n : kMetricNames) out << ',' << n;
  out << '\n';
  for (const auto& [key, members] : group(rows)) {
    out << key.first << ',' << key.second << ',' << members.size();
    for (std::size_t i = 0; i < 6; ++i) {
      std::vector<double> v;
      for (const auto* r : members) v.push_back(metric_value(r->metrics, i));
      const auto s = stats(v);
      out << ',' << fmt("%.3f", s.mean) << '(' << fmt("%.3f", s.std) << ')';
    }
    out << '\n';
  }
}

std::vector<std::filesystem::path> write_trip_duration_charts(const std::filesystem::path& dir,
                                                              const std::vector<CompareRow>& rows) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> scenario_order;
  for (const auto& r : rows)
    if (std::find(scenario_order.begin(), scenario_order.end(), r.scenario) == scenario_order.end())
      scenario_order.push_back(r.scenario);
  const auto groups = group(rows);
  std::vector<std::filesystem::path> written;
  for (const auto& sc : scenario_order) {
    std::vector<std::pair<std::string, Stats>> bars;
    double top = 0.0;
    for (const auto& [key, members] : groups) {
      if (key.second != sc) continue;
      std::vector<double> v;
      for (const auto* r : members) v.push_back(r->metrics.trip_duration_s);
      bars.push_back({key.first, stats(v)});
      top = std::max(top, bars.back().second.mean + bars.back().second.std);
    }
    if (top <= 0.0) top = 1.0;
    const double bw = 70, gap = 30, left = 60, base = 260, height = 200;
    const double width = left + static_cast<double>(bars.size()) * (bw + gap) + gap;
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", width) +
                      "\" height=\"320\" font-family=\"sans-serif\" font-size=\"11\">\n";
    svg += "<text x=\"" + fmt("%.0f", width / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" +
           xml_escape(sc) + ": mean trip duration (s)</text>\n";
    svg += "<line x1=\"" + fmt("%.0f", left) + "\" y1=\"" + fmt("%.0f", base) + "\" x2=\"" + fmt("%.0f", width) +
           "\" y2=\"" + fmt("%.0f", base) + "\" stroke=\"black\"/>\n";
    for (std::size_t b = 0; b < bars.size(); ++b) {
      const auto& [name, st] = bars[b];
      const double x = left + gap + static_cast<double>(b) * (bw + gap);
      const double h = height * st.mean / top;
      const double e = height * st.std / top;
      svg += "<rect x=\"" + fmt("%.1f", x) + "\" y=\"" + fmt("%.1f", base - h) + "\" width=\"" + fmt("%.0f", bw) +
             "\" height=\"" + fmt("%.1f", h) + "\" fill=\"#4a7ab5\"/>\n";
      if (e > 0)
        svg += "<line x1=\"" + fmt("%.1f", x + bw / 2) + "\" y1=\"" + fmt("%.1f", base - h - e) + "\" x2=\"" +
               fmt("%.1f", x + bw / 2) + "\" y2=\"" + fmt("%.1f", base - h + e) + "\" stroke=\"black\"/>\n";
      svg += "<text x=\"" + fmt("%.1f", x + bw / 2) + "\" y=\"" + fmt("%.1f", base - h - e - 4) +
             "\" text-anchor=\"middle\">" + fmt("%.1f", st.mean) + "</text>\n";
      svg += "<text x=\"" + fmt("%.1f", x + bw / 2) + "\" y=\"" + fmt("%.0f", base + 16) + "\" text-anchor=\"middle\">" +
             xml_escape(name) + "</text>\n";
    }
    svg += "</svg>\n";
    std::string stem;
    for (char c : sc) stem += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
    const auto path = dir / ("trip_duration_" + stem + ".svg");
    std::ofstream(path) << svg;
    written.push_back(path);
  }
  return written;
}

sim::Scenario smoke_scenario(std::uint64_t seed) {
  sim::GridSpec g;
  g.rows = 2;
  g.cols = 2;
  // per-origin rate of the 25-intersection synthetic grid, over 8 origins
  g.total_rate_vpm = 8 * 6.08;
  g.episode_s = 1200;
  g.seed = seed;
  auto sc = sim::generate_grid(g);
  sc.name = "smoke-2x2";
  return sc;
}

}  // namespace cross::control
