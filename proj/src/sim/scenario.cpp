#include "cross/sim/scenario.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <random>
#include <stdexcept>

namespace cross::sim {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument("scenario: " + msg); }

template <typename T>
T field(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) fail(where + " lacks '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(where + " has a malformed '" + key + "'");
  }
}

}  // namespace

Scenario parse_scenario(const nlohmann::json& doc, const std::string& name) {
  Scenario s;
  s.name = doc.value("name", name);
  s.episode_s = doc.value("episode_s", 3600);
  if (s.episode_s <= 0) fail("episode_s must be positive");
  Network& net = s.network;

  const auto& nodes = doc.contains("nodes") ? doc.at("nodes") : nlohmann::json::array();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string where = "nodes[" + std::to_string(i) + "]";
    Node n;
    n.id = field<std::string>(nodes[i], "id", where);
    n.x = field<double>(nodes[i], "x", where);
    n.y = field<double>(nodes[i], "y", where);
    n.type = parse_node_type(field<std::string>(nodes[i], "type", where));
    net.nodes.push_back(n);
  }
  std::map<std::string, int> node_ids;
  for (std::size_t i = 0; i < net.nodes.size(); ++i) node_ids[net.nodes[i].id] = static_cast<int>(i);
  auto node_ref = [&](const std::string& id, const std::string& where) {
    auto it = node_ids.find(id);
    if (it == node_ids.end()) fail(where + " references unknown node '" + id + "'");
    return it->second;
  };

  const auto& links = doc.contains("links") ? doc.at("links") : nlohmann::json::array();
  for (std::size_t i = 0; i < links.size(); ++i) {
    const std::string where = "links[" + std::to_string(i) + "]";
    Link l;
    l.from = node_ref(field<std::string>(links[i], "from", where), where);
    l.to = node_ref(field<std::string>(links[i], "to", where), where);
    l.length_m = field<double>(links[i], "length_m", where);
    l.speed_mps = field<double>(links[i], "speed_mps", where);
    l.lanes = field<int>(links[i], "lanes", where);
    net.links.push_back(l);
  }
  // Link ids are needed to resolve lane references, so finalize twice: once
  // for the road graph alone and again with intersections attached.
  {
    Network roads;
    roads.nodes = net.nodes;
    for (auto& n : roads.nodes) n.type = NodeType::Boundary;
    roads.links = net.links;
    roads.finalize();
    net.links = roads.links;

    const auto& inters = doc.contains("intersections") ? doc.at("intersections") : nlohmann::json::array();
    for (std::size_t i = 0; i < inters.size(); ++i) {
      const std::string where = "intersections[" + std::to_string(i) + "]";
      Intersection inter;
      inter.id = field<std::string>(inters[i], "id", where);
      inter.node = node_ref(inter.id, where);
      const auto& mvs = inters[i].contains("movements") ? inters[i].at("movements") : nlohmann::json::array();
      for (std::size_t m = 0; m < mvs.size(); ++m) {
        const std::string mwhere = where + ".movements[" + std::to_string(m) + "]";
        Movement mv;
        try {
          mv.in = roads.parse_lane(field<std::string>(mvs[m], "in_lane", mwhere));
          mv.out = roads.parse_lane(field<std::string>(mvs[m], "out_lane", mwhere));
        } catch (const std::invalid_argument& e) {
          fail(mwhere + ": " + e.what());
        }
        inter.movements.push_back(mv);
      }
      if (inters[i].contains("phases")) {
        try {
          inter.phases = inters[i].at("phases").get<std::vector<std::vector<int>>>();
        } catch (const nlohmann::json::exception&) {
          fail(where + " has malformed phases");
        }
      }
      net.intersections.push_back(std::move(inter));
    }
  }
  net.finalize();

  if (doc.contains("demand")) {
    const auto& d = doc.at("demand");
    s.demand.seed = d.value("seed", std::uint64_t{0});
    const auto& entries = d.contains("entries") ? d.at("entries") : nlohmann::json::array();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const std::string where = "demand.entries[" + std::to_string(i) + "]";
      DemandEntry e;
      e.origin = field<std::string>(entries[i], "origin", where);
      e.destination = entries[i].value("destination", std::string("*"));
      e.rate_vpm = field<double>(entries[i], "rate_vpm", where);
      e.t0 = entries[i].value("t0", 0.0);
      e.t1 = entries[i].value("t1", static_cast<double>(s.episode_s));
      s.demand.entries.push_back(e);
    }
  }
  for (std::size_t i = 0; i < s.demand.entries.size(); ++i) {
    const auto& e = s.demand.entries[i];
    const std::string where = "demand.entries[" + std::to_string(i) + "]";
    if (!(e.rate_vpm >= 0.0)) fail(where + " has a negative rate");
    if (!(e.t0 >= 0.0 && e.t0 <= e.t1 && e.t1 <= s.episode_s)) fail(where + " interval is outside the episode");
    const int o = net.node_index(e.origin);
    if (o < 0 || net.nodes[static_cast<std::size_t>(o)].type != NodeType::Boundary) {
      fail(where + " origin '" + e.origin + "' is not a boundary node");
    }
    if (e.destination != "*") {
      const int d = net.node_index(e.destination);
      if (d < 0 || net.nodes[static_cast<std::size_t>(d)].type != NodeType::Boundary) {
        fail(where + " destination '" + e.destination + "' is not a boundary node");
      }
    }
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open scenario " + file.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("scenario " + file.string() + " is not valid JSON: " + e.what());
  }
  return parse_scenario(doc, file.stem().string());
}

nlohmann::json scenario_to_json(const Scenario& s) {
  const Network& net = s.network;
  nlohmann::json doc;
  doc["name"] = s.name;
  doc["episode_s"] = s.episode_s;
  doc["nodes"] = nlohmann::json::array();
  for (const auto& n : net.nodes) {
    doc["nodes"].push_back({{"id", n.id}, {"x", n.x}, {"y", n.y}, {"type", node_type_name(n.type)}});
  }
  doc["links"] = nlohmann::json::array();
  for (const auto& l : net.links) {
    doc["links"].push_back({{"from", net.nodes[static_cast<std::size_t>(l.from)].id},
                            {"to", net.nodes[static_cast<std::size_t>(l.to)].id},
                            {"length_m", l.length_m},
                            {"speed_mps", l.speed_mps},
                            {"lanes", l.lanes}});
  }
  doc["intersections"] = nlohmann::json::array();
  for (const auto& inter : net.intersections) {
    nlohmann::json mvs = nlohmann::json::array();
    for (const auto& mv : inter.movements) {
      mvs.push_back({{"in_lane", net.lane_name(mv.in)}, {"out_lane", net.lane_name(mv.out)}});
    }
    doc["intersections"].push_back({{"id", inter.id}, {"movements", mvs}, {"phases", inter.phases}});
  }
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : s.demand.entries) {
    entries.push_back({{"origin", e.origin}, {"destination", e.destination}, {"rate_vpm", e.rate_vpm}, {"t0", e.t0}, {"t1", e.t1}});
  }
  doc["demand"] = {{"entries", entries}, {"seed", s.demand.seed}};
  return doc;
}

void save_scenario(const Scenario& s, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write scenario " + file.string());
  out << scenario_to_json(s).dump(1) << "\n";
}

std::vector<int> shortest_route(const Network& net, int origin, int destination) {
  const std::size_t n_links = net.links.size();
  constexpr long kInf = std::numeric_limits<long>::max();
  std::vector<long> dist(n_links, kInf);
  std::vector<int> prev(n_links, -1);
  using Item = std::pair<long, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  for (int l : net.links_out_of(origin)) {
    dist[static_cast<std::size_t>(l)] = net.links[static_cast<std::size_t>(l)].free_flow_ticks();
    pq.push({dist[static_cast<std::size_t>(l)], l});
  }
  int best = -1;
  while (!pq.empty()) {
    const auto [d, l] = pq.top();
    pq.pop();
    if (d != dist[static_cast<std::size_t>(l)]) continue;
    const int node = net.links[static_cast<std::size_t>(l)].to;
    if (node == destination) {
      best = l;
      break;
    }
    const int ix = net.intersection_of_node(node);
    if (ix < 0) continue;  // some other boundary node
    for (int nxt : net.links_out_of(node)) {
      if (net.movements_between(ix, l, nxt).empty()) continue;
      const long nd = d + net.links[static_cast<std::size_t>(nxt)].free_flow_ticks();
      auto& slot = dist[static_cast<std::size_t>(nxt)];
      if (nd < slot || (nd == slot && l < prev[static_cast<std::size_t>(nxt)])) {
        slot = nd;
        prev[static_cast<std::size_t>(nxt)] = l;
        pq.push({nd, nxt});
      }
    }
  }
  std::vector<int> route;
  for (int l = best; l >= 0; l = prev[static_cast<std::size_t>(l)]) route.push_back(l);
  std::reverse(route.begin(), route.end());
  return route;
}

std::vector<VehicleSpec> generate_vehicles(const Network& net, const DemandSchedule& demand, int episode_s) {
  std::mt19937_64 rng(demand.seed);
  std::map<std::pair<int, int>, std::vector<int>> routes;
  auto route_for = [&](int o, int d) -> const std::vector<int>& {
    auto it = routes.find({o, d});
    if (it == routes.end()) it = routes.emplace(std::pair{o, d}, shortest_route(net, o, d)).first;
    return it->second;
  };

  std::vector<VehicleSpec> out;
  for (const auto& e : demand.entries) {
    if (e.rate_vpm <= 0.0 || e.t1 <= e.t0) continue;
    const int o = net.node_index(e.origin);
    if (o < 0) throw std::invalid_argument("demand: unknown origin '" + e.origin + "'");
    std::vector<int> dests;
    if (e.destination == "*") {
      for (int b : net.boundary_nodes())
        if (b != o && !route_for(o, b).empty()) dests.push_back(b);
    } else {
      const int d = net.node_index(e.destination);
      if (d < 0) throw std::invalid_argument("demand: unknown destination '" + e.destination + "'");
      if (!route_for(o, d).empty()) dests.push_back(d);
    }
    if (dests.empty()) continue;
    std::exponential_distribution<double> gap(e.rate_vpm / 60.0);
    std::uniform_int_distribution<std::size_t> pick(0, dests.size() - 1);
    for (double t = e.t0 + gap(rng); t < e.t1; t += gap(rng)) {
      const int depart = static_cast<int>(std::floor(t));
      const int d = dests[pick(rng)];
      if (depart >= episode_s) continue;
      out.push_back({0, depart, route_for(o, d)});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const VehicleSpec& a, const VehicleSpec& b) { return a.depart < b.depart; });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].id = static_cast<int>(i);
  return out;
}

}  // namespace cross::sim
