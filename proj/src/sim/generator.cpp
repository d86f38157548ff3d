#include "cross/sim/generator.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace cross::sim {

namespace {

std::vector<int> links_touching(const Network& net, int node, bool incoming) {
  std::vector<int> out;
  for (std::size_t i = 0; i < net.links.size(); ++i) {
    const auto& l = net.links[i];
    if ((incoming ? l.to : l.from) == node) out.push_back(static_cast<int>(i));
  }
  return out;
}

// Clockwise angular distance from north of the far end of `link`.
double bearing(const Network& net, int link, int node) {
  const auto& l = net.links[static_cast<std::size_t>(link)];
  const int other = l.from == node ? l.to : l.from;
  const auto& c = net.nodes[static_cast<std::size_t>(node)];
  const auto& o = net.nodes[static_cast<std::size_t>(other)];
  double b = std::numbers::pi / 2.0 - std::atan2(o.y - c.y, o.x - c.x);
  const double two_pi = 2.0 * std::numbers::pi;
  b = std::fmod(b, two_pi);
  return b < 0.0 ? b + two_pi : b;
}

std::vector<int> clockwise(const Network& net, int node, std::vector<int> links) {
  std::sort(links.begin(), links.end(), [&](int a, int b) { return bearing(net, a, node) < bearing(net, b, node); });
  return links;
}

int out_link_for(const Network& net, int in_link, const std::vector<int>& outs, Turn turn) {
  for (int o : outs)
    if (classify_turn(net, in_link, o) == turn) return o;
  return -1;
}

struct Builder {
  Scenario s;
  int add_node(const std::string& id, double x, double y, NodeType t) {
    s.network.nodes.push_back({id, x, y, t});
    return static_cast<int>(s.network.nodes.size()) - 1;
  }
  void add_road(int a, int b, const GridSpec& spec) {
    for (auto [f, t] : {std::pair{a, b}, std::pair{b, a}}) {
      Link l;
      l.from = f;
      l.to = t;
      l.length_m = spec.spacing_m;
      l.speed_mps = spec.speed_mps;
      l.lanes = spec.lanes;
      s.network.links.push_back(l);
    }
  }
};

// Builds the grid skeleton. `drop_north_row0` removes the north boundary
// roads of the top row (those nodes become T-junctions). Returns origin
// boundary nodes with their demand weights.
Scenario build(const GridSpec& spec, bool drop_north_row0, bool alternate_eight, double main_weight,
               const std::string& name) {
  if (spec.rows < 1 || spec.cols < 1) throw std::invalid_argument("grid: rows and cols must be >= 1");
  if (spec.lanes != 2) throw std::invalid_argument("grid: the junction archetypes need 2 lanes per link");
  Builder b;
  b.s.name = name;
  b.s.episode_s = spec.episode_s;
  const double d = spec.spacing_m;
  std::vector<std::vector<int>> grid(static_cast<std::size_t>(spec.rows), std::vector<int>(static_cast<std::size_t>(spec.cols)));
  for (int r = 0; r < spec.rows; ++r)
    for (int c = 0; c < spec.cols; ++c) {
      const bool t = drop_north_row0 && r == 0;
      grid[r][c] = b.add_node("i" + std::to_string(r) + "_" + std::to_string(c), c * d, -r * d,
                              t ? NodeType::TJunction : NodeType::FourWay);
    }
  std::vector<std::pair<int, double>> origins;
  const int main_row = spec.rows / 2;
  for (int c = 0; c < spec.cols; ++c) {
    if (!drop_north_row0) {
      const int n = b.add_node("bn" + std::to_string(c), c * d, d, NodeType::Boundary);
      b.add_road(n, grid[0][c], spec);
      origins.push_back({n, 1.0});
    }
    const int s = b.add_node("bs" + std::to_string(c), c * d, -spec.rows * d, NodeType::Boundary);
    b.add_road(s, grid[spec.rows - 1][c], spec);
    origins.push_back({s, 1.0});
  }
  for (int r = 0; r < spec.rows; ++r) {
    const double w = r == main_row ? main_weight : 1.0;
    const int west = b.add_node("bw" + std::to_string(r), -d, -r * d, NodeType::Boundary);
    b.add_road(west, grid[r][0], spec);
    origins.push_back({west, w});
    const int east = b.add_node("be" + std::to_string(r), spec.cols * d, -r * d, NodeType::Boundary);
    b.add_road(east, grid[r][spec.cols - 1], spec);
    origins.push_back({east, w});
  }
  for (int r = 0; r < spec.rows; ++r)
    for (int c = 0; c < spec.cols; ++c) {
      if (c + 1 < spec.cols) b.add_road(grid[r][c], grid[r][c + 1], spec);
      if (r + 1 < spec.rows) b.add_road(grid[r][c], grid[r + 1][c], spec);
    }

  Network& net = b.s.network;
  for (int r = 0; r < spec.rows; ++r)
    for (int c = 0; c < spec.cols; ++c) {
      const int node = grid[r][c];
      if (net.nodes[static_cast<std::size_t>(node)].type == NodeType::TJunction) {
        net.intersections.push_back(make_t_junction(net, node));
      } else {
        const bool eight = spec.eight_phase || (alternate_eight && (r + c) % 2 == 1);
        net.intersections.push_back(make_four_way(net, node, eight));
      }
    }
  net.finalize();

  double total_w = 0.0;
  for (const auto& o : origins) total_w += o.second;
  const std::size_t segs = spec.profile.empty() ? 1 : spec.profile.size();
  const double seg_len = static_cast<double>(spec.episode_s) / static_cast<double>(segs);
  b.s.demand.seed = spec.seed;
  if (spec.total_rate_vpm > 0.0) {
    for (const auto& [node, w] : origins) {
      for (std::size_t k = 0; k < segs; ++k) {
        const double mult = spec.profile.empty() ? 1.0 : spec.profile[k];
        DemandEntry e;
        e.origin = net.nodes[static_cast<std::size_t>(node)].id;
        e.rate_vpm = spec.total_rate_vpm * w / total_w * mult;
        e.t0 = seg_len * static_cast<double>(k);
        e.t1 = k + 1 == segs ? static_cast<double>(spec.episode_s) : seg_len * static_cast<double>(k + 1);
        b.s.demand.entries.push_back(e);
      }
    }
  }
  return std::move(b.s);
}

}  // namespace

Intersection make_four_way(const Network& net, int node, bool eight_phase) {
  const auto ins = clockwise(net, node, links_touching(net, node, true));
  const auto outs = links_touching(net, node, false);
  if (ins.size() != 4 || outs.size() != 4) {
    throw std::invalid_argument("4-way junction '" + net.nodes[static_cast<std::size_t>(node)].id + "' needs 4 arms");
  }
  Intersection inter;
  inter.id = net.nodes[static_cast<std::size_t>(node)].id;
  inter.node = node;
  // Per approach: lane 0 carries left + through, lane 1 through + right.
  std::vector<std::vector<int>> left(4), through(4), right(4), all(4);
  for (std::size_t a = 0; a < 4; ++a) {
    const int in = ins[a];
    const int l = out_link_for(net, in, outs, Turn::Left);
    const int t = out_link_for(net, in, outs, Turn::Through);
    const int r = out_link_for(net, in, outs, Turn::Right);
    if (l < 0 || t < 0 || r < 0) {
      throw std::invalid_argument("4-way junction '" + inter.id + "' arms are not perpendicular");
    }
    auto add = [&](int lane, int out, std::vector<int>& bucket) {
      bucket.push_back(static_cast<int>(inter.movements.size()));
      all[a].push_back(static_cast<int>(inter.movements.size()));
      inter.movements.push_back({{in, lane}, {out, lane}, Turn::Through});
    };
    add(0, l, left[a]);
    add(0, t, through[a]);
    add(1, t, through[a]);
    add(1, r, right[a]);
  }
  auto join = [](std::initializer_list<const std::vector<int>*> parts) {
    std::vector<int> out;
    for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
    std::sort(out.begin(), out.end());
    return out;
  };
  // Approaches 0..3 are N, E, S, W.
  inter.phases.push_back(join({&through[0], &right[0], &through[2], &right[2]}));
  inter.phases.push_back(join({&left[0], &left[2]}));
  inter.phases.push_back(join({&through[1], &right[1], &through[3], &right[3]}));
  inter.phases.push_back(join({&left[1], &left[3]}));
  if (eight_phase) {
    for (std::size_t a = 0; a < 4; ++a) inter.phases.push_back(all[a]);
  }
  return inter;
}

Intersection make_t_junction(const Network& net, int node) {
  const auto ins = clockwise(net, node, links_touching(net, node, true));
  const auto outs = links_touching(net, node, false);
  if (ins.size() != 3 || outs.size() != 3) {
    throw std::invalid_argument("T-junction '" + net.nodes[static_cast<std::size_t>(node)].id + "' needs 3 arms");
  }
  Intersection inter;
  inter.id = net.nodes[static_cast<std::size_t>(node)].id;
  inter.node = node;
  // a: the through arm whose right turn enters the stem c; b: the opposite arm.
  int a = -1, b = -1, c = -1;
  for (int in : ins) {
    if (out_link_for(net, in, outs, Turn::Through) >= 0 && out_link_for(net, in, outs, Turn::Right) >= 0) a = in;
    else if (out_link_for(net, in, outs, Turn::Through) >= 0) b = in;
    else c = in;
  }
  if (a < 0 || b < 0 || c < 0) throw std::invalid_argument("T-junction '" + inter.id + "' has no straight through road");
  const int a_out = out_link_for(net, b, outs, Turn::Through);
  const int b_out = out_link_for(net, a, outs, Turn::Through);
  const int c_out = out_link_for(net, a, outs, Turn::Right);
  // Each incoming lane serves one turn, feeding both lanes of its target.
  auto add = [&](int in, int lane, int out) {
    std::vector<int> idx;
    for (int ol = 0; ol < 2; ++ol) {
      idx.push_back(static_cast<int>(inter.movements.size()));
      inter.movements.push_back({{in, lane}, {out, ol}, Turn::Through});
    }
    return idx;
  };
  const auto a_through = add(a, 0, b_out);
  const auto a_right = add(a, 1, c_out);
  const auto b_left = add(b, 0, c_out);
  const auto b_through = add(b, 1, a_out);
  const auto c_left = add(c, 0, a_out);
  const auto c_right = add(c, 1, b_out);
  auto join = [](std::initializer_list<const std::vector<int>*> parts) {
    std::vector<int> out;
    for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
    std::sort(out.begin(), out.end());
    return out;
  };
  inter.phases.push_back(join({&a_through, &a_right, &b_through}));
  inter.phases.push_back(join({&b_through, &b_left}));
  inter.phases.push_back(join({&c_left, &c_right, &a_right}));
  return inter;
}

Scenario generate_grid(const GridSpec& spec) {
  return build(spec, false, false, 1.0, "grid" + std::to_string(spec.rows) + "x" + std::to_string(spec.cols));
}

Scenario generate_arterial(const GridSpec& spec, double main_weight) {
  return build(spec, false, false, main_weight, "arterial" + std::to_string(spec.rows) + "x" + std::to_string(spec.cols));
}

Scenario generate_mixed(const GridSpec& spec) {
  return build(spec, true, true, 1.0, "mixed" + std::to_string(spec.rows) + "x" + std::to_string(spec.cols));
}

}  // namespace cross::sim
