#include "cross/sim/network.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

namespace cross::sim {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument("network: " + msg); }

double wrap(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  return a < 0.0 ? a + two_pi : a;
}

// Angle of the arm carrying `link` as seen from `node`.
double arm_angle(const Network& net, int link, int node) {
  const Link& l = net.links[static_cast<std::size_t>(link)];
  const int other = l.from == node ? l.to : l.from;
  const Node& c = net.nodes[static_cast<std::size_t>(node)];
  const Node& o = net.nodes[static_cast<std::size_t>(other)];
  return std::atan2(o.y - c.y, o.x - c.x);
}

// True when angle x lies strictly inside the counter-clockwise arc from a to b.
bool inside_arc(double a, double b, double x) {
  const double span = wrap(b - a);
  const double off = wrap(x - a);
  return off > 0.0 && off < span;
}

}  // namespace

const char* node_type_name(NodeType t) {
  switch (t) {
    case NodeType::Boundary: return "boundary";
    case NodeType::FourWay: return "4way";
    case NodeType::TJunction: return "T";
  }
  return "?";
}

NodeType parse_node_type(const std::string& s) {
  if (s == "boundary") return NodeType::Boundary;
  if (s == "4way") return NodeType::FourWay;
  if (s == "T") return NodeType::TJunction;
  fail("unknown node type '" + s + "'");
}

int Link::free_flow_ticks() const { return static_cast<int>(std::ceil(length_m / speed_mps - 1e-9)); }

int Network::node_index(const std::string& id) const {
  auto it = node_by_id_.find(id);
  return it == node_by_id_.end() ? -1 : it->second;
}

int Network::link_index(int from, int to) const {
  auto it = link_by_ends_.find({from, to});
  return it == link_by_ends_.end() ? -1 : it->second;
}

int Network::link_index(const std::string& id) const {
  auto it = link_by_id_.find(id);
  return it == link_by_id_.end() ? -1 : it->second;
}

std::string Network::lane_name(LaneRef r) const {
  return links[static_cast<std::size_t>(r.link)].id + "/" + std::to_string(r.lane);
}

LaneRef Network::parse_lane(const std::string& s) const {
  const auto slash = s.rfind('/');
  if (slash == std::string::npos) fail("lane reference '" + s + "' is not of the form from:to/lane");
  const int link = link_index(s.substr(0, slash));
  if (link < 0) fail("lane reference '" + s + "' names an unknown link");
  int lane = -1;
  try {
    lane = std::stoi(s.substr(slash + 1));
  } catch (const std::exception&) {
    fail("lane reference '" + s + "' has a bad lane index");
  }
  if (lane < 0 || lane >= links[static_cast<std::size_t>(link)].lanes) {
    fail("lane reference '" + s + "' is out of range");
  }
  return {link, lane};
}

std::vector<int> Network::movements_between(int ix, int in_link, int out_link) const {
  std::vector<int> out;
  const auto& inter = intersections[static_cast<std::size_t>(ix)];
  for (std::size_t m = 0; m < inter.movements.size(); ++m) {
    if (inter.movements[m].in.link == in_link && inter.movements[m].out.link == out_link) {
      out.push_back(static_cast<int>(m));
    }
  }
  return out;
}

void Network::finalize() {
  node_by_id_.clear();
  link_by_id_.clear();
  link_by_ends_.clear();
  boundary_nodes_.clear();
  node_intersection_.assign(nodes.size(), -1);
  out_links_.assign(nodes.size(), {});
  in_links_.assign(nodes.size(), {});

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!node_by_id_.emplace(nodes[i].id, static_cast<int>(i)).second) fail("duplicate node '" + nodes[i].id + "'");
    if (nodes[i].type == NodeType::Boundary) boundary_nodes_.push_back(static_cast<int>(i));
  }

  lane_offset_.assign(1, 0);
  for (std::size_t i = 0; i < links.size(); ++i) {
    Link& l = links[i];
    const std::string where = "link " + std::to_string(i);
    if (l.from < 0 || l.to < 0 || l.from >= static_cast<int>(nodes.size()) || l.to >= static_cast<int>(nodes.size())) {
      fail(where + " references a missing node");
    }
    if (l.from == l.to) fail(where + " is a self loop");
    l.id = nodes[static_cast<std::size_t>(l.from)].id + ":" + nodes[static_cast<std::size_t>(l.to)].id;
    if (!(l.length_m > 0.0) || !(l.speed_mps > 0.0)) fail("link " + l.id + " needs positive length and speed");
    if (l.lanes < 1) fail("link " + l.id + " needs at least one lane");
    if (!link_by_id_.emplace(l.id, static_cast<int>(i)).second) fail("duplicate link " + l.id);
    link_by_ends_[{l.from, l.to}] = static_cast<int>(i);
    out_links_[static_cast<std::size_t>(l.from)].push_back(static_cast<int>(i));
    in_links_[static_cast<std::size_t>(l.to)].push_back(static_cast<int>(i));
    lane_offset_.push_back(lane_offset_.back() + static_cast<std::size_t>(l.lanes));
  }

  for (std::size_t ix = 0; ix < intersections.size(); ++ix) {
    Intersection& inter = intersections[ix];
    const std::string where = "intersection '" + inter.id + "'";
    if (inter.node < 0 || inter.node >= static_cast<int>(nodes.size())) fail(where + " references a missing node");
    if (nodes[static_cast<std::size_t>(inter.node)].type == NodeType::Boundary) fail(where + " sits on a boundary node");
    if (node_intersection_[static_cast<std::size_t>(inter.node)] >= 0) fail(where + " duplicates a node already controlled");
    node_intersection_[static_cast<std::size_t>(inter.node)] = static_cast<int>(ix);

    if (inter.movements.size() > kMaxMovements) {
      fail(where + " has " + std::to_string(inter.movements.size()) + " movements, cap is " + std::to_string(kMaxMovements));
    }
    if (inter.phases.size() > kMaxPhases) {
      fail(where + " has " + std::to_string(inter.phases.size()) + " phases, cap is " + std::to_string(kMaxPhases));
    }
    if (!inter.movements.empty() && inter.phases.empty()) fail(where + " has movements but no phases");

    std::set<std::pair<LaneRef, LaneRef>> seen;
    std::set<LaneRef> ins, outs;
    for (std::size_t m = 0; m < inter.movements.size(); ++m) {
      Movement& mv = inter.movements[m];
      const std::string mwhere = where + " movement " + std::to_string(m);
      auto check_lane = [&](LaneRef r, const char* what) {
        if (r.link < 0 || r.link >= static_cast<int>(links.size())) fail(mwhere + ": " + what + " lane references a missing link");
        if (r.lane < 0 || r.lane >= links[static_cast<std::size_t>(r.link)].lanes) fail(mwhere + ": " + what + " lane index out of range");
      };
      check_lane(mv.in, "incoming");
      check_lane(mv.out, "outgoing");
      if (links[static_cast<std::size_t>(mv.in.link)].to != inter.node) fail(mwhere + ": incoming lane does not end here");
      if (links[static_cast<std::size_t>(mv.out.link)].from != inter.node) fail(mwhere + ": outgoing lane does not start here");
      if (!seen.insert({mv.in, mv.out}).second) fail(mwhere + " duplicates an earlier movement");
      mv.turn = classify_turn(*this, mv.in.link, mv.out.link);
      ins.insert(mv.in);
      outs.insert(mv.out);
    }
    inter.in_lanes.assign(ins.begin(), ins.end());
    inter.out_lanes.assign(outs.begin(), outs.end());
    std::set<int> il, ol;
    for (auto r : ins) il.insert(r.link);
    for (auto r : outs) ol.insert(r.link);
    inter.in_links.assign(il.begin(), il.end());
    inter.out_links.assign(ol.begin(), ol.end());

    const std::size_t n = inter.movements.size();
    inter.conflicts.assign(n, std::vector<bool>(n, false));
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) {
        const bool c = geometric_conflict(*this, inter.movements[a], inter.movements[b]);
        inter.conflicts[a][b] = inter.conflicts[b][a] = c;
      }

    std::vector<bool> covered(n, false);
    for (std::size_t p = 0; p < inter.phases.size(); ++p) {
      const auto& phase = inter.phases[p];
      const std::string pwhere = where + " phase " + std::to_string(p);
      if (phase.empty()) fail(pwhere + " is empty");
      for (int m : phase) {
        if (m < 0 || m >= static_cast<int>(n)) fail(pwhere + " references unknown movement " + std::to_string(m));
        covered[static_cast<std::size_t>(m)] = true;
      }
      for (std::size_t a = 0; a < phase.size(); ++a)
        for (std::size_t b = a + 1; b < phase.size(); ++b) {
          const auto ma = static_cast<std::size_t>(phase[a]), mb = static_cast<std::size_t>(phase[b]);
          if (ma == mb) fail(pwhere + " lists movement " + std::to_string(ma) + " twice");
          if (inter.conflicts[ma][mb]) {
            fail(pwhere + ": movements " + std::to_string(ma) + " and " + std::to_string(mb) + " conflict");
          }
        }
    }
    for (std::size_t m = 0; m < n; ++m) {
      if (!covered[m]) fail(where + ": movement " + std::to_string(m) + " is in no phase");
    }
  }

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].type != NodeType::Boundary && node_intersection_[i] < 0) {
      fail("node '" + nodes[i].id + "' is a junction without an intersection entry");
    }
  }
}

Turn classify_turn(const Network& net, int in_link, int out_link) {
  const Link& a = net.links[static_cast<std::size_t>(in_link)];
  const Link& b = net.links[static_cast<std::size_t>(out_link)];
  const Node& p = net.nodes[static_cast<std::size_t>(a.from)];
  const Node& c = net.nodes[static_cast<std::size_t>(a.to)];
  const Node& q = net.nodes[static_cast<std::size_t>(b.to)];
  const double h_in = std::atan2(c.y - p.y, c.x - p.x);
  const double h_out = std::atan2(q.y - c.y, q.x - c.x);
  double d = wrap(h_out - h_in);
  if (d > std::numbers::pi) d -= 2.0 * std::numbers::pi;
  const double quarter = std::numbers::pi / 4.0;
  if (std::abs(d) < quarter) return Turn::Through;
  if (std::abs(d) >= 3.0 * quarter) return Turn::UTurn;
  return d > 0.0 ? Turn::Left : Turn::Right;
}

bool geometric_conflict(const Network& net, const Movement& a, const Movement& b) {
  if (a.in.link == b.in.link) return false;
  if (a.out.link == b.out.link) return true;
  const int node = net.links[static_cast<std::size_t>(a.in.link)].to;
  constexpr double kOffset = 0.1;
  const double ea = wrap(arm_angle(net, a.in.link, node) + kOffset);
  const double xa = wrap(arm_angle(net, a.out.link, node) - kOffset);
  const double eb = wrap(arm_angle(net, b.in.link, node) + kOffset);
  const double xb = wrap(arm_angle(net, b.out.link, node) - kOffset);
  return inside_arc(ea, xa, eb) != inside_arc(ea, xa, xb);
}

}  // namespace cross::sim
