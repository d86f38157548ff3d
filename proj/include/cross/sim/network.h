#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace cross::sim {

// Padding caps shared by the observation encoder and the network validator.
inline constexpr std::size_t kMaxMovements = 36;
inline constexpr std::size_t kMaxPhases = 8;

enum class NodeType { Boundary, FourWay, TJunction };

const char* node_type_name(NodeType t);
NodeType parse_node_type(const std::string& s);

struct Node {
  std::string id;
  double x = 0.0;
  double y = 0.0;
  NodeType type = NodeType::Boundary;
};

struct Link {
  std::string id;  // "from:to"
  int from = -1;
  int to = -1;
  double length_m = 0.0;
  double speed_mps = 0.0;
  int lanes = 1;
  // Free-flow traversal time in whole ticks.
  int free_flow_ticks() const;
};

// Lane 0 is the leftmost lane in the driving direction.
struct LaneRef {
  int link = -1;
  int lane = 0;
  auto operator<=>(const LaneRef&) const = default;
};

enum class Turn { Left, Through, Right, UTurn };

struct Movement {
  LaneRef in;
  LaneRef out;
  Turn turn = Turn::Through;
};

struct Intersection {
  std::string id;
  int node = -1;
  std::vector<Movement> movements;       // fixed order, indexes the state matrix
  std::vector<std::vector<int>> phases;  // movement indices per phase

  // Derived by Network::finalize().
  std::vector<LaneRef> in_lanes;   // sorted
  std::vector<LaneRef> out_lanes;  // sorted
  std::vector<int> in_links;       // sorted
  std::vector<int> out_links;      // sorted
  std::vector<std::vector<bool>> conflicts;  // movement x movement
};

// Static road network. Build by filling nodes/links/intersections and calling
// finalize(), which derives lookup tables and enforces every invariant.
class Network {
 public:
  std::vector<Node> nodes;
  std::vector<Link> links;
  std::vector<Intersection> intersections;

  // Throws std::invalid_argument naming the offending element.
  void finalize();

  int node_index(const std::string& id) const;  // -1 when absent
  int link_index(int from, int to) const;       // -1 when absent
  int link_index(const std::string& id) const;
  // Intersection controlling a node, or -1.
  int intersection_of_node(int node) const { return node_intersection_[static_cast<std::size_t>(node)]; }
  const std::vector<int>& boundary_nodes() const { return boundary_nodes_; }
  const std::vector<int>& links_out_of(int node) const { return out_links_[static_cast<std::size_t>(node)]; }
  const std::vector<int>& links_into(int node) const { return in_links_[static_cast<std::size_t>(node)]; }

  // Dense lane numbering: lane_offset(link) + lane.
  std::size_t lane_count() const { return lane_offset_.empty() ? 0 : lane_offset_.back(); }
  std::size_t lane_id(LaneRef r) const { return lane_offset_[static_cast<std::size_t>(r.link)] + static_cast<std::size_t>(r.lane); }

  std::string lane_name(LaneRef r) const;
  LaneRef parse_lane(const std::string& s) const;

  // Movements of intersection `ix` leaving from link `in_link` toward `out_link`.
  std::vector<int> movements_between(int ix, int in_link, int out_link) const;

 private:
  std::map<std::string, int> node_by_id_;
  std::map<std::string, int> link_by_id_;
  std::map<std::pair<int, int>, int> link_by_ends_;
  std::vector<int> node_intersection_;
  std::vector<int> boundary_nodes_;
  std::vector<std::vector<int>> out_links_;
  std::vector<std::vector<int>> in_links_;
  std::vector<std::size_t> lane_offset_;
};

// Turn made when leaving `in_link` onto `out_link` at their shared node.
Turn classify_turn(const Network& net, int in_link, int out_link);

// Two movements conflict when their paths through the junction cross or merge.
// Paths are chords between approach points on a circle around the node:
// vehicles enter just counter-clockwise of their arm and leave just clockwise
// of the destination arm (right-hand traffic). Movements from the same arm
// never conflict; movements into the same arm from different arms always do.
bool geometric_conflict(const Network& net, const Movement& a, const Movement& b);

}  // namespace cross::sim
