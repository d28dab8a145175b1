// SoNS data model: robot identities and ranks, hierarchy attributes,
// and the brain's target graph.

#ifndef SONS_CORE_HPP
#define SONS_CORE_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sons/geometry.hpp"

namespace sons {

using RobotId = int;
inline constexpr RobotId kNoRobot = -1;

/// Real in [0,1], drawn once per brain lifetime from the scenario RNG.
using RobotRank = double;

enum class RobotType : uint8_t { Aerial = 0, Ground = 1 };

inline const char* type_name(RobotType t) { return t == RobotType::Aerial ? "aerial" : "ground"; }

/// The hierarchy the brain wants built: a rooted tree of typed nodes with
/// per-link target displacement and orientation (child w.r.t. parent).
struct TargetNode {
    int id = 0;
    RobotType type = RobotType::Ground;
    int parent = -1;              // -1 for the root
    Vec3 displacement;            // d* of this node w.r.t. its parent, parent frame
    UnitQuat orientation;         // q* of this node w.r.t. its parent
};

struct TargetGraph {
    std::vector<TargetNode> nodes;  // nodes[0] is the root when non-empty

    static constexpr int kMaxChildren = 8;

    bool empty() const { return nodes.empty(); }
    int size() const { return static_cast<int>(nodes.size()); }

    const TargetNode* find(int id) const;
    std::vector<int> children_of(int id) const;
    int root_id() const { return nodes.empty() ? -1 : nodes.front().id; }

    /// Per-type count of nodes in the subtree rooted at `id` (inclusive).
    std::map<RobotType, int> subtree_cardinality(int id) const;
    int subtree_size(int id) const;
    /// Longest node-count path from `id` to any leaf below it (leaf = 1).
    int height(int id) const;

    /// True tree: single root, unique parents, acyclic, fan-out <= 8.
    bool valid() const;
};

/// Subtree of `graph` rooted at `child_id` (the child plus everything
/// reachable downstream, with their links). Empty graph if unknown id.
std::optional<TargetGraph> subdivide_target(const TargetGraph& graph, int child_id);

/// Human-readable tree serialization used in scenario files.
std::string serialize_target_graph(const TargetGraph& g);
std::optional<TargetGraph> parse_target_graph(const std::string& text);

/// Self-organized node attributes (identity, cardinality, height).
struct NodeAttributes {
    RobotId sons_root_id = kNoRobot;
    RobotRank sons_root_rank = 0.0;
    RobotId former_root_id = kNoRobot;
    int steps_since_former = 0;
    std::map<RobotType, int> cardinality;  // per-type robots in own subtree, self included
    int height = 1;                        // longest path to a leaf, self included

    int total_cardinality() const {
        int n = 0;
        for (auto& [t, c] : cardinality) n += c;
        return n;
    }
};

struct IdentityUpdate {
    RobotId sons_root_id = kNoRobot;
    RobotRank sons_root_rank = 0.0;
};

/// Adopt the parent's identity, or fall back to being one's own brain.
NodeAttributes update_identity(const NodeAttributes& self, RobotId own_id, RobotRank own_rank,
                               const std::optional<IdentityUpdate>& from_parent);

struct ChildReport {
    std::map<RobotType, int> cardinality;
    int height = 1;
};

/// Recompute own cardinality/height from the latest child reports.
NodeAttributes update_cardinality_height(const NodeAttributes& self, RobotType own_type,
                                         const std::vector<ChildReport>& child_reports);

/// Link bookkeeping between a parent and a child. A link is declared
/// broken once the counterpart goes unsensed (and unheard) for
/// `staleness_ceiling` consecutive steps.
struct LinkState {
    RobotId peer = kNoRobot;
    Vec3 displacement;        // last sensed d to peer, own frame
    UnitQuat orientation;     // last sensed q of peer w.r.t. own frame
    int staleness = 0;        // consecutive steps without sensing or hearing the peer

    static constexpr int kStalenessCeiling = 5;  // 1.0 s at the 0.2 s tick

    bool broken() const { return staleness >= kStalenessCeiling; }
};

}  // namespace sons

#endif  // SONS_CORE_HPP
