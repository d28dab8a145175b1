// The per-robot SoNS state machine: recruitment and merging, node
// allocation and continual redistribution, splitting and handover,
// hierarchical sensing, and reference-vector fusion.
//
// step_protocol is a pure transition on one robot's state plus its inbox
// and sensed set; all cross-robot effects travel through messages that
// the channel delivers next tick.

#ifndef SONS_PROTOCOL_HPP
#define SONS_PROTOCOL_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "sons/allocation.hpp"
#include "sons/core.hpp"
#include "sons/messages.hpp"
#include "sons/sensing.hpp"

namespace sons {

enum class RecruitMetric : uint8_t { Rank, Cardinality, Lexicographic };

struct ProtocolConfig {
    double v_max_ground = 1.0;   // m/s
    double v_max_aerial = 2.0;   // m/s
    double v_default = 0.5;      // m/s, hierarchical correction speed
    double omega_default = 0.6;  // rad/s
    // Local reach/avoid law constants.
    double k1 = 0.3;
    double k2 = 1.0;
    double k3 = 1.5;
    // Hierarchical deadband constants.
    double k4 = 0.1;
    double k5 = 0.02;
    // Robot-robot collision avoidance uses the same law, scaled down.
    double robot_avoid_near = 0.18;
    double robot_avoid_far = 0.45;
    RecruitMetric metric = RecruitMetric::Rank;
    int liveness_steps = LinkState::kStalenessCeiling;
    double overridden_damping = 0.5;
    bool switch_freeze = true;  // pause recruiting briefly after a parent switch
    int max_children = TargetGraph::kMaxChildren;

    double v_max(RobotType t) const {
        return t == RobotType::Aerial ? v_max_aerial : v_max_ground;
    }
};

struct ChildRecord {
    RobotType type = RobotType::Ground;
    RelPose pose;  // own level frame
    std::map<RobotType, int> cardinality;
    std::vector<RobotId> grandchildren;
    int height = 1;
    int assigned_node = -1;  // target node id in own subtree, -1 = reserve
    int staleness = 0;
    bool overridden = false;
    bool welcomed = false;
    RobotId handover_to = kNoRobot;
    int handover_age = 0;
};

struct ParentRecord {
    RobotId id = kNoRobot;
    RelPose pose;  // parent in own level frame (virtual for ground robots)
    bool pose_known = false;
    int staleness = 0;
    // Latest actuation instruction.
    Vec3 correction;
    UnitQuat orientation_correction;
    double damping = 1.0;
    Vec3 parent_frame_d;
    Vec3 parent_frame_d_star;
    bool have_instruction = false;
    int instruction_age = 100;
};

struct RecruitOffer {
    RobotId sender = kNoRobot;
    RobotId root_id = kNoRobot;
    RobotRank root_rank = 0.0;
    int sons_size = 1;
};

/// Mission-layer directives applied to a brain robot for one tick.
struct BrainInput {
    std::optional<Vec3> goal_velocity;  // own level frame
    double goal_yaw_rate = 0.0;
    std::optional<TargetGraph> new_target;
    std::vector<RobotId> expel;  // scripted split
};

struct RobotState {
    RobotId id = kNoRobot;
    RobotType type = RobotType::Ground;
    RobotRank rank = 0.0;
    NodeAttributes attrs;
    std::optional<ParentRecord> parent;
    std::map<RobotId, ChildRecord> children;
    TargetGraph target;          // own target subtree; root node is own slot
    TargetGraph default_target;  // restored whenever this robot becomes a brain
    int sons_size = 1;           // SoNS-wide robot count, propagated from the brain

    // Recruitment handshake state.
    std::optional<RobotId> pending_parent;
    int pending_age = 0;
    RobotId former_root = kNoRobot;
    int steps_since_former = 1 << 20;
    int freeze_until = -1;

    // Reference vectors of the last step (for logs and tests).
    Vec3 v_local, v_hier, v_global;
    Vec3 w_local, w_hier, w_global;
    bool locally_overridden = false;

    // Stabilization override imposed by a quadrotor landmark user.
    bool override_active = false;
    Vec3 override_v;
    Vec3 override_w;

    uint64_t rng_state = 1;

    long long ops = 0;        // per-step protocol decision count
    long long malformed = 0;  // dropped messages

    bool is_brain() const { return !parent.has_value(); }
};

struct StepContext {
    const ProtocolConfig* cfg = nullptr;
    uint64_t world_seed = 0;
    int step = 0;
};

struct StepResult {
    RobotState state;
    std::vector<Message> outbox;
    Vec3 v_star;
    Vec3 omega_star;
    std::vector<SensedFeature> brain_features;  // what reached this brain this tick
    bool parent_lost = false;
};

/// One protocol tick. `inbox` holds messages sent at step-1; `sensed`
/// holds this tick's FOV-visible (or virtually sensed) neighbors and
/// features. Malformed messages are dropped and counted.
StepResult step_protocol(const RobotState& state, const std::vector<Message>& inbox,
                         const std::vector<SensedNeighbor>& sensed,
                         const std::vector<SensedFeature>& features, const BrainInput& brain,
                         const StepContext& ctx);

/// Consensus outcome for one side of a recruitment exchange.
enum class RecruitDecision : uint8_t { BecomeParent, BecomeChild, Ignore };

/// Quality comparison per the configured metric; equal quality resolves
/// by a seed-dependent coin both sides compute identically.
RecruitDecision decide_recruitment(const RobotState& self, const RecruitOffer& offer,
                                   const StepContext& ctx);

/// Local reach/avoid law: full speed inside k1, log-shaped taper on
/// (k1, k3), zero beyond k3. `avoid` flips the sign.
Vec3 compute_v_local(const Vec3& d_target, double v_max, bool avoid, const ProtocolConfig& cfg);

/// Hierarchical correction law with deadband k5 and ramp edge k4.
Vec3 compute_v_hierarchical(const Vec3& d_star, const ProtocolConfig& cfg);

/// Feature coordinate transform into the receiver's frame:
/// d_ia = d_ij + RT(q_ij, d_ja), q_ia = H(q_ij, q_ja).
RelPose transform_feature(const RelPose& link, const RelPose& feature);

/// Deterministic symmetric tie-break coin for equal-quality merges.
bool tie_break_coin(uint64_t seed, RobotId a, RobotId b, int step);

}  // namespace sons

#endif  // SONS_PROTOCOL_HPP
