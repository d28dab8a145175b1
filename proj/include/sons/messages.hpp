// Typed local-communication payloads. Byte sizes are accounted per kind
// (fixed header plus payload) and feed the communication metrics; the
// table lives in message_bytes().

#ifndef SONS_MESSAGES_HPP
#define SONS_MESSAGES_HPP

#include <map>
#include <string>
#include <vector>

#include "sons/core.hpp"
#include "sons/geometry.hpp"

namespace sons {

enum class MessageKind : uint8_t {
    Recruit,
    RecruitAccept,
    AttributeUpdate,
    TargetAssignment,
    Handover,
    Expel,
    ActuationInstruction,
    SensorFeature,
    GlobalVelocity,
    StabilizationOverride,
};

const char* kind_name(MessageKind k);

enum class FeatureKind : uint8_t {
    Obstacle,
    Wall,
    Destination,
    Opening,
    Landmark,
    Robot,
};

struct Message {
    MessageKind kind = MessageKind::Recruit;
    RobotId sender = kNoRobot;
    RobotId receiver = kNoRobot;

    // Recruit / identity payloads.
    RobotId root_id = kNoRobot;
    RobotRank root_rank = 0.0;
    int sons_size = 1;

    // Attribute payloads (upstream reports and downstream identity).
    std::map<RobotType, int> cardinality;
    std::vector<RobotId> child_ids;  // sender's direct children
    int height = 1;
    bool locally_overridden = false;
    bool detach = false;
    RobotType robot_type = RobotType::Ground;

    // Target assignment.
    TargetGraph target_subtree;
    int assigned_node = -1;
    bool welcome = false;

    // Handover.
    RobotId handover_child = kNoRobot;
    bool handover_ack = false;

    // Actuation instruction (child-frame correction plus parent-frame context).
    Vec3 correction;
    UnitQuat orientation_correction;
    double damping = 1.0;
    Vec3 parent_frame_d;
    Vec3 parent_frame_d_star;

    // Sensor feature.
    FeatureKind feature = FeatureKind::Obstacle;
    int feature_id = 0;
    double feature_width = 0.0;
    RobotId proposer = kNoRobot;
    Vec3 feature_d;
    UnitQuat feature_q;

    // Global velocity / stabilization override.
    Vec3 v;
    Vec3 omega;
    RobotId origin = kNoRobot;
    bool override_active = false;
};

/// Accounted wire size in bytes: 8-byte header (kind, sender, receiver)
/// plus the per-kind payload. Target graphs cost 40 bytes per node.
int message_bytes(const Message& m);

}  // namespace sons

#endif  // SONS_MESSAGES_HPP
