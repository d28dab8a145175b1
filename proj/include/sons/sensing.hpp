// Geometric field-of-view sensing and the FOV-gated local communication
// channel. Aerial robots carry a downward square frustum; ground robots
// have no sensor of their own and rely on relays. Quadrotors never sense
// each other directly.

#ifndef SONS_SENSING_HPP
#define SONS_SENSING_HPP

#include <map>
#include <random>
#include <vector>

#include "sons/core.hpp"
#include "sons/messages.hpp"
#include "sons/vehicles.hpp"

namespace sons {

struct FovModel {
    double half_angle = kPi / 4.0;  // square footprint half-angle
    double sigma_pos = 0.01;        // m, zero-mean Gaussian
    double sigma_ang = kPi / 180.0; // rad

    /// Footprint half-width at altitude h.
    double footprint(double altitude) const { return altitude * std::tan(half_angle); }
};

struct SensedNeighbor {
    RobotId id = kNoRobot;
    RobotType type = RobotType::Ground;
    RelPose pose;       // in the observer's level (yaw-only) frame
    bool direct = true; // false when reconstructed via a relay
};

struct SensedFeature {
    FeatureKind kind = FeatureKind::Obstacle;
    int id = 0;
    double width = 0.0;       // opening width or obstacle diameter
    RelPose pose;             // in the observer's level frame
    RobotId proposer = kNoRobot;  // first robot to report it, set on forwarding
};

/// Everything an aerial robot's cameras deliver in one tick.
struct Observation {
    std::vector<SensedNeighbor> robots;
    std::vector<SensedFeature> features;
};

/// Poses the sensing layer needs from the world, in the z-up frame.
struct SensingPose {
    RobotId id = kNoRobot;
    RobotType type = RobotType::Ground;
    Vec3 position;
    double yaw = 0.0;
    bool alive = true;
};

struct WorldFeature {
    FeatureKind kind = FeatureKind::Obstacle;
    int id = 0;
    Vec3 position;
    double yaw = 0.0;
    double width = 0.0;
    double radius = 0.0;   // physical footprint for collisions, 0 = marker only
    bool pushable = false;
    double sense_range = 0.0;  // >0 restricts visibility to this range
};

/// Direct observations for one aerial robot. Vision blackouts yield
/// empty sets. Deterministic under the supplied RNG.
Observation aerial_observation(const SensingPose& self, const std::vector<SensingPose>& robots,
                               const std::vector<WorldFeature>& features, const FovModel& fov,
                               std::mt19937_64& rng);

/// Relative pose of `other` in `self`'s level frame, noise-free.
RelPose relative_pose(const SensingPose& self, const SensingPose& other);

struct PendingMessage {
    Message msg;
    int send_step = 0;
    int bytes = 0;
};

struct ChannelState {
    std::vector<PendingMessage> pending;   // deliverable at the next step
    std::map<RobotId, long long> bytes_in;
    std::map<RobotId, long long> bytes_out;
    long long total_bytes = 0;
    long long dropped = 0;

    void clear_counters();
};

/// Visibility predicate the router consults at send time: a pair may
/// communicate when one is in the other's field of view (directly or via
/// a virtual-sensing relay) or shares an unexpired SoNS link.
struct VisibilityTable {
    std::map<RobotId, std::vector<RobotId>> reachable;

    bool can_communicate(RobotId a, RobotId b) const;
    void add(RobotId a, RobotId b);
};

/// Queue outboxes at step t; deliverable messages appear in the returned
/// inboxes at step t+1. Undeliverable or blacked-out messages are dropped
/// and counted. Byte totals accrue per robot on both ends.
std::map<RobotId, std::vector<Message>> route(ChannelState& channel,
                                              const std::vector<Message>& outbox, int step,
                                              const VisibilityTable& visibility,
                                              bool comm_blackout);

}  // namespace sons

#endif  // SONS_SENSING_HPP
