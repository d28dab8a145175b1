// The discrete-time world: arena, obstacles, scheduler, fault injection.
// Tick order: faults -> sense -> deliver -> protocol -> vehicles ->
// collisions. All randomness flows from the world seed.

#ifndef SONS_WORLD_HPP
#define SONS_WORLD_HPP

#include <functional>
#include <map>
#include <random>
#include <vector>

#include "sons/protocol.hpp"
#include "sons/sensing.hpp"
#include "sons/vehicles.hpp"

namespace sons {

struct FaultEvent {
    enum class Kind : uint8_t { KillRobot, KillRandom, VisionBlackout, CommBlackout };
    Kind kind = Kind::KillRobot;
    int trigger_step = 0;
    RobotId target = kNoRobot;  // KillRobot
    double probability = 0.0;   // KillRandom
    int duration_steps = 0;     // blackouts
};

struct RobotEntity {
    RobotId id = kNoRobot;
    RobotType type = RobotType::Ground;
    RobotState protocol;

    QuadVehicle quad;
    double target_altitude = 2.0;
    GroundRobotState ground;
    GroundParams ground_params;

    bool alive = true;
    bool removed = false;  // failed aerial robots despawn after landing
    Vec3 v_star;           // last protocol command, own level frame
    Vec3 omega_star;
    std::vector<LandmarkTrack> stab_tracks;

    Vec3 position() const {
        return type == RobotType::Aerial ? quad.position_world() : ground.position;
    }
    double yaw() const {
        return type == RobotType::Aerial ? quad.yaw_world() : ground.body_yaw;
    }
};

struct WorldConfig {
    double tick_dt = 0.2;
    Vec3 arena_min{-10.0, -10.0, 0.0};
    Vec3 arena_max{10.0, 10.0, 6.0};
    bool octagon = false;       // cut the four corners of the rectangle
    double octagon_cut = 2.0;
    double robot_radius = 0.15;
    FovModel fov;
    ProtocolConfig protocol;
    QuadParams quad_params;
    QuadControllerGains quad_gains;
    bool flight_stabilization = false;
    double altitude_hold_gain = 1.2;
    double takeoff_speed = 1.5;
    uint64_t seed = 1;
};

struct WorldState {
    WorldConfig cfg;
    int step = 0;
    std::vector<RobotEntity> robots;
    std::vector<WorldFeature> features;
    ChannelState channel;
    std::vector<FaultEvent> faults;
    std::map<RobotId, std::vector<Message>> pending_inboxes;
    std::map<RobotId, Observation> prev_direct;  // last tick's camera output
    std::map<RobotId, BrainInput> brain_inputs;  // mission hook, cleared per tick
    std::map<RobotId, std::vector<SensedFeature>> brain_features;  // what brains saw
    int vision_blackout_until = -1;
    int comm_blackout_until = -1;
    std::mt19937_64 rng{1};
    long long ops_this_step = 0;  // max over robots, for the op-count proxy

    RobotEntity* find_robot(RobotId id);
    const RobotEntity* find_robot(RobotId id) const;
};

/// Build a world with robots at given poses. Ranks draw from the seed.
WorldState make_world(const WorldConfig& cfg);

/// Add one robot; aerial robots spawn on the ground and take off.
RobotEntity& add_robot(WorldState& w, RobotType type, const Vec3& position, double yaw,
                       const TargetGraph& default_target);

/// Advance one 0.2 s tick.
void tick(WorldState& w);

/// Disc-based separation of ground entities, obstacle pushing, and arena
/// wall containment.
void resolve_collisions(WorldState& w);

/// No robot has two parents and parent chains are acyclic; checked from
/// the authoritative parent pointers. Returns false on violation.
bool forest_invariant(const WorldState& w);

/// Brain id of the SoNS containing `id` (walks parent pointers).
RobotId root_of(const WorldState& w, RobotId id);

/// Robots per SoNS root.
std::map<RobotId, std::vector<RobotId>> sons_membership(const WorldState& w);

/// World-frame target position of a robot per its current assignment
/// chain, or nullopt when unallocated. Brain maps to its own position.
std::optional<Vec3> assigned_target_position(const WorldState& w, RobotId id);

/// Current tree is isomorphic to the brain's target graph, respecting
/// types (AHU canonical labels).
bool topology_matches_target(const WorldState& w, RobotId brain);

}  // namespace sons

#endif  // SONS_WORLD_HPP
