// Scenario definitions: the five missions, the scalability sweep, and
// the fault-tolerance experiment setups. Scenario scripts run once per
// tick with full world access; robot control stays strictly local.

#ifndef SONS_MISSIONS_HPP
#define SONS_MISSIONS_HPP

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sons/metrics.hpp"
#include "sons/world.hpp"

namespace sons {

struct Scenario {
    std::string name;
    WorldState world;
    MetricsConfig metrics;
    int max_steps = 2500;  // 500 s at 0.2 s per tick
    // Runs before each tick; issues brain inputs and scripted events.
    std::function<void(WorldState&, RunLog&)> script;
    // Checked after each tick.
    std::function<bool(const WorldState&, const RunLog&)> success;
    std::shared_ptr<void> state;  // script-owned storage
};

struct RunOutcome {
    bool success = false;
    int steps = 0;
    RunLog log;
    bool forest_ok = true;
    int link_breaks = 0;        // unscripted parent losses
    std::string detail;
};

/// Tick the scenario until success, budget exhaustion, or an invariant
/// failure; the forest invariant is checked every step.
RunOutcome run_scenario(Scenario& sc);

/// Standard formation lookup: a rooted tree for nA aerial + nG ground
/// robots whose root has the requested type. Aerial robots form a
/// centered line with spacing 2 m; ground robots hang below them.
TargetGraph standard_target_graph(int n_aerial, int n_ground, RobotType root_type,
                                  double altitude = 2.0, double lateral_scale = 1.0);

/// Chain-of-quads variant used when a passage forces a linear shape.
TargetGraph linear_target_graph(int n_aerial, int n_ground, RobotType root_type,
                                double altitude = 2.0);

/// Ring formation encircling a point of interest.
TargetGraph ring_target_graph(int n_aerial, int n_ground, RobotType root_type, double radius,
                              double altitude = 2.0);

/// Wire a fully-formed SoNS into the world: links, assignments,
/// attributes, and poses at the target offsets from `origin`. The brain
/// gets rank near 1 so the hierarchy is stable under the rank metric.
RobotId preform_sons(WorldState& w, const TargetGraph& g, const Vec3& origin);

/// Scripted brain transfer: re-root the SoNS at `new_brain` (reversing
/// the links on the path) and hand it the given target graph.
void scripted_brain_transfer(WorldState& w, RobotId new_brain, const TargetGraph& target);

enum class EstablishmentVariant : uint8_t { Clustered, Scattered };
Scenario mission_establishment(EstablishmentVariant variant, int n, uint64_t seed);

enum class ObstacleVariant : uint8_t { SmallDense, LargeSparse };
Scenario mission_obstacle_field(ObstacleVariant variant, int n, uint64_t seed);

Scenario mission_sweep(int n, uint64_t seed);

struct BinaryDecisionRecord {
    bool decided = false;
    int chosen_opening = -1;
    double chosen_width = 0.0;
    RobotId proposer = kNoRobot;
    int wide_opening_id = -1;  // ground truth
};
Scenario mission_binary_decision(int n, uint64_t seed, double width_a = 2.0,
                                 double width_b = 1.0);
const BinaryDecisionRecord* binary_decision_record(const Scenario& sc);

enum class SplitMergeVariant : uint8_t { Simple, SearchRescue, PushObstruction };
Scenario mission_split_merge(SplitMergeVariant variant, int n, uint64_t seed);

struct ScalabilityRow {
    int n = 0;
    uint64_t seed = 0;
    bool converged = false;
    double convergence_time_s = 0.0;
    double steady_error = 0.0;       // mean E after convergence
    double bytes_per_robot_step = 0.0;
    double ops_mean = 0.0;
};
std::vector<ScalabilityRow> experiment_scalability(const std::vector<int>& sizes,
                                                   const std::vector<uint64_t>& seeds);

struct FaultOutcome {
    int survivors = 0;
    int stranded = 0;          // alive robots left outside the main SoNS
    double pre_fault_error = 0.0;
    double recovered_error = 0.0;
    bool recovered = false;
    int recovery_steps = 0;
    bool success = false;
};

/// Sweep-mission run with a fault schedule injected at `fault_step`.
FaultOutcome experiment_fault(FaultEvent fault, int n, uint64_t seed, int extra_steps = 1500);

}  // namespace sons

#endif  // SONS_MISSIONS_HPP
