// Node allocation: matching candidate child robots to target child
// positions through a unit-capacity network-flow assignment. Displacement
// cost is the primary key; downstream-cardinality cost breaks ties.

#ifndef SONS_ALLOCATION_HPP
#define SONS_ALLOCATION_HPP

#include <vector>

#include "sons/geometry.hpp"

namespace sons {

struct AllocationProblem {
    std::vector<Vec3> source_displacements;
    std::vector<int> source_cardinalities;
    std::vector<Vec3> target_displacements;
    std::vector<int> target_cardinalities;
    // Cost matrices indexed [source][target].
    std::vector<std::vector<double>> displacement_costs;
    std::vector<std::vector<double>> cardinality_costs;
};

struct Assignment {
    // matched[s] = target index, or -1 when source s is unmatched.
    std::vector<int> matched;
    std::vector<int> unmatched_sources;
    std::vector<int> unmatched_targets;
    double total_displacement_cost = 0.0;
    double total_cardinality_cost = 0.0;
    int augmentations = 0;  // flow augmentations, fed to the op-count proxy
};

/// Fill the cost matrices: Euclidean distances for displacements,
/// absolute differences for cardinalities.
AllocationProblem build_costs(AllocationProblem problem);

/// Max-cardinality matching minimizing (displacement cost, cardinality
/// cost) lexicographically; deterministic tie-break by (source, target)
/// index. Empty problem yields an empty assignment.
Assignment allocate(const AllocationProblem& problem);

/// S4 substitution inequality on parent-frame vectors:
/// true iff d_child . unit(d*_child) < d_self . unit(d*_self).
/// Zero-norm targets never substitute.
bool substitution_test(const Vec3& d_child, const Vec3& d_star_child, const Vec3& d_self,
                       const Vec3& d_star_self);

}  // namespace sons

#endif  // SONS_ALLOCATION_HPP
