#include "sons/sensing.hpp"

#include <algorithm>

namespace sons {

RelPose relative_pose(const SensingPose& self, const SensingPose& other) {
    Vec3 delta = other.position - self.position;
    UnitQuat inv = UnitQuat::yaw(-self.yaw);
    RelPose out;
    out.d = rotate_vector(inv, delta);
    out.q = UnitQuat::yaw(other.yaw - self.yaw);
    return out;
}

Observation aerial_observation(const SensingPose& self, const std::vector<SensingPose>& robots,
                               const std::vector<WorldFeature>& features, const FovModel& fov,
                               std::mt19937_64& rng) {
    Observation obs;
    double altitude = self.position.z;
    if (altitude <= 0.05) return obs;
    double half = fov.footprint(altitude);
    std::normal_distribution<double> gauss(0.0, 1.0);

    auto in_footprint = [&](const Vec3& p) {
        Vec3 delta = p - self.position;
        Vec3 local = rotate_vector(UnitQuat::yaw(-self.yaw), delta);
        return std::fabs(local.x) <= half && std::fabs(local.y) <= half && p.z < self.position.z;
    };
    auto noisy = [&](RelPose pose) {
        pose.d.x += fov.sigma_pos * gauss(rng);
        pose.d.y += fov.sigma_pos * gauss(rng);
        pose.d.z += fov.sigma_pos * gauss(rng);
        pose.q = hamilton(pose.q, UnitQuat::yaw(fov.sigma_ang * gauss(rng)));
        return pose;
    };

    for (const auto& r : robots) {
        if (r.id == self.id || !r.alive) continue;
        if (r.type == RobotType::Aerial) continue;  // no direct quad-quad sensing
        if (!in_footprint(r.position)) continue;
        SensedNeighbor n;
        n.id = r.id;
        n.type = r.type;
        n.pose = noisy(relative_pose(self, r));
        n.direct = true;
        obs.robots.push_back(n);
    }
    for (const auto& f : features) {
        if (!in_footprint(f.position)) continue;
        if (f.sense_range > 0.0 && distance(f.position, self.position) > f.sense_range) continue;
        SensedFeature s;
        s.kind = f.kind;
        s.id = f.id;
        s.width = f.width;
        SensingPose fp{kNoRobot, RobotType::Ground, f.position, f.yaw, true};
        s.pose = noisy(relative_pose(self, fp));
        obs.features.push_back(s);
    }
    return obs;
}

void ChannelState::clear_counters() {
    bytes_in.clear();
    bytes_out.clear();
    total_bytes = 0;
    dropped = 0;
}

bool VisibilityTable::can_communicate(RobotId a, RobotId b) const {
    auto it = reachable.find(a);
    if (it != reachable.end() &&
        std::find(it->second.begin(), it->second.end(), b) != it->second.end())
        return true;
    auto jt = reachable.find(b);
    return jt != reachable.end() &&
           std::find(jt->second.begin(), jt->second.end(), a) != jt->second.end();
}

void VisibilityTable::add(RobotId a, RobotId b) {
    auto& v = reachable[a];
    if (std::find(v.begin(), v.end(), b) == v.end()) v.push_back(b);
}

std::map<RobotId, std::vector<Message>> route(ChannelState& channel,
                                              const std::vector<Message>& outbox, int step,
                                              const VisibilityTable& visibility,
                                              bool comm_blackout) {
    // Deliver what was queued at step-1 first, then enqueue this step's
    // traffic; nothing is ever delivered in its own send step.
    std::map<RobotId, std::vector<Message>> inboxes;
    for (auto& p : channel.pending) {
        inboxes[p.msg.receiver].push_back(p.msg);
        channel.bytes_in[p.msg.receiver] += p.bytes;
    }
    channel.pending.clear();

    for (const auto& m : outbox) {
        int bytes = message_bytes(m);
        if (comm_blackout || !visibility.can_communicate(m.sender, m.receiver)) {
            ++channel.dropped;
            continue;
        }
        channel.bytes_out[m.sender] += bytes;
        channel.total_bytes += bytes;
        channel.pending.push_back({m, step, bytes});
    }
    return inboxes;
}

}  // namespace sons
